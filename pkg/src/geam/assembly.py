"""Fragment assembly with a soft actor-critic over three chained choices.

An episode starts from a benzene scaffold with three open positions and
repeatedly (1) picks an open attachment site on the growing molecule,
(2) picks a vocabulary fragment, (3) picks one of that fragment's own open
sites, then welds the fragment on with a single bond. Every choice is a
Gumbel-Softmax sample, so the policy loss differentiates straight through
the sampled one-hots. Intermediate steps earn a small constant reward; the
terminal molecule is scored by the oracle.

The twin critics share a state encoder and represent the chosen fragment by
a learned projection of its fingerprint, which keeps the gradient of a
policy-sampled fragment choice to a single matrix product over the whole
vocabulary. Replay entries store the fragment by canonical form, so they
survive vocabulary growth and are dropped (and counted) only if their
fragment has left the vocabulary.
"""

from __future__ import annotations

import copy
from collections import deque
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from geam.autodiff import (
    Tensor,
    add,
    concat,
    log_softmax,
    matmul,
    minimum,
    mul,
    reshape,
    take,
    tensor,
)
from geam.chem import MolGraph, attach, parse_smiles
from geam.datasets import SEED_SMILES
from geam.errors import EmptyVocabulary, NoOpenSites
from geam.nn import (
    FEATURE_DIM,
    MLP,
    Adam,
    Fusion,
    Gcn,
    Linear,
    graph_inputs,
    gumbel_softmax,
    sum_pool,
)
from geam.oracles import OracleResult, PropertyOracle
from geam.vocab import Vocabulary

DEFAULT_WIDTH = 64
DEFAULT_DEPTH = 3
DEFAULT_RANK = 16
MAX_ASSEMBLY_ATOMS = 40
INTERMEDIATE_REWARD = 0.05
REPLAY_CAPACITY = 50_000
BATCH_SIZE = 128
GAMMA = 1.0
ALPHA = 0.05
POLYAK_TAU = 0.005
PREFILL_STEPS = 4000
MASKED_LOGIT = -1e30


class PolicyNets:
    """Shared state encoder plus the three fused choice heads."""

    def __init__(
        self,
        rng: np.random.Generator,
        width: int = DEFAULT_WIDTH,
        depth: int = DEFAULT_DEPTH,
        rank: int = DEFAULT_RANK,
        fp_width: int = 1024,
    ):
        self.width = width
        self.rank = rank
        self.encoder = Gcn(rng, FEATURE_DIM, width, depth)
        self.frag_encoder = Gcn(rng, FEATURE_DIM, width, depth)
        self.fuse_site = Fusion(rng, width, width, rank)
        self.head_site = Linear(rng, rank, 1)
        self.fuse_frag = Fusion(rng, rank, fp_width, rank)
        self.head_frag = Linear(rng, rank, 1)
        self.fuse_frag_site = Fusion(rng, width, width, rank)
        self.head_frag_site = Linear(rng, rank, 1)

    @property
    def params(self) -> list[Tensor]:
        return (
            self.encoder.params
            + self.frag_encoder.params
            + self.fuse_site.params
            + self.head_site.params
            + self.fuse_frag.params
            + self.head_frag.params
            + self.fuse_frag_site.params
            + self.head_frag_site.params
        )


class Critics:
    """Twin Q heads over a shared state/action featurizer."""

    def __init__(
        self,
        rng: np.random.Generator,
        width: int = DEFAULT_WIDTH,
        depth: int = DEFAULT_DEPTH,
        fp_width: int = 1024,
    ):
        self.width = width
        self.encoder = Gcn(rng, FEATURE_DIM, width, depth)
        self.frag_proj = Linear(rng, fp_width, width)
        self.frag_encoder = Gcn(rng, FEATURE_DIM, width, depth)
        self.q1 = MLP(rng, [4 * width, width, 1])
        self.q2 = MLP(rng, [4 * width, width, 1])

    @property
    def params(self) -> list[Tensor]:
        return (
            self.encoder.params
            + self.frag_proj.params
            + self.frag_encoder.params
            + self.q1.params
            + self.q2.params
        )

    def q_values(
        self,
        state: MolGraph,
        d_site: Tensor,
        d_frag: Tensor,
        d_frag_site: Tensor,
        frag: MolGraph,
        frag_matrix: Tensor,
    ) -> tuple[Tensor, Tensor]:
        """Q1, Q2 for a (possibly relaxed one-hot) action at a state.

        ``frag_matrix`` is this critic's projected fingerprint matrix for the
        current vocabulary; it is built once per update and shared.
        """
        x, adj = graph_inputs(state)
        h = self.encoder(x, adj)
        h_state = reshape(sum_pool(h), (1, self.width))
        h_sites = take(h, list(state.attachment_points))
        h_a1 = matmul(d_site, h_sites)
        h_a2 = matmul(d_frag, frag_matrix)
        fx, fadj = graph_inputs(frag)
        hf = self.frag_encoder(fx, fadj)
        hf_sites = take(hf, list(frag.attachment_points))
        h_a3 = matmul(d_frag_site, hf_sites)
        feats = concat([h_state, h_a1, h_a2, h_a3], axis=1)
        return reshape(self.q1(feats), ()), reshape(self.q2(feats), ())

    def projected_fragments(self, ecfp_matrix: np.ndarray) -> Tensor:
        return self.frag_proj(tensor(ecfp_matrix))


class VocabCache:
    """Per-(vocabulary, parameters) constants reused across forward passes.

    Invalidate (rebuild) after any optimizer step and after any vocabulary
    change; reusing a stale cache silently mixes old and new parameters.
    """

    def __init__(self, nets: PolicyNets, vocab: Vocabulary):
        if len(vocab) == 0:
            raise EmptyVocabulary("assembly needs a non-empty vocabulary")
        self.vocab = vocab
        self.fragments = [sf.fragment for sf in vocab.entries]
        self.atom_counts = np.array([f.n_atoms for f in self.fragments])
        self.ecfp_matrix = vocab.fingerprint_matrix
        # f2's projection of every fragment fingerprint, one matmul for the
        # whole vocabulary.
        self.frag_proj = nets.fuse_frag.proj(tensor(self.ecfp_matrix))

    def feasible_mask(self, n_atoms: int, cap: int) -> np.ndarray:
        return n_atoms + self.atom_counts <= cap


@dataclass(frozen=True)
class AssemblyAction:
    site_pos: int        # position within the state's attachment point tuple
    frag_index: int      # index into the vocabulary at decision time
    frag_canonical: str  # stable identity of the chosen fragment
    frag_site_pos: int   # position within the fragment's attachment points


@dataclass
class PolicyStep:
    action: AssemblyAction
    next_state: MolGraph
    d_site: Tensor
    d_frag: Tensor
    d_frag_site: Tensor
    log_prob: Tensor
    log_prob_parts: tuple[Tensor, Tensor, Tensor]
    logits: tuple[Tensor, Tensor, Tensor]


def _masked_row(logits: Tensor, mask: np.ndarray | None) -> Tensor:
    if mask is None:
        return logits
    penalty = np.where(mask, 0.0, MASKED_LOGIT).reshape(logits.shape)
    return add(logits, penalty)


def policy_step(
    nets: PolicyNets,
    state: MolGraph,
    cache: VocabCache,
    rng: np.random.Generator,
    frag_mask: np.ndarray | None = None,
    tau: float = 1.0,
) -> PolicyStep:
    """Sample one assembly action and build the attached next state."""
    sites = state.attachment_points
    if not sites:
        raise NoOpenSites("state has no open attachment points")

    x, adj = graph_inputs(state)
    h = nets.encoder(x, adj)
    h_state = reshape(sum_pool(h), (1, nets.width))
    h_sites = take(h, list(sites))

    fused_sites = nets.fuse_site(h_state, h_sites)
    logits1 = reshape(nets.head_site(fused_sites), (1, len(sites)))
    d1 = gumbel_softmax(logits1, rng, tau=tau)
    site_pos = int(np.argmax(d1.data))
    z1 = matmul(d1, fused_sites)

    fused_frags = add(
        mul(cache.frag_proj, nets.fuse_frag.gate(z1)), nets.fuse_frag.shift(z1)
    )
    logits2 = _masked_row(
        reshape(nets.head_frag(fused_frags), (1, len(cache.fragments))), frag_mask
    )
    d2 = gumbel_softmax(logits2, rng, tau=tau)
    frag_index = int(np.argmax(d2.data))
    frag = cache.fragments[frag_index]

    fx, fadj = graph_inputs(frag)
    hf = nets.frag_encoder(fx, fadj)
    hf_pooled = reshape(sum_pool(hf), (1, nets.width))
    hf_sites = take(hf, list(frag.attachment_points))
    fused_frag_sites = nets.fuse_frag_site(hf_pooled, hf_sites)
    logits3 = reshape(
        nets.head_frag_site(fused_frag_sites), (1, len(frag.attachment_points))
    )
    d3 = gumbel_softmax(logits3, rng, tau=tau)
    frag_site_pos = int(np.argmax(d3.data))

    lp1 = take(log_softmax(logits1, axis=-1), (0, site_pos))
    lp2 = take(log_softmax(logits2, axis=-1), (0, frag_index))
    lp3 = take(log_softmax(logits3, axis=-1), (0, frag_site_pos))
    log_prob = add(add(lp1, lp2), lp3)

    next_state = attach(
        state,
        sites[site_pos],
        frag,
        frag.attachment_points[frag_site_pos],
    )
    action = AssemblyAction(
        site_pos=site_pos,
        frag_index=frag_index,
        frag_canonical=cache.vocab.entries[frag_index].canonical,
        frag_site_pos=frag_site_pos,
    )
    return PolicyStep(
        action=action,
        next_state=next_state,
        d_site=d1,
        d_frag=d2,
        d_frag_site=d3,
        log_prob=log_prob,
        log_prob_parts=(lp1, lp2, lp3),
        logits=(logits1, logits2, logits3),
    )


@dataclass(frozen=True)
class Transition:
    state: MolGraph
    action: AssemblyAction
    reward: float
    next_state: MolGraph
    done: bool


@dataclass
class EpisodeResult:
    final: MolGraph            # attachment markers already stripped
    oracle_result: OracleResult
    transitions: list[Transition]


def _is_terminal(state: MolGraph, cache: VocabCache, cap: int) -> bool:
    if not state.attachment_points:
        return True
    if state.n_atoms > cap:
        return True
    return not bool(cache.feasible_mask(state.n_atoms, cap).any())


def _finish(state: MolGraph, oracle: PropertyOracle) -> tuple[MolGraph, OracleResult]:
    final = state.without_attachment_points()
    return final, oracle.evaluate(final)


def rollout_episode(
    nets: PolicyNets,
    cache: VocabCache,
    oracle: PropertyOracle,
    rng: np.random.Generator,
    n_sac: int = MAX_ASSEMBLY_ATOMS,
    intermediate_reward: float = INTERMEDIATE_REWARD,
    seed_smiles: str = SEED_SMILES,
) -> EpisodeResult:
    """One on-policy episode from the seed scaffold."""
    state = parse_smiles(seed_smiles)
    transitions: list[Transition] = []
    terminal: tuple[MolGraph, OracleResult] | None = None
    while not _is_terminal(state, cache, n_sac):
        mask = cache.feasible_mask(state.n_atoms, n_sac)
        step = policy_step(nets, state, cache, rng, frag_mask=mask)
        done = _is_terminal(step.next_state, cache, n_sac)
        if done:
            terminal = _finish(step.next_state, oracle)
            reward = terminal[1].y
        else:
            reward = intermediate_reward
        transitions.append(
            Transition(state, step.action, reward, step.next_state, done)
        )
        state = step.next_state
    if terminal is None:
        terminal = _finish(state, oracle)
    return EpisodeResult(terminal[0], terminal[1], transitions)


def random_episode(
    cache: VocabCache,
    oracle: PropertyOracle,
    rng: np.random.Generator,
    n_sac: int = MAX_ASSEMBLY_ATOMS,
    intermediate_reward: float = INTERMEDIATE_REWARD,
    seed_smiles: str = SEED_SMILES,
) -> EpisodeResult:
    """Episode with uniform-random feasible actions, used to seed replay."""
    state = parse_smiles(seed_smiles)
    transitions: list[Transition] = []
    terminal: tuple[MolGraph, OracleResult] | None = None
    while not _is_terminal(state, cache, n_sac):
        sites = state.attachment_points
        site_pos = int(rng.integers(len(sites)))
        feasible = np.flatnonzero(cache.feasible_mask(state.n_atoms, n_sac))
        frag_index = int(feasible[rng.integers(len(feasible))])
        frag = cache.fragments[frag_index]
        frag_site_pos = int(rng.integers(len(frag.attachment_points)))
        next_state = attach(
            state,
            sites[site_pos],
            frag,
            frag.attachment_points[frag_site_pos],
        )
        done = _is_terminal(next_state, cache, n_sac)
        if done:
            terminal = _finish(next_state, oracle)
            reward = terminal[1].y
        else:
            reward = intermediate_reward
        action = AssemblyAction(
            site_pos=site_pos,
            frag_index=frag_index,
            frag_canonical=cache.vocab.entries[frag_index].canonical,
            frag_site_pos=frag_site_pos,
        )
        transitions.append(Transition(state, action, reward, next_state, done))
        state = next_state
    if terminal is None:
        terminal = _finish(state, oracle)
    return EpisodeResult(terminal[0], terminal[1], transitions)


class ReplayBuffer:
    def __init__(self, capacity: int = REPLAY_CAPACITY):
        self.capacity = capacity
        self._items: deque[Transition] = deque(maxlen=capacity)
        self.dropped_stale = 0

    def __len__(self) -> int:
        return len(self._items)

    def add(self, transition: Transition) -> None:
        self._items.append(transition)

    def extend(self, transitions: Sequence[Transition]) -> None:
        for t in transitions:
            self.add(t)

    def sample(
        self, batch_size: int, rng: np.random.Generator, vocab: Vocabulary
    ) -> list[tuple[Transition, int]]:
        """Uniform sample with fragment indices resolved in ``vocab``.

        Entries whose fragment is no longer in the vocabulary are purged
        from the buffer and counted, never returned.
        """
        stale = [t for t in self._items if t.action.frag_canonical not in vocab.index]
        if stale:
            self.dropped_stale += len(stale)
            kept = [
                t for t in self._items if t.action.frag_canonical in vocab.index
            ]
            self._items = deque(kept, maxlen=self.capacity)
        pool = list(self._items)
        if not pool:
            return []
        size = min(batch_size, len(pool))
        picks = rng.choice(len(pool), size=size, replace=False)
        return [
            (pool[i], vocab.index[pool[i].action.frag_canonical]) for i in picks
        ]


def one_hot(index: int, size: int) -> Tensor:
    row = np.zeros((1, size))
    row[0, index] = 1.0
    return tensor(row)


@dataclass
class SacConfig:
    width: int = DEFAULT_WIDTH
    depth: int = DEFAULT_DEPTH
    rank: int = DEFAULT_RANK
    n_sac: int = MAX_ASSEMBLY_ATOMS
    intermediate_reward: float = INTERMEDIATE_REWARD
    gamma: float = GAMMA
    alpha: float = ALPHA
    polyak_tau: float = POLYAK_TAU
    lr: float = 1e-3
    batch_size: int = BATCH_SIZE
    replay_capacity: int = REPLAY_CAPACITY
    prefill_steps: int = PREFILL_STEPS
    updates_per_episode: int = 1


class SacLearner:
    """Owns the networks, their targets, the optimizers, and the replay."""

    def __init__(self, rng: np.random.Generator, config: SacConfig = SacConfig()):
        self.config = config
        self.nets = PolicyNets(rng, config.width, config.depth, config.rank)
        self.critics = Critics(rng, config.width, config.depth)
        self.targets = copy.deepcopy(self.critics)
        self.buffer = ReplayBuffer(config.replay_capacity)
        self.policy_opt = Adam(self.nets.params, lr=config.lr)
        self.critic_opt = Adam(self.critics.params, lr=config.lr)

    def _zero_all(self) -> None:
        self.policy_opt.zero_grad()
        self.critic_opt.zero_grad()

    def polyak_update(self) -> None:
        tau = self.config.polyak_tau
        for target, live in zip(self.targets.params, self.critics.params):
            target.data = (1.0 - tau) * target.data + tau * live.data


def sac_update(
    learner: SacLearner,
    vocab: Vocabulary,
    rng: np.random.Generator,
) -> dict[str, float] | None:
    """One gradient step on the critics, then one on the policy.

    Returns the losses, or None when the replay cannot fill a useful batch.
    """
    cfg = learner.config
    batch = learner.buffer.sample(cfg.batch_size, rng, vocab)
    if len(batch) < 2:
        return None
    nets, critics, targets = learner.nets, learner.critics, learner.targets

    policy_cache = VocabCache(nets, vocab)
    target_matrix = targets.projected_fragments(policy_cache.ecfp_matrix)

    # Bellman targets from the frozen critics, using a fresh policy sample
    # at each next state; plain numbers, no gradient.
    ys: list[float] = []
    for t, _ in batch:
        if t.done:
            ys.append(t.reward)
            continue
        mask = policy_cache.feasible_mask(t.next_state.n_atoms, cfg.n_sac)
        nxt = policy_step(nets, t.next_state, policy_cache, rng, frag_mask=mask)
        frag = policy_cache.fragments[nxt.action.frag_index]
        q1t, q2t = targets.q_values(
            t.next_state, nxt.d_site, nxt.d_frag, nxt.d_frag_site, frag,
            target_matrix,
        )
        soft_value = min(float(q1t), float(q2t)) - cfg.alpha * float(nxt.log_prob)
        ys.append(t.reward + cfg.gamma * soft_value)

    critic_matrix = critics.projected_fragments(policy_cache.ecfp_matrix)
    critic_loss = tensor(0.0)
    for (t, frag_index), y in zip(batch, ys):
        frag = policy_cache.fragments[frag_index]
        d1 = one_hot(t.action.site_pos, len(t.state.attachment_points))
        d2 = one_hot(frag_index, len(vocab))
        d3 = one_hot(t.action.frag_site_pos, len(frag.attachment_points))
        q1, q2 = critics.q_values(t.state, d1, d2, d3, frag, critic_matrix)
        e1 = add(q1, -y)
        e2 = add(q2, -y)
        critic_loss = add(critic_loss, add(mul(e1, e1), mul(e2, e2)))
    critic_loss = mul(critic_loss, 1.0 / len(batch))
    learner._zero_all()
    critic_loss.backward()
    learner.critic_opt.step()
    learner._zero_all()

    # The critics moved; re-project the vocabulary before the policy step.
    critic_matrix = critics.projected_fragments(policy_cache.ecfp_matrix)
    policy_loss = tensor(0.0)
    for t, _ in batch:
        mask = policy_cache.feasible_mask(t.state.n_atoms, cfg.n_sac)
        step = policy_step(nets, t.state, policy_cache, rng, frag_mask=mask)
        frag = policy_cache.fragments[step.action.frag_index]
        q1, q2 = critics.q_values(
            t.state, step.d_site, step.d_frag, step.d_frag_site, frag,
            critic_matrix,
        )
        gain = add(mul(step.log_prob, cfg.alpha), mul(minimum(q1, q2), -1.0))
        policy_loss = add(policy_loss, gain)
    policy_loss = mul(policy_loss, 1.0 / len(batch))
    learner._zero_all()
    policy_loss.backward()
    learner.policy_opt.step()
    learner._zero_all()

    learner.polyak_update()
    return {
        "critic_loss": float(critic_loss),
        "policy_loss": float(policy_loss),
        "batch_size": float(len(batch)),
        "dropped_stale": float(learner.buffer.dropped_stale),
    }


def random_prefill(
    cache: VocabCache,
    oracle: PropertyOracle,
    rng: np.random.Generator,
    n_steps: int = PREFILL_STEPS,
    n_sac: int = MAX_ASSEMBLY_ATOMS,
    intermediate_reward: float = INTERMEDIATE_REWARD,
    stop: Callable[[], bool] | None = None,
    seed_smiles: str = SEED_SMILES,
) -> tuple[list[Transition], list[EpisodeResult]]:
    """Uniform-random episodes until ``n_steps`` transitions are collected.

    The terminal molecules are real, oracle-charged generations; ``stop`` is
    checked between episodes so a caller can cut the phase short when its
    generation budget is reached.
    """
    transitions: list[Transition] = []
    episodes: list[EpisodeResult] = []
    while len(transitions) < n_steps:
        if stop is not None and stop():
            break
        episode = random_episode(
            cache, oracle, rng, n_sac, intermediate_reward, seed_smiles
        )
        transitions.extend(episode.transitions)
        episodes.append(episode)
    return transitions, episodes
