import numpy as np
import pytest

from geam.assembly import (
    AssemblyAction,
    PolicyNets,
    ReplayBuffer,
    SacConfig,
    SacLearner,
    Transition,
    VocabCache,
    policy_step,
    random_episode,
    random_prefill,
    rollout_episode,
    sac_update,
)
from geam.chem import canonical_smiles, parse_smiles
from geam.datasets import MOTIF_RING
from geam.errors import EmptyVocabulary, NoOpenSites
from geam.oracles import motif_oracle, motif_sa_oracle
from geam.vocab import vocab_from_smiles

ONE_SITE_SEED = "c1(*)ccccc1"


def _log_softmax_row(row: np.ndarray) -> np.ndarray:
    shifted = row - row.max()
    return shifted - np.log(np.exp(shifted).sum())


def small_nets(seed: int = 0, width: int = 8) -> PolicyNets:
    return PolicyNets(np.random.default_rng(seed), width=width, depth=1, rank=4)


def test_vocab_cache_rejects_empty():
    from geam.vocab import Vocabulary

    with pytest.raises(EmptyVocabulary):
        VocabCache(small_nets(), Vocabulary(entries=()))


def test_feasible_mask_counts_atoms():
    vocab = vocab_from_smiles(["C*", "C(*)CC"])
    cache = VocabCache(small_nets(), vocab)
    sizes = dict(zip([sf.canonical for sf in vocab.entries], cache.atom_counts))
    mask = cache.feasible_mask(n_atoms=7, cap=8)
    # Only fragments that keep the total within the cap stay feasible.
    assert list(mask) == [sizes[sf.canonical] <= 1 for sf in vocab.entries]


def test_policy_step_forced_choice_has_zero_log_prob():
    nets = small_nets()
    vocab = vocab_from_smiles(["C*"])
    cache = VocabCache(nets, vocab)
    state = parse_smiles(ONE_SITE_SEED)
    step = policy_step(nets, state, cache, np.random.default_rng(0))
    assert step.action.site_pos == 0
    assert step.action.frag_index == 0
    assert step.action.frag_site_pos == 0
    assert float(step.log_prob) == 0.0
    assert step.next_state.n_atoms == 7
    assert not step.next_state.attachment_points


def test_policy_step_log_prob_matches_logits():
    nets = small_nets(3)
    vocab = vocab_from_smiles(["C*", "C(*)C", "C(*)CO", "N*"])
    cache = VocabCache(nets, vocab)
    state = parse_smiles("c1(*)c(*)ccc(*)c1")
    step = policy_step(nets, state, cache, np.random.default_rng(5))
    picks = (step.action.site_pos, step.action.frag_index,
             step.action.frag_site_pos)
    expected = sum(
        _log_softmax_row(logits.data[0])[pick]
        for logits, pick in zip(step.logits, picks)
    )
    assert float(step.log_prob) == pytest.approx(expected, rel=1e-12)


def test_policy_step_requires_open_site():
    nets = small_nets()
    cache = VocabCache(nets, vocab_from_smiles(["C*"]))
    with pytest.raises(NoOpenSites):
        policy_step(nets, parse_smiles("CC"), cache, np.random.default_rng(0))


def test_policy_step_respects_fragment_mask():
    nets = small_nets(1)
    vocab = vocab_from_smiles(["C*", "C(*)C", "C(*)CO"])
    cache = VocabCache(nets, vocab)
    state = parse_smiles(ONE_SITE_SEED)
    rng = np.random.default_rng(2)
    for keep in range(3):
        mask = np.zeros(3, dtype=bool)
        mask[keep] = True
        step = policy_step(nets, state, cache, rng, frag_mask=mask)
        assert step.action.frag_index == keep


def test_rollout_rewards_and_termination():
    nets = small_nets(2)
    vocab = vocab_from_smiles(["C(*)C"])
    cache = VocabCache(nets, vocab)
    oracle = motif_sa_oracle(MOTIF_RING)
    episode = rollout_episode(nets, cache, oracle, np.random.default_rng(0))
    # Three seed sites, one-site fragments: exactly three steps.
    assert len(episode.transitions) == 3
    assert [t.reward for t in episode.transitions[:-1]] == [0.05, 0.05]
    last = episode.transitions[-1]
    assert last.done and not any(t.done for t in episode.transitions[:-1])
    assert last.reward == episode.oracle_result.y
    assert not episode.final.attachment_points
    assert canonical_smiles(episode.final) == episode.oracle_result.smiles


def test_rollout_stops_at_atom_budget():
    nets = small_nets(4)
    cache = VocabCache(nets, vocab_from_smiles(["C*"]))
    oracle = motif_oracle(MOTIF_RING)
    episode = rollout_episode(
        nets, cache, oracle, np.random.default_rng(1), n_sac=8
    )
    # 6-atom seed, 1-atom additions, cap 8: two welds then nothing fits.
    assert len(episode.transitions) == 2
    assert episode.final.n_atoms == 8


def test_random_episode_site_choice_is_uniform():
    nets = small_nets(5)
    cache = VocabCache(nets, vocab_from_smiles(["C*", "O*"]))
    oracle = motif_oracle(MOTIF_RING)
    rng = np.random.default_rng(9)
    counts = np.zeros(3)
    n = 2500
    for _ in range(n):
        episode = random_episode(cache, oracle, rng)
        counts[episode.transitions[0].action.site_pos] += 1
    assert np.all(np.abs(counts / n - 1.0 / 3.0) < 0.04)


def test_random_prefill_counts_steps_and_stop():
    nets = small_nets(6)
    cache = VocabCache(nets, vocab_from_smiles(["C*"]))
    oracle = motif_oracle(MOTIF_RING)
    rng = np.random.default_rng(0)
    transitions, episodes = random_prefill(cache, oracle, rng, n_steps=0)
    assert transitions == [] and episodes == []
    transitions, episodes = random_prefill(cache, oracle, rng, n_steps=1)
    # Whole episodes are kept, so one request can overshoot by an episode.
    assert len(episodes) == 1
    assert len(transitions) == len(episodes[0].transitions)
    transitions, episodes = random_prefill(
        cache, oracle, rng, n_steps=100, stop=lambda: True
    )
    assert transitions == [] and episodes == []


def _transition(frag_canonical: str) -> Transition:
    state = parse_smiles(ONE_SITE_SEED)
    action = AssemblyAction(0, 0, frag_canonical, 0)
    return Transition(state, action, 1.0, state, True)


def test_replay_buffer_purges_stale_fragments():
    c_carbon = canonical_smiles(parse_smiles("C*"))
    c_oxygen = canonical_smiles(parse_smiles("O*"))
    buffer = ReplayBuffer(capacity=100)
    for _ in range(6):
        buffer.add(_transition(c_carbon))
    for _ in range(4):
        buffer.add(_transition(c_oxygen))
    shrunk = vocab_from_smiles(["C*"])
    batch = buffer.sample(50, np.random.default_rng(0), shrunk)
    assert buffer.dropped_stale == 4
    assert len(buffer) == 6
    assert len(batch) == 6
    assert all(t.action.frag_canonical == c_carbon for t, _ in batch)
    assert all(idx == shrunk.index[c_carbon] for _, idx in batch)


def test_replay_buffer_empty_sample():
    buffer = ReplayBuffer()
    assert buffer.sample(8, np.random.default_rng(0), vocab_from_smiles(["C*"])) == []


def test_replay_buffer_capacity_evicts_oldest():
    c = canonical_smiles(parse_smiles("C*"))
    buffer = ReplayBuffer(capacity=3)
    for reward in range(5):
        state = parse_smiles(ONE_SITE_SEED)
        buffer.add(Transition(state, AssemblyAction(0, 0, c, 0), float(reward),
                              state, True))
    assert len(buffer) == 3
    rewards = {t.reward for t, _ in buffer.sample(
        3, np.random.default_rng(0), vocab_from_smiles(["C*"]))}
    assert rewards == {2.0, 3.0, 4.0}


def test_sac_update_needs_a_batch():
    learner = SacLearner(np.random.default_rng(0),
                         SacConfig(width=8, depth=1, rank=4))
    assert sac_update(learner, vocab_from_smiles(["C*"]), np.random.default_rng(0)) is None


def test_single_step_q_regresses_to_reward():
    # One open seed site and one-site fragments make every episode a single
    # terminal transition, so the Bellman target is the reward itself and the
    # critics should fit it closely regardless of gamma.
    config = SacConfig(width=8, depth=1, rank=4, batch_size=16, lr=1e-2,
                       gamma=0.0)
    learner = SacLearner(np.random.default_rng(7), config)
    vocab = vocab_from_smiles(["C*", "C(*)CO", "C(*)c1ccncc1"])
    cache = VocabCache(learner.nets, vocab)
    oracle = motif_sa_oracle(MOTIF_RING)
    rng = np.random.default_rng(3)
    for _ in range(40):
        episode = random_episode(cache, oracle, rng,
                                 seed_smiles=ONE_SITE_SEED)
        assert len(episode.transitions) == 1
        learner.buffer.extend(episode.transitions)
    losses = []
    for _ in range(60):
        stats = sac_update(learner, vocab, rng)
        losses.append(stats["critic_loss"])
    assert losses[-1] < 0.01
    assert losses[-1] < losses[0]
