"""Property-aware fragment scoring via a graph information bottleneck.

A message-passing encoder embeds atoms; each fragment embedding is the mean
of its member atoms. A small head maps every fragment embedding to a weight
w in (0, 1), and the fragment's embedding is blended toward the batch-free
empirical moments of the molecule with noise proportional to (1 - w): a
fragment the predictor does not need drowns in noise, so w learns to mark
property-relevant fragments. Training minimizes prediction loss plus a small
KL toward a unit Gaussian; after training, a fragment's vocabulary score
averages w / sqrt(fragment size) weighted by the property over the molecules
that contain it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from geam.autodiff import (
    Tensor,
    add,
    log,
    matmul,
    mul,
    reshape,
    sigmoid,
    softplus,
    tensor,
    tmean,
    tsum,
)
from geam.chem.graph import MolGraph
from geam.errors import EmptyDataset, EmptyDecomposition, EmptySupport
from geam.fragment import Decomposition, FragmentCandidate, decompose
from geam.nn import (
    FEATURE_DIM,
    MLP,
    Adam,
    Mpnn,
    collect_params,
    gaussian_reparam,
    graph_inputs,
    load_params,
    restore_params,
    save_params,
)

KL_VARIANCE_FLOOR = 1e-8


@dataclass(frozen=True)
class FgibConfig:
    embed_dim: int = 64
    mpnn_rounds: int = 3
    weight_hidden: int = 64
    predictor_hidden: int = 64
    epochs: int = 10
    lr: float = 1e-3
    beta: float = 1e-5
    batch_size: int = 32
    nll: str = "bernoulli"  # or "gaussian" (squared error on the prediction)


class FgibModel:
    def __init__(self, rng: np.random.Generator, config: FgibConfig = FgibConfig()):
        self.config = config
        d = config.embed_dim
        self.encoder = Mpnn(rng, FEATURE_DIM, d, config.mpnn_rounds)
        # Two dense layers ending in a sigmoid weight per fragment.
        self.weight_head = MLP(rng, [d, config.weight_hidden, 1], out="sigmoid")
        # Three dense layers over the pooled perturbed embeddings; the head
        # returns a logit and the loss applies the sigmoid where needed.
        self.predictor = MLP(
            rng, [d, config.predictor_hidden, config.predictor_hidden, 1]
        )

    @property
    def params(self) -> list[Tensor]:
        return (
            self.encoder.params + self.weight_head.params + self.predictor.params
        )

    def fragment_embeddings(self, graph: MolGraph, decomp: Decomposition) -> Tensor:
        if decomp.n_fragments == 0:
            raise EmptyDecomposition("graph decomposed into zero fragments")
        x, adj = graph_inputs(graph)
        h = self.encoder(x, adj)
        member = np.zeros((decomp.n_fragments, graph.n_atoms))
        for j, atom_ids in enumerate(decomp.atom_indices):
            member[j, list(atom_ids)] = 1.0 / len(atom_ids)
        return matmul(tensor(member), h)

    def fragment_weights(self, graph: MolGraph, decomp: Decomposition) -> np.ndarray:
        """Noise-free w per fragment, as a plain array."""
        e = self.fragment_embeddings(graph, decomp)
        return self.weight_head(e).data.reshape(-1)

    def save(self, path: str) -> None:
        named = {
            "meta.embed_dim": np.array(float(self.config.embed_dim)),
            "meta.mpnn_rounds": np.array(float(self.config.mpnn_rounds)),
            "meta.weight_hidden": np.array(float(self.config.weight_hidden)),
            "meta.predictor_hidden": np.array(float(self.config.predictor_hidden)),
        }
        named.update(collect_params("encoder", self.encoder))
        named.update(collect_params("weight", self.weight_head))
        named.update(collect_params("predictor", self.predictor))
        save_params(path, named)

    @classmethod
    def load(cls, path: str) -> "FgibModel":
        named = load_params(path)
        config = FgibConfig(
            embed_dim=int(named["meta.embed_dim"]),
            mpnn_rounds=int(named["meta.mpnn_rounds"]),
            weight_hidden=int(named["meta.weight_hidden"]),
            predictor_hidden=int(named["meta.predictor_hidden"]),
        )
        model = cls(np.random.default_rng(0), config)
        restore_params(model.encoder, "encoder", named)
        restore_params(model.weight_head, "weight", named)
        restore_params(model.predictor, "predictor", named)
        return model


@dataclass
class BottleneckOut:
    w: Tensor            # (m, 1)
    perturbed: Tensor    # (m, d)
    mean: Tensor         # (m, d); mean of the perturbed distribution
    var: Tensor          # (m, d); its diagonal covariance
    pred_logit: Tensor   # scalar
    kl: Tensor           # scalar


def perturb_embeddings(
    e: Tensor, w: Tensor, mu_hat: Tensor, sig_hat: Tensor, eps: np.ndarray
) -> tuple[Tensor, Tensor, Tensor]:
    """Blend fragment embeddings toward the empirical moments.

    Returns (perturbed, mean, var) with mean = w*e + (1-w)*mu_hat and
    var = (1-w)*sig_hat. A single-fragment graph short-circuits to e itself:
    its empirical moments are (e, 0), so the formula reduces to e exactly and
    the shortcut avoids a 1-ulp rounding wobble.
    """
    m = e.shape[0]
    one_minus_w = add(mul(w, -1.0), 1.0)
    var = mul(one_minus_w, sig_hat)
    if m == 1:
        return e, e, var
    mean = add(mul(w, e), mul(one_minus_w, mu_hat))
    return gaussian_reparam(mean, var, eps), mean, var


def bottleneck_forward(
    model: FgibModel,
    graph: MolGraph,
    decomp: Decomposition,
    rng: np.random.Generator | None = None,
    noise: np.ndarray | None = None,
) -> BottleneckOut:
    """One stochastic forward pass; pass ``noise`` to freeze the sampling."""
    e = model.fragment_embeddings(graph, decomp)
    m, d = e.shape
    w = model.weight_head(e)
    mu_hat = reshape(tmean(e, axis=0), (1, d))
    centered = add(e, mul(mu_hat, -1.0))
    sig_hat = reshape(tmean(mul(centered, centered), axis=0), (1, d))
    if noise is None:
        noise = (
            rng.standard_normal((m, d)) if rng is not None else np.zeros((m, d))
        )
    perturbed, mean, var = perturb_embeddings(e, w, mu_hat, sig_hat, noise)
    pooled = reshape(tmean(perturbed, axis=0), (1, d))
    pred_logit = reshape(model.predictor(pooled), ())
    kl = kl_standard_normal(mean, var)
    return BottleneckOut(w, perturbed, mean, var, pred_logit, kl)


def kl_standard_normal(mean: Tensor, var: Tensor) -> Tensor:
    """KL(N(mean, diag(var)) || N(0, I)), summed over all entries.

    The variance is floored at 1e-8 so saturated weights cannot drive the
    log term to -inf; the sampling path stays unfloored.
    """
    floored = add(var, KL_VARIANCE_FLOOR)
    terms = add(add(floored, mul(mean, mean)), add(mul(log(floored), -1.0), -1.0))
    return mul(tsum(terms), 0.5)


def ib_loss(
    model: FgibModel,
    batch: Sequence[tuple[MolGraph, Decomposition, float]],
    beta: float,
    rng: np.random.Generator | None = None,
    noises: Sequence[np.ndarray] | None = None,
) -> tuple[Tensor, dict[str, float]]:
    """Mean prediction loss plus beta-weighted KL over a batch."""
    if not batch:
        raise EmptyDataset("ib_loss needs a non-empty batch")
    total = tensor(0.0)
    nll_sum = 0.0
    kl_sum = 0.0
    for i, (graph, decomp, y) in enumerate(batch):
        noise = noises[i] if noises is not None else None
        out = bottleneck_forward(model, graph, decomp, rng=rng, noise=noise)
        if model.config.nll == "gaussian":
            err = add(sigmoid(out.pred_logit), -y)
            nll = mul(mul(err, err), 0.5)
        else:
            nll = add(softplus(out.pred_logit), mul(out.pred_logit, -y))
        total = add(total, add(nll, mul(out.kl, beta)))
        nll_sum += float(nll)
        kl_sum += float(out.kl)
    loss = mul(total, 1.0 / len(batch))
    parts = {"nll": nll_sum / len(batch), "kl": kl_sum / len(batch)}
    return loss, parts


def train_fgib(
    dataset: Sequence[tuple[MolGraph, float]],
    config: FgibConfig = FgibConfig(),
    seed: int = 0,
    decompositions: Sequence[Decomposition] | None = None,
) -> tuple[FgibModel, list[dict[str, float]]]:
    """Train a fresh model; returns it with the per-epoch loss history."""
    if not dataset:
        raise EmptyDataset("training needs a non-empty dataset")
    rng = np.random.default_rng(seed)
    model = FgibModel(rng, config)
    if decompositions is None:
        decompositions = [decompose(graph) for graph, _ in dataset]
    entries = [
        (graph, decomp, y)
        for (graph, y), decomp in zip(dataset, decompositions)
    ]
    opt = Adam(model.params, lr=config.lr)
    history: list[dict[str, float]] = []
    for _epoch in range(config.epochs):
        order = rng.permutation(len(entries))
        epoch_loss = 0.0
        epoch_nll = 0.0
        epoch_kl = 0.0
        n_batches = 0
        for start in range(0, len(entries), config.batch_size):
            batch = [entries[i] for i in order[start : start + config.batch_size]]
            loss, parts = ib_loss(model, batch, config.beta, rng=rng)
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_loss += float(loss)
            epoch_nll += parts["nll"]
            epoch_kl += parts["kl"]
            n_batches += 1
        history.append(
            {
                "loss": epoch_loss / n_batches,
                "nll": epoch_nll / n_batches,
                "kl": epoch_kl / n_batches,
            }
        )
    return model, history


class FragmentScorer:
    """Scores fragments with a trained model, caching per-graph weights."""

    def __init__(self, model: FgibModel):
        self.model = model
        self._w_cache: dict[MolGraph, np.ndarray] = {}

    def weights_for(self, graph: MolGraph, decomp: Decomposition) -> np.ndarray:
        if graph not in self._w_cache:
            self._w_cache[graph] = self.model.fragment_weights(graph, decomp)
        return self._w_cache[graph]

    def score(self, candidate: FragmentCandidate) -> float:
        """Average over supporting molecules of w / sqrt(|fragment|) * y.

        A fragment occurring several times in one molecule contributes the
        mean of its occurrence weights for that molecule.
        """
        if not candidate.support:
            raise EmptySupport(f"no support for {candidate.canonical}")
        size = candidate.fragment.n_atoms
        total = 0.0
        for entry in candidate.support:
            w = self.weights_for(entry.graph, entry.decomposition)
            w_mean = float(np.mean([w[p] for p in entry.positions]))
            total += w_mean / np.sqrt(size) * entry.y
        return total / len(candidate.support)
