"""Neural building blocks on top of the autodiff tape.

Covers the pieces the bottleneck and the assembly policy share: linear/MLP
stacks, message passing and graph convolution encoders, pooling, low-rank
multiplicative fusion, Gumbel-Softmax sampling, Gaussian reparameterization,
Adam, and a flat binary checkpoint format for named parameters.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from geam.autodiff import (
    Tensor,
    add,
    concat,
    matmul,
    mul,
    relu,
    sigmoid,
    softmax,
    sqrt0,
    straight_through,
    tensor,
    tmean,
)
from geam.chem.graph import ELEMENTS, MolGraph
from geam.errors import (
    CheckpointFormatError,
    NegativeVariance,
    NonPositiveTemperature,
    ShapeMismatch,
)

FEATURE_DIM = len(ELEMENTS) + 2  # one-hot element + aromatic + marker count


def graph_inputs(mol: MolGraph) -> tuple[np.ndarray, np.ndarray]:
    """Atom feature matrix and binary adjacency for a molecule or fragment."""
    n = mol.n_atoms
    x = np.zeros((n, FEATURE_DIM))
    for i, atom in enumerate(mol.atoms):
        x[i, ELEMENTS.index(atom.element)] = 1.0
        x[i, len(ELEMENTS)] = float(atom.aromatic)
        x[i, len(ELEMENTS) + 1] = float(mol.marker_counts[i])
    a = np.zeros((n, n))
    for bond in mol.bonds:
        a[bond.a, bond.b] = 1.0
        a[bond.b, bond.a] = 1.0
    return x, a


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class Linear:
    def __init__(self, rng: np.random.Generator, fan_in: int, fan_out: int):
        self.w = Tensor(glorot(rng, fan_in, fan_out), requires_grad=True)
        self.b = Tensor(np.zeros(fan_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return add(matmul(x, self.w), self.b)

    @property
    def params(self) -> list[Tensor]:
        return [self.w, self.b]


class MLP:
    """Dense stack with relu between layers and a configurable output head."""

    def __init__(
        self,
        rng: np.random.Generator,
        sizes: Sequence[int],
        out: str = "linear",  # "linear" | "sigmoid"
    ):
        self.layers = [
            Linear(rng, sizes[i], sizes[i + 1]) for i in range(len(sizes) - 1)
        ]
        self.out = out

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = relu(x)
        if self.out == "sigmoid":
            x = sigmoid(x)
        return x

    @property
    def params(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.params]


class Mpnn:
    """Neighbor-sum message passing: h' = relu([h; A h] W + b) per round."""

    def __init__(
        self,
        rng: np.random.Generator,
        feature_dim: int,
        width: int,
        rounds: int = 3,
    ):
        self.rounds = []
        size = feature_dim
        for _ in range(rounds):
            self.rounds.append(Linear(rng, 2 * size, width))
            size = width

    def __call__(self, x: np.ndarray, adj: np.ndarray) -> Tensor:
        h = tensor(x)
        a = tensor(adj)
        for layer in self.rounds:
            messages = matmul(a, h)
            h = relu(layer(concat([h, messages], axis=1)))
        return h

    @property
    def params(self) -> list[Tensor]:
        return [p for layer in self.rounds for p in layer.params]


class Gcn:
    """Graph convolution with symmetric-normalized adjacency plus self loops."""

    def __init__(
        self,
        rng: np.random.Generator,
        feature_dim: int,
        width: int,
        depth: int = 3,
    ):
        self.layers = []
        size = feature_dim
        for _ in range(depth):
            self.layers.append(Linear(rng, size, width))
            size = width

    def __call__(self, x: np.ndarray, adj: np.ndarray) -> Tensor:
        norm = tensor(normalized_adjacency(adj))
        h = tensor(x)
        for layer in self.layers:
            h = relu(layer(matmul(norm, h)))
        return h

    @property
    def params(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.params]


def normalized_adjacency(adj: np.ndarray) -> np.ndarray:
    a = adj + np.eye(adj.shape[0])
    inv_sqrt_deg = 1.0 / np.sqrt(a.sum(axis=1))
    return a * inv_sqrt_deg[:, None] * inv_sqrt_deg[None, :]


def sum_pool(h: Tensor) -> Tensor:
    from geam.autodiff import tsum

    return tsum(h, axis=0)


def mean_pool(h: Tensor) -> Tensor:
    return tmean(h, axis=0)


class Fusion:
    """Low-rank multiplicative interaction: x gates and shifts a projection
    of y, giving one fused vector per row of y."""

    def __init__(
        self, rng: np.random.Generator, x_dim: int, y_dim: int, rank: int
    ):
        self.gate = Linear(rng, x_dim, rank)
        self.shift = Linear(rng, x_dim, rank)
        self.proj = Linear(rng, y_dim, rank)

    def __call__(self, x: Tensor, y: Tensor) -> Tensor:
        return add(mul(self.proj(y), self.gate(x)), self.shift(x))

    @property
    def params(self) -> list[Tensor]:
        return self.gate.params + self.shift.params + self.proj.params


# -- stochastic nodes -----------------------------------------------------------


def gumbel_softmax(
    logits: Tensor,
    rng: np.random.Generator,
    tau: float = 1.0,
    hard: bool = True,
) -> Tensor:
    """Sample a relaxed one-hot over the last axis.

    With ``hard`` the forward value is an exact one-hot of the perturbed
    argmax and gradients flow through the soft sample (straight-through).
    """
    if tau <= 0:
        raise NonPositiveTemperature(f"temperature must be > 0, got {tau}")
    noise = rng.gumbel(size=logits.shape)
    soft = softmax(mul(add(logits, noise), 1.0 / tau), axis=-1)
    if not hard:
        return soft
    flat = soft.data.reshape(-1, soft.shape[-1])
    hard_data = np.zeros_like(flat)
    hard_data[np.arange(flat.shape[0]), flat.argmax(axis=1)] = 1.0
    return straight_through(soft, hard_data.reshape(soft.shape))


def gaussian_reparam(
    mean: Tensor, diag_cov: Tensor, noise: np.ndarray
) -> Tensor:
    """mean + sqrt(diag_cov) * noise with sqrt'(0) defined as 0."""
    if mean.shape != diag_cov.shape or mean.shape != noise.shape:
        raise ShapeMismatch(
            f"reparam shapes differ: {mean.shape}, {diag_cov.shape}, {noise.shape}"
        )
    if np.any(diag_cov.data < 0):
        raise NegativeVariance("diagonal covariance entries must be >= 0")
    return add(mean, mul(sqrt0(diag_cov), noise))


# -- optimization -----------------------------------------------------------------


@dataclass
class Adam:
    params: list[Tensor]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        """One bias-corrected update; parameters with no gradient stay put."""
        self.t += 1
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            m_hat = self.m[i] / (1 - self.beta1**self.t)
            v_hat = self.v[i] / (1 - self.beta2**self.t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


# -- checkpoint format -------------------------------------------------------------

_MAGIC = b"GEAMTNSR"
_VERSION = 1


def save_params(path: str, named: dict[str, np.ndarray]) -> None:
    """Flat binary checkpoint: magic, version, shape table, row-major f64."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(named)))
        for name, arr in named.items():
            raw = name.encode("utf-8")
            # np.ascontiguousarray would promote 0-d scalars to 1-d.
            arr = np.asarray(arr, dtype=np.float64, order="C")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes(order="C"))


def load_params(path: str) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != _MAGIC:
        raise CheckpointFormatError("bad magic bytes")
    offset = 8
    try:
        version, count = struct.unpack_from("<II", blob, offset)
        offset += 8
        if version != _VERSION:
            raise CheckpointFormatError(f"unsupported version {version}")
        named: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = blob[offset : offset + name_len].decode("utf-8")
            offset += name_len
            (ndim,) = struct.unpack_from("<B", blob, offset)
            offset += 1
            shape = struct.unpack_from(f"<{ndim}Q", blob, offset)
            offset += 8 * ndim
            size = int(np.prod(shape)) if ndim else 1
            arr = np.frombuffer(
                blob, dtype="<f8", count=size, offset=offset
            ).reshape(shape)
            offset += 8 * size
            named[name] = arr.copy()
    except struct.error as exc:
        raise CheckpointFormatError("truncated checkpoint") from exc
    if offset != len(blob):
        raise CheckpointFormatError("trailing bytes in checkpoint")
    return named


def collect_params(prefix: str, obj) -> dict[str, np.ndarray]:
    """Name parameters of a Linear/MLP/Mpnn/Gcn/Fusion tree by position."""
    return {
        f"{prefix}.{i}": p.data for i, p in enumerate(obj.params)
    }


def restore_params(obj, prefix: str, named: dict[str, np.ndarray]) -> None:
    for i, p in enumerate(obj.params):
        key = f"{prefix}.{i}"
        if key not in named:
            raise CheckpointFormatError(f"missing parameter {key}")
        if named[key].shape != p.data.shape:
            raise CheckpointFormatError(
                f"shape mismatch for {key}: {named[key].shape} vs {p.data.shape}"
            )
        p.data = named[key].copy()
