"""Adjacency matrices from Gram samples and triangle statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy import stats

from .ensembles import (
    GramSample,
    SeededStream,
    format_upper,
    map_blocks,
    parse_upper,
    sample_gram_batch,
)
from .errors import InvalidParameterError, ShapeError, UsageError
from .parallel import Parallel
from .spectrum import SpectrumLike, as_spectrum

REPLICA_BLOCK = 512
DIRECT_TAU_MAX_N = 64


class AdjacencyMatrix:
    """Simple undirected graph stored as a bit-packed strict upper triangle."""

    __slots__ = ("n", "bits")

    def __init__(self, n: int, bits: np.ndarray):
        self.n = int(n)
        self.bits = np.asarray(bits, dtype=np.uint8)
        self.bits.setflags(write=False)

    @classmethod
    def from_dense(cls, a) -> "AdjacencyMatrix":
        a = np.asarray(a)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ShapeError("adjacency must be square")
        if not np.array_equal(a, a.T):
            raise InvalidParameterError("adjacency must be symmetric")
        if np.any(np.diag(a) != 0):
            raise InvalidParameterError("adjacency must have zero diagonal")
        if not np.all((a == 0) | (a == 1)):
            raise InvalidParameterError("adjacency entries must be 0 or 1")
        n = a.shape[0]
        upper = a[np.triu_indices(n, 1)].astype(bool)
        return cls(n, np.packbits(upper))

    @classmethod
    def complete(cls, n: int) -> "AdjacencyMatrix":
        return cls.from_dense(np.ones((n, n), dtype=np.uint8) - np.eye(n, dtype=np.uint8))

    @classmethod
    def empty(cls, n: int) -> "AdjacencyMatrix":
        return cls.from_dense(np.zeros((n, n), dtype=np.uint8))

    def upper(self) -> np.ndarray:
        m = self.n * (self.n - 1) // 2
        return np.unpackbits(self.bits, count=m).astype(bool)

    def dense(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=np.uint8)
        a[np.triu_indices(self.n, 1)] = self.upper()
        return a | a.T

    @property
    def edge_count(self) -> int:
        return int(self.upper().sum())

    def __eq__(self, other) -> bool:
        return isinstance(other, AdjacencyMatrix) and self.n == other.n and np.array_equal(self.bits, other.bits)

    def __repr__(self) -> str:
        return f"AdjacencyMatrix(n={self.n}, edges={self.edge_count})"

    def to_text(self) -> str:
        return format_upper(self.dense(), "adjacency", integer=True)

    @classmethod
    def from_text(cls, text: str) -> "AdjacencyMatrix":
        m, kind = parse_upper(text)
        if kind != "adjacency":
            raise UsageError(f"expected an adjacency file, found kind {kind!r}")
        return cls.from_dense(m.astype(np.uint8))


def write_adjacency(a: AdjacencyMatrix, path: Union[str, Path]) -> None:
    Path(path).write_text(a.to_text())


def read_adjacency(path: Union[str, Path]) -> AdjacencyMatrix:
    return AdjacencyMatrix.from_text(Path(path).read_text())


@dataclass(frozen=True)
class TriangleReport:
    t_count: int
    tau: float
    n: int
    p: float


def _threshold_graph(entries: np.ndarray, cut: float) -> AdjacencyMatrix:
    a = (entries >= cut).astype(np.uint8)
    np.fill_diagonal(a, 0)
    return AdjacencyMatrix.from_dense(a)


def geometric_graph(w: GramSample, t_scaled: float) -> AdjacencyMatrix:
    """Edge i~j iff W_ij >= t_scaled (ties count as edges)."""
    if w.kind != "geometric":
        raise UsageError(f"geometric_graph needs a geometric Gram sample, got {w.kind!r}")
    return _threshold_graph(w.entries, t_scaled)


def er_graph(m: GramSample, z_p: float) -> AdjacencyMatrix:
    """Edge i~j iff M_ij >= z_p, so each edge appears independently with P(Z >= z_p)."""
    if m.kind != "goe":
        raise UsageError(f"er_graph needs a GOE sample, got {m.kind!r}")
    return _threshold_graph(m.entries, z_p)


def triangle_count(a: AdjacencyMatrix) -> int:
    """Number of triangles, trace(A^3) / 6 in exact integer arithmetic."""
    d = a.dense().astype(np.int64)
    return int(np.einsum("ij,ji->", d @ d, d)) // 6


@lru_cache(maxsize=16)
def _triples(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    idx = np.array(list(combinations(range(n), 3)), dtype=np.intp).reshape(-1, 3)
    return idx[:, 0], idx[:, 1], idx[:, 2]


def _check_prob(p: float) -> None:
    if not 0 < p < 1:
        raise InvalidParameterError(f"p must lie in (0, 1), got {p}")


def signed_triangles(a: AdjacencyMatrix, p: float, method: str = "auto") -> float:
    """Sum over unordered triples of (A_ij - p)(A_ik - p)(A_jk - p).

    ``method="direct"`` sums over the triples explicitly; ``"trace"`` uses
    trace(B^3)/6 with B = A - p off the diagonal and 0 on it. ``"auto"``
    picks direct for n <= 64.
    """
    _check_prob(p)
    if method == "auto":
        method = "direct" if a.n <= DIRECT_TAU_MAX_N else "trace"
    b = a.dense().astype(np.float64) - p
    np.fill_diagonal(b, 0.0)
    if method == "direct":
        if a.n < 3:
            return 0.0
        i, j, k = _triples(a.n)
        return float(np.sum(b[i, j] * b[i, k] * b[j, k]))
    if method == "trace":
        return float(np.einsum("ij,ji->", b @ b, b)) / 6.0
    raise InvalidParameterError(f"unknown method {method!r}")


def triangle_report(a: AdjacencyMatrix, p: float) -> TriangleReport:
    return TriangleReport(triangle_count(a), signed_triangles(a, p), a.n, p)


def tau_batch(adj: np.ndarray, p: float) -> np.ndarray:
    """Signed-triangle statistic for a stack of dense adjacency matrices (R, n, n)."""
    b = adj.astype(np.float64) - p
    idx = np.arange(adj.shape[-1])
    b[..., idx, idx] = 0.0
    return np.einsum("rij,rjk,rki->r", b, b, b) / 6.0


def er_adjacency_batch(gen: np.random.Generator, n: int, p: float, size: int) -> np.ndarray:
    """``size`` Erdos-Renyi adjacency matrices drawn edge by edge."""
    iu = np.triu_indices(n, 1)
    a = np.zeros((size, n, n), dtype=np.uint8)
    a[:, iu[0], iu[1]] = gen.random((size, iu[0].size)) < p
    return a | np.swapaxes(a, 1, 2)


def geometric_adjacency_batch(
    gen: np.random.Generator, n: int, alpha, t_scaled: float, size: int
) -> np.ndarray:
    w = sample_gram_batch(gen, n, alpha, size)
    a = (w >= t_scaled).astype(np.uint8)
    idx = np.arange(n)
    a[:, idx, idx] = 0
    return a


def tau_samples(
    model: str,
    n: int,
    p: float,
    replicas: int,
    stream: SeededStream,
    alpha: Optional[SpectrumLike] = None,
    t_scaled: Optional[float] = None,
    parallel: Optional[Parallel] = None,
) -> np.ndarray:
    """Independent draws of tau(G) under ``er`` or ``geometric``.

    Replica block b (of REPLICA_BLOCK graphs) uses ``stream.child(b)``.
    Erdos-Renyi graphs are drawn directly as Bernoulli edges; geometric
    graphs threshold a sampled Gram matrix at ``t_scaled`` (computed by
    inversion when not given).
    """
    _check_prob(p)
    if model == "er":

        def block(gen, m):
            return tau_batch(er_adjacency_batch(gen, n, p, m), p)

        label = "tau_er"
    elif model in ("geometric", "geo"):
        if alpha is None:
            raise InvalidParameterError("geometric model needs a spectrum")
        alpha = as_spectrum(alpha)
        if t_scaled is None:
            from .threshold import threshold_charfun

            t_scaled = threshold_charfun(alpha, p).t / alpha.norm2

        def block(gen, m):
            return tau_batch(geometric_adjacency_batch(gen, n, alpha, t_scaled, m), p)

        label = "tau_geometric"
    else:
        raise InvalidParameterError(f"unknown model {model!r}")
    parts = map_blocks(block, replicas, REPLICA_BLOCK, stream.derive(label), parallel)
    return np.concatenate(parts)


@dataclass(frozen=True)
class TauMoments:
    mean: float
    variance: float
    mean_se: float
    variance_se: float
    replicas: int

    @property
    def std_errors(self) -> dict:
        return {"mean": self.mean_se, "variance": self.variance_se}


def moments_of(x: np.ndarray) -> TauMoments:
    """Sample mean and variance with their standard errors."""
    x = np.asarray(x, dtype=np.float64)
    r = x.size
    mean = float(x.mean())
    dev = x - mean
    var = float(dev @ dev / (r - 1))
    m4 = float(np.mean(dev**4))
    var_se = math.sqrt(max(m4 - var * var * (r - 3) / (r - 1), 0.0) / r)
    return TauMoments(mean, var, math.sqrt(var / r), var_se, r)


def tau_moments_mc(
    model: str,
    n: int,
    p: float,
    alpha: Optional[SpectrumLike] = None,
    replicas: int = 10_000,
    stream: Optional[SeededStream] = None,
    parallel: Optional[Parallel] = None,
    t_scaled: Optional[float] = None,
) -> TauMoments:
    """Monte Carlo mean and variance of tau(G) over independent graphs."""
    if replicas < 100:
        raise InvalidParameterError("replicas must be >= 100")
    stream = stream or SeededStream(0)
    return moments_of(tau_samples(model, n, p, replicas, stream, alpha, t_scaled, parallel))


def er_tau_variance(n: int, p: float) -> float:
    """Exact Var tau(G(n,p)) = C(n,3) (p(1-p))^3."""
    return math.comb(n, 3) * (p * (1 - p)) ** 3


def z_quantile(p: float) -> float:
    """Standard-normal upper-p quantile."""
    return float(stats.norm.isf(p))
