"""Seeded sampling of Gaussian point clouds, Gram matrices and the GOE ensemble."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import InvalidParameterError, ShapeError, UsageError
from .parallel import Parallel, resolve
from .spectrum import AlphaSpectrum, SpectrumLike, as_spectrum

_MASK64 = (1 << 64) - 1

# Columns per coordinate chunk; each chunk draws from its own child stream so
# the materialized and streamed Gram paths see identical variates.
COORD_CHUNK = 4096
DEFAULT_BUDGET = 1 << 24


def splitmix64(x: int) -> int:
    """One round of the splitmix64 finalizer."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


@dataclass(frozen=True)
class SeededStream:
    """Label of an independent random stream.

    The generator is Philox4x64 keyed by ``(seed, stream_id)``; Gaussian
    variates use numpy's ziggurat sampler. Equal labels give equal
    sequences on every run and under every worker count.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not 0 <= v <= _MASK64:
                raise InvalidParameterError(f"{name} must be a 64-bit unsigned integer")

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.seed | (self.stream_id << 64)))

    def child(self, index: int) -> "SeededStream":
        """Stream for sub-task ``index``; distinct indices give distinct streams."""
        mixed = splitmix64((self.stream_id * 0x9E3779B97F4A7C15 + index + 1) & _MASK64)
        return SeededStream(self.seed, mixed)

    def derive(self, label: str) -> "SeededStream":
        """Stream for a named purpose, so different estimators never share variates."""
        h = int.from_bytes(hashlib.blake2b(label.encode(), digest_size=8).digest(), "little")
        return SeededStream(self.seed, splitmix64(self.stream_id ^ h))


def as_stream(stream: Union[SeededStream, int, None]) -> SeededStream:
    if isinstance(stream, SeededStream):
        return stream
    return SeededStream(0 if stream is None else int(stream) & _MASK64)


def block_sizes(total: int, block: int) -> list[int]:
    """Split ``total`` into fixed-size blocks (last one possibly shorter)."""
    full, rest = divmod(int(total), int(block))
    return [block] * full + ([rest] if rest else [])


def map_blocks(fn, total: int, block: int, stream: SeededStream, parallel: Optional[Parallel] = None):
    """Apply ``fn(generator, size)`` to each block, block b on ``stream.child(b)``.

    Returns the list of per-block results in block order.
    """
    sizes = block_sizes(total, block)
    par = resolve(parallel)
    return par.map(lambda b: fn(stream.child(b).generator(), sizes[b]), range(len(sizes)))


@dataclass(frozen=True)
class PointCloud:
    """n independent rows from N(0, diag(alpha))."""

    rows: np.ndarray
    alpha: AlphaSpectrum = field(repr=False)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True)
class GramSample:
    """Symmetric zero-diagonal matrix, geometric Gram or GOE."""

    entries: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in ("geometric", "goe"):
            raise InvalidParameterError(f"unknown Gram kind {self.kind!r}")

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def _chunks(d: int):
    for c, start in enumerate(range(0, d, COORD_CHUNK)):
        yield c, start, min(d, start + COORD_CHUNK)


def _chunk_rows(n: int, sd: np.ndarray, stream: SeededStream, c: int) -> np.ndarray:
    return stream.child(c).generator().standard_normal((n, sd.size)) * sd


def sample_points(n: int, alpha: SpectrumLike, stream: SeededStream) -> PointCloud:
    """Draw an n x d point cloud with coordinate j distributed N(0, alpha_j)."""
    if n < 1:
        raise InvalidParameterError("n must be >= 1")
    alpha = as_spectrum(alpha)
    sd = np.sqrt(alpha.values)
    rows = np.empty((n, alpha.d))
    for c, lo, hi in _chunks(alpha.d):
        rows[:, lo:hi] = _chunk_rows(n, sd[lo:hi], stream, c)
    rows.setflags(write=False)
    return PointCloud(rows, alpha)


def _finish_gram(acc: np.ndarray, alpha: AlphaSpectrum) -> GramSample:
    w = acc / alpha.norm2
    np.fill_diagonal(w, 0.0)
    w = 0.5 * (w + w.T)
    w.setflags(write=False)
    return GramSample(w, "geometric")


def gram_ensemble(cloud: PointCloud, alpha: SpectrumLike) -> GramSample:
    """Centered Gram matrix W_ij = <x_i, x_j> / ||alpha||_2, zero diagonal."""
    alpha = as_spectrum(alpha)
    if cloud.d != alpha.d:
        raise ShapeError(f"cloud has d={cloud.d}, spectrum has d={alpha.d}")
    acc = np.zeros((cloud.n, cloud.n))
    for _, lo, hi in _chunks(alpha.d):
        block = cloud.rows[:, lo:hi]
        acc += block @ block.T
    return _finish_gram(acc, alpha)


def gram_streaming(n: int, alpha: SpectrumLike, stream: SeededStream) -> GramSample:
    """Same result as ``gram_ensemble(sample_points(n, alpha, stream), alpha)``.

    Coordinate chunks are generated and reduced one at a time, so memory is
    O(n * COORD_CHUNK) regardless of d.
    """
    alpha = as_spectrum(alpha)
    sd = np.sqrt(alpha.values)
    acc = np.zeros((n, n))
    for c, lo, hi in _chunks(alpha.d):
        block = _chunk_rows(n, sd[lo:hi], stream, c)
        acc += block @ block.T
    return _finish_gram(acc, alpha)


def sample_gram(n: int, alpha: SpectrumLike, stream: SeededStream, budget: int = DEFAULT_BUDGET) -> GramSample:
    """Geometric Gram sample, materializing the cloud only when n*d <= budget."""
    alpha = as_spectrum(alpha)
    if n * alpha.d <= budget:
        return gram_ensemble(sample_points(n, alpha, stream), alpha)
    return gram_streaming(n, alpha, stream)


def goe_ensemble(n: int, stream: SeededStream) -> GramSample:
    """Symmetric matrix with iid N(0,1) above the diagonal and zero diagonal."""
    if n < 1:
        raise InvalidParameterError("n must be >= 1")
    iu = np.triu_indices(n, 1)
    m = np.zeros((n, n))
    m[iu] = stream.generator().standard_normal(iu[0].size)
    m = m + m.T
    m.setflags(write=False)
    return GramSample(m, "goe")


# Law-equivalent fast samplers ------------------------------------------------
#
# For coordinates sharing a variance a with multiplicity m, the block
# contribution to the n x n Gram is a * Wishart_n(m, I). When m >= n this is
# drawn by the Bartlett decomposition in O(n^2) variates instead of O(n m).


def bartlett_wishart(gen: np.random.Generator, dof: float, n: int, size: int) -> np.ndarray:
    """``size`` draws of Wishart_n(dof, I), shape (size, n, n); needs dof >= n."""
    lower = np.zeros((size, n, n))
    rows, cols = np.tril_indices(n, -1)
    if rows.size:
        lower[:, rows, cols] = gen.standard_normal((size, rows.size))
    diag = np.arange(n)
    lower[:, diag, diag] = np.sqrt(gen.chisquare(dof - diag, size=(size, n)))
    return lower @ np.swapaxes(lower, 1, 2)


def _split_groups(alpha: AlphaSpectrum, n: int, weight_power: int):
    vals, counts = alpha.grouped
    big = counts >= n
    small_vals = np.repeat(vals[~big], counts[~big].astype(np.int64))
    return vals[big] ** weight_power, counts[big], small_vals**weight_power


def weighted_gram_batch(
    gen: np.random.Generator, n: int, alpha: AlphaSpectrum, size: int, weight_power: int = 1
) -> np.ndarray:
    """``size`` draws of sum_j alpha_j^w z_j z_j^T with z_j iid N(0, I_n).

    With ``weight_power=1`` this is the law of the raw Gram of n points from
    N(0, diag(alpha)); with ``weight_power=2`` it is Y D_alpha Y^T.
    """
    big_w, big_m, small_w = _split_groups(alpha, n, weight_power)
    out = np.zeros((size, n, n))
    for w, m in zip(big_w, big_m):
        out += w * bartlett_wishart(gen, m, n, size)
    if small_w.size:
        step = max(1, (1 << 22) // max(1, n * small_w.size))
        for lo in range(0, size, step):
            hi = min(size, lo + step)
            z = gen.standard_normal((hi - lo, n, small_w.size))
            out[lo:hi] += np.einsum("rik,rjk->rij", z * small_w, z)
    return out


def sample_gram_batch(gen: np.random.Generator, n: int, alpha: AlphaSpectrum, size: int) -> np.ndarray:
    """``size`` geometric Gram samples W (zero diagonal, unit off-diagonal variance)."""
    out = weighted_gram_batch(gen, n, alpha, size) / alpha.norm2
    idx = np.arange(n)
    out[:, idx, idx] = 0.0
    return out


def pair_inner_products(gen: np.random.Generator, alpha: AlphaSpectrum, size: int) -> np.ndarray:
    """``size`` draws of <X_1, X_2> with X_i iid N(0, diag(alpha)).

    A group of m equal variances a contributes a * sqrt(chi2_m) * N(0,1).
    """
    vals, counts = alpha.grouped
    big = counts >= 2
    out = np.zeros(size)
    for a, m in zip(vals[big], counts[big]):
        out += a * np.sqrt(gen.chisquare(m, size)) * gen.standard_normal(size)
    small = vals[~big]
    if small.size:
        step = max(1, (1 << 22) // small.size)
        for lo in range(0, size, step):
            hi = min(size, lo + step)
            z = gen.standard_normal((2, hi - lo, small.size))
            out[lo:hi] += (z[0] * z[1]) @ small
    return out


def triple_inner_products(gen: np.random.Generator, alpha: AlphaSpectrum, size: int) -> np.ndarray:
    """``size`` draws of (<X1,X2>, <X1,X3>, <X2,X3>), shape (3, size)."""
    vals, counts = alpha.grouped
    big = counts >= 3
    out = np.zeros((3, size))
    for a, m in zip(vals[big], counts[big]):
        # Bartlett factor entries needed for the three off-diagonal products
        l11 = np.sqrt(gen.chisquare(m, size))
        l22 = np.sqrt(gen.chisquare(m - 1, size))
        l21, l31, l32 = gen.standard_normal((3, size))
        out[0] += a * l11 * l21
        out[1] += a * l11 * l31
        out[2] += a * (l21 * l31 + l22 * l32)
    small = np.repeat(vals[~big], counts[~big].astype(np.int64))
    if small.size:
        step = max(1, (1 << 21) // small.size)
        for lo in range(0, size, step):
            hi = min(size, lo + step)
            z = gen.standard_normal((3, hi - lo, small.size))
            out[0, lo:hi] += (z[0] * z[1]) @ small
            out[1, lo:hi] += (z[0] * z[2]) @ small
            out[2, lo:hi] += (z[1] * z[2]) @ small
    return out


# Text format ----------------------------------------------------------------


def format_upper(matrix: np.ndarray, kind: str, integer: bool = False) -> str:
    """Header ``n kind`` then the strict upper triangle, row-major."""
    n = matrix.shape[0]
    lines = [f"{n} {kind}"]
    for i in range(n - 1):
        row = matrix[i, i + 1 :]
        if integer:
            lines.append(" ".join(str(int(v)) for v in row))
        else:
            lines.append(" ".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def parse_upper(text: str) -> tuple[np.ndarray, str]:
    """Inverse of :func:`format_upper`; returns (symmetric matrix, kind)."""
    tokens = text.split()
    if len(tokens) < 2:
        raise UsageError("missing 'n kind' header")
    n, kind = int(tokens[0]), tokens[1]
    body = tokens[2:]
    need = n * (n - 1) // 2
    if len(body) != need:
        raise ShapeError(f"expected {need} upper-triangle entries, found {len(body)}")
    m = np.zeros((n, n))
    if need:
        m[np.triu_indices(n, 1)] = np.array(body, dtype=np.float64)
    return m + m.T, kind


def write_gram(sample: GramSample, path: Union[str, Path]) -> None:
    Path(path).write_text(format_upper(sample.entries, sample.kind))


def read_gram(path: Union[str, Path]) -> GramSample:
    m, kind = parse_upper(Path(path).read_text())
    return GramSample(m, kind)
