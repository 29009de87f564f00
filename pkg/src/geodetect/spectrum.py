"""Covariance spectra: normalization, q-norms, effective dimensions, families."""

from __future__ import annotations

import math
from functools import cached_property
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from scipy import optimize

from .errors import InvalidParameterError, InvalidSpectrumError

_SUM_BLOCK = 1 << 14


def _accurate_sum(x: np.ndarray) -> float:
    """Sum of a 1-D array via pairwise block sums followed by an exact fsum."""
    if x.size <= _SUM_BLOCK:
        return math.fsum(x.tolist())
    n_blocks = -(-x.size // _SUM_BLOCK)
    pad = n_blocks * _SUM_BLOCK - x.size
    blocks = np.concatenate([x, np.zeros(pad)]).reshape(n_blocks, _SUM_BLOCK)
    return math.fsum(blocks.sum(axis=1).tolist())


class AlphaSpectrum:
    """Vector of per-coordinate variances of a centered diagonal Gaussian.

    Parameters
    ----------
    values : array_like
        Non-negative finite variances, at least one positive.

    Notes
    -----
    Instances are immutable. Norms and the grouped representation used by
    the integrators are computed lazily and cached.
    """

    __slots__ = ("_values", "__dict__")

    def __init__(self, values: Union[Sequence[float], np.ndarray]):
        arr = np.array(values, dtype=np.float64).ravel()
        if arr.size == 0:
            raise InvalidSpectrumError("spectrum is empty")
        if not np.all(np.isfinite(arr)):
            raise InvalidSpectrumError("spectrum has non-finite entries")
        if np.any(arr < 0):
            raise InvalidSpectrumError("spectrum has negative entries")
        if not np.any(arr > 0):
            raise InvalidSpectrumError("spectrum is identically zero")
        arr.setflags(write=False)
        self._values = arr

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def d(self) -> int:
        return int(self._values.size)

    def __len__(self) -> int:
        return self.d

    def __repr__(self) -> str:
        if self.d <= 6:
            return f"AlphaSpectrum({self._values.tolist()})"
        return f"AlphaSpectrum(d={self.d}, max={self._values.max():.6g})"

    def __eq__(self, other) -> bool:
        return isinstance(other, AlphaSpectrum) and np.array_equal(
            self._values, other._values
        )

    def __hash__(self) -> int:
        return hash(self._values.tobytes())

    def power_sum(self, q: float) -> float:
        """Accurate sum of the q-th powers of the entries."""
        if q == 1:
            return _accurate_sum(self._values)
        if q == 2:
            return self._power_sums[2]
        return _accurate_sum(self._values**q)

    @cached_property
    def _power_sums(self) -> dict:
        v = self._values
        return {2: _accurate_sum(v * v), 3: _accurate_sum(v**3), 4: _accurate_sum(v**4)}

    @cached_property
    def norm2(self) -> float:
        return math.sqrt(self._power_sums[2])

    @cached_property
    def norm3(self) -> float:
        return self._power_sums[3] ** (1.0 / 3.0)

    @cached_property
    def norm4(self) -> float:
        return self._power_sums[4] ** 0.25

    @cached_property
    def nnz(self) -> int:
        return int(np.count_nonzero(self._values))

    @cached_property
    def grouped(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct positive values and their multiplicities."""
        vals, counts = np.unique(self._values[self._values > 0], return_counts=True)
        return vals, counts.astype(np.float64)


SpectrumLike = Union[AlphaSpectrum, Sequence[float], np.ndarray]


def as_spectrum(alpha: SpectrumLike) -> AlphaSpectrum:
    """Coerce ``alpha`` to an :class:`AlphaSpectrum`."""
    if isinstance(alpha, AlphaSpectrum):
        return alpha
    return AlphaSpectrum(alpha)


def normalize(alpha: SpectrumLike) -> AlphaSpectrum:
    """Rescale so the largest entry is exactly 1."""
    alpha = as_spectrum(alpha)
    v = alpha.values / alpha.values.max()
    v[np.argmax(alpha.values)] = 1.0
    return AlphaSpectrum(v)


def q_norm(alpha: SpectrumLike, q: float) -> float:
    """(sum_i alpha_i^q)^(1/q) for q >= 1."""
    if not q >= 1:
        raise InvalidParameterError(f"q must be >= 1, got {q}")
    alpha = as_spectrum(alpha)
    if q == 2:
        return alpha.norm2
    if q == 3:
        return alpha.norm3
    if q == 4:
        return alpha.norm4
    if math.isinf(q):
        return float(alpha.values.max())
    # factor out the max so large q does not underflow
    m = float(alpha.values.max())
    return m * _accurate_sum((alpha.values / m) ** q) ** (1.0 / q)


def effective_dim_3(alpha: SpectrumLike) -> float:
    """(||alpha||_2 / ||alpha||_3)^6, the detection-side effective dimension."""
    alpha = as_spectrum(alpha)
    s2, s3 = alpha._power_sums[2], alpha._power_sums[3]
    return s2**3 / s3**2


def effective_dim_4(alpha: SpectrumLike) -> float:
    """(||alpha||_2 / ||alpha||_4)^4, the indistinguishability-side effective dimension."""
    alpha = as_spectrum(alpha)
    s2, s4 = alpha._power_sums[2], alpha._power_sums[4]
    return s2**2 / s4


def norm_ratio3(alpha: SpectrumLike) -> float:
    """(||alpha||_3 / ||alpha||_2)^3 = effective_dim_3^(-1/2)."""
    alpha = as_spectrum(alpha)
    return alpha._power_sums[3] / alpha._power_sums[2] ** 1.5


def spectrum_family(kind: str, d: int, *params: float) -> AlphaSpectrum:
    """Standard test spectra, normalized to max entry 1.

    Parameters
    ----------
    kind : {"isotropic", "power_law", "spiked"}
    d : int
        Dimension.
    params
        ``power_law``: exponent beta >= 0, entries i^(-beta).
        ``spiked``: (k, eps), k entries equal to 1 and d-k entries equal to eps.
    """
    d_int = int(d)
    if d_int != d or d_int < 1:
        raise InvalidParameterError(f"d must be a positive integer, got {d}")
    kind = kind.replace("-", "_").lower()
    if kind in ("isotropic", "iso"):
        if params:
            raise InvalidParameterError("isotropic family takes no parameters")
        return AlphaSpectrum(np.ones(d_int))
    if kind in ("power_law", "powerlaw"):
        if len(params) != 1:
            raise InvalidParameterError("power_law family takes one exponent")
        beta = float(params[0])
        if not (beta >= 0 and math.isfinite(beta)):
            raise InvalidParameterError(f"power-law exponent must be >= 0, got {beta}")
        return AlphaSpectrum(np.arange(1, d_int + 1, dtype=np.float64) ** (-beta))
    if kind == "spiked":
        if len(params) != 2:
            raise InvalidParameterError("spiked family takes (k, eps)")
        k, eps = params
        if int(k) != k or not 1 <= k <= d_int:
            raise InvalidParameterError(f"spike count must be in [1, d], got {k}")
        if not 0 <= eps <= 1:
            raise InvalidParameterError(f"spike floor must be in [0, 1], got {eps}")
        v = np.full(d_int, float(eps))
        v[: int(k)] = 1.0
        return AlphaSpectrum(v)
    raise InvalidParameterError(f"unknown spectrum family {kind!r}")


def power_law_with_eff3(d: int, target: float) -> AlphaSpectrum:
    """Power-law spectrum of length ``d`` whose effective_dim_3 equals ``target``.

    The exponent is found by root finding; ``target`` must lie in (1, d].
    """
    if not 1 < target <= d:
        raise InvalidParameterError(f"target must be in (1, {d}], got {target}")
    if target == d:
        return spectrum_family("isotropic", d)

    def gap(beta):
        return math.log(effective_dim_3(spectrum_family("power_law", d, beta))) - math.log(target)

    hi = 1.0
    while gap(hi) > 0:
        hi *= 2
        if hi > 1e3:
            raise InvalidParameterError("target effective dimension not reachable")
    beta = optimize.brentq(gap, 0.0, hi, xtol=1e-14, rtol=1e-14)
    return spectrum_family("power_law", d, beta)


def parse_descriptor(text: str) -> AlphaSpectrum:
    """Parse ``isotropic:d``, ``powerlaw:d:beta``, ``spiked:d:k:eps`` or a file path."""
    parts = text.strip().split(":")
    head = parts[0].lower()
    try:
        if head in ("isotropic", "iso") and len(parts) == 2:
            return spectrum_family("isotropic", int(parts[1]))
        if head in ("powerlaw", "power_law") and len(parts) == 3:
            return spectrum_family("power_law", int(parts[1]), _parse_real(parts[2]))
        if head == "spiked" and len(parts) == 4:
            return spectrum_family("spiked", int(parts[1]), int(parts[2]), float(parts[3]))
    except ValueError as exc:
        raise InvalidParameterError(f"bad spectrum descriptor {text!r}: {exc}") from exc
    path = Path(text)
    if path.is_file():
        return load_spectrum(path)
    raise InvalidParameterError(f"not a spectrum descriptor or file: {text!r}")


def _parse_real(s: str) -> float:
    if "/" in s:
        num, den = s.split("/")
        return float(num) / float(den)
    return float(s)


def descriptor_of(kind: str, d: int, *params) -> str:
    """Inverse of :func:`parse_descriptor` for the standard families."""
    kind = kind.replace("-", "_").lower()
    if kind in ("isotropic", "iso"):
        return f"isotropic:{d}"
    if kind in ("power_law", "powerlaw"):
        return f"powerlaw:{d}:{params[0]:g}"
    return f"spiked:{d}:{int(params[0])}:{params[1]:g}"


def load_spectrum(path: Union[str, Path]) -> AlphaSpectrum:
    """Read one value per line; blank lines and ``#`` comments are skipped."""
    vals = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            vals.append(float(line))
    return AlphaSpectrum(vals)


def save_spectrum(alpha: SpectrumLike, path: Union[str, Path]) -> None:
    alpha = as_spectrum(alpha)
    Path(path).write_text("".join(f"{v!r}\n" for v in alpha.values.tolist()))
