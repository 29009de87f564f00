"""Connection threshold t_{p,alpha} and the law of <X_1, X_2>."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy import integrate, optimize, stats

from .ensembles import SeededStream, map_blocks, pair_inner_products
from .errors import InvalidParameterError, NumericError, ToleranceError
from .parallel import Parallel
from .spectrum import SpectrumLike, as_spectrum

MC_BLOCK = 1 << 18


@dataclass(frozen=True)
class ThresholdEstimate:
    """Threshold in inner-product units.

    ``std_error`` is None for the closed-form normal approximation.
    """

    t: float
    method: str
    std_error: Optional[float] = None

    def scaled(self, norm2: float) -> float:
        """Threshold divided by ||alpha||_2, the cutoff applied to Gram entries."""
        return self.t / norm2


@dataclass(frozen=True)
class QuadParams1D:
    """Controls of the one-dimensional inversion.

    Attributes
    ----------
    tol : float
        Absolute error target on the survival probability.
    limit : int
        Maximum adaptive subdivisions per piece.
    split : float
        Frequency (in units of 1/||alpha||_2) separating the finite piece from
        the Fourier-weighted tail piece.
    """

    tol: float = 1e-11
    limit: int = 400
    split: float = 1.0


def _check_p(p: float) -> float:
    p = float(p)
    if not 0.0 < p < 1.0:
        raise InvalidParameterError(f"p must lie in (0, 1), got {p}")
    return p


def charfun_1d(alpha: SpectrumLike, u) -> np.ndarray:
    """prod_i (1 + alpha_i^2 u^2)^(-1/2), the characteristic function of <X_1, X_2>."""
    alpha = as_spectrum(alpha)
    vals, counts = alpha.grouped
    u = np.asarray(u, dtype=np.float64)
    a2 = vals * vals
    # u^2 overflows to inf far in the tail, where the value is 0 anyway
    with np.errstate(over="ignore"):
        logmag = -0.5 * np.log1p(np.multiply.outer(u * u, a2)) @ counts
    return np.exp(logmag)


def survival_with_error(alpha: SpectrumLike, t: float, quad: QuadParams1D = QuadParams1D()):
    """P(<X_1, X_2> > t) by Gil-Pelaez inversion, with an absolute error estimate.

    The frequency axis is rescaled by ||alpha||_2. The finite piece uses
    adaptive Gauss-Kronrod; the tail piece uses the Fourier-weighted rule
    for sin(v s) on a semi-infinite interval.
    """
    alpha = as_spectrum(alpha)
    t = float(t)
    if t == 0.0:
        return 0.5, 0.0
    s = t / alpha.norm2
    scale = 1.0 / alpha.norm2
    v0 = quad.split

    def kernel(v):
        # phi(v/||a||) * sin(v s)/v, written with sinc to stay finite at 0
        return charfun_1d(alpha, v * scale) * s * np.sinc(v * s / np.pi)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        head, e1 = integrate.quad(kernel, 0.0, v0, epsabs=quad.tol / 4, epsrel=0, limit=quad.limit)
        tail, e2 = integrate.quad(
            lambda v: charfun_1d(alpha, v * scale) / v,
            v0,
            np.inf,
            weight="sin",
            wvar=s,
            epsabs=quad.tol / 4,
            limlst=200,
            limit=quad.limit,
        )
    value = 0.5 - (head + tail) / math.pi
    err = (e1 + e2) / math.pi
    return value, err


def inner_product_survival(alpha: SpectrumLike, t: float, quad: QuadParams1D = QuadParams1D()) -> float:
    """P(<X_1, X_2> > t) to within ``quad.tol``.

    Raises
    ------
    ToleranceError
        If the quadrature error estimate exceeds ``quad.tol``.
    """
    value, err = survival_with_error(alpha, t, quad)
    if not err <= quad.tol:
        raise ToleranceError(f"survival error estimate {err:.3g} exceeds {quad.tol:.3g}", err, value)
    return min(1.0, max(0.0, value))


def threshold_normal(alpha: SpectrumLike, p: float) -> ThresholdEstimate:
    """||alpha||_2 z_p with P(Z > z_p) = p."""
    p = _check_p(p)
    if p == 0.5:
        return ThresholdEstimate(0.0, "normal_approx", None)
    alpha = as_spectrum(alpha)
    return ThresholdEstimate(alpha.norm2 * float(stats.norm.isf(p)), "normal_approx", None)


def threshold_charfun(alpha: SpectrumLike, p: float, tol: float = 1e-10) -> ThresholdEstimate:
    """Root of survival(t) = p, bracketed around the normal approximation.

    ``std_error`` is the threshold uncertainty implied by ``tol`` through a
    local slope estimate.
    """
    p = _check_p(p)
    if not tol > 0:
        raise InvalidParameterError("tol must be positive")
    if p == 0.5:
        return ThresholdEstimate(0.0, "charfun_inversion", 0.0)
    alpha = as_spectrum(alpha)
    quad = QuadParams1D(tol=min(1e-11, tol / 10))

    def f(t):
        return inner_product_survival(alpha, t, quad) - p

    t0 = threshold_normal(alpha, p).t
    step = max(1.0, abs(t0)) * 0.25 + alpha.norm2 * 0.25
    lo, hi = t0 - step, t0 + step
    f_lo, f_hi = f(lo), f(hi)
    for _ in range(60):
        if f_lo >= 0 >= f_hi:
            break
        if f_lo < 0:
            lo, hi, f_hi = lo - 2 * step, lo, f_lo
            f_lo = f(lo)
        else:
            lo, hi, f_lo = hi, hi + 2 * step, f_hi
            f_hi = f(hi)
        step *= 2
    else:
        raise NumericError(
            f"could not bracket survival = {p} near t = {t0:.6g} (last [{lo:.6g}, {hi:.6g}])"
        )
    t, res = optimize.brentq(f, lo, hi, xtol=1e-14 * max(1.0, abs(t0)), rtol=1e-15, full_output=True)
    if abs(f(t)) > tol:
        raise NumericError(f"root residual {abs(f(t)):.3g} exceeds tol {tol:.3g}")
    h = 1e-3 * alpha.norm2
    slope = abs(f(t + h) - f(t - h)) / (2 * h)
    se = tol / slope if slope > 0 else float("inf")
    return ThresholdEstimate(float(t), "charfun_inversion", float(se))


def threshold_mc(
    alpha: SpectrumLike,
    p: float,
    n_samples: int,
    stream: SeededStream,
    parallel: Optional[Parallel] = None,
) -> ThresholdEstimate:
    """Type-7 empirical upper-p quantile of sampled inner products.

    The standard error is half the width of the order-statistic interval
    at +-1 binomial standard deviation of the rank.
    """
    p = _check_p(p)
    if n_samples < 10_000:
        raise InvalidParameterError("n_samples must be >= 1e4")
    if p == 0.5:
        return ThresholdEstimate(0.0, "mc_quantile", 0.0)
    alpha = as_spectrum(alpha)
    parts = map_blocks(
        lambda g, m: pair_inner_products(g, alpha, m),
        n_samples,
        MC_BLOCK,
        stream.derive("threshold_mc"),
        parallel,
    )
    x = np.concatenate(parts)
    delta = math.sqrt(p * (1 - p) / n_samples)
    q = np.quantile(x, [1 - p, max(0.0, 1 - p - delta), min(1.0, 1 - p + delta)], method="linear")
    return ThresholdEstimate(float(q[0]), "mc_quantile", float(0.5 * (q[2] - q[1])))


def estimate_threshold(alpha: SpectrumLike, p: float, method: str = "charfun", **kw) -> ThresholdEstimate:
    """Dispatch by method name: ``charfun``, ``normal`` or ``mc``."""
    method = method.lower()
    if method in ("charfun", "charfun_inversion"):
        return threshold_charfun(alpha, p, kw.get("tol", 1e-10))
    if method in ("normal", "normal_approx"):
        return threshold_normal(alpha, p)
    if method in ("mc", "mc_quantile"):
        return threshold_mc(alpha, p, kw["n_samples"], kw["stream"], kw.get("parallel"))
    raise InvalidParameterError(f"unknown threshold method {method!r}")


class GapEstimate(NamedTuple):
    value: float
    std_error: float


def berry_esseen_gap(
    alpha: SpectrumLike,
    n_samples: int,
    stream: SeededStream,
    parallel: Optional[Parallel] = None,
) -> GapEstimate:
    """Kolmogorov distance between <X_1,X_2>/||alpha||_2 and N(0,1), by sampling.

    The reported standard error is 1/(2 sqrt(N)), the largest pointwise
    standard deviation of an empirical CDF.
    """
    if n_samples < 100_000:
        raise InvalidParameterError("n_samples must be >= 1e5")
    alpha = as_spectrum(alpha)
    parts = map_blocks(
        lambda g, m: pair_inner_products(g, alpha, m),
        n_samples,
        MC_BLOCK,
        stream.derive("berry_esseen_gap"),
        parallel,
    )
    w = np.sort(np.concatenate(parts)) / alpha.norm2
    cdf = stats.norm.cdf(w)
    n = w.size
    upper = np.arange(1, n + 1) / n - cdf
    lower = cdf - np.arange(0, n) / n
    gap = float(max(upper.max(), lower.max()))
    return GapEstimate(gap, 0.5 / math.sqrt(n))


def kolmogorov_gap_exact(alpha: SpectrumLike, grid=None) -> float:
    """Kolmogorov distance to N(0,1) evaluated through the inversion survival on a grid."""
    alpha = as_spectrum(alpha)
    if grid is None:
        grid = np.linspace(-4, 4, 801)
    sup = 0.0
    for s in grid:
        surv = survival_with_error(alpha, s * alpha.norm2)[0]
        sup = max(sup, abs(surv - stats.norm.sf(s)))
    return sup
