"""Joint characteristic functions of the three inner products and triangle probabilities.

For X_1, X_2, X_3 iid N(0, diag(alpha)) the vector
(<X_1,X_2>, <X_1,X_3>, <X_2,X_3>) has characteristic function

    phi(a, b, c) = prod_i (1 + alpha_i^2 r^2 + 2 i alpha_i^3 abc)^(-1/2),  r^2 = a^2+b^2+c^2,

and the law with the same marginals but independent coordinates has
psi(a, b, c) = prod_i ((1+alpha_i^2 a^2)(1+alpha_i^2 b^2)(1+alpha_i^2 c^2))^(-1/2).
The probability that all three exceed t is recovered by sign-function
inversion; every integrand used here is even in each coordinate, so only
the positive octant is integrated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .ensembles import SeededStream, map_blocks, triple_inner_products
from .errors import InvalidParameterError, NumericError, ToleranceError
from .parallel import Parallel
from .quadrature import _KMAX, integrate_polar, radial_bands
from .spectrum import AlphaSpectrum, SpectrumLike, as_spectrum
from .threshold import survival_with_error, QuadParams1D

MC_BLOCK = 1 << 16
# largest log-radius span beyond the bulk radius for oscillatory integrals, by dimension
_MAX_SPAN = {2: 14.0, 3: 6.0}
# phase change per ten-point Gauss-Legendre panel at refinement level 0
_PANEL_PHASE = 8.0
# floor on the per-e-fold decay ratio assumed when extrapolating tails
_MIN_DECAY = 0.05


@dataclass(frozen=True)
class QuadratureParams:
    """Controls of the octant integrators.

    Attributes
    ----------
    rel_tol : float
        Target error relative to the returned probability, in (0, 0.1].
    truncation_radius : float or None
        Outer radius in frequency units scaled by ||alpha||_2. ``None``
        picks it from a tail bound.
    max_subdivisions : int
        Maximum number of refinement levels; each level halves every step.
    octant_rule : int
        Tanh-sinh nodes per angular axis at the coarsest level.
    """

    rel_tol: float = 1e-8
    truncation_radius: Optional[float] = None
    max_subdivisions: int = 4
    octant_rule: int = 41

    def __post_init__(self):
        if not 0 < self.rel_tol <= 0.1:
            raise InvalidParameterError("rel_tol must lie in (0, 0.1]")
        if self.truncation_radius is not None and not self.truncation_radius > 0:
            raise InvalidParameterError("truncation_radius must be positive")
        if self.max_subdivisions < 1:
            raise InvalidParameterError("max_subdivisions must be >= 1")
        if self.octant_rule < 9:
            raise InvalidParameterError("octant_rule must be >= 9")

    @property
    def base_step(self) -> float:
        return 2 * _KMAX / (self.octant_rule - 1)


@dataclass(frozen=True)
class ProbabilityEstimate:
    """A probability with an absolute error bound (quadrature) or standard error (MC)."""

    value: float
    error_bound: float
    method: str
    details: dict = field(default_factory=dict, compare=False, repr=False)


# Pointwise functions --------------------------------------------------------


def _atanc(z: np.ndarray) -> np.ndarray:
    """arctan(z)/z, continuous at 0."""
    z = np.asarray(z, dtype=np.float64)
    out = np.ones_like(z)
    small = np.abs(z) < 1e-4
    zs = z[small] ** 2
    out[small] = 1.0 - zs / 3.0 + zs * zs / 5.0
    big = ~small
    out[big] = np.arctan(z[big]) / z[big]
    return out


def _parts(alpha: AlphaSpectrum, r2: np.ndarray, prod: np.ndarray):
    """Log-modulus, phase sum and the arctan-over-product sum.

    Returns (log|phi|, A, S) with phi = |phi| exp(-i A / 2) and
    A = sum 2 alpha^3 abc / D * atanc(.) = 2 abc * S, D = 1 + alpha^2 r^2.
    """
    vals, counts = alpha.grouped
    a2, a3 = vals * vals, vals**3
    r2 = np.asarray(r2, dtype=np.float64)[..., None]
    prod = np.asarray(prod, dtype=np.float64)[..., None]
    dens = 1.0 + a2 * r2
    z = 2.0 * a3 * prod / dens
    logmag = -0.25 * ((2.0 * np.log1p(a2 * r2) + np.log1p(z * z)) @ counts)
    phase = np.arctan(z) @ counts
    slope = (a3 / dens * _atanc(z)) @ counts
    return logmag, phase, slope


def phi(alpha: SpectrumLike, a, b, c) -> np.ndarray:
    """Joint characteristic function, evaluated in log-polar form."""
    alpha = as_spectrum(alpha)
    a, b, c = np.broadcast_arrays(*(np.asarray(x, dtype=np.float64) for x in (a, b, c)))
    logmag, phase, _ = _parts(alpha, a * a + b * b + c * c, a * b * c)
    return np.exp(logmag - 0.5j * phase)


def _log_charfun_1d(alpha: AlphaSpectrum, u: np.ndarray) -> np.ndarray:
    vals, counts = alpha.grouped
    u = np.asarray(u, dtype=np.float64)
    return -0.5 * (np.log1p(u[..., None] ** 2 * (vals * vals)) @ counts)


def psi(alpha: SpectrumLike, a, b, c) -> np.ndarray:
    """Characteristic function of the independent-coordinates law."""
    alpha = as_spectrum(alpha)
    a, b, c = np.broadcast_arrays(*(np.asarray(x, dtype=np.float64) for x in (a, b, c)))
    return np.exp(_log_charfun_1d(alpha, a) + _log_charfun_1d(alpha, b) + _log_charfun_1d(alpha, c))


def integrand_half(alpha: SpectrumLike, a, b, c) -> np.ndarray:
    """sin(A/2) |phi| / abc with A the phase sum, i.e. -Im(phi)/abc.

    Written as sinc(A/2) * S * |phi| with S = A / (2 abc) expanded in
    closed form, so the removable singularity on the coordinate planes
    needs no branch.
    """
    alpha = as_spectrum(alpha)
    a, b, c = np.broadcast_arrays(*(np.asarray(x, dtype=np.float64) for x in (a, b, c)))
    logmag, phase, slope = _parts(alpha, a * a + b * b + c * c, a * b * c)
    return np.sinc(phase / (2 * np.pi)) * slope * np.exp(logmag)


def _sin_over(x: np.ndarray, t: float) -> np.ndarray:
    """sin(t x) / x, equal to t at x = 0."""
    return t * np.sinc(t * x / np.pi)


# Octant engine ---------------------------------------------------------------


def _work(alpha: AlphaSpectrum) -> int:
    """Points per evaluation chunk, keeping (points x groups) arrays near 16 MB."""
    return max(256, (1 << 21) // alpha.grouped[0].size)


@dataclass
class _Integral:
    value: float
    quad_error: float
    tail: float
    levels: list


def _adaptive(
    evaluate: Callable[[int], float],
    target: float,
    max_levels: int,
) -> tuple[float, float, list]:
    """Refine until consecutive levels agree within ``target``."""
    history = [evaluate(0)]
    err = math.inf
    for level in range(1, max_levels + 1):
        history.append(evaluate(level))
        err = abs(history[-1] - history[-2])
        if err <= target:
            break
    return history[-1], err, history


def _radial_range(alpha: AlphaSpectrum, lo_mass: float) -> tuple[float, float]:
    """Log-radius where the ball below contributes at most ``lo_mass`` and the bulk centre."""
    # |integrand| <= ||alpha||_3^3 on the octant ball of volume pi r^3 / 6
    r_lo = (6.0 * lo_mass / (math.pi * alpha.power_sum(3))) ** (1.0 / 3.0)
    return math.log(r_lo), -math.log(alpha.norm2)


def _ball_part(k0: float, y_lo: float, dim: int, norm: float, curvature: float) -> tuple[float, float]:
    """Integral over the octant ball (quadrant disc) of radius exp(y_lo) and its error.

    There the kernel equals its origin value ``k0`` up to a relative
    deficit of at most ``curvature * r^2``.
    """
    r = math.exp(y_lo)
    vol = math.pi * r**3 / 6.0 if dim == 3 else math.pi * r * r / 4.0
    v = norm * k0 * vol
    return v, abs(v) * min(1.0, curvature * r * r)


def _envelope_tail(alpha: AlphaSpectrum, radius: float, extra: Callable[[np.ndarray], np.ndarray]) -> float:
    """Integral over r > radius of r^2 (pi/2) prod(1+alpha^2 r^2)^(-1/2) * extra(r).

    ``extra`` is a radial bound on the remaining factors of the integrand.
    Used only when the product decays faster than r^(-3).
    """
    def f(y):
        r = math.exp(y)
        return r**3 * math.exp(_log_charfun_1d(alpha, np.array(r)).item()) * float(extra(np.array(r)))

    val, _ = integrate.quad(f, math.log(radius), math.log(radius) + 200.0, limit=400, epsabs=0, epsrel=1e-6)
    return 0.5 * math.pi * val


def _choose_upper(alpha: AlphaSpectrum, y_start: float, budget: float, extra) -> tuple[float, float]:
    """Smallest e-fold radius whose envelope tail is below ``budget`` (nnz >= 4)."""
    y = y_start
    for _ in range(200):
        tail = _envelope_tail(alpha, math.exp(y), extra)
        if tail <= budget:
            return y, tail
        y += 0.5
    raise NumericError("could not place truncation radius")


def _grid_tail(
    kernel_abs: Callable[[np.ndarray, np.ndarray], np.ndarray],
    y_hi: float,
    h: float,
    width: float,
    dim: int = 3,
    work: int = 1 << 21,
) -> float:
    """Estimate of the absolute integral beyond exp(y_hi) for slowly decaying kernels.

    Integrates the absolute kernel over successive e-folds until they
    shrink geometrically, then adds the geometric remainder.
    """
    total = 0.0
    prev = None
    y = y_hi
    for _ in range(400):
        bands = radial_bands(y, y + 1.0, width, h=h)
        chunk, _ = integrate_polar(kernel_abs, bands, dim, work)
        total += chunk
        if prev is not None and prev > 0 and chunk < 0.9 * prev:
            ratio = chunk / prev
            if chunk * ratio / (1 - ratio) < 1e-3 * max(total, 1e-300) or chunk < 1e-300:
                return total + chunk * ratio / (1 - ratio)
        prev = chunk
        y += 1.0
    return math.inf


def _half_integral(alpha: AlphaSpectrum, q: QuadratureParams, target: float) -> _Integral:
    """(1/pi^3) times the octant integral of integrand_half."""
    norm = 1.0 / math.pi**3

    def kernel(r, u):
        s = u[0] * u[1] * u[2]
        logmag, phase, slope = _parts(alpha, (r * r)[None, :], s[:, None] * r[None, :] ** 3)
        return np.sinc(phase / (2 * np.pi)) * slope * np.exp(logmag)

    y_lo, y_mid = _radial_range(alpha, 1e-3 * target / norm)
    tail = 0.0
    if q.truncation_radius is not None:
        y_hi = math.log(q.truncation_radius) + y_mid
        tail = math.nan
    elif alpha.nnz >= 4:
        s3 = alpha.power_sum(3)
        y_hi, tail = _choose_upper(alpha, y_mid + 1.0, 0.1 * target / norm, lambda r: s3)
        tail *= norm
    else:
        y_hi = y_mid + 8.0
    h0 = q.base_step

    def evaluate(level):
        f = 0.5**level
        bands = radial_bands(y_lo, y_hi, 0.5 * f, h=h0 * f)
        return norm * integrate_polar(kernel, bands, 3, _work(alpha))[0]

    value, err, history = _adaptive(evaluate, 0.5 * target, q.max_subdivisions)
    ball, ball_err = _ball_part(alpha.power_sum(3), y_lo, 3, norm, 3.0 * alpha.power_sum(2))
    value += ball
    err += ball_err
    if alpha.nnz < 4 and q.truncation_radius is None:

        def kernel_abs(r, u):
            s = u[0] * u[1] * u[2]
            logmag, phase, slope = _parts(alpha, (r * r)[None, :], s[:, None] * r[None, :] ** 3)
            return np.abs(np.sinc(phase / (2 * np.pi))) * slope * np.exp(logmag)

        tail = norm * _grid_tail(kernel_abs, y_hi, h0 / 2, 0.5, 3, _work(alpha))
        while tail > 0.1 * target and y_hi < y_mid + 200:
            extra = 8.0
            f = 0.5 ** (len(history) - 1)
            bands = radial_bands(y_hi, y_hi + extra, 0.5 * f, h=h0 * f)
            value += norm * integrate_polar(kernel, bands, 3, _work(alpha))[0]
            y_hi += extra
            tail = norm * _grid_tail(kernel_abs, y_hi, h0 / 2, 0.5, 3, _work(alpha))
    if math.isnan(tail):
        tail = 0.0
    return _Integral(value, err, tail, history)


def triangle_prob_half(alpha: SpectrumLike, q: QuadratureParams = QuadratureParams()) -> ProbabilityEstimate:
    """P(all three inner products >= 0) by octant inversion.

    The error bound is the difference between the last two refinement
    levels plus the truncation tail (a rigorous envelope when at least
    four coordinates are active, a geometric extrapolation otherwise).
    """
    alpha = as_spectrum(alpha)
    target = q.rel_tol * 0.125
    res = _half_integral(alpha, q, target)
    value = 0.125 + res.value
    bound = res.quad_error + res.tail
    est = ProbabilityEstimate(
        float(value),
        float(bound),
        "charfun",
        {"levels": res.levels, "quad_error": res.quad_error, "tail": res.tail},
    )
    if bound > max(q.rel_tol * value, 1e-15):
        raise ToleranceError(f"error bound {bound:.3g} exceeds target", bound, est)
    return est


# General threshold -----------------------------------------------------------


def _oscillatory_integral(
    kernel,
    alpha: AlphaSpectrum,
    omega: float,
    q: QuadratureParams,
    target: float,
    dim: int,
    norm: float,
    k0: float,
) -> _Integral:
    """Octant/quadrant integral of an oscillating kernel.

    The core region (up to e^3 times the bulk radius) is refined until two
    levels agree. The range is then extended one e-fold at a time at the
    level until the e-fold increments, extrapolated geometrically, fall below a
    quarter of ``target``. The reported tail is that extrapolation: an
    estimate, not a bound, since the kernels decay only through
    cancellation. ``k0`` is the kernel's value at the origin, used for the
    small ball left out of the radial grid.
    """
    y_lo, y_mid = _radial_range(alpha, 1e-3 * target / norm * (1.0 if dim == 3 else 1e-3))
    if dim == 2:
        y_lo = y_mid - 12.0
    h0 = q.base_step
    work = _work(alpha)
    fixed = q.truncation_radius is not None
    y_core = math.log(q.truncation_radius) + y_mid if fixed else y_mid + 3.0

    def segment(level, ya, yb):
        f = 0.5**level
        bands = radial_bands(ya, yb, 0.5 * f, omega, _PANEL_PHASE * f, h0 * f)
        return norm * integrate_polar(kernel, bands, dim, work)[0]

    value, err, history = _adaptive(lambda lv: segment(lv, y_lo, y_core), 0.5 * target, q.max_subdivisions)
    ball, ball_err = _ball_part(k0, y_lo, dim, norm, 3.0 * (alpha.power_sum(2) + omega * omega))
    value += ball
    err += ball_err
    if fixed:
        return _Integral(value, err, 0.0, history)
    # the coarser of the two agreeing levels already met the target on the core
    level = max(0, len(history) - 2)
    y_hi = y_core
    steps = []
    tail = math.inf
    while y_hi < y_mid + _MAX_SPAN[dim]:
        steps.append(segment(level, y_hi, y_hi + 1.0))
        value += steps[-1]
        y_hi += 1.0
        if len(steps) >= 2:
            last, prev = abs(steps[-1]), abs(steps[-2])
            ratio = min(max(last / prev if prev > 0 else 0.0, _MIN_DECAY), 0.9)
            tail = 2.0 * max(last, _MIN_DECAY * prev) * ratio / (1.0 - ratio)
            if tail <= 0.25 * target:
                break
    return _Integral(value, err, tail, history)


def pair_sign_moment(
    alpha: SpectrumLike, t: float, q: QuadratureParams = QuadratureParams(), joint: str = "phi", target: float = 1e-8
) -> _Integral:
    """E[sgn(<X1,X2>-t) sgn(<X1,X3>-t)] by two-dimensional inversion."""
    alpha = as_spectrum(alpha)
    norm = 4.0 / math.pi**2

    if joint == "phi":

        def logcf(r, u):
            return np.broadcast_to(_log_charfun_1d(alpha, r)[None, :], (u.shape[1], r.size))

    else:

        def logcf(r, u):
            return _log_charfun_1d(alpha, np.outer(u[0], r)) + _log_charfun_1d(alpha, np.outer(u[1], r))

    def kernel(r, u):
        a = np.outer(u[0], r)
        b = np.outer(u[1], r)
        return np.exp(logcf(r, u)) * _sin_over(a, t) * _sin_over(b, t)

    return _oscillatory_integral(kernel, alpha, abs(t) * math.sqrt(2), q, target, 2, norm, t * t)


def _sign_moment3(alpha: AlphaSpectrum, t: float, q: QuadratureParams, joint: str, target: float) -> _Integral:
    """Octant integral entering E[s1 s2 s3].

    For ``joint="phi"`` this is J_cos - J_sin (see triangle_prob_general),
    integrated as one kernel so the far-field parts cancel before
    truncation. For ``joint="psi"`` it is the whole sign moment under the
    independent-coordinates law.
    """
    norm = 8.0 / math.pi**3

    def spatial(r, u):
        return np.outer(u[0], r), np.outer(u[1], r), np.outer(u[2], r)

    def log_psi(a, b, c):
        return _log_charfun_1d(alpha, a) + _log_charfun_1d(alpha, b) + _log_charfun_1d(alpha, c)

    if joint == "phi":

        def kernel(r, u):
            a, b, c = spatial(r, u)
            logmag, phase, slope = _parts(alpha, (r * r)[None, :], a * b * c)
            mag = np.exp(logmag)
            h = np.sinc(phase / (2 * np.pi)) * slope * mag
            diff = mag * np.cos(0.5 * phase) - np.exp(log_psi(a, b, c))
            cos3 = np.cos(t * a) * np.cos(t * b) * np.cos(t * c)
            sin3 = _sin_over(a, t) * _sin_over(b, t) * _sin_over(c, t)
            return h * cos3 - diff * sin3

    else:

        def kernel(r, u):
            a, b, c = spatial(r, u)
            return -np.exp(log_psi(a, b, c)) * _sin_over(a, t) * _sin_over(b, t) * _sin_over(c, t)

    k0 = alpha.power_sum(3) if joint == "phi" else -(t**3)
    return _oscillatory_integral(kernel, alpha, abs(t) * math.sqrt(3), q, target, 3, norm, k0)


def triangle_prob_general(
    alpha: SpectrumLike,
    p: float,
    t: float,
    q: QuadratureParams = QuadratureParams(rel_tol=1e-5),
    joint: str = "phi",
) -> ProbabilityEstimate:
    """P(all three inner products >= t) by octant inversion.

    Parameters
    ----------
    p : float
        Edge probability; only used to cross-check the inverted marginal.
    t : float
        Threshold in inner-product units, i.e. t_{p,alpha}.
    joint : {"phi", "psi"}
        ``"psi"`` substitutes the independent-coordinates law for the joint
        one; the result must then equal the cube of the marginal survival.

    Notes
    -----
    With sigma the centered signs of the three events,
    P = (E[s1 s2 s3] + 3 E[s1 s2] + 3 E[s1] + 1) / 8.
    E[s1] = 2 F1 - 1 comes from one-dimensional inversion, E[s1 s2] from the
    quadrant integral and E[s1 s2 s3] = (2 F1 - 1)^3 + J_cos - J_sin from
    one octant integral: J_cos weights -Im(phi)/abc by cos(ta)cos(tb)cos(tc),
    J_sin weights Re(phi) - psi by sin(ta) sin(tb) sin(tc) / abc. The
    truncation part of ``error_bound`` is an extrapolated estimate.
    """
    alpha = as_spectrum(alpha)
    if not 0 < p < 1:
        raise InvalidParameterError("p must lie in (0, 1)")
    if joint not in ("phi", "psi"):
        raise InvalidParameterError("joint must be 'phi' or 'psi'")
    t = float(t)
    budget = q.rel_tol * max(p**3, 1e-12)

    surv, surv_err = survival_with_error(alpha, t, QuadParams1D(tol=1e-12))
    if abs(surv - p) > max(1e-6, 10 * surv_err) and not math.isclose(surv, p, rel_tol=1e-6):
        raise NumericError(
            f"threshold convention mismatch: survival at t is {surv:.10g}, expected p = {p:.10g}"
        )
    f1 = surv
    s1 = 2 * f1 - 1

    # P carries E[s1 s2 s3] with weight 1/8 and E[s1 s2] with weight 3/8
    pair = pair_sign_moment(alpha, t, q, joint, 4.0 * budget / 3.0)
    s12 = pair.value

    trip = _sign_moment3(alpha, t, q, joint, 4.0 * budget)
    s123 = s1**3 + trip.value if joint == "phi" else trip.value

    value = (s123 + 3 * s12 + 3 * s1 + 1) / 8
    # the pair moment enters with weight 3
    quad_err = (trip.quad_error + 3 * pair.quad_error) / 8
    tail = (trip.tail + 3 * pair.tail) / 8
    bound = quad_err + tail + 1.5 * abs(surv_err)
    details = {
        "survival": f1,
        "pair_sign_moment": s12,
        "pair_prob": (s12 + 4 * f1 - 1) / 4,
        "sign_moment3": s123,
        "octant_integral": trip.value,
        "quad_error": quad_err,
        "tail": tail,
    }
    if not -bound - 1e-9 <= value <= 1 + bound + 1e-9:
        raise NumericError(f"assembled probability {value:.6g} outside [0, 1]; check the threshold units")
    est = ProbabilityEstimate(float(min(1.0, max(0.0, value))), float(bound), "charfun", details)
    if bound > q.rel_tol * max(value, 1e-12):
        raise ToleranceError(f"error bound {bound:.3g} exceeds target", bound, est)
    return est


def triangle_prob(alpha: SpectrumLike, p: float, t: Optional[float] = None, q: Optional[QuadratureParams] = None) -> ProbabilityEstimate:
    """Dispatch to the half or general inversion; ``t`` defaults to the inverted threshold."""
    alpha = as_spectrum(alpha)
    if p == 0.5:
        return triangle_prob_half(alpha, q or QuadratureParams())
    if t is None:
        from .threshold import threshold_charfun

        t = threshold_charfun(alpha, p).t
    return triangle_prob_general(alpha, p, t, q or QuadratureParams(rel_tol=1e-5))


# Monte Carlo oracle ---------------------------------------------------------


def triangle_prob_mc(
    alpha: SpectrumLike,
    p: float,
    t: float,
    n_samples: int,
    stream: SeededStream,
    parallel: Optional[Parallel] = None,
) -> ProbabilityEstimate:
    """Fraction of sampled triples whose three inner products are all >= t.

    ``p`` is echoed only; ``error_bound`` holds the binomial standard error.
    """
    if n_samples < 10_000:
        raise InvalidParameterError("n_samples must be >= 1e4")
    alpha = as_spectrum(alpha)

    def block(gen, m):
        x = triple_inner_products(gen, alpha, m)
        return int(np.count_nonzero(np.all(x >= t, axis=0)))

    hits = sum(map_blocks(block, n_samples, MC_BLOCK, stream.derive("triangle_prob_mc"), parallel))
    value = hits / n_samples
    se = math.sqrt(max(value * (1 - value), 1.0 / n_samples) / n_samples)
    return ProbabilityEstimate(value, se, "mc", {"hits": hits, "n_samples": n_samples, "p": p})


# Coordinate-free gap --------------------------------------------------------


def coordinate_free_gap(alpha: SpectrumLike, q: QuadratureParams = QuadratureParams(rel_tol=1e-4)) -> float:
    """Integral over R^3 of |Re(phi_1) - psi_1| in coordinates scaled by ||alpha||_2.

    phi_1(x) = phi(x / ||alpha||_2) and likewise for psi_1. The integral
    converges only when enough coordinates are active; without an explicit
    ``q.truncation_radius`` a radius of 50 (scaled units) is used.
    """
    alpha = as_spectrum(alpha)
    scale = 1.0 / alpha.norm2
    radius = q.truncation_radius or 50.0

    def kernel(r, u):
        a = np.outer(u[0], r) * scale
        b = np.outer(u[1], r) * scale
        c = np.outer(u[2], r) * scale
        logmag, phase, _ = _parts(alpha, (r * r * scale * scale)[None, :], a * b * c)
        log_psi = _log_charfun_1d(alpha, a) + _log_charfun_1d(alpha, b) + _log_charfun_1d(alpha, c)
        return np.abs(np.exp(logmag) * np.cos(0.5 * phase) - np.exp(log_psi))

    h0 = q.base_step
    y_hi = math.log(radius)

    def evaluate(level):
        f = 0.5**level
        bands = radial_bands(-12.0, y_hi, 0.5 * f, h=h0 * f)
        return 8.0 * integrate_polar(kernel, bands, 3, _work(alpha))[0]

    value, err, history = _adaptive(evaluate, q.rel_tol * abs(evaluate(0)) + 1e-15, q.max_subdivisions)
    if err > q.rel_tol * max(value, 1e-300) and err > 1e-14:
        raise ToleranceError(f"gap refinement error {err:.3g} above target", err, value)
    return float(value)
