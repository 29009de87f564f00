"""Relative entropies and the total-variation upper bound between G(n,p) and G(n,p,alpha).

The geometric graph thresholds a Gram matrix W(n, alpha); the Erdos-Renyi
graph thresholds a GOE matrix M(n) at the normal quantile. The bound is

    TV <= TV(W, M) + TV(thresholded M at the two cutoffs)
       <= sqrt(Ent[W || M] / 2) + sqrt(n^2 Ent[p || p'])

where Ent[W || M] accumulates, row by row, -1/2 E ln det of normalized
k x k Gram matrices, and p' = P(Z >= t_{p,alpha} / ||alpha||_2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg, stats

from .ensembles import SeededStream, map_blocks, weighted_gram_batch
from .errors import InvalidParameterError, NumericError, ValidityError
from .parallel import Parallel
from .spectrum import AlphaSpectrum, SpectrumLike, as_spectrum, effective_dim_3, effective_dim_4

LOGDET_BLOCK = 4096
ANALYTIC_CONSTANT = 3.0
ANALYTIC_MASS_FACTOR = 16.0


def _spd_cholesky(s: np.ndarray, name: str) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise InvalidParameterError(f"{name} must be a square matrix")
    if not np.allclose(s, s.T, rtol=1e-12, atol=1e-14 * np.abs(s).max()):
        raise NumericError(f"{name} is not symmetric")
    try:
        return linalg.cholesky(s, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericError(f"{name} is not positive definite") from exc


def gaussian_rel_entropy(sigma1, sigma2) -> float:
    """Ent[N(0, sigma1) || N(0, sigma2)] via Cholesky factors."""
    l1 = _spd_cholesky(sigma1, "sigma1")
    l2 = _spd_cholesky(sigma2, "sigma2")
    if l1.shape != l2.shape:
        raise InvalidParameterError("covariances differ in size")
    n = l1.shape[0]
    m = linalg.solve_triangular(l2, l1, lower=True)
    trace = float(np.sum(m * m))
    logdet_ratio = 2.0 * float(np.sum(np.log(np.diag(l2))) - np.sum(np.log(np.diag(l1))))
    return max(0.0, 0.5 * (trace + logdet_ratio - n))


def bernoulli_rel_entropy(p: float, p_prime: float) -> float:
    """p ln(p/p') + (1-p) ln((1-p)/(1-p')), written with log1p for small gaps."""
    for name, v in (("p", p), ("p_prime", p_prime)):
        if not 0 < v < 1:
            raise InvalidParameterError(f"{name} must lie in (0, 1), got {v}")
    gap = p_prime - p
    val = -p * math.log1p(gap / p) - (1 - p) * math.log1p(-gap / (1 - p))
    return max(0.0, val)


@dataclass(frozen=True)
class LogdetEstimate:
    mean_neg_logdet: float
    std_error: float
    replicas: int
    singular_draws: int = 0


def _neg_logdet_batch(g: np.ndarray, control_variate: bool) -> tuple[np.ndarray, np.ndarray]:
    """-ln det per matrix and a mask of failed factorizations."""
    k = g.shape[-1]
    ok = np.ones(g.shape[0], dtype=bool)
    out = np.empty(g.shape[0])
    try:
        chol = np.linalg.cholesky(g)
        diag = np.diagonal(chol, axis1=1, axis2=2)
        out[:] = -2.0 * np.sum(np.log(diag), axis=1)
    except np.linalg.LinAlgError:
        for i in range(g.shape[0]):
            try:
                c = np.linalg.cholesky(g[i])
                out[i] = -2.0 * np.sum(np.log(np.diag(c)))
            except np.linalg.LinAlgError:
                ok[i] = False
    if control_variate:
        # E tr(G) = k exactly, so adding tr(G) - k keeps the mean and cancels
        # the leading fluctuation of -ln det
        out += np.trace(g, axis1=1, axis2=2) - k
    return out, ok


def logdet_gram_mc(
    k: int,
    alpha: SpectrumLike,
    replicas: int,
    stream: SeededStream,
    parallel: Optional[Parallel] = None,
    control_variate: bool = True,
) -> LogdetEstimate:
    """Monte Carlo -E ln det(Y D_alpha Y^T / ||alpha||_2^2) for a k x d Gaussian Y.

    Rows of Y are iid N(0, diag(alpha)), so the k x k matrix equals
    sum_j alpha_j^2 z_j z_j^T / ||alpha||_2^2 with z_j iid N(0, I_k); groups of
    equal alpha are drawn through the Bartlett decomposition. Singular
    draws are discarded, counted and replaced.
    """
    if k < 1:
        raise InvalidParameterError("k must be >= 1")
    alpha = as_spectrum(alpha)
    if alpha.nnz < k:
        raise ValidityError(f"need at least k={k} nonzero variances, have {alpha.nnz}")
    scale = 1.0 / alpha.power_sum(2)

    def block(gen, m):
        vals = []
        singular = 0
        need = m
        while need:
            g = weighted_gram_batch(gen, k, alpha, need, weight_power=2) * scale
            v, ok = _neg_logdet_batch(g, control_variate)
            vals.append(v[ok])
            singular += int(need - ok.sum())
            need = int(need - ok.sum())
        v = np.concatenate(vals)
        return float(v.sum()), float(v @ v), singular

    parts = map_blocks(block, replicas, LOGDET_BLOCK, stream.derive(f"logdet_{k}"), parallel)
    s = sum(x[0] for x in parts)
    ss = sum(x[1] for x in parts)
    singular = sum(x[2] for x in parts)
    mean = s / replicas
    var = max(ss / replicas - mean * mean, 0.0) * replicas / max(replicas - 1, 1)
    return LogdetEstimate(mean, math.sqrt(var / replicas), replicas, singular)


@dataclass(frozen=True)
class GramEntropyBound:
    """Bound on Ent[W(n, alpha) || M(n)] with its per-row terms.

    For ``method="mc"``, ``value`` is the point estimate and ``upper`` adds
    ``z`` combined standard errors. For ``method="analytic"``, ``value``
    already includes the remainder and equals ``upper``.
    """

    value: float
    upper: float
    method: str
    terms: tuple
    std_error: float = 0.0
    remainder: float = 0.0
    note: str = ""


def _analytic_check(n: int, alpha: AlphaSpectrum) -> None:
    mass = alpha.power_sum(2)
    if not mass >= ANALYTIC_MASS_FACTOR * n:
        raise ValidityError(
            f"analytic envelope needs ||alpha||_2^2 >= {ANALYTIC_MASS_FACTOR:g} n "
            f"(have {mass:.6g}, n = {n}); use method='mc'"
        )


def gram_entropy_bound(
    n: int,
    alpha: SpectrumLike,
    method: str = "mc",
    replicas: int = 2000,
    stream: Optional[SeededStream] = None,
    parallel: Optional[Parallel] = None,
    z: float = 3.0,
) -> GramEntropyBound:
    """sum_{k=1}^{n-1} (1/2) (-E ln det at size k).

    ``analytic`` uses the envelope 3 (k^2 r + sqrt(k r)), r = 1/eff4, for each
    term and adds n exp(-||alpha||_2^2 / 16) for the small-eigenvalue event.
    Both constants are chosen by this package and are not sharp.
    """
    if n < 1:
        raise InvalidParameterError("n must be >= 1")
    alpha = as_spectrum(alpha)
    if method == "analytic":
        _analytic_check(n, alpha)
        r = 1.0 / effective_dim_4(alpha)
        terms = tuple(
            0.5 * ANALYTIC_CONSTANT * (k * k * r + math.sqrt(k * r)) for k in range(1, n)
        )
        remainder = n * math.exp(-alpha.power_sum(2) / 16.0)
        total = math.fsum(terms) + remainder
        return GramEntropyBound(
            total, total, "analytic", terms, 0.0, remainder,
            "envelope constants (3 and exp(-|a|^2/16)) are package choices, not sharp",
        )
    if method != "mc":
        raise InvalidParameterError(f"unknown method {method!r}")
    if n >= 2 and alpha.nnz < n - 1:
        raise ValidityError(f"mc method needs at least n-1 = {n - 1} nonzero variances")
    stream = stream or SeededStream(0)
    terms, ses = [], []
    for k in range(1, n):
        est = logdet_gram_mc(k, alpha, replicas, stream, parallel)
        terms.append(0.5 * est.mean_neg_logdet)
        ses.append(0.5 * est.std_error)
    value = math.fsum(terms)
    se = math.sqrt(math.fsum(s * s for s in ses))
    return GramEntropyBound(
        max(value, 0.0), max(value + z * se, 0.0), "mc", tuple(terms), se, 0.0,
        f"upper = estimate + {z:g} standard errors",
    )


@dataclass(frozen=True)
class TvBoundReport:
    ent_gram: float
    ent_bernoulli: float
    tv_upper: float
    components: dict = field(default_factory=dict)


def tv_upper_bound(
    n: int,
    alpha: SpectrumLike,
    p: float,
    method: str = "mc",
    replicas: int = 2000,
    stream: Optional[SeededStream] = None,
    parallel: Optional[Parallel] = None,
    threshold: Optional[float] = None,
) -> TvBoundReport:
    """Total-variation upper bound between G(n,p) and G(n,p,alpha).

    ``ent_gram`` is the certified (upper) Gram entropy; the Bernoulli piece
    applies TV <= sqrt(Ent) without the factor 1/2, as the remainder
    argument does. ``threshold`` overrides t_{p,alpha} (inner-product units).
    """
    if not 0 < p < 1:
        raise InvalidParameterError("p must lie in (0, 1)")
    alpha = as_spectrum(alpha)
    gram = gram_entropy_bound(n, alpha, method, replicas, stream, parallel)
    if p == 0.5:
        t = 0.0
        p_prime = 0.5
    else:
        if threshold is None:
            from .threshold import threshold_charfun

            threshold = threshold_charfun(alpha, p).t
        t = threshold
        p_prime = float(stats.norm.sf(t / alpha.norm2))
    ent_b = n * n * bernoulli_rel_entropy(p, p_prime)
    tv_gram = math.sqrt(0.5 * gram.upper)
    tv_bern = math.sqrt(ent_b)
    tv = min(tv_gram + tv_bern, 1.5)
    components = {
        "method": gram.method,
        "ent_gram_estimate": gram.value,
        "ent_gram_std_error": gram.std_error,
        "ent_gram_terms": list(gram.terms),
        "ent_gram_remainder": gram.remainder,
        "p_prime": p_prime,
        "threshold": t,
        "tv_gram": tv_gram,
        "tv_bernoulli": tv_bern,
        "eff3": effective_dim_3(alpha),
        "eff4": effective_dim_4(alpha),
        "note": gram.note,
    }
    return TvBoundReport(gram.upper, ent_b, tv, components)


def chi2_tail_bound(weights: Sequence[float], t: float) -> float:
    """2 exp(-t / (2 max v)) bounding P(|sum v_i (chi2_1,i - 1)| >= t)."""
    v = np.asarray(weights, dtype=np.float64)
    if v.size == 0:
        raise InvalidParameterError("weights must be nonempty")
    if np.any(v < 0):
        raise InvalidParameterError("weights must be non-negative")
    if not t > 0:
        raise InvalidParameterError("t must be positive")
    vmax = float(v.max())
    if vmax == 0:
        return 0.0
    return 2.0 * math.exp(-t / (2.0 * vmax))
