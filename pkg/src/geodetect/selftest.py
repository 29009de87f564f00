"""Quick self-check over closed-form and definitional examples.

Each check is cheap (the slowest is a one-dimensional octant inversion of
about a second) and compares against a value known without computation.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .charfun import QuadratureParams, phi, psi, triangle_prob_half
from .detect import empirical_tv, tau_test
from .ensembles import SeededStream, gram_ensemble, goe_ensemble, sample_points
from .entropy import bernoulli_rel_entropy, chi2_tail_bound, gaussian_rel_entropy
from .errors import InvalidSpectrumError
from .graphs import AdjacencyMatrix, signed_triangles, triangle_count
from .spectrum import effective_dim_3, effective_dim_4, normalize, q_norm, spectrum_family
from .threshold import inner_product_survival, threshold_charfun, threshold_mc, threshold_normal


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _close(a, b, tol) -> bool:
    return bool(np.all(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) <= tol))


def _raises(fn, exc) -> bool:
    try:
        fn()
    except exc:
        return True
    return False


def _checks() -> list[tuple[str, Callable[[], tuple[bool, str]]]]:
    s = SeededStream(2024)

    def normalize_max():
        v = normalize([2, 1, 0.5]).values
        return _close(v, [1, 0.5, 0.25], 0), str(v.tolist())

    def degenerate_spectrum():
        return _raises(lambda: normalize([0, 0]), InvalidSpectrumError), "zero spectrum rejected"

    def pythagorean_norm():
        v = q_norm([3, 4], 2)
        return _close(v, 5, 1e-15), repr(v)

    def isotropic_eff_dims():
        a = spectrum_family("isotropic", 16)
        e3, e4 = effective_dim_3(a), effective_dim_4(a)
        return _close([e3, e4], [16, 16], 1e-12), f"{e3!r}, {e4!r}"

    def single_coordinate_eff_dims():
        a = [1, 0, 0, 0]
        e3, e4 = effective_dim_3(a), effective_dim_4(a)
        return _close([e3, e4], [1, 1], 1e-15), f"{e3!r}, {e4!r}"

    def families():
        ok = _close(spectrum_family("power_law", 3, 1 / 3).values, [1, 2 ** (-1 / 3), 3 ** (-1 / 3)], 1e-15)
        ok &= _close(spectrum_family("spiked", 4, 2, 0.1).values, [1, 1, 0.1, 0.1], 0)
        return ok, "power_law and spiked definitions"

    def zero_variance_coordinate():
        cloud = sample_points(1, [1, 0], s)
        return bool(np.all(cloud.rows[:, 1] == 0)), "second coordinate identically 0"

    def gram_diagonal():
        g = gram_ensemble(sample_points(5, [1, 0.5, 0.25], s), [1, 0.5, 0.25])
        return bool(np.all(np.diag(g.entries) == 0) and np.array_equal(g.entries, g.entries.T)), "zero diagonal, symmetric"

    def goe_shape():
        m = goe_ensemble(1, s)
        return m.entries.shape == (1, 1) and m.entries[0, 0] == 0, "n=1 gives [[0]]"

    def median_threshold():
        a = spectrum_family("isotropic", 10)
        vals = [threshold_charfun(a, 0.5).t, threshold_normal(a, 0.5).t, threshold_mc(a, 0.5, 10_000, s).t]
        return all(v == 0 for v in vals), str(vals)

    def normal_unit_quantile():
        t = threshold_normal(spectrum_family("isotropic", 100), 0.15865525393145707).t
        return _close(t, 10, 1e-9), repr(t)

    def survival_at_zero():
        v = inner_product_survival([1, 0.3], 0.0)
        return v == 0.5, repr(v)

    def graph_counts():
        ok = triangle_count(AdjacencyMatrix.complete(4)) == 4
        ok &= triangle_count(AdjacencyMatrix.empty(6)) == 0
        p = 0.3
        ok &= _close(signed_triangles(AdjacencyMatrix.empty(3), p), (-p) ** 3, 1e-15)
        ok &= _close(signed_triangles(AdjacencyMatrix.complete(3), p), (1 - p) ** 3, 1e-15)
        return bool(ok), "triangle counts and single-triple tau"

    def charfun_origin():
        a = [1, 0.5, 0.2]
        v = complex(phi(a, 0.0, 0.0, 0.0)), complex(psi(a, 0.0, 0.0, 0.0))
        return v == (1, 1), str(v)

    def sign_case():
        est = triangle_prob_half([1.0], QuadratureParams(rel_tol=1e-6))
        return abs(est.value - 0.25) <= max(est.error_bound, 1e-12) and est.error_bound <= 1e-6, repr(est.value)

    def entropy_zero():
        ok = gaussian_rel_entropy(np.eye(3), np.eye(3)) == 0
        ok &= bernoulli_rel_entropy(0.3, 0.3) == 0
        return bool(ok), "Ent(P||P) = 0"

    def chi2_formula():
        v = chi2_tail_bound([1.0], 10.0)
        return _close(v, 2 * math.exp(-5), 1e-15), repr(v)

    def detection_decisions():
        a = tau_test(AdjacencyMatrix.complete(10), 0.5, 1.0)
        b = tau_test(AdjacencyMatrix.empty(10), 0.5, 1.0)
        ok = a.decision == "geometry" and a.tau_observed == 15 and b.decision == "no_geometry"
        return ok, f"{a.tau_observed!r}, {b.tau_observed!r}"

    def tv_extremes():
        x = np.arange(100.0)
        v0 = empirical_tv(x, x)
        v1 = empirical_tv(x, x + 1000)
        return v0 == 0 and v1 == 1, f"{v0!r}, {v1!r}"

    return [
        ("normalize divides by max", normalize_max),
        ("all-zero spectrum is rejected", degenerate_spectrum),
        ("q-norm of (3,4) is 5", pythagorean_norm),
        ("isotropic effective dimensions equal d", isotropic_eff_dims),
        ("single active coordinate has effective dimension 1", single_coordinate_eff_dims),
        ("family definitions", families),
        ("zero-variance coordinate stays 0", zero_variance_coordinate),
        ("Gram matrix has zero diagonal", gram_diagonal),
        ("GOE of size 1", goe_shape),
        ("threshold at p = 1/2 is 0 for every method", median_threshold),
        ("normal threshold at unit quantile", normal_unit_quantile),
        ("survival at 0 is 1/2", survival_at_zero),
        ("triangle counts and signed triangles", graph_counts),
        ("characteristic functions at the origin", charfun_origin),
        ("d = 1 sign case gives 1/4", sign_case),
        ("relative entropy of a law with itself", entropy_zero),
        ("chi-square tail bound formula", chi2_formula),
        ("tau test on complete and empty graphs", detection_decisions),
        ("empirical TV extremes", tv_extremes),
    ]


def run_selftest() -> list[CheckResult]:
    results = []
    for name, fn in _checks():
        start = time.perf_counter()
        try:
            passed, detail = fn()
        except Exception as exc:  # a crashing check is a failed check
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(passed), detail, time.perf_counter() - start))
    return results
