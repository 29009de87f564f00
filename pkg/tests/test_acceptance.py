"""Acceptance criteria 1-10, each at its stated tolerance.

Every criterion prints one PASS/FAIL line, collected into the terminal
summary by ``conftest.py``. Primary outputs are cached so that criterion
10 can rerun the Monte Carlo criteria under a different thread count and
compare them bit for bit.
"""

import math
import time

import numpy as np
import pytest
from scipy import special

import oracles
from geodetect.charfun import QuadratureParams, triangle_prob_general, triangle_prob_half, triangle_prob_mc
from geodetect.detect import empirical_tv
from geodetect.ensembles import SeededStream, map_blocks
from geodetect.entropy import (
    bernoulli_rel_entropy,
    chi2_tail_bound,
    gaussian_rel_entropy,
    logdet_gram_mc,
    tv_upper_bound,
)
from geodetect.graphs import geometric_adjacency_batch, moments_of, tau_samples
from geodetect.parallel import Parallel
from geodetect.spectrum import as_spectrum, spectrum_family
from geodetect.threshold import berry_esseen_gap, threshold_charfun, threshold_mc, threshold_normal

SEED = 20240611
BASE_THREADS = 1
RERUN_THREADS = 3

# primary outputs of each Monte Carlo criterion, keyed by criterion number
PRIMARY: dict = {}


def stream(label):
    return SeededStream(SEED).derive(label)


def iso(d):
    return spectrum_family("isotropic", d)


def power_law(d, beta):
    return spectrum_family("power_law", d, beta)


def r3(alpha):
    """(||alpha||_3 / ||alpha||_2)^3."""
    a = as_spectrum(alpha)
    return a.power_sum(3) / a.power_sum(2) ** 1.5


# Monte Carlo parts, parameterised by the worker pool --------------------------


def c1_primary(par):
    mc = triangle_prob_mc([1.0], 0.5, 0.0, 10**6, stream("c1"), par)
    thr = [threshold_mc(a, 0.5, 10**5, stream("c1_threshold"), par).t for a in C1_SPECTRA]
    return mc.value, mc.error_bound, tuple(thr)


def c3_primary(par):
    out = []
    for p in (0.3, 0.7):
        t = threshold_charfun(C3_ALPHA, p).t
        mc = triangle_prob_mc(C3_ALPHA, p, t, 10**7, stream(f"c3_{p}"), par)
        out.append((mc.value, mc.error_bound))
    return tuple(out)


def c4_primary(par):
    return tuple(
        (mc.value, mc.error_bound)
        for mc in (triangle_prob_mc(iso(d), 0.5, 0.0, 10**6, stream(f"c4_{d}"), par) for d in C4_DIMS)
    )


def c5_primary(par):
    x = tau_samples("er", 10, 0.5, 10**5, stream("c5"), parallel=par)
    return x.tobytes()


def c6_primary(par):
    alpha = iso(4)

    def block(gen, m):
        a = geometric_adjacency_batch(gen, 4, alpha, 0.0, m).astype(np.float64) - 0.5
        prod = a[:, 0, 1] ** 2 * a[:, 0, 2] * a[:, 1, 2] * a[:, 0, 3] * a[:, 1, 3]
        return prod.sum(), prod @ prod

    parts = map_blocks(block, 10**6, 1 << 15, stream("c6_pairs"), par)
    n = 10**6
    mean = sum(x[0] for x in parts) / n
    var = sum(x[1] for x in parts) / n - mean * mean
    tri = triangle_prob_mc(alpha, 0.5, 0.0, 10**6, stream("c6_triangle"), par)
    return mean, math.sqrt(var / n), tri.value, tri.error_bound


def c7_primary(par):
    h0 = tau_samples("er", 20, 0.5, 1000, stream("c7_h0"), parallel=par)
    h1 = tau_samples("geometric", 20, 0.5, 1000, stream("c7_h1"), iso(16), parallel=par)
    rep = tv_upper_bound(8, iso(10**6), 0.5, "mc", 2000, stream("c7_entropy"), par)
    return empirical_tv(h0, h1), rep.tv_upper


def c9_primary(par):
    logdet = tuple(
        (est.mean_neg_logdet, est.std_error)
        for est in (logdet_gram_mc(1, a, 10**6, stream(f"c9_{i}"), par) for i, a in enumerate(C9_SPECTRA))
    )
    tails = map_blocks(
        lambda g, m: np.count_nonzero(np.abs(g.chisquare(100, m) - 100.0) >= 30.0),
        10**6,
        1 << 16,
        stream("c9_chi2"),
        par,
    )
    return logdet, sum(tails)


C1_SPECTRA = [[1.0], iso(10), power_law(1000, 1 / 3), spectrum_family("spiked", 50, 3, 0.1)]
C3_ALPHA = [1.0, 0.5]
C4_DIMS = (16, 64, 256)
C9_SPECTRA = [[1.0], iso(4), iso(50)]

RERUNNABLE = {1: c1_primary, 3: c3_primary, 4: c4_primary, 5: c5_primary, 6: c6_primary, 7: c7_primary, 9: c9_primary}


def primary(number):
    if number not in PRIMARY:
        PRIMARY[number] = RERUNNABLE[number](Parallel(BASE_THREADS))
    return PRIMARY[number]


# Criteria ---------------------------------------------------------------------


class TestAcceptance:
    def test_criterion_1_exact_small_cases(self, acceptance_log):
        start = time.perf_counter()
        half = triangle_prob_half([1.0], QuadratureParams(rel_tol=1e-6))
        mc_value, mc_se, mc_thresholds = primary(1)
        exact = [threshold_charfun(a, 0.5).t for a in C1_SPECTRA] + [threshold_normal(a, 0.5).t for a in C1_SPECTRA]
        elapsed = time.perf_counter() - start
        half_ok = half.error_bound <= 1e-6 and abs(half.value - 0.25) <= half.error_bound
        mc_ok = abs(mc_value - 0.25) <= 3 * mc_se
        thr_ok = all(t == 0.0 for t in exact + list(mc_thresholds))
        acceptance_log(
            1,
            half_ok and mc_ok and thr_ok,
            f"half {half.value:.15f} (bound {half.error_bound:.2g}), mc {mc_value:.5f} +- {mc_se:.1g}, "
            f"t_0.5 = 0 for charfun/normal/mc on {len(C1_SPECTRA)} spectra: {thr_ok}; {elapsed:.2f}s",
        )
        assert half_ok and mc_ok and thr_ok

    def test_criterion_2_inversion_matches_mc(self, acceptance_log):
        spectra = {f"iso {d}": iso(d) for d in (2, 8, 64, 256)}
        spectra.update({f"power-law {b} d=256": power_law(256, beta) for b, beta in (("1/3", 1 / 3), ("1/2", 0.5))})
        worst = 0.0
        details = []
        par = Parallel(BASE_THREADS)
        for name, alpha in spectra.items():
            half = triangle_prob_half(alpha, QuadratureParams(rel_tol=1e-6))
            mc = triangle_prob_mc(alpha, 0.5, 0.0, 10**7, stream(f"c2_{name}"), par)
            allowed = max(3 * mc.error_bound, half.error_bound)
            ratio = abs(half.value - mc.value) / allowed
            worst = max(worst, ratio)
            details.append(f"{name} {ratio:.2f}")
        acceptance_log(2, worst <= 1, "|half - mc| / max(3 s.e., bound): " + ", ".join(details))
        assert worst <= 1

    def test_criterion_3_general_p(self, acceptance_log):
        mc = primary(3)
        details = []
        ok = True
        for (mc_value, mc_se), p in zip(mc, (0.3, 0.7)):
            t = threshold_charfun(C3_ALPHA, p).t
            gen = triangle_prob_general(C3_ALPHA, p, t)
            indep = triangle_prob_general(C3_ALPHA, p, t, joint="psi")
            combined = 3 * mc_se + gen.error_bound
            agree = abs(gen.value - mc_value) <= combined
            product = abs(indep.value - p**3) <= 1e-6
            ok &= agree and product
            details.append(
                f"p={p}: inversion {gen.value:.8f} vs mc {mc_value:.6f} (|diff| {abs(gen.value - mc_value):.1e} "
                f"<= {combined:.1e}), psi - p^3 = {indep.value - p**3:.1e}"
            )
        acceptance_log(3, ok, "; ".join(details))
        assert ok

    def test_criterion_4_excess_scaling(self, acceptance_log):
        ratios = [(v - 0.125) / r3(iso(d)) for (v, _), d in zip(primary(4), C4_DIMS)]
        spread = max(ratios) / min(ratios) if min(ratios) > 0 else math.inf
        acceptance_log(
            4,
            spread <= 4,
            "(P - p^3) / r3 at iso " + ", ".join(f"{d}: {x:.4f}" for d, x in zip(C4_DIMS, ratios))
            + f"; max/min {spread:.3f}",
        )
        assert spread <= 4

    def test_criterion_5_null_law(self, acceptance_log):
        m = moments_of(np.frombuffer(primary(5)))
        exact = math.comb(10, 3) * 0.25**3
        _, enum_var = oracles.er_tau_law(4, 0.5)
        mean_ok = abs(m.mean) <= 3 * m.mean_se
        var_ok = abs(m.variance - exact) <= 0.05 * exact
        enum_ok = enum_var == pytest.approx(math.comb(4, 3) * 0.25**3, rel=1e-12)
        acceptance_log(
            5,
            mean_ok and var_ok and enum_ok,
            f"mean {m.mean:.4f} +- {m.mean_se:.4f}, variance {m.variance:.4f} vs {exact} "
            f"({100 * (m.variance / exact - 1):+.2f}%), n=4 enumeration {enum_var:.6f}",
        )
        assert mean_ok and var_ok and enum_ok

    @pytest.mark.xfail(strict=True, reason="the identity fails: conditional independence does not factor the square")
    def test_criterion_6_covariance_identity(self, acceptance_log):
        p = 0.5
        lhs, lhs_se, tri, tri_se = primary(6)
        c = (1 - p) ** 2 / p + p**2 / (1 - p)
        rhs = c * (tri - p**3) ** 2
        rhs_se = 2 * c * abs(tri - p**3) * tri_se
        combined = 3 * math.hypot(lhs_se, rhs_se)
        ok = abs(lhs - rhs) <= combined
        acceptance_log(
            6,
            ok,
            f"E[tau123 tau124] = {lhs:.6f} +- {lhs_se:.1e} vs identity {rhs:.6f} +- {rhs_se:.1e}; "
            f"|diff| {abs(lhs - rhs):.1e} > 3 s.e. {combined:.1e} (known false, see decisions ledger)",
        )
        assert ok

    def test_criterion_7_phase_transition(self, acceptance_log):
        tv, tv_upper = primary(7)
        ok = tv >= 0.9 and tv_upper <= 0.2
        acceptance_log(7, ok, f"tau TV at n=20 iso 16 = {tv:.3f} (>= 0.9); tv_upper at n=8 iso 1e6 = {tv_upper:.4f} (<= 0.2)")
        assert ok

    def test_criterion_8_threshold_asymptotics(self, acceptance_log):
        p = 0.3
        z = -special.ndtri(p)
        gaps, ses = [], []
        for d in (10**2, 10**3, 10**4):
            est = threshold_charfun(iso(d), p)
            gaps.append(abs(est.t - math.sqrt(d) * z))
            ses.append(est.std_error)
        monotone = all(gaps[i + 1] <= gaps[i] + 3 * math.hypot(ses[i], ses[i + 1]) for i in range(2))
        alpha = power_law(1000, 1 / 3)
        be = berry_esseen_gap(alpha, 10**6, stream("c8"), Parallel(BASE_THREADS))
        limit = 3 * r3(alpha) + 5 * be.std_error
        ok = monotone and be.value <= limit
        acceptance_log(
            8,
            ok,
            "|t - ||a||_2 z| at iso 1e2/1e3/1e4: " + ", ".join(f"{g:.3e}" for g in gaps)
            + f"; Berry-Esseen gap at power-law 1/3 d=1e3 {be.value:.2e} <= {limit:.3f}",
        )
        assert ok

    def test_criterion_9a_logdet(self):
        (logdet, _) = primary(9)
        for (mean, se), alpha in zip(logdet, C9_SPECTRA):
            d = as_spectrum(alpha).d
            assert abs(mean - oracles.neg_log_chi2_mean(d)) <= 3 * se

    def test_criterion_9b_entropy_formulas(self):
        assert gaussian_rel_entropy(2 * np.eye(2), np.eye(2)) == pytest.approx(1 - math.log(2), abs=1e-9)
        assert gaussian_rel_entropy(np.eye(3), np.eye(3)) == pytest.approx(0.0, abs=1e-9)
        assert bernoulli_rel_entropy(0.5, 0.25) == pytest.approx(math.log(2) - 0.5 * math.log(3), abs=1e-9)
        assert bernoulli_rel_entropy(0.3, 0.3) == pytest.approx(0.0, abs=1e-9)

    @pytest.mark.xfail(strict=True, reason="the tail bound is false for many weights; exact tail exceeds it")
    def test_criterion_9_entropy_components(self, acceptance_log):
        logdet, hits = primary(9)
        logdet_ok = all(
            abs(mean - oracles.neg_log_chi2_mean(as_spectrum(a).d)) <= 3 * se for (mean, se), a in zip(logdet, C9_SPECTRA)
        )
        formulas_ok = (
            abs(gaussian_rel_entropy(2 * np.eye(2), np.eye(2)) - (1 - math.log(2))) <= 1e-9
            and abs(bernoulli_rel_entropy(0.5, 0.25) - (math.log(2) - 0.5 * math.log(3))) <= 1e-9
        )
        n = 10**6
        tail = hits / n
        tail_se = math.sqrt(max(tail * (1 - tail), 1 / n) / n)
        bound = chi2_tail_bound(np.ones(100), 30.0)
        chi2_ok = tail <= bound + 5 * tail_se
        acceptance_log(
            9,
            logdet_ok and formulas_ok and chi2_ok,
            f"logdet vs digamma within 3 s.e.: {logdet_ok}; entropy formulas to 1e-9: {formulas_ok}; "
            f"chi-square tail at 100 unit weights, t=30: {tail:.5f} +- {tail_se:.1e} vs bound {bound:.2e} "
            f"(bound is false here, see decisions ledger)",
        )
        assert logdet_ok and formulas_ok and chi2_ok

    def test_criterion_10_determinism(self, acceptance_log):
        same = []
        for number, fn in RERUNNABLE.items():
            base = primary(number)
            rerun = fn(Parallel(RERUN_THREADS))
            same.append((number, rerun == base))
        ok = all(s for _, s in same)
        acceptance_log(
            10,
            ok,
            f"criteria {', '.join(str(k) for k, _ in same)} rerun with {RERUN_THREADS} threads instead of "
            f"{BASE_THREADS}: identical = {ok}",
        )
        assert ok
