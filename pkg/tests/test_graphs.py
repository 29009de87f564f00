import math

import numpy as np
import pytest

import oracles
from geodetect.ensembles import GramSample, SeededStream, goe_ensemble, sample_gram
from geodetect.errors import InvalidParameterError, UsageError
from geodetect.graphs import (
    AdjacencyMatrix,
    er_adjacency_batch,
    er_graph,
    er_tau_variance,
    geometric_adjacency_batch,
    geometric_graph,
    read_adjacency,
    signed_triangles,
    tau_batch,
    tau_moments_mc,
    tau_samples,
    triangle_count,
    triangle_report,
    write_adjacency,
    z_quantile,
)
from geodetect.parallel import Parallel
from geodetect.spectrum import as_spectrum, spectrum_family


def within(est, target, se, k=3.0):
    assert abs(est - target) <= k * se, f"{est} vs {target} (se {se})"


class TestAdjacency:
    def test_validation(self):
        with pytest.raises(InvalidParameterError):
            AdjacencyMatrix.from_dense([[0, 1], [0, 0]])
        with pytest.raises(InvalidParameterError):
            AdjacencyMatrix.from_dense([[1, 0], [0, 0]])
        with pytest.raises(InvalidParameterError):
            AdjacencyMatrix.from_dense([[0, 2], [2, 0]])

    def test_dense_round_trip(self):
        a = (np.random.default_rng(0).random((9, 9)) < 0.4).astype(np.uint8)
        a = np.triu(a, 1)
        a = a | a.T
        m = AdjacencyMatrix.from_dense(a)
        np.testing.assert_array_equal(m.dense(), a)
        assert m.edge_count == a.sum() // 2

    def test_file_round_trip(self, tmp_path):
        m = AdjacencyMatrix.from_dense(oracles_graph())
        write_adjacency(m, tmp_path / "g.txt")
        assert read_adjacency(tmp_path / "g.txt") == m

    def test_wrong_file_kind(self, tmp_path):
        (tmp_path / "g.txt").write_text("2 goe\n0.5\n")
        with pytest.raises(UsageError):
            read_adjacency(tmp_path / "g.txt")


def oracles_graph():
    a = np.zeros((5, 5), dtype=np.uint8)
    for i, j in [(0, 1), (1, 2), (0, 2), (2, 3), (3, 4)]:
        a[i, j] = a[j, i] = 1
    return a


class TestThresholdGraphs:
    def test_extreme_thresholds(self):
        w = sample_gram(6, [1, 0.5, 0.2], SeededStream(1))
        assert geometric_graph(w, -1e300) == AdjacencyMatrix.complete(6)
        assert geometric_graph(w, 1e300) == AdjacencyMatrix.empty(6)
        m = goe_ensemble(6, SeededStream(2))
        assert er_graph(m, -1e300) == AdjacencyMatrix.complete(6)

    def test_ties_are_edges(self):
        w = GramSample(np.array([[0.0, 0.25], [0.25, 0.0]]), "geometric")
        assert geometric_graph(w, 0.25).edge_count == 1

    def test_kind_checks(self):
        with pytest.raises(UsageError):
            geometric_graph(goe_ensemble(3, SeededStream(0)), 0.0)
        with pytest.raises(UsageError):
            er_graph(sample_gram(3, [1.0], SeededStream(0)), 0.0)

    def test_geometric_median_density(self):
        alpha = spectrum_family("isotropic", 50)
        s = SeededStream(3)
        dens = [geometric_graph(sample_gram(10, alpha, s.child(i)), 0.0).edge_count / 45 for i in range(1000)]
        within(np.mean(dens), 0.5, np.std(dens) / math.sqrt(len(dens)))

    def test_er_density_and_independence(self):
        s = SeededStream(4)
        z = z_quantile(0.3)
        ups = np.array([er_graph(goe_ensemble(10, s.child(i)), z).upper() for i in range(10_000)], dtype=float)
        dens = ups.mean(axis=1)
        within(dens.mean(), 0.3, dens.std() / math.sqrt(dens.size))
        # edges (1,2) and (1,3) are the first two upper-triangle entries
        rho = np.corrcoef(ups[:, 0], ups[:, 1])[0, 1]
        assert abs(rho) <= 3 / math.sqrt(ups.shape[0])


class TestTriangleStatistics:
    def test_small_cases(self):
        assert triangle_count(AdjacencyMatrix.complete(4)) == 4
        assert triangle_count(AdjacencyMatrix.empty(7)) == 0
        assert signed_triangles(AdjacencyMatrix.empty(3), 0.3) == pytest.approx(-(0.3**3), abs=1e-16)
        assert signed_triangles(AdjacencyMatrix.complete(3), 0.3) == pytest.approx(0.7**3, abs=1e-16)

    @pytest.mark.parametrize("p", [0.2, 0.5])
    def test_exhaustive_n4(self, p):
        for a in oracles.all_graphs(4):
            m = AdjacencyMatrix.from_dense(a)
            assert triangle_count(m) == oracles.brute_triangle_count(a)
            assert signed_triangles(m, p) == pytest.approx(oracles.brute_signed_triangles(a, p), abs=1e-14)
            assert signed_triangles(m, p, "trace") == pytest.approx(oracles.brute_signed_triangles(a, p), abs=1e-14)

    def test_direct_and_trace_agree_n32(self):
        gen = np.random.default_rng(5)
        for _ in range(5):
            a = np.triu((gen.random((32, 32)) < 0.45).astype(np.uint8), 1)
            m = AdjacencyMatrix.from_dense(a | a.T)
            assert signed_triangles(m, 0.45, "direct") == pytest.approx(signed_triangles(m, 0.45, "trace"), abs=1e-9)

    def test_report_range(self):
        n, p = 12, 0.35
        rep = triangle_report(AdjacencyMatrix.from_dense(np.ones((n, n), np.uint8) - np.eye(n, dtype=np.uint8)), p)
        assert 0 <= rep.t_count <= math.comb(n, 3)
        assert abs(rep.tau) <= math.comb(n, 3) * max(p, 1 - p) ** 3 + 1e-9

    def test_batch_matches_single(self):
        gen = SeededStream(6).generator()
        adj = er_adjacency_batch(gen, 7, 0.4, 20)
        single = [signed_triangles(AdjacencyMatrix.from_dense(a), 0.4) for a in adj]
        np.testing.assert_allclose(tau_batch(adj, 0.4), single, atol=1e-12)

    def test_bad_p(self):
        with pytest.raises(InvalidParameterError):
            signed_triangles(AdjacencyMatrix.empty(3), 1.0)


class TestNullLaw:
    def test_exact_variance_by_enumeration(self):
        for p in (0.3, 0.5):
            mean, var = oracles.er_tau_law(4, p)
            assert mean == pytest.approx(0, abs=1e-14)
            assert var == pytest.approx(er_tau_variance(4, p), rel=1e-12)

    def test_signed_mean_zero(self):
        x = tau_samples("er", 10, 0.5, 100_000, SeededStream(7))
        within(x.mean(), 0.0, x.std() / math.sqrt(x.size))

    def test_er_triangle_count_mean(self):
        gen = SeededStream(8).generator()
        adj = er_adjacency_batch(gen, 10, 0.5, 100_000)
        counts = np.einsum("rij,rjk,rki->r", adj.astype(np.int64), adj.astype(np.int64), adj.astype(np.int64)) / 6
        within(counts.mean(), math.comb(10, 3) * 0.125, counts.std() / math.sqrt(counts.size))

    def test_variance(self):
        m = tau_moments_mc("er", 10, 0.5, replicas=100_000, stream=SeededStream(9))
        assert m.variance == pytest.approx(1.875, rel=0.05)
        within(m.mean, 0.0, m.mean_se)


class TestGeometricModel:
    def test_mean_positive_at_median(self):
        m = tau_moments_mc("geometric", 10, 0.5, spectrum_family("isotropic", 4), 20_000, SeededStream(10))
        assert m.mean > 5 * m.mean_se

    def test_mean_scaling(self):
        ratios = []
        for d in (16, 64, 256):
            m = tau_moments_mc("geometric", 10, 0.5, spectrum_family("isotropic", d), 20_000, SeededStream(11))
            ratios.append(m.mean / (math.comb(10, 3) / math.sqrt(d)))
        assert max(ratios) / min(ratios) <= 2

    def test_expectation_identity(self):
        # mean tau per triple equals P(triangle) - p^3
        alpha = as_spectrum(spectrum_family("isotropic", 8))
        gen = SeededStream(12).generator()
        adj = geometric_adjacency_batch(gen, 3, alpha, 0.0, 400_000)
        tri = adj[:, 0, 1] & adj[:, 0, 2] & adj[:, 1, 2]
        tau = tau_batch(adj, 0.5)
        diff = tau - (tri - 0.125)
        # tau - (A12 A13 A23 - p^3) has mean 0 at p = 1/2 by the sign symmetry of single edges
        within(diff.mean(), 0.0, diff.std() / math.sqrt(diff.size))

    def test_variance_bounded_on_grid(self):
        vals = []
        for n in (6, 10):
            for d in (8, 64):
                alpha = spectrum_family("isotropic", d)
                m = tau_moments_mc("geometric", n, 0.5, alpha, 5_000, SeededStream(13))
                r6 = 1.0 / d  # (||a||_3/||a||_2)^6 for the isotropic spectrum
                vals.append(m.variance / (n**3 + n**4 * r6))
        assert max(vals) / min(vals) < 10

    def test_worker_count_invariance(self):
        alpha = spectrum_family("isotropic", 8)
        a = tau_samples("geometric", 8, 0.5, 3000, SeededStream(14), alpha, 0.0, Parallel(1))
        b = tau_samples("geometric", 8, 0.5, 3000, SeededStream(14), alpha, 0.0, Parallel(3))
        np.testing.assert_array_equal(a, b)

    def test_unknown_model(self):
        with pytest.raises(InvalidParameterError):
            tau_samples("nope", 5, 0.5, 10, SeededStream(0))
