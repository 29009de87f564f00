import math

import numpy as np
import pytest

from geodetect.ensembles import (
    GramSample,
    SeededStream,
    gram_ensemble,
    gram_streaming,
    goe_ensemble,
    map_blocks,
    pair_inner_products,
    read_gram,
    sample_gram,
    sample_gram_batch,
    sample_points,
    triple_inner_products,
    weighted_gram_batch,
    write_gram,
)
from geodetect.errors import InvalidParameterError, ShapeError
from geodetect.parallel import Parallel
from geodetect.spectrum import as_spectrum, spectrum_family


def within(est, target, se, k=3.0):
    assert abs(est - target) <= k * se, f"{est} vs {target} (se {se})"


class TestSeededStream:
    def test_replay(self):
        a = SeededStream(7, 3).generator().standard_normal(5)
        b = SeededStream(7, 3).generator().standard_normal(5)
        np.testing.assert_array_equal(a, b)

    def test_children_and_labels_differ(self):
        s = SeededStream(7)
        draws = [x.generator().standard_normal() for x in (s, s.child(0), s.child(1), s.derive("a"), s.derive("b"))]
        assert len(set(draws)) == 5

    def test_rejects_negative_seed(self):
        with pytest.raises(InvalidParameterError):
            SeededStream(-1)

    def test_block_results_independent_of_workers(self):
        def fn(gen, m):
            return gen.standard_normal(m)

        s = SeededStream(11)
        one = np.concatenate(map_blocks(fn, 10_000, 999, s, Parallel(1)))
        four = np.concatenate(map_blocks(fn, 10_000, 999, s, Parallel(4)))
        np.testing.assert_array_equal(one, four)


class TestSamplePoints:
    def test_centered(self):
        x = sample_points(10**6, [1.0], SeededStream(1)).rows[:, 0]
        assert abs(x.mean()) <= 3e-3

    def test_zero_variance_coordinate(self):
        cloud = sample_points(1, [1, 0], SeededStream(2))
        assert cloud.rows[0, 1] == 0.0

    def test_coordinate_variances(self):
        alpha = [1.0, 0.5, 0.1]
        x = sample_points(10**6, alpha, SeededStream(3)).rows
        for j, a in enumerate(alpha):
            # Var of a sample variance of N(0, a) is 2 a^2 / N
            within(x[:, j].var(), a, math.sqrt(2 / 10**6) * a)

    def test_rejects_empty(self):
        with pytest.raises(InvalidParameterError):
            sample_points(0, [1], SeededStream(0))


class TestGram:
    def test_zero_diagonal_symmetric(self):
        alpha = [1, 0.4, 0.2, 0.05]
        g = gram_ensemble(sample_points(6, alpha, SeededStream(4)), alpha)
        assert np.all(np.diag(g.entries) == 0)
        np.testing.assert_array_equal(g.entries, g.entries.T)

    def test_entry_is_scaled_inner_product(self):
        alpha = as_spectrum([1, 0.5, 0.25])
        cloud = sample_points(4, alpha, SeededStream(5))
        g = gram_ensemble(cloud, alpha)
        assert g.entries[0, 2] == pytest.approx(cloud.rows[0] @ cloud.rows[2] / alpha.norm2, rel=1e-14)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            gram_ensemble(sample_points(3, [1, 1], SeededStream(0)), [1, 1, 1])

    def test_unit_variance_off_diagonal(self):
        # E <X1,X2>^2 = ||alpha||_2^2, so the scaled entry has variance 1
        w = pair_inner_products(SeededStream(6).generator(), as_spectrum([1, 0.5]), 10**6)
        w = w / as_spectrum([1, 0.5]).norm2
        m4 = np.mean(w**4)
        within(np.mean(w * w), 1.0, math.sqrt((m4 - 1) / w.size))

    def test_product_normal_absolute_mean(self):
        w = pair_inner_products(SeededStream(7).generator(), as_spectrum([1.0]), 10**6)
        within(np.mean(np.abs(w)), 2 / math.pi, np.std(np.abs(w)) / 1e3)

    def test_streaming_matches_materialized(self):
        alpha = spectrum_family("power_law", 9000, 0.3)
        s = SeededStream(8)
        a = gram_ensemble(sample_points(5, alpha, s), alpha).entries
        b = gram_streaming(5, alpha, s).entries
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)
        c = sample_gram(5, alpha, s, budget=10).entries
        np.testing.assert_array_equal(b, c)


class TestGramMomentIdentities:
    """Row-norm and cross moments of the raw Gram, checked by Monte Carlo."""

    alpha = as_spectrum([1.0, 0.7, 0.7, 0.2, 0.05])

    def _rows(self, size):
        gen = SeededStream(9).generator()
        return gen.standard_normal((size, 2, self.alpha.d)) * np.sqrt(self.alpha.values)

    def test_row_norm(self):
        # E ||A_j||^2 = ||alpha||_2^2 with A_j = (sqrt(alpha_i) X_ji)_i scaled rows
        x = self._rows(400_000)
        a = x * np.sqrt(self.alpha.values)
        v = np.sum(a[:, 0] ** 2, axis=1)
        within(v.mean(), self.alpha.power_sum(2), v.std() / math.sqrt(v.size))
        # E ||A_j||^4 <= 3 ||alpha||_4^4 + ||alpha||_2^4
        assert np.mean(v * v) <= 3 * self.alpha.power_sum(4) + self.alpha.power_sum(2) ** 2 + 3 * np.std(v * v) / math.sqrt(v.size)

    def test_cross(self):
        x = self._rows(400_000)
        a = x * np.sqrt(self.alpha.values)
        c = np.sum(a[:, 0] * a[:, 1], axis=1) ** 2
        within(c.mean(), self.alpha.power_sum(4), c.std() / math.sqrt(c.size))


class TestFastSamplers:
    """The grouped (Bartlett) samplers must reproduce the direct laws."""

    def test_wishart_moments(self):
        alpha = as_spectrum([1.0] * 12 + [0.5] * 2)
        w = weighted_gram_batch(SeededStream(10).generator(), 3, alpha, 200_000)
        # E W = (sum alpha) I and Var W_12 = sum alpha^2
        mean_diag = w[:, 0, 0]
        within(mean_diag.mean(), alpha.power_sum(1), mean_diag.std() / math.sqrt(w.shape[0]))
        off = w[:, 0, 1]
        within(off.var(), alpha.power_sum(2), off.var() * math.sqrt(2 / w.shape[0]) * 1.5)

    def test_triple_matches_direct(self):
        alpha = as_spectrum([1.0] * 6 + [0.3])
        gen = SeededStream(11).generator()
        fast = triple_inner_products(gen, alpha, 400_000)
        x = gen.standard_normal((3, 400_000, alpha.d)) * np.sqrt(alpha.values)
        direct = np.stack([np.sum(x[0] * x[1], 1), np.sum(x[0] * x[2], 1), np.sum(x[1] * x[2], 1)])
        for stat in (lambda v: np.mean(v[0] * v[1] * v[2]), lambda v: np.mean((v[0] >= 0.5) & (v[1] >= 0.5) & (v[2] >= 0.5))):
            a, b = stat(fast), stat(direct)
            se = math.sqrt(2) * max(np.std(fast[0] * fast[1] * fast[2]), 0.5) / math.sqrt(400_000)
            within(a, b, se, 4)

    def test_gram_batch_zero_diagonal(self):
        w = sample_gram_batch(SeededStream(12).generator(), 4, as_spectrum([1, 1, 1, 1, 0.5]), 10)
        assert np.all(w[:, np.arange(4), np.arange(4)] == 0)


class TestGOE:
    def test_size_one(self):
        m = goe_ensemble(1, SeededStream(0))
        np.testing.assert_array_equal(m.entries, [[0.0]])

    def test_symmetric(self):
        s = SeededStream(13)
        for i in range(20):
            m = goe_ensemble(5, s.child(i)).entries
            assert m[0, 1] == m[1, 0]

    def test_unit_variance(self):
        s = SeededStream(14)
        m = np.array([goe_ensemble(2, s.child(i)).entries[0, 1] for i in range(100_000)])
        within(m.var(), 1.0, math.sqrt(2 / m.size))


class TestGramFile:
    def test_round_trip(self, tmp_path):
        g = goe_ensemble(4, SeededStream(15))
        write_gram(g, tmp_path / "m.txt")
        back = read_gram(tmp_path / "m.txt")
        assert back.kind == "goe"
        np.testing.assert_array_equal(back.entries, g.entries)

    def test_bad_kind(self):
        with pytest.raises(InvalidParameterError):
            GramSample(np.zeros((2, 2)), "other")
