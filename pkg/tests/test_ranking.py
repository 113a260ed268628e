import math

import numpy as np
import pytest

from amenet.model import PredictionSet
from amenet.ranking import (
    RHO_CLAMP,
    SIGMA_FLOOR_M,
    BiGauss,
    bigauss_density,
    fit_bigauss,
    rank,
)


def _pred(samples, wid="s:a:0"):
    samples = np.asarray(samples, dtype=np.float64)
    return PredictionSet(wid, "a", samples, np.zeros((samples.shape[0], 2)))


class TestFitBigauss:
    def test_degenerate_cloud_is_floored(self):
        g = fit_bigauss([(1.0, 2.0)] * 5)
        assert (g.mu_x, g.mu_y) == (1.0, 2.0)
        assert g.sigma_x == SIGMA_FLOOR_M and g.sigma_y == SIGMA_FLOOR_M
        assert g.rho == 0.0

    def test_population_moments(self):
        g = fit_bigauss([(0, 0), (2, 0), (0, 2), (2, 2)])
        assert (g.mu_x, g.mu_y) == (1.0, 1.0)
        assert g.sigma_x == 1.0 and g.sigma_y == 1.0  # divide-by-N moments
        assert g.rho == 0.0

    def test_perfect_correlation_clamped(self):
        g = fit_bigauss([(0, 0), (1, 1), (2, 2)])
        assert g.rho == RHO_CLAMP

    def test_needs_two_points(self):
        with pytest.raises(ValueError):
            fit_bigauss([(0, 0)])

    def test_invariant_enforced(self):
        with pytest.raises(ValueError):
            BiGauss(0, 0, 0.0, 1.0, 0.0)
        with pytest.raises(ValueError):
            BiGauss(0, 0, 1.0, 1.0, 0.9999)


class TestDensity:
    def test_mode_value(self):
        g = BiGauss(0.0, 0.0, 1.0, 1.0, 0.0)
        assert bigauss_density((0, 0), g) == pytest.approx(1.0 / (2 * math.pi), rel=1e-12)

    def test_independence_factorizes(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            g = BiGauss(*rng.normal(0, 2, 2), *rng.uniform(0.2, 3.0, 2), 0.0)
            p = rng.normal(0, 3, 2)
            joint = bigauss_density(p, g)
            fx = math.exp(-0.5 * ((p[0] - g.mu_x) / g.sigma_x) ** 2) / (
                g.sigma_x * math.sqrt(2 * math.pi)
            )
            fy = math.exp(-0.5 * ((p[1] - g.mu_y) / g.sigma_y) ** 2) / (
                g.sigma_y * math.sqrt(2 * math.pi)
            )
            assert joint == pytest.approx(fx * fy, rel=1e-12)

    def test_integrates_to_one(self):
        rng = np.random.default_rng(4)
        for _ in range(5):
            g = BiGauss(
                float(rng.normal(0, 1)),
                float(rng.normal(0, 1)),
                float(rng.uniform(0.3, 2.0)),
                float(rng.uniform(0.3, 2.0)),
                float(rng.uniform(-0.8, 0.8)),
            )
            span = 8.0 * max(g.sigma_x, g.sigma_y)
            n = 400
            xs = np.linspace(g.mu_x - span, g.mu_x + span, n)
            ys = np.linspace(g.mu_y - span, g.mu_y + span, n)
            dx = xs[1] - xs[0]
            dy = ys[1] - ys[0]
            total = 0.0
            for x in xs:
                for y in ys:
                    total += bigauss_density((x, y), g)
            assert total * dx * dy == pytest.approx(1.0, abs=1e-3)

    def test_finite_on_floored_fit(self):
        g = fit_bigauss([(3.0, 4.0)] * 3)
        d = bigauss_density((3.0, 4.0), g)
        assert math.isfinite(d) and d > 0.0


class TestRank:
    def test_identical_samples_tie_to_first(self):
        pred = _pred(np.tile(np.arange(24.0).reshape(12, 2), (5, 1, 1)))
        rr = rank(pred)
        assert rr.most_likely == 0
        assert np.allclose(rr.scores, rr.scores[0])

    def test_outlier_never_selected(self):
        rng = np.random.default_rng(2)
        base = np.cumsum(rng.normal(0.3, 0.05, (12, 2)), axis=0)
        samples = [base + rng.normal(0, 0.05, (12, 2)) for _ in range(9)]
        samples.append(base + 10.0)
        pred = _pred(np.stack(samples))
        rr = rank(pred)
        assert rr.most_likely < 9
        assert rr.scores[9] < rr.scores[rr.most_likely]

    def test_permutation_consistency(self):
        rng = np.random.default_rng(3)
        samples = rng.normal(0, 1, (6, 12, 2)) + np.arange(6)[:, None, None] * 0.2
        pred = _pred(samples)
        rr = rank(pred)
        perm = rng.permutation(6)
        rr_p = rank(_pred(samples[perm]))
        np.testing.assert_allclose(rr_p.scores, rr.scores[perm], rtol=1e-12)
        assert perm[rr_p.most_likely] == rr.most_likely

    def test_translation_keeps_order(self):
        rng = np.random.default_rng(7)
        samples = rng.normal(0, 1, (8, 12, 2))
        r0 = rank(_pred(samples))
        r1 = rank(_pred(samples + np.array([123.0, -77.0])))
        np.testing.assert_allclose(r1.scores, r0.scores, rtol=1e-9)
        assert r0.most_likely == r1.most_likely

    def test_single_sample_flagged(self):
        pred = _pred(np.zeros((1, 12, 2)))
        rr = rank(pred)
        assert rr.degenerate and rr.most_likely == 0
        assert np.isnan(rr.scores[0])

    def test_log_mode_can_disagree(self):
        # log scoring exists behind a flag; both modes must at least run
        rng = np.random.default_rng(11)
        samples = rng.normal(0, 0.5, (10, 12, 2))
        plain = rank(_pred(samples), log_scores=False)
        logged = rank(_pred(samples), log_scores=True)
        assert np.all(np.isfinite(plain.scores)) and np.all(np.isfinite(logged.scores))

    def test_scores_finite_for_degenerate_cloud(self):
        samples = np.zeros((4, 12, 2))
        rr = rank(_pred(samples))
        assert np.all(np.isfinite(rr.scores))
