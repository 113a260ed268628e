"""Most-likely selection among sampled futures.

At each prediction step the N sampled positions are fitted with a
bivariate Gaussian (population moments); a sample's score is the sum over
steps of the fitted density at its own position, and the sample with the
highest score is the most-likely prediction.  A log-density scoring mode
exists for comparison; the two can disagree, so the raw-density sum stays
the default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import PredictionSet

SIGMA_FLOOR_M = 1e-6
RHO_CLAMP = 0.999


@dataclass(frozen=True)
class BiGauss:
    mu_x: float
    mu_y: float
    sigma_x: float
    sigma_y: float
    rho: float

    def __post_init__(self):
        if self.sigma_x < SIGMA_FLOOR_M or self.sigma_y < SIGMA_FLOOR_M:
            raise ValueError("sigmas must be floored to at least SIGMA_FLOOR_M")
        if abs(self.rho) > RHO_CLAMP:
            raise ValueError(f"|rho| must be <= {RHO_CLAMP}")


def fit_bigauss(points, sigma_floor: float = SIGMA_FLOOR_M, rho_clamp: float = RHO_CLAMP) -> BiGauss:
    """Population-moment fit (divide by N) with degeneracy guards: sigmas
    floored, correlation clamped."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise ValueError(f"need at least two (x, y) points, got shape {pts.shape}")
    mu = pts.mean(axis=0)
    centered = pts - mu
    var = (centered**2).mean(axis=0)
    cov = (centered[:, 0] * centered[:, 1]).mean()
    sigma_x = max(math.sqrt(var[0]), sigma_floor)
    sigma_y = max(math.sqrt(var[1]), sigma_floor)
    denom = sigma_x * sigma_y
    rho = 0.0 if denom == 0.0 else cov / denom
    # a floored sigma no longer matches the covariance; keep rho consistent
    if var[0] == 0.0 or var[1] == 0.0:
        rho = 0.0
    rho = max(-rho_clamp, min(rho_clamp, rho))
    return BiGauss(float(mu[0]), float(mu[1]), sigma_x, sigma_y, float(rho))


def bigauss_density(point, g: BiGauss) -> float:
    """Bivariate normal density (1/m^2) at `point`."""
    dx = (float(point[0]) - g.mu_x) / g.sigma_x
    dy = (float(point[1]) - g.mu_y) / g.sigma_y
    one_minus_r2 = 1.0 - g.rho * g.rho
    z = dx * dx + dy * dy - 2.0 * g.rho * dx * dy
    norm = 2.0 * math.pi * g.sigma_x * g.sigma_y * math.sqrt(one_minus_r2)
    return math.exp(-z / (2.0 * one_minus_r2)) / norm


@dataclass(frozen=True)
class RankResult:
    scores: np.ndarray  # (N,) per-sample score; NaN when degenerate
    most_likely: int
    degenerate: bool  # True when N < 2 made fitting impossible


def rank(pred: PredictionSet, log_scores: bool = False) -> RankResult:
    """Score every sample against the per-step fits and pick the argmax
    (ties broken by the lowest sample index).

    With a single sample there is nothing to fit: the sample is returned
    as most-likely with an undefined score and the degenerate flag set.
    """
    samples = pred.samples
    n, t_pred, _ = samples.shape
    if n < 2:
        return RankResult(scores=np.full(n, np.nan), most_likely=0, degenerate=True)
    fits = [fit_bigauss(samples[:, t, :]) for t in range(t_pred)]
    scores = np.zeros(n)
    for i in range(n):
        total = 0.0
        for t, g in enumerate(fits):
            d = bigauss_density(samples[i, t], g)
            total += math.log(d) if log_scores else d
        scores[i] = total
    best = int(np.argmax(scores))  # argmax returns the first maximum
    return RankResult(scores=scores, most_likely=best, degenerate=False)
