"""Model primitives for the structural credit model with noisy asset information.

Contents:
- ModelParams: scalar inputs (barrier, rate, volatility, dividend schedule,
  observation coefficients, initial law).
- DividendLaw: Beta law of the dividend fraction delta.
- Dividend density phi(y, v), sampler, observation drift a(v), initial density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np
from scipy import special, stats


class ModelError(ValueError):
    """Invalid model input."""


@dataclass(frozen=True, slots=True)
class ModelParams:
    K: float = 20.0
    r: float = 0.02
    sigma: float = 0.2
    kappa: int = 1
    N: float = 200.0
    div_spacing: float = 1.0
    div_mean: float = 0.02
    div_sd: float = 0.017
    c1: float = 4.0
    c2: float = 0.0
    pi0_mu: float = math.log(15.0)
    pi0_sigma: float = 0.2

    def __post_init__(self) -> None:
        for f in fields(self):
            val = getattr(self, f.name)
            if not np.isfinite(val):
                raise ModelError(f"{f.name} must be finite, got {val}")
        if self.K <= 0:
            raise ModelError(f"K must be positive, got {self.K}")
        if self.N <= self.K:
            raise ModelError(f"N must exceed K, got N={self.N}, K={self.K}")
        if self.sigma <= 0:
            raise ModelError(f"sigma must be positive, got {self.sigma}")
        if self.r < 0:
            raise ModelError(f"r must be nonnegative, got {self.r}")
        if self.div_spacing <= 0:
            raise ModelError(f"div_spacing must be positive, got {self.div_spacing}")
        if self.kappa not in (0, 1):
            raise ModelError(f"kappa must be 0 or 1, got {self.kappa}")
        if not 0.0 < self.div_mean < 1.0:
            raise ModelError(f"div_mean must lie in (0,1), got {self.div_mean}")
        if self.div_sd <= 0 or self.div_sd**2 >= self.div_mean * (1 - self.div_mean):
            raise ModelError("infeasible moments: div_sd^2 must be below div_mean*(1-div_mean)")
        if self.c1 < 0 or self.c2 < 0:
            raise ModelError("observation coefficients c1, c2 must be nonnegative")
        if self.pi0_sigma <= 0:
            raise ModelError(f"pi0_sigma must be positive, got {self.pi0_sigma}")

    def with_(self, **kw) -> "ModelParams":
        return replace(self, **kw)

    @property
    def smoothing_width(self) -> float:
        return self.sigma / 10.0

    def dividend_dates(self, t0: float, t1: float) -> np.ndarray:
        """Dividend dates t_n = n * div_spacing (n >= 1) with t0 < t_n <= t1."""
        n0 = math.floor(t0 / self.div_spacing + 1e-9) + 1
        n1 = math.floor(t1 / self.div_spacing + 1e-9)
        return self.div_spacing * np.arange(max(n0, 1), n1 + 1, dtype=float)


# Table 1 setting with the three observation presets used in the experiments.
PRESETS = {
    "table1": dict(c1=4.0, c2=0.0),
    "dividends_only": dict(c1=0.0, c2=0.0),
    "near_default_news": dict(c1=4.0, c2=25.0),
}


def preset_params(name: str, **overrides) -> ModelParams:
    try:
        base = PRESETS[name]
    except KeyError:
        raise ModelError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return ModelParams(**{**base, **overrides})


# ---------------------------------------------------------------------------
# Dividend law
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class DividendLaw:
    """Beta(alpha, beta) law of the paid-out surplus fraction."""

    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if not (self.alpha > 1.0 and self.beta > 1.0):
            raise ModelError(
                f"unbounded density: Beta({self.alpha}, {self.beta}) needs alpha > 1 and beta > 1"
            )

    @property
    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)

    @property
    def log_norm(self) -> float:
        return float(special.betaln(self.alpha, self.beta))

    def pdf(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        out = np.zeros_like(z)
        inside = (z > 0.0) & (z < 1.0)
        zi = z[inside]
        out[inside] = np.exp(
            (self.alpha - 1.0) * np.log(zi) + (self.beta - 1.0) * np.log1p(-zi) - self.log_norm
        )
        return out

    def pdf_max(self) -> float:
        mode = (self.alpha - 1.0) / (self.alpha + self.beta - 2.0)
        return float(self.pdf(mode))


# Slack for moment pairs that are rounded versions of a boundary case, e.g. the
# uniform law written as sd = 0.2886751.
_SHAPE_TOL = 1e-5


def beta_from_moments(mean: float, sd: float) -> DividendLaw:
    """Beta law with the given mean and standard deviation."""
    if not 0.0 < mean < 1.0:
        raise ModelError(f"infeasible moments: mean must lie in (0,1), got {mean}")
    if sd <= 0.0 or sd * sd >= mean * (1.0 - mean):
        raise ModelError(f"infeasible moments: sd^2 must be in (0, mean(1-mean)), got sd={sd}")
    total = mean * (1.0 - mean) / (sd * sd) - 1.0
    alpha, beta = mean * total, (1.0 - mean) * total
    if alpha <= 1.0 + _SHAPE_TOL or beta <= 1.0 + _SHAPE_TOL:
        raise ModelError(f"unbounded density: moments give alpha={alpha:.6g}, beta={beta:.6g}")
    return DividendLaw(alpha, beta)


def law_from_params(params: ModelParams) -> DividendLaw:
    return beta_from_moments(params.div_mean, params.div_sd)


def dividend_density(y, v, params: ModelParams, law: DividendLaw) -> np.ndarray:
    """phi(y, v) = phi_delta(y / (v - K)) / (v - K) for v > K, else 0."""
    y, v = np.broadcast_arrays(np.asarray(y, dtype=float), np.asarray(v, dtype=float))
    surplus = v - params.K
    out = np.zeros(y.shape)
    ok = (surplus > 0.0) & (y > 0.0) & (y < surplus)
    out[ok] = law.pdf(y[ok] / surplus[ok]) / surplus[ok]
    return out


def sample_dividend(v, law: DividendLaw, rng: np.random.Generator, params: ModelParams):
    """Draw d = delta * (v - K), delta ~ Beta."""
    surplus = np.asarray(v, dtype=float) - params.K
    if np.any(surplus <= 0.0):
        raise ModelError("no dividend payable: asset value at or below the barrier")
    d = rng.beta(law.alpha, law.beta, size=surplus.shape) * surplus
    return float(d) if d.ndim == 0 else d


# ---------------------------------------------------------------------------
# Reference dividend density used under the reference measure
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class ReferenceDensity:
    """Exponential reference density phi*(y) = rate * exp(-rate y)."""

    rate: float

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        return np.where(y >= 0.0, self.rate * np.exp(-self.rate * y), 0.0)

    def sample(self, rng: np.random.Generator, size=None):
        return rng.exponential(1.0 / self.rate, size=size)


def default_reference(params: ModelParams) -> ReferenceDensity:
    # median of V0 - K is exp(pi0_mu)
    return ReferenceDensity(1.0 / (params.div_mean * math.exp(params.pi0_mu)))


# ---------------------------------------------------------------------------
# Observation drift
# ---------------------------------------------------------------------------

def smooth_positive_part(z, w: float) -> np.ndarray:
    """C^1 quadratic smoothing of max(z, 0) on [-w, w]."""
    z = np.asarray(z, dtype=float)
    return np.where(z <= -w, 0.0, np.where(z >= w, z, (z + w) ** 2 / (4.0 * w)))


def observation_drift(v, params: ModelParams) -> np.ndarray:
    """Drift a(v) of the two observation channels, shifted so that a(K) = 0.

    Returns an array of shape (2,) + shape(v).
    """
    v = np.asarray(v, dtype=float)
    lv = np.log(np.maximum(v, params.K)) - math.log(params.K)
    w = params.smoothing_width
    a1 = params.c1 * lv
    a2 = params.c2 * (smooth_positive_part(params.sigma - lv, w)
                      - smooth_positive_part(params.sigma, w))
    return np.stack([a1, a2])


# ---------------------------------------------------------------------------
# Initial law
# ---------------------------------------------------------------------------

def _pi0_dist(params: ModelParams):
    return stats.lognorm(s=params.pi0_sigma, scale=math.exp(params.pi0_mu))


def initial_density(x, params: ModelParams) -> np.ndarray:
    """Shifted lognormal density of V0 truncated to [K, N] and renormalized."""
    x = np.asarray(x, dtype=float)
    dist = _pi0_dist(params)
    mass = dist.cdf(params.N - params.K)
    inside = (x > params.K) & (x < params.N)
    out = np.zeros(x.shape)
    out[inside] = dist.pdf(x[inside] - params.K) / mass
    return out


def sample_initial(params: ModelParams, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw V0 from the truncated initial law by inversion."""
    dist = _pi0_dist(params)
    hi = dist.cdf(params.N - params.K)
    u = rng.uniform(0.0, hi, size=size)
    return params.K + dist.ppf(u)
