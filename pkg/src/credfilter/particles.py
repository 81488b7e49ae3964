"""Bootstrap particle filter for the asset value stopped at K and N.

Used as a brute-force oracle for the Galerkin filter.  Particles absorbed at
K or N keep their position; only interior particles are resampled, so the
unnormalized mass absorbed at K can only grow.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .model import (
    DividendLaw,
    ModelParams,
    ReferenceDensity,
    default_reference,
    dividend_density,
    observation_drift,
    sample_initial,
)


class FilterCollapse(ArithmeticError):
    pass


@dataclass(eq=False)
class ParticleCloud:
    positions: np.ndarray
    logw: np.ndarray  # unnormalized log weights, relative to log_scale
    t: float = 0.0
    log_scale: float = 0.0

    @property
    def n(self) -> int:
        return len(self.positions)

    @property
    def weights(self) -> np.ndarray:
        top = np.max(self.logw)
        if not np.isfinite(top):
            raise FilterCollapse("filter collapse: all particle weights vanished")
        w = np.exp(self.logw - top)
        s = w.sum()
        if not np.isfinite(s) or s <= 0:
            raise FilterCollapse("filter collapse: all particle weights vanished")
        return w / s

    def masks(self, params: ModelParams):
        atK = self.positions <= params.K
        atN = self.positions >= params.N
        return atK, atN, ~(atK | atN)

    def absorbed_mass_K(self, params: ModelParams) -> float:
        """Unnormalized weight absorbed at K."""
        atK, _, _ = self.masks(params)
        if not atK.any():
            return 0.0
        return float(np.exp(self.log_scale) * np.exp(self.logw[atK]).sum())


def init_cloud(n: int, params: ModelParams, rng: np.random.Generator, t: float = 0.0) -> ParticleCloud:
    if n < 1000:
        raise ValueError(f"particle filter needs n >= 1000, got {n}")
    return ParticleCloud(sample_initial(params, rng, n), np.zeros(n), t)


def _renormalize(cloud: ParticleCloud) -> None:
    top = np.max(cloud.logw)
    if not np.isfinite(top):
        raise FilterCollapse("filter collapse: all particle weights vanished")
    cloud.logw -= top
    cloud.log_scale += top


def step_cloud(cloud: ParticleCloud, dz: np.ndarray, dt: float, params: ModelParams,
               rng: np.random.Generator) -> None:
    """Move interior particles one GBM step with bridge absorption; reweight by the likelihood."""
    x = cloud.positions
    _, _, inner = cloud.masks(params)
    a = observation_drift(x, params)  # a(K) = 0 for absorbed-at-K particles
    cloud.logw += dz @ a - 0.5 * dt * np.sum(a * a, axis=0)
    n_in = int(inner.sum())
    eta = rng.standard_normal(n_in)
    u = rng.uniform(size=(2, n_in))
    x0 = x[inner]
    s2dt = params.sigma**2 * dt
    x1 = x0 * np.exp((params.r - 0.5 * params.sigma**2) * dt + math.sqrt(s2dt) * eta)
    with np.errstate(invalid="ignore", over="ignore"):
        pK = np.exp(-2.0 * np.log(x0 / params.K) * np.log(np.maximum(x1, params.K) / params.K) / s2dt)
        pN = np.exp(-2.0 * np.log(params.N / x0) * np.log(params.N / np.minimum(x1, params.N)) / s2dt)
    hitK = (x1 <= params.K) | (u[0] < pK)
    hitN = ~hitK & ((x1 >= params.N) | (u[1] < pN))
    x1 = np.where(hitK, params.K, np.where(hitN, params.N, x1))
    x[inner] = x1
    cloud.t += dt
    _renormalize(cloud)


def dividend_reweight(cloud: ParticleCloud, d: float, params: ModelParams, law: DividendLaw,
                      ref: ReferenceDensity) -> None:
    x = cloud.positions
    atK, atN, inner = cloud.masks(params)
    with np.errstate(divide="ignore"):
        lr = np.log(dividend_density(d, x[inner], params, law)) - math.log(float(ref.pdf(d)))
        cloud.logw[inner] += lr
        cloud.logw[atN] += math.log(float(dividend_density(d, params.N, params, law))
                                    + 1e-300) - math.log(float(ref.pdf(d)))
    # surviving interior particles drop by the paid dividend
    x[inner] = np.maximum(x[inner] - params.kappa * d, params.K)
    dead = inner & (x <= params.K)
    cloud.logw[dead] = -np.inf
    _renormalize(cloud)


def systematic_resample(positions: np.ndarray, weights: np.ndarray, u: float) -> np.ndarray:
    """Systematic resampling on position-sorted particles (order invariant)."""
    order = np.argsort(positions, kind="stable")
    cw = np.cumsum(weights[order])
    cw /= cw[-1]
    n = len(positions)
    idx = np.searchsorted(cw, (u + np.arange(n)) / n, side="right")
    return positions[order][np.minimum(idx, n - 1)]


def effective_sample_size(w: np.ndarray) -> float:
    s = w.sum()
    return float(s * s / np.sum(w * w)) if s > 0 else 0.0


def maybe_resample(cloud: ParticleCloud, params: ModelParams, u: float) -> bool:
    _, _, inner = cloud.masks(params)
    if not inner.any():
        return False
    w = np.exp(cloud.logw[inner])
    n_in = int(inner.sum())
    if effective_sample_size(w) >= 0.5 * n_in:
        return False
    tot = w.sum()
    if not np.isfinite(tot) or tot <= 0:
        raise FilterCollapse("filter collapse: interior weights vanished")
    cloud.positions[inner] = systematic_resample(cloud.positions[inner], w, u)
    cloud.logw[inner] = math.log(tot / n_in)
    return True


# ---------------------------------------------------------------------------
# Estimates
# ---------------------------------------------------------------------------

def survival_probability(cloud: ParticleCloud, params: ModelParams) -> float:
    w = cloud.weights
    atK, _, _ = cloud.masks(params)
    return float(1.0 - w[atK].sum())


def _kde_parts(cloud: ParticleCloud, params: ModelParams):
    w = cloud.weights
    atK, _, inner = cloud.masks(params)
    surv = 1.0 - w[atK].sum()
    if surv <= 0:
        raise FilterCollapse("filter collapse: no surviving weight")
    x, wi = cloud.positions[inner], w[inner] / surv
    p = wi / wi.sum()
    mean = np.dot(p, x)
    sd = math.sqrt(max(np.dot(p, (x - mean) ** 2), 1e-300))
    order = np.argsort(x)
    cdf = np.cumsum(p[order])
    q25, q75 = np.interp([0.25, 0.75], cdf, x[order])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    bw = 0.9 * spread * effective_sample_size(wi) ** (-0.2)
    return x, wi, bw


def kde_density(cloud: ParticleCloud, grid: np.ndarray, params: ModelParams,
                bandwidth: float | None = None) -> np.ndarray:
    """Weighted Gaussian kernel estimate of pi(t) with odd reflection at K.

    Normalized by the surviving weight, so it integrates to the interior share.
    """
    x, wi, bw = _kde_parts(cloud, params)
    bw = bw if bandwidth is None else bandwidth
    grid = np.asarray(grid, dtype=float)
    out = np.zeros(grid.shape)
    c = 1.0 / (bw * math.sqrt(2 * math.pi))
    for s in range(0, len(x), 4096):
        xs, ws = x[s:s + 4096], wi[s:s + 4096]
        z1 = (grid[:, None] - xs[None, :]) / bw
        z2 = (grid[:, None] - (2 * params.K - xs[None, :])) / bw
        out += (np.exp(-0.5 * z1 * z1) - np.exp(-0.5 * z2 * z2)) @ ws
    return c * out


def kde_intensity(cloud: ParticleCloud, params: ModelParams, bandwidth: float | None = None) -> float:
    """1/2 sigma^2 K^2 times the slope at K of the reflected kernel estimate."""
    x, wi, bw = _kde_parts(cloud, params)
    bw = bw if bandwidth is None else bandwidth
    z = (x - params.K) / bw
    slope = np.dot(wi, 2.0 * z * np.exp(-0.5 * z * z)) / (bw**2 * math.sqrt(2 * math.pi))
    return float(0.5 * params.sigma**2 * params.K**2 * max(slope, 0.0))


@dataclass(eq=False)
class ParticleTrajectory:
    times: np.ndarray
    survival_prob: np.ndarray
    intensity: np.ndarray
    grid: np.ndarray
    density: np.ndarray  # one row per recorded time
    absorbed_K: np.ndarray
    cloud: ParticleCloud

    def to_csv(self, path, header: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if header:
                for line in header.splitlines():
                    fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["t", "x", "density", "survival_prob", "intensity"])
            for t, row, sp, lam in zip(self.times, self.density, self.survival_prob, self.intensity):
                for x, f in zip(self.grid, row):
                    w.writerow([f"{t:.17g}", f"{x:.17g}", f"{f:.17g}", f"{sp:.17g}", f"{lam:.17g}"])


def run_particle_filter(z_increments: np.ndarray, dividends, n: int, params: ModelParams,
                        law: DividendLaw, rng: np.random.Generator, dt: float,
                        record_every: int | None = None, grid: np.ndarray | None = None,
                        ref: ReferenceDensity | None = None, cloud: ParticleCloud | None = None
                        ) -> ParticleTrajectory:
    """Run the particle filter along observation increments of shape (n_steps, 2).

    dividends: iterable of (t_n, d_n); each t_n must fall on the step grid.
    Records at every `record_every` steps and at the final time.
    """
    dz = np.asarray(z_increments, dtype=float)
    n_steps = dz.shape[0]
    ref = default_reference(params) if ref is None else ref
    grid = np.linspace(params.K, params.N, 2001) if grid is None else np.asarray(grid)
    record_every = n_steps if record_every is None else record_every
    cloud = init_cloud(n, params, rng) if cloud is None else cloud
    t0 = cloud.t
    div_at = {}
    for tn, d in dividends:
        k = int(round((tn - t0) / dt))
        if abs(t0 + k * dt - tn) > 1e-9 * max(1.0, tn) or not 1 <= k <= n_steps:
            raise ValueError(f"dividend date {tn} is not on the observation grid")
        div_at[k] = float(d)
    rec = {"t": [], "sp": [], "lam": [], "dens": [], "nuK": []}

    def record():
        rec["t"].append(cloud.t)
        rec["sp"].append(survival_probability(cloud, params))
        rec["lam"].append(kde_intensity(cloud, params))
        rec["dens"].append(kde_density(cloud, grid, params))
        rec["nuK"].append(cloud.absorbed_mass_K(params))

    for k in range(1, n_steps + 1):
        step_cloud(cloud, dz[k - 1], dt, params, rng)
        if k in div_at:
            dividend_reweight(cloud, div_at[k], params, law, ref)
        maybe_resample(cloud, params, rng.uniform())
        if k % record_every == 0 or k == n_steps:
            record()
    return ParticleTrajectory(np.array(rec["t"]), np.array(rec["sp"]), np.array(rec["lam"]),
                              grid, np.array(rec["dens"]), np.array(rec["nuK"]), cloud)
