"""Pricing of debt securities and options from the filter, and discrete hedging.

Debt securities are priced by averaging their full-information value against
the current filter.  Options on traded prices are priced by Monte Carlo of
the unnormalized filter under the reference measure.  Hedges follow the
discrete risk-minimization scheme: at every rebalancing date the discounted
price increment of the claim is regressed on the discounted gains increments
of the hedge instruments, with hedge ratios linear in a set of filter
features.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .fullinfo import STOCK, FullInfoGrid
from .galerkin import (
    FilterError,
    FilterState,
    GalerkinMatrices,
    default_intensity,
    filter_expectation,
    normalized_density,
)
from .model import DividendLaw, ModelParams, ReferenceDensity, dividend_density, observation_drift
from .simulator import run_filter_batch, run_guided_batch, run_reference_batch, simulate_truth_batch


def _fmt(v) -> str:
    return f"{float(v):.17g}"


# ---------------------------------------------------------------------------
# Debt securities
# ---------------------------------------------------------------------------

def _values_at_nodes(grid: FullInfoGrid, t: float, mats: GalerkinMatrices, pre: bool = False):
    h = grid.at(t, pre)
    return np.interp(mats.basis.nodes, grid.v_nodes, h), float(h[-1])


def price_debt_claim(state: FilterState, grid: FullInfoGrid, mats: GalerkinMatrices,
                     pre: bool = False):
    """Pre-default price pi_t h(t, .) of a claim with full-information value h.

    The point mass at N contributes h(t, N) pi_N.  pre=True uses the value
    just before a dividend paid at state.t.
    """
    if abs(grid.N - mats.basis.N) > 1e-9 * grid.N or abs(grid.K - mats.basis.K) > 1e-9 * grid.K:
        raise ValueError("full-information grid and basis cover different intervals")
    try:
        vals, hN = _values_at_nodes(grid, float(state.t), mats, pre)
    except ValueError as exc:
        raise ValueError(f"cannot price {grid.claim.label} at t={state.t}: {exc}") from exc
    return filter_expectation(state, mats, vals, hN)


# ---------------------------------------------------------------------------
# Options on traded prices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OptionSpec:
    """Payoff g(Pi^1_T, ..., Pi^l_T) at T on survival, g(0, ..., 0) on default.

    payoff maps an array of shape (l, P) to P payoffs.
    """

    payoff: Callable
    maturity: float
    underlying: tuple
    g_at_zero: float | None = None
    name: str = "option"

    def __post_init__(self) -> None:
        if not (math.isfinite(self.maturity) and self.maturity > 0):
            raise ValueError(f"option maturity must be positive, got {self.maturity}")
        if len(self.underlying) == 0:
            raise ValueError("option needs at least one underlying")
        object.__setattr__(self, "underlying", tuple(self.underlying))
        g0 = float(np.asarray(self.payoff(np.zeros((len(self.underlying), 1))))[0])
        if self.g_at_zero is None:
            object.__setattr__(self, "g_at_zero", g0)
        elif abs(self.g_at_zero - g0) > 1e-12 * max(1.0, abs(g0)):
            raise ValueError(f"g_at_zero={self.g_at_zero} differs from payoff(0)={g0}")

    @classmethod
    def call(cls, grid: FullInfoGrid, strike: float, maturity: float) -> "OptionSpec":
        return cls(lambda p: np.maximum(p[0] - strike, 0.0), maturity, (grid,),
                   name=f"call_{grid.claim.label}_{strike:g}")

    @classmethod
    def put(cls, grid: FullInfoGrid, strike: float, maturity: float) -> "OptionSpec":
        return cls(lambda p: np.maximum(strike - p[0], 0.0), maturity, (grid,),
                   name=f"put_{grid.claim.label}_{strike:g}")

    def evaluate(self, prices: np.ndarray, alive: np.ndarray) -> np.ndarray:
        prices = np.atleast_2d(prices)
        return np.where(alive, np.asarray(self.payoff(prices), dtype=float), self.g_at_zero)


@dataclass
class MCConfig:
    """Monte Carlo settings for the reference-measure option pricer."""

    law: DividendLaw
    n_paths: int = 10_000
    dt: float = 1e-2
    scheme: str = "milstein"
    chunk: int = 5_000
    ref: ReferenceDensity | None = None
    measure: str = "guided"  # or "reference"


@dataclass(frozen=True)
class MCPrice:
    price: float
    std_error: float
    nuN_bound: float = 0.0  # mean nuN(T) / (u(t), 1), the neglected mass at N

    def __iter__(self):
        return iter((self.price, self.std_error))


def price_option_mc(state: FilterState, option: OptionSpec, cfg: MCConfig, mats: GalerkinMatrices,
                    basis=None, grids: Sequence[FullInfoGrid] | None = None,
                    rng: np.random.Generator | None = None) -> MCPrice:
    """Price of an option on traded prices given the filter at state.t.

    Per reference-measure path the estimator is
    e^{-r(T-t)} [ g(Pi_T) W + g(0) (1 - W) ],  W = (u(T), 1) / (u(t), 1),
    whose mean under Q* is the survival part of the price plus g(0) times
    the filtered default probability.  Underlying prices at T are
    (u(T), h_i(T)) / (u(T), 1); the mass nuN at N is neglected and its
    size is returned as nuN_bound.

    cfg.measure="reference" samples Q* directly.  Its weights W are heavy
    tailed when the observations are informative, so the default
    "guided" samples paths from run_guided_batch and multiplies W by the
    likelihood ratio dQ*/dQ-tilde; the expectation is the same.
    """
    if basis is not None and basis is not mats.basis:
        raise ValueError("basis does not match the Galerkin matrices")
    if rng is None:
        raise ValueError("price_option_mc needs a random generator")
    if cfg.n_paths < 1000:
        raise ValueError(f"n_paths must be at least 1000, got {cfg.n_paths}")
    if state.batched:
        raise ValueError("price_option_mc takes a single filter state")
    grids = tuple(option.underlying if grids is None else grids)
    t, T = float(state.t), float(option.maturity)
    if not T > t:
        raise ValueError(f"option maturity {T} is not after the current time {t}")
    m0 = float(mats.mass @ state.psi)
    if not (np.isfinite(m0) and m0 > 0.0):
        raise FilterError("zero initial mass: the filter state carries no density")
    loads = [np.asarray(_values_at_nodes(g, T, mats)[0]) for g in grids]
    loads = np.array([mats.E.T @ (mats.basis.weights * v) for v in loads])
    disc = math.exp(-mats.params.r * (T - t))
    total, total2, nuN_sum = 0.0, 0.0, 0.0
    done = 0
    for sub in rng.spawn(-(-cfg.n_paths // cfg.chunk)):
        P = min(cfg.chunk, cfg.n_paths - done)
        if cfg.measure == "reference":
            end = run_reference_batch(state, mats, cfg.law, T - t, cfg.dt, P, sub, ref=cfg.ref,
                                      scheme=cfg.scheme)
            lr = np.ones(P)
        elif cfg.measure == "guided":
            end, log_lr = run_guided_batch(state.replace(nuK=0.0), mats, cfg.law, T - t, cfg.dt,
                                           P, sub, ref=cfg.ref, scheme=cfg.scheme)
            lr = np.exp(log_lr)
        else:
            raise ValueError(f"unknown sampling measure {cfg.measure!r}")
        mass = mats.mass @ end.psi
        W = mass / m0 * lr
        safe = np.where(mass > 0, mass, 1.0)
        prices = (loads @ end.psi) / safe
        g = np.where(mass > 0, np.asarray(option.payoff(prices), dtype=float), 0.0)
        X = disc * (g * W + option.g_at_zero * (1.0 - W))
        total += float(X.sum())
        total2 += float((X * X).sum())
        nuN_sum += float(np.sum(end.nuN * lr)) / m0
        done += P
    mean = total / done
    var = max(total2 / done - mean * mean, 0.0)
    return MCPrice(mean, math.sqrt(var / max(done - 1, 1)), nuN_sum / done)


# ---------------------------------------------------------------------------
# Instantaneous quadratic variation
# ---------------------------------------------------------------------------

def _y_rule(span: float, panels: int = 48, order: int = 8):
    """Quadrature on (0, span) with geometrically graded panels."""
    edges = np.concatenate([[0.0], np.geomspace(1e-6 * span, span, panels)])
    g, gw = np.polynomial.legendre.leggauss(order)
    lo, hi = edges[:-1], edges[1:]
    half = 0.5 * (hi - lo)
    y = (0.5 * (hi + lo))[:, None] + half[:, None] * g[None, :]
    return y.ravel(), (half[:, None] * gw[None, :]).ravel()


def _jump_at_K(grid: FullInfoGrid, t: float) -> float:
    """Value received at default per unit of the claim."""
    return grid.claim.boundary(t) if grid.claim.kind != STOCK else 0.0


def instantaneous_quad_var(state: FilterState, instruments: Sequence[FullInfoGrid],
                           mats: GalerkinMatrices, params: ModelParams | None = None,
                           at_dividend: bool = False, law: DividendLaw | None = None) -> np.ndarray:
    """Density of <G^i, G^j> with respect to time (or to the dividend count).

    Off dividend dates: sum_k xi^Z_ik xi^Z_jk + lambda xi^Y_i xi^Y_j with
    xi^Z_i = pi(h_i a) - Pi_i pi(a) and xi^Y_i = h_i(t, K) - Pi_i.
    At a dividend date (state is the filter just before the payment):
    integral over y of xi^D_i(y) xi^D_j(y) pi(phi(y, .)) with
    xi^D_i(y) = pi(h_i(t, . - kappa y) phi(y, .)) / pi(phi(y, .)) - Pi_i(t-),
    plus y for the stock.  Values are undiscounted.
    """
    params = mats.params if params is None else params
    if state.batched:
        raise ValueError("instantaneous_quad_var takes a single filter state")
    t = float(state.t)
    x, w = mats.basis.nodes, mats.basis.weights
    pi, _, piN = normalized_density(state, mats)
    pv = mats.E @ pi
    ell = len(instruments)
    if not at_dividend:
        a = observation_drift(x, params)
        aN = mats.aN
        pa = a @ (w * pv) + piN * aN
        xiZ = np.empty((ell, a.shape[0]))
        xiY = np.empty(ell)
        for i, g in enumerate(instruments):
            h, hN = _values_at_nodes(g, t, mats)
            Pi = float(np.dot(w * pv, h) + piN * hN)
            xiZ[i] = a @ (w * pv * h) + piN * hN * aN - Pi * pa
            xiY[i] = _jump_at_K(g, t) - Pi
        lam = float(default_intensity(state, mats, params))
        return xiZ @ xiZ.T + lam * np.outer(xiY, xiY)
    if law is None:
        raise ValueError("the dividend law is needed at dividend dates")
    y, wy = _y_rule(params.N - params.K)
    pvc = np.maximum(pv, 0.0)
    phi = dividend_density(y[:, None], x[None, :], params, law)  # (ny, nq)
    phiN = dividend_density(y, params.N, params, law)
    rho = phi @ (w * pvc) + piN * phiN
    xiD = np.empty((ell, y.size))
    for i, g in enumerate(instruments):
        h_post = g.at(t, pre=False)
        src = x[None, :] - params.kappa * y[:, None]
        hs = np.interp(src, g.v_nodes, h_post)
        hsN = np.interp(params.N - params.kappa * y, g.v_nodes, h_post)
        num = (phi * hs) @ (w * pvc) + piN * phiN * hsN
        Pi_pre = float(price_debt_claim(state, g, mats, pre=True))
        safe = np.where(rho > 0, rho, 1.0)
        xi = np.where(rho > 0, num / safe, 0.0) - Pi_pre
        if g.claim.kind == STOCK:
            xi = xi + y
        xiD[i] = xi
    return (xiD * (wy * rho)) @ xiD.T


# ---------------------------------------------------------------------------
# Discrete risk-minimizing hedges
# ---------------------------------------------------------------------------

@dataclass
class HedgeConfig:
    """Simulation setup for hedge_discrete."""

    mats: GalerkinMatrices
    law: DividendLaw
    n_paths: int = 10_000
    dt: float = 1e-2
    scheme: str = "milstein"
    chunk: int = 5_000
    n_oos: int = 0
    stock_grid: FullInfoGrid | None = None
    ridge: float = 1e-8
    clip_threshold: float = 1e-3


@dataclass(eq=False)
class HedgeReport:
    """Discrete hedge on dates t_0 < ... < t_n.

    theta[j] and eta[j] are path averages over paths alive at t_j of the
    position held on (t_j, t_{j+1}]; the per-path values are in
    theta_paths (n, l, P) and eta_paths (n, P).  residual_risk[j] is the
    mean squared cost increment over (t_j, t_{j+1}].
    """

    dates: np.ndarray
    theta: np.ndarray
    eta: np.ndarray
    residual_risk: np.ndarray
    value_path_check: float
    theta_paths: np.ndarray
    eta_paths: np.ndarray
    cost: np.ndarray  # (n, P) cost increments
    price0: float
    instruments: tuple = ()
    oos_residual_risk: np.ndarray | None = None
    oos_cost: np.ndarray | None = None
    n_features: int = 0
    warnings: list = field(default_factory=list)
    gains: np.ndarray | None = None  # (l, n, P) discounted gains increments dG

    @property
    def total_residual_risk(self) -> float:
        return float(self.residual_risk.sum())

    def to_csv(self, path, header: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if header:
                for line in header.splitlines():
                    fh.write(f"# {line}\n")
            wr = csv.writer(fh)
            names = [f"theta_{lab}" for lab in self.instruments]
            cols = ["date", *names, "eta", "residual_risk"]
            if self.oos_residual_risk is not None:
                cols.append("oos_residual_risk")
            wr.writerow(cols)
            for j, t in enumerate(self.dates[:-1]):
                row = [_fmt(t), *[_fmt(v) for v in self.theta[j]], _fmt(self.eta[j]),
                       _fmt(self.residual_risk[j])]
                if self.oos_residual_risk is not None:
                    row.append(_fmt(self.oos_residual_risk[j]))
                wr.writerow(row)


@dataclass(eq=False)
class _Sample:
    """Filter records at the hedge dates for a set of simulated paths."""

    alive: np.ndarray  # (D, P)
    features: np.ndarray  # (D, F, P), unstandardized, without the constant
    prices: dict  # label -> (D, P) ex-dividend prices
    cash: dict  # label -> (D-1, P) discounted cash flows over (t_j, t_{j+1}]


def _date_indices(dates: np.ndarray, dt: float) -> np.ndarray:
    idx = dates / dt
    if np.any(np.abs(idx - np.round(idx)) > 1e-6):
        raise ValueError("hedge dates must lie on the simulation grid")
    return np.round(idx).astype(int)


def _simulate(grids: dict, cfg: HedgeConfig, dates: np.ndarray, n_paths: int,
              rng: np.random.Generator) -> _Sample:
    mats = cfg.mats
    params = mats.params
    idx = _date_indices(dates, cfg.dt)
    every = int(np.gcd.reduce(idx[idx > 0])) if np.any(idx > 0) else 1
    parts = []
    done = 0
    for sub in rng.spawn(-(-n_paths // cfg.chunk)):
        P = min(cfg.chunk, n_paths - done)
        truth = simulate_truth_batch(params, cfg.law, float(dates[-1]), cfg.dt, P, sub)
        fb = run_filter_batch(truth, mats, cfg.law, cfg.stock_grid, grids, record_every=every,
                              clip_threshold=cfg.clip_threshold, scheme=cfg.scheme)
        rec = np.searchsorted(np.round(fb.times / cfg.dt).astype(int), idx)
        feats = [fb.S[rec]] if cfg.stock_grid is not None else []
        feats += [fb.lam[rec], fb.mean[rec], fb.sd[rec]]
        prices = {k: np.nan_to_num(v[rec]) for k, v in fb.prices.items()}
        feats += [prices[k] for k, g in grids.items()
                  if not (cfg.stock_grid is not None and g is cfg.stock_grid)]
        cash = {}
        disc_t = np.exp(-params.r * truth.times)
        for k, g in grids.items():
            c = np.zeros((len(idx) - 1, P))
            for j in range(len(idx) - 1):
                lo, hi = idx[j], idx[j + 1]
                if g.claim.kind == STOCK:
                    c[j] = (disc_t[lo + 1:hi + 1, None] * truth.div[lo + 1:hi + 1]).sum(axis=0)
                else:
                    paid = _jump_at_K(g, 0.0)
                    hit = (truth.tau > truth.times[lo]) & (truth.tau <= truth.times[hi])
                    if paid:
                        c[j] = np.where(hit, paid * np.exp(-params.r * np.where(hit, truth.tau, 0.0)), 0.0)
            cash[k] = c
        parts.append(_Sample(fb.alive[rec], np.array(feats).transpose(1, 0, 2), prices, cash))
        done += P
    return _Sample(
        np.concatenate([p.alive for p in parts], axis=1),
        np.concatenate([p.features for p in parts], axis=2),
        {k: np.concatenate([p.prices[k] for p in parts], axis=1) for k in parts[0].prices},
        {k: np.concatenate([p.cash[k] for p in parts], axis=1) for k in parts[0].cash},
    )


def _design(F: np.ndarray, stats, dG: np.ndarray, with_level: bool):
    """Regressors [F] (if with_level) and F * dG_i for every instrument i."""
    mu, sd, keep = stats
    Fs = np.vstack([np.ones(F.shape[1]), (F[keep] - mu[:, None]) / sd[:, None]])
    blocks = [Fs] if with_level else [np.ones((1, F.shape[1]))]
    blocks += [Fs * dGi[None, :] for dGi in dG]
    return np.vstack(blocks).T, Fs


def _feature_stats(F: np.ndarray):
    mu = F.mean(axis=1)
    sd = F.std(axis=1)
    scale = np.maximum(np.abs(mu), 1.0)
    keep = sd > 1e-9 * scale
    return mu[keep], sd[keep], keep


def _lstsq(X: np.ndarray, y: np.ndarray, ridge: float, notes: list, j: int):
    coef, _, rank, sv = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        lam = ridge * float(np.trace(X.T @ X)) / X.shape[1]
        coef = np.linalg.solve(X.T @ X + lam * np.eye(X.shape[1]), X.T @ y)
        msg = f"rank-deficient regression at date index {j} (rank {rank} < {X.shape[1]}); ridge fallback"
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
        notes.append(msg)
    return coef


def hedge_discrete(claim, instruments: Sequence[FullInfoGrid], dates, cfg: HedgeConfig,
                   rng: np.random.Generator) -> HedgeReport:
    """Discrete risk-minimizing hedge of `claim` with the given instruments.

    claim is an OptionSpec or the FullInfoGrid of a debt claim.  Paths are
    simulated under Q.  At each date t_j, over paths alive at t_j, the next
    discounted claim value is regressed on regressors built from the
    standardized features F_j (stock price, intensity, filter mean and sd,
    and the prices of all involved claims) and from F_j times the
    discounted gains increments dG_j of the instruments.  The hedge ratio
    is the fitted linear function of F_j; the cost increment is the
    regression residual.

    For a debt claim the claim value is its exact filter price and only a
    constant accompanies F_j * dG_j.  For an option, claim values before T
    are the fitted level part of the regression (backward induction).
    """
    dates = np.asarray(dates, dtype=float)
    if dates.ndim != 1 or len(dates) < 2 or np.any(np.diff(dates) <= 0):
        raise ValueError("need at least two increasing hedge dates")
    if dates[0] != 0.0:
        raise ValueError("hedge dates must start at 0")
    if cfg.n_paths < 1000:
        raise ValueError(f"n_paths must be at least 1000, got {cfg.n_paths}")
    params = cfg.mats.params
    T = float(dates[-1])
    is_option = isinstance(claim, OptionSpec)
    if is_option:
        if abs(claim.maturity - T) > 1e-12:
            raise ValueError("the last hedge date must equal the option maturity")
        under = list(claim.underlying)
    elif isinstance(claim, FullInfoGrid):
        if claim.claim.kind != STOCK and claim.claim.maturity < T - 1e-12:
            raise ValueError("hedge horizon exceeds the claim maturity")
        under = [claim]
    else:
        raise TypeError("claim must be an OptionSpec or a FullInfoGrid")
    grids: dict = {}
    for g in [*instruments, *under]:
        grids.setdefault(g.claim.label, g)
    inst = [g.claim.label for g in instruments]
    n = len(dates) - 1
    disc = np.exp(-params.r * dates)
    notes: list = []

    def gains(sample):
        dG = []
        for lab in inst:
            p = sample.prices[lab] * disc[:, None]
            dG.append(p[1:] - p[:-1] + sample.cash[lab])
        return np.array(dG) if dG else np.zeros((0, n, sample.alive.shape[1]))

    def claim_target(sample):
        """Discounted claim values (D, P) known exactly: debt price or option payoff at T."""
        if is_option:
            pT = np.array([sample.prices[g.claim.label][-1] for g in under])
            return claim.evaluate(pT, sample.alive[-1]) * disc[-1]
        lab = claim.claim.label
        return sample.prices[lab] * disc[:, None]

    sample = _simulate(grids, cfg, dates, cfg.n_paths, rng)
    P = sample.alive.shape[1]
    dG = gains(sample)
    target = claim_target(sample)
    if not is_option:
        tcash = sample.cash[claim.claim.label]
    ell = len(inst)
    value = np.zeros((n + 1, P))
    theta = np.zeros((n, ell, P))
    cost = np.zeros((n, P))
    fits = [None] * n
    if is_option:
        value[n] = target
        g0 = claim.g_at_zero * disc[-1]
    else:
        value[:] = target
    for j in range(n - 1, -1, -1):
        alive = sample.alive[j]
        F = sample.features[j][:, alive]
        stats = _feature_stats(F)
        X, Fs = _design(F, stats, dG[:, j][:, alive], with_level=is_option)
        if is_option:
            y = value[j + 1, alive]
        else:
            y = target[j + 1, alive] + tcash[j, alive] - target[j, alive]
        coef = _lstsq(X, y, cfg.ridge, notes, j)
        nF = Fs.shape[0]
        lvl = nF if is_option else 1
        gam = coef[lvl:].reshape(ell, nF) if ell else np.zeros((0, nF))
        th = gam @ Fs
        theta[j][:, alive] = th
        if is_option:
            value[j, alive] = coef[:lvl] @ Fs
            value[j, ~alive] = g0
            cost[j, alive] = y - X @ coef
        else:
            cost[j, alive] = y - X @ coef
        fits[j] = (stats, coef, lvl, nF)
    inst_px = np.array([sample.prices[lab][:-1] for lab in inst]).reshape(ell, n, P)
    held = np.einsum("jip,ijp->jp", theta, inst_px)  # theta' Pi_j, undiscounted
    eta = value[:-1] - held * disc[:-1, None]
    # the strategy value theta' Pi + eta e^{rt} must equal the claim value
    V = held + eta / disc[:-1, None]
    check = float(np.max(np.abs(V - value[:-1] / disc[:-1, None])))
    resid = np.array([np.mean(cost[j, sample.alive[j]] ** 2) if sample.alive[j].any() else 0.0
                      for j in range(n)])
    mean_over = lambda arr, j: (arr[..., sample.alive[j]].mean(axis=-1)
                                if sample.alive[j].any() else np.zeros(arr.shape[:-1]))
    report = HedgeReport(
        dates=dates,
        theta=np.array([mean_over(theta[j], j) for j in range(n)]).reshape(n, ell),
        eta=np.array([mean_over(eta[j], j) for j in range(n)]),
        residual_risk=resid,
        value_path_check=check,
        theta_paths=theta,
        eta_paths=eta,
        cost=cost,
        price0=float(value[0].mean()),
        instruments=tuple(inst),
        n_features=int(sample.features.shape[1]),
        warnings=notes,
        gains=dG,
    )
    if cfg.n_oos > 0:
        oos = _simulate(grids, cfg, dates, cfg.n_oos, rng)
        dGo = gains(oos)
        to = claim_target(oos)
        Po = oos.alive.shape[1]
        vo = np.zeros((n + 1, Po))
        co = np.zeros((n, Po))
        if is_option:
            vo[n] = to
        else:
            vo[:] = to
            tco = oos.cash[claim.claim.label]
        for j in range(n - 1, -1, -1):
            alive = oos.alive[j]
            stats, coef, lvl, nF = fits[j]
            X, Fs = _design(oos.features[j][:, alive], stats, dGo[:, j][:, alive], is_option)
            if is_option:
                y = vo[j + 1, alive]
                vo[j, alive] = coef[:lvl] @ Fs
                vo[j, ~alive] = g0
            else:
                y = to[j + 1, alive] + tco[j, alive] - to[j, alive]
            co[j, alive] = y - X @ coef
        report.oos_cost = co
        report.oos_residual_risk = np.array(
            [np.mean(co[j, oos.alive[j]] ** 2) if oos.alive[j].any() else 0.0 for j in range(n)])
    return report


def write_price_table(path, rows: Sequence[dict], header: str | None = None) -> None:
    """CSV of price results; every row is a dict with the same keys."""
    with open(path, "w", newline="") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        if not rows:
            return
        wr = csv.writer(fh)
        keys = list(rows[0])
        wr.writerow(keys)
        for r in rows:
            wr.writerow([_fmt(r[k]) if isinstance(r[k], (float, np.floating)) else r[k] for k in keys])
