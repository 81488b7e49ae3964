"""Simulation of the true firm, its observations, and the filter along the path.

Paths are generated in chunks.  Chunk j of a run with master seed s uses the
stream np.random.default_rng(np.random.SeedSequence(s).spawn(n_chunks)[j]),
so results do not depend on how chunks are distributed over workers.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .fullinfo import FullInfoGrid
from .galerkin import (
    Basis,
    FilterError,
    FilterState,
    GalerkinMatrices,
    dividend_update,
    initial_state,
    negative_part,
    propagate_filter,
)
from .model import (
    DividendLaw,
    ModelParams,
    ReferenceDensity,
    default_reference,
    dividend_density,
    observation_drift,
    sample_initial,
)


def _check_grid(params: ModelParams, horizon: float, dt: float) -> int:
    if not (dt > 0 and horizon > 0):
        raise ValueError("dt and horizon must be positive")
    n = round(horizon / dt)
    if abs(n * dt - horizon) > 1e-9 * horizon:
        raise ValueError(f"horizon {horizon} is not a multiple of dt {dt}")
    ratio = params.div_spacing / dt
    if abs(ratio - round(ratio)) > 1e-9 * ratio:
        raise ValueError(f"dt {dt} does not divide the dividend spacing {params.div_spacing}")
    return int(n)


def chunk_rngs(seed: int, n_paths: int, chunk: int):
    n_chunks = -(-n_paths // chunk)
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    sizes = [min(chunk, n_paths - j * chunk) for j in range(n_chunks)]
    return [(np.random.default_rng(c), s) for c, s in zip(children, sizes)]


# ---------------------------------------------------------------------------
# Truth
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class TruthBatch:
    """P simulated paths on a common grid.

    V, Y have shape (n_steps + 1, P); dZ has shape (n_steps, 2, P); div has
    shape (n_steps + 1, P) with the dividend paid at each grid time (0 if none).
    """

    times: np.ndarray
    V: np.ndarray
    Y: np.ndarray
    tau: np.ndarray
    dZ: np.ndarray
    div: np.ndarray
    div_steps: np.ndarray  # grid indices of dividend dates

    @property
    def n_paths(self) -> int:
        return self.V.shape[1]

    def path(self, p: int) -> "TruthPath":
        dividends = [(float(self.times[k]), float(self.div[k, p])) for k in self.div_steps
                     if self.div[k, p] > 0]
        Z = np.vstack([np.zeros((1, 2)), np.cumsum(self.dZ[:, :, p], axis=0)])
        return TruthPath(self.times, self.V[:, p], self.Y[:, p], float(self.tau[p]), dividends, Z)


@dataclass(eq=False)
class TruthPath:
    times: np.ndarray
    V: np.ndarray
    Y: np.ndarray
    tau: float
    dividends: list
    Z: np.ndarray  # cumulative observations, shape (n_steps + 1, 2)

    @property
    def dZ(self) -> np.ndarray:
        return np.diff(self.Z, axis=0)


def simulate_truth_batch(params: ModelParams, law: DividendLaw, horizon: float, dt: float,
                         n_paths: int, rng: np.random.Generator, v0=None) -> TruthBatch:
    """Exact GBM steps with a Brownian-bridge barrier test and dividend jumps."""
    n = _check_grid(params, horizon, dt)
    P = int(n_paths)
    times = dt * np.arange(n + 1)
    per = int(round(params.div_spacing / dt))
    div_steps = np.arange(per, n + 1, per)
    is_div = np.zeros(n + 1, dtype=bool)
    is_div[div_steps] = True
    V = np.empty((n + 1, P))
    Y = np.zeros((n + 1, P), dtype=np.int8)
    dZ = np.empty((n, 2, P))
    div = np.zeros((n + 1, P))
    V[0] = sample_initial(params, rng, P) if v0 is None else np.broadcast_to(v0, (P,))
    tau = np.full(P, np.inf)
    K, s = params.K, params.sigma
    mu = (params.r - 0.5 * s * s) * dt
    vol = s * math.sqrt(dt)
    sq = math.sqrt(dt)
    for k in range(n):
        v = V[k]
        alive = Y[k] == 0
        dZ[k] = observation_drift(v, params) * dt + sq * rng.standard_normal((2, P))
        v1 = v * np.exp(mu + vol * rng.standard_normal(P))
        u = rng.uniform(size=P)
        with np.errstate(invalid="ignore", divide="ignore"):
            p = np.exp(-2.0 * np.log(v / K) * np.log(np.maximum(v1, K) / K) / (s * s * dt))
        hit = alive & ((v1 <= K) | (u < p))
        v1 = np.where(alive, v1, v)
        v1[hit] = K
        tau[hit] = times[k + 1]
        Y[k + 1] = Y[k] | hit
        if is_div[k + 1]:
            delta = rng.beta(*_beta(law), size=P)
            live = Y[k + 1] == 0
            d = np.where(live, delta * (v1 - K), 0.0)
            div[k + 1] = d
            v1 = v1 - params.kappa * d
        V[k + 1] = v1
    return TruthBatch(times, V, Y, tau, dZ, div, div_steps)


def _beta(law: DividendLaw):
    return law.alpha, law.beta


def simulate_truth(params: ModelParams, law: DividendLaw, horizon: float, dt: float,
                   rng: np.random.Generator) -> TruthPath:
    return simulate_truth_batch(params, law, horizon, dt, 1, rng).path(0)


# ---------------------------------------------------------------------------
# Filtering along paths
# ---------------------------------------------------------------------------

class ClaimProjector:
    """Caches load vectors (e_i, h(t, .)) of a full-information grid."""

    def __init__(self, grid: FullInfoGrid, mats: GalerkinMatrices):
        self.grid = grid
        self.mats = mats
        self._cache: dict = {}

    def __call__(self, t: float, pre: bool = False):
        key = (round(t, 12), pre)
        hit = self._cache.get(key)
        if hit is None:
            h = self.grid.at(t, pre)
            b = self.mats.basis
            vals = np.interp(b.nodes, self.grid.v_nodes, h)
            hit = (self.mats.E.T @ (b.weights * vals), float(h[-1]))
            if len(self._cache) > 20000:
                self._cache.clear()
            self._cache[key] = hit
        return hit

    def price(self, t: float, psi, nuN, C, pre: bool = False):
        load, hN = self(t, pre)
        return (load @ psi + hN * nuN) / C


@dataclass(eq=False)
class FilterBatch:
    """Recorded filter outputs for P paths; arrays have shape (n_records, P)."""

    times: np.ndarray
    C: np.ndarray
    nuK: np.ndarray
    nuN: np.ndarray
    lam: np.ndarray
    S: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    alive: np.ndarray
    prices: dict = field(default_factory=dict)
    qv_innovation: np.ndarray | None = None  # per path, off dividend dates
    neg_part: np.ndarray | None = None  # per path, running max over time steps
    proj_neg: np.ndarray | None = None  # per path, max right after dividend projections
    psi: np.ndarray | None = None  # (n_records, m, P) when requested
    final_state: FilterState | None = None


def run_filter_batch(truth: TruthBatch, mats: GalerkinMatrices, law: DividendLaw,
                     stock_grid: FullInfoGrid | None = None, claims: dict | None = None,
                     record_every: int = 1, ref: ReferenceDensity | None = None,
                     keep_psi: bool = False, clip_threshold: float = 1e-3,
                     state0: FilterState | None = None, scheme: str = "milstein") -> FilterBatch:
    """Galerkin filter along each path of a truth batch.

    Records after every `record_every` steps (and at t = 0).  Outputs after
    default are frozen at zero.  The innovation quadratic variation of S sums
    squared changes of S caused by the observation noise within each step.
    """
    params = mats.params
    P = truth.n_paths
    times = truth.times
    n = len(times) - 1
    dt = times[1] - times[0]
    s0 = initial_state(mats) if state0 is None else state0
    psi = np.repeat(np.asarray(s0.psi)[:, None], P, axis=1)
    state = FilterState(0.0, psi, np.zeros(P), np.zeros(P), np.zeros(P))
    stock = ClaimProjector(stock_grid, mats) if stock_grid is not None else None
    claim_proj = {k: ClaimProjector(g, mats) for k, g in (claims or {}).items()}
    x = mats.basis.nodes
    wq = mats.basis.weights
    m1 = mats.E.T @ (wq * x)
    m2 = mats.E.T @ (wq * x * x)
    N = params.N
    half_s2K2 = 0.5 * params.sigma**2 * params.K**2
    is_div = np.zeros(n + 1, dtype=bool)
    is_div[truth.div_steps] = True
    rec_idx = [0] + [k for k in range(1, n + 1) if k % record_every == 0 or k == n]
    rec_set = set(rec_idx)
    R = len(rec_idx)
    out = {name: np.zeros((R, P)) for name in ("C", "nuK", "nuN", "lam", "S", "mean", "sd")}
    prices = {k: np.full((R, P), np.nan) for k in claim_proj}
    alive_rec = np.zeros((R, P), dtype=bool)
    psi_rec = np.zeros((R, mats.m, P)) if keep_psi else None
    qv = np.zeros(P)
    proj_neg = np.zeros(P)

    def stock_price(t, psi_, nuN_, C_):
        return stock.price(t, psi_, nuN_, C_) if stock is not None else np.zeros(P)

    def record(r, k, st):
        alive = truth.Y[k] == 0
        C = mats.mass @ st.psi + st.nuN
        if np.any(alive & ~(C > 0)):
            bad = np.flatnonzero(alive & ~(C > 0))[0]
            raise FilterError(f"filter degenerate at t={times[k]:.6g} on path {bad}")
        Cs = np.where(C > 0, C, 1.0)
        lam = np.maximum(half_s2K2 * (mats.dK @ st.psi) / Cs, 0.0)
        mean = (m1 @ st.psi + N * st.nuN) / Cs
        var = np.maximum((m2 @ st.psi + N * N * st.nuN) / Cs - mean**2, 0.0)
        vals = {"C": C, "nuK": st.nuK, "nuN": st.nuN, "lam": lam,
                "S": stock_price(times[k], st.psi, st.nuN, Cs), "mean": mean, "sd": np.sqrt(var)}
        for name, v in vals.items():
            out[name][r] = np.where(alive, v, 0.0)
        for name, proj in claim_proj.items():
            T = proj.grid.claim.maturity
            if times[k] <= T + 1e-12:
                prices[name][r] = np.where(alive, proj.price(times[k], st.psi, st.nuN, Cs), 0.0)
        alive_rec[r] = alive
        if keep_psi:
            psi_rec[r] = st.psi

    record(0, 0, state)
    r = 1
    for k in range(1, n + 1):
        dz = truth.dZ[k - 1]
        t_prev = times[k - 1]
        diag = k in rec_set
        try:
            new = propagate_filter(state, dz, dt, mats, params, diagnostics=diag, scheme=scheme)
        except FilterError as exc:
            raise FilterError(f"at t={t_prev:.6g}: {exc}") from exc
        new = FilterState(times[k], new.psi, new.nuK, new.nuN, new.neg_part)
        if stock is not None and not is_div[k]:
            # S after the deterministic part of the step versus the full step
            det_psi = state.psi + dt * (mats.drift @ state.psi)
            det_nuN = state.nuN + np.maximum(-0.5 * params.sigma**2 * N**2 * (mats.dN @ state.psi), 0.0) * dt
            Cd = mats.mass @ det_psi + det_nuN
            Cn = mats.mass @ new.psi + new.nuN
            ok = (truth.Y[k] == 0) & (Cd > 0) & (Cn > 0)
            Sd = stock_price(times[k], det_psi, det_nuN, np.where(ok, Cd, 1.0))
            Sn = stock_price(times[k], new.psi, new.nuN, np.where(ok, Cn, 1.0))
            qv += np.where(ok, (Sn - Sd) ** 2, 0.0)
        if is_div[k]:
            live = truth.div[k] > 0
            if live.any():
                sub = new.select(live)
                try:
                    upd = dividend_update(sub, truth.div[k, live], mats, law=law, ref=ref)
                except FilterError as exc:
                    raise FilterError(f"at dividend date t={times[k]:.6g}: {exc}") from exc
                psi_new = new.psi.copy()
                psi_new[:, live] = upd.psi
                nuN_new = np.asarray(new.nuN, dtype=float).copy()
                nuN_new[live] = upd.nuN
                proj_neg[live] = np.maximum(proj_neg[live], negative_part(upd.psi, mats))
                new = FilterState(times[k], psi_new, new.nuK, nuN_new, new.neg_part)
        state = new
        if diag:
            record(r, k, state)
            r += 1
    neg = np.asarray(state.neg_part)
    alive_end = truth.Y[-1] == 0
    if np.any(neg[alive_end] > clip_threshold):
        worst = float(neg[alive_end].max())
        raise FilterError(f"negative part of the filter density {worst:.3e} exceeds {clip_threshold:.1e}")
    return FilterBatch(times[rec_idx], **out, alive=alive_rec, prices=prices,
                       qv_innovation=qv if stock is not None else None, neg_part=neg,
                       proj_neg=proj_neg,
                       psi=psi_rec, final_state=state)


@dataclass(eq=False)
class FilterPath:
    times: np.ndarray
    states: list
    S: np.ndarray
    lam: np.ndarray
    prices: dict
    C: np.ndarray
    nuK: np.ndarray
    nuN: np.ndarray
    qv_innovation: float

    def to_csv(self, path, truth: TruthPath | None = None, header: str | None = None) -> None:
        write_path_csv(path, self, truth, header)


def run_filter_path(truth: TruthPath, filter_cfg: dict | None, mats: GalerkinMatrices, basis: Basis,
                    fullinfo_stock: FullInfoGrid | None, law: DividendLaw | None = None,
                    claims: dict | None = None) -> FilterPath:
    """Filter one truth path; filter_cfg may carry record_every, ref, clip_threshold."""
    if basis is not mats.basis:
        raise ValueError("basis does not match the Galerkin matrices")
    cfg = dict(filter_cfg or {})
    if law is None:
        law = cfg.pop("law")
    n = len(truth.times) - 1
    div = np.zeros((n + 1, 1))
    dt = truth.times[1] - truth.times[0]
    for tn, d in truth.dividends:
        div[int(round(tn / dt)), 0] = d
    per = int(round(mats.params.div_spacing / dt))
    batch = TruthBatch(truth.times, truth.V[:, None], truth.Y[:, None],
                       np.array([truth.tau]), truth.dZ[:, :, None], div, np.arange(per, n + 1, per))
    fb = run_filter_batch(batch, mats, law, fullinfo_stock, claims, keep_psi=True,
                          record_every=cfg.get("record_every", 1), ref=cfg.get("ref"),
                          clip_threshold=cfg.get("clip_threshold", 1e-3),
                          scheme=cfg.get("scheme", "milstein"))
    states = [FilterState(t, fb.psi[i, :, 0], fb.nuK[i, 0], fb.nuN[i, 0])
              for i, t in enumerate(fb.times)]
    return FilterPath(fb.times, states, fb.S[:, 0], fb.lam[:, 0],
                      {k: v[:, 0] for k, v in fb.prices.items()}, fb.C[:, 0], fb.nuK[:, 0],
                      fb.nuN[:, 0], float(fb.qv_innovation[0]) if fb.qv_innovation is not None else 0.0)


def write_path_csv(path, fp: FilterPath, truth: TruthPath | None, header: str | None) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        w = csv.writer(fh)
        names = list(fp.prices)
        w.writerow(["t", "V", "Y", "S", "lambda", "C", "nuK", "nuN", *names])
        tgrid = truth.times if truth is not None else None
        for i, t in enumerate(fp.times):
            if truth is not None:
                k = int(np.searchsorted(tgrid, t - 1e-12))
                V, Y = truth.V[k], int(truth.Y[k])
            else:
                V, Y = float("nan"), 0
            row = [t, V, Y, fp.S[i], fp.lam[i], fp.C[i], fp.nuK[i], fp.nuN[i]]
            row += [fp.prices[nm][i] for nm in names]
            w.writerow([f"{v:.17g}" if isinstance(v, float) or isinstance(v, np.floating) else v
                        for v in row])


# ---------------------------------------------------------------------------
# Reference measure
# ---------------------------------------------------------------------------

def dividend_steps(params: ModelParams, t0: float, t1: float, dt: float) -> dict:
    """Map step index k (time t0 + k dt) to dividend dates in (t0, t1]."""
    out = {}
    for tn in params.dividend_dates(t0, t1):
        k = (tn - t0) / dt
        if abs(k - round(k)) > 1e-6:
            raise ValueError(f"dividend date {tn} is not on the time grid of step {dt} from {t0}")
        out[int(round(k))] = float(tn)
    return out


def run_reference_batch(state0: FilterState, mats: GalerkinMatrices, law: DividendLaw,
                        horizon: float, dt: float, n_paths: int, rng: np.random.Generator,
                        ref: ReferenceDensity | None = None, scheme: str = "milstein",
                        on_step=None) -> FilterState:
    """Propagate the filter under the reference measure Q*.

    Z is a standard Brownian motion and dividends are drawn from the
    reference density, independently of any firm value.  state0 must be a
    single (unbatched) state; the result holds n_paths columns.  on_step, if
    given, is called as on_step(k, state) after every step.
    """
    params = mats.params
    ref = default_reference(params) if ref is None else ref
    n = round(horizon / dt)
    if n < 1 or abs(n * dt - horizon) > 1e-9 * max(horizon, 1.0):
        raise ValueError(f"horizon {horizon} is not a positive multiple of dt {dt}")
    t0 = float(state0.t)
    divs = dividend_steps(params, t0, t0 + horizon, dt)
    P = int(n_paths)
    psi = np.repeat(np.asarray(state0.psi, dtype=float)[:, None], P, axis=1)
    st = FilterState(t0, psi, np.full(P, float(state0.nuK)), np.full(P, float(state0.nuN)),
                     np.zeros(P))
    sq = math.sqrt(dt)
    for k in range(1, n + 1):
        dz = sq * rng.standard_normal((2, P))
        st = propagate_filter(st, dz, dt, mats, params, diagnostics=False, scheme=scheme)
        st = st.replace(t=t0 + k * dt)
        if k in divs:
            st = dividend_update(st, ref.sample(rng, P), mats, law=law, ref=ref)
        if on_step is not None:
            on_step(k, st)
    return st.replace(neg_part=negative_part(st.psi, mats))


def run_guided_batch(state0: FilterState, mats: GalerkinMatrices, law: DividendLaw,
                     horizon: float, dt: float, n_paths: int, rng: np.random.Generator,
                     ref: ReferenceDensity | None = None, scheme: str = "milstein",
                     defensive: float = 0.05):
    """Importance-sampled version of run_reference_batch.

    Observation increments are drawn with the drift
    abar = ((u, a) + nuN a(N)) / ((u, 1) + nuK + nuN) and dividends from the
    mixture of phi(., v) over the current filter (with nuK paired with phi*
    and a share `defensive` of phi* itself).  Returns (state, log_lr) where
    log_lr is the log of dQ*/dQ-tilde along each path, so that
    E*[F] = E-tilde[F exp(log_lr)] for any functional F of the paths.
    """
    params = mats.params
    ref = default_reference(params) if ref is None else ref
    n = round(horizon / dt)
    if n < 1 or abs(n * dt - horizon) > 1e-9 * max(horizon, 1.0):
        raise ValueError(f"horizon {horizon} is not a positive multiple of dt {dt}")
    if not 0.0 < defensive <= 1.0:
        raise ValueError("defensive share must lie in (0, 1]")
    t0 = float(state0.t)
    divs = dividend_steps(params, t0, t0 + horizon, dt)
    P = int(n_paths)
    psi = np.repeat(np.asarray(state0.psi, dtype=float)[:, None], P, axis=1)
    st = FilterState(t0, psi, np.full(P, float(state0.nuK)), np.full(P, float(state0.nuN)),
                     np.zeros(P))
    x, w = mats.basis.nodes, mats.basis.weights
    a_load = np.array([mats.E.T @ (w * ak) for ak in observation_drift(x, params)])
    aN = mats.aN
    sq = math.sqrt(dt)
    log_lr = np.zeros(P)
    K, N = params.K, params.N
    for k in range(1, n + 1):
        tot = mats.mass @ st.psi + st.nuN + st.nuK
        abar = (a_load @ st.psi + np.outer(aN, st.nuN)) / np.where(tot > 0, tot, 1.0)
        dz = abar * dt + sq * rng.standard_normal((2, P))
        log_lr += -np.sum(abar * dz, axis=0) + 0.5 * np.sum(abar * abar, axis=0) * dt
        st = propagate_filter(st, dz, dt, mats, params, diagnostics=False, scheme=scheme)
        st = st.replace(t=t0 + k * dt)
        if k in divs:
            up = np.maximum(mats.E @ st.psi, 0.0) * w[:, None]  # (nq, P)
            cells = np.vstack([up, st.nuN[None, :], st.nuK[None, :]])
            cells = np.maximum(cells, 0.0)
            prob = cells / np.maximum(cells.sum(axis=0), 1e-300)
            cum = np.cumsum(prob, axis=0)
            pick = np.minimum((cum < rng.uniform(size=P)[None, :]).sum(axis=0), len(x) + 1)
            v = np.where(pick < len(x), x[np.minimum(pick, len(x) - 1)], N)
            delta = rng.beta(law.alpha, law.beta, size=P)
            d = np.where(pick <= len(x), delta * (v - K), ref.sample(rng, P))
            use_ref = rng.uniform(size=P) < defensive
            d = np.where(use_ref, ref.sample(rng, P), d)
            d = np.maximum(d, 1e-300)
            phi = dividend_density(d[None, :], x[:, None], params, law)  # (nq, P)
            mix = (np.sum(prob[:-2] * phi, axis=0)
                   + prob[-2] * dividend_density(d, N, params, law)
                   + prob[-1] * ref.pdf(d))
            dens = (1.0 - defensive) * mix + defensive * ref.pdf(d)
            log_lr += np.log(ref.pdf(d)) - np.log(dens)
            st = dividend_update(st, d, mats, law=law, ref=ref)
    return st.replace(neg_part=negative_part(st.psi, mats)), log_lr
