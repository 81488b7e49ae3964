"""Full-information claim values h(t, v) when the asset value is observed.

h solves h_t + r v h_v + 1/2 sigma^2 v^2 h_vv = r h on (K, N) between
dividend dates, with integral jump conditions at the dividend dates.  The
solver works in x = ln v on a uniform grid with Crank-Nicolson steps and a
Rannacher start (two implicit half steps) after every nonsmooth restart.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special
from scipy.sparse import csc_matrix
from scipy.sparse.linalg import splu
from scipy.optimize import brentq
from scipy.stats import norm

from .model import DividendLaw, ModelError, ModelParams, law_from_params


class FixedPointError(ArithmeticError):
    """Stock fixed point did not converge."""


SURVIVAL, DEFAULT, STOCK, CUSTOM = "survival", "default", "stock", "custom"


@dataclass(frozen=True)
class ClaimSpec:
    """A claim valued by the full-information PDE.

    kind: "survival" (1 at T if no default), "default" (1 at tau if tau <= T),
    "stock" (all future dividends until default) or "custom" (terminal payoff
    g(v) at T if no default plus boundary value at K).
    """

    kind: str
    maturity: float = math.inf
    terminal_payoff: Callable | None = None
    boundary_at_K: Callable | None = None
    name: str = ""

    def __post_init__(self) -> None:
        if self.kind not in (SURVIVAL, DEFAULT, STOCK, CUSTOM):
            raise ValueError(f"unknown claim kind {self.kind!r}")
        if self.kind == STOCK:
            if math.isfinite(self.maturity):
                raise ValueError("the stock has no maturity")
        elif not (math.isfinite(self.maturity) and self.maturity > 0):
            raise ValueError(f"claim maturity must be positive and finite, got {self.maturity}")
        if self.kind == CUSTOM and self.terminal_payoff is None:
            raise ValueError("custom claim needs a terminal payoff")

    @classmethod
    def survival(cls, T: float) -> "ClaimSpec":
        return cls(SURVIVAL, T, name=f"survival_{T:g}")

    @classmethod
    def default(cls, T: float) -> "ClaimSpec":
        return cls(DEFAULT, T, name=f"default_{T:g}")

    @classmethod
    def stock(cls) -> "ClaimSpec":
        return cls(STOCK, name="stock")

    @property
    def label(self) -> str:
        return self.name or self.kind

    def boundary(self, t: float) -> float:
        if self.boundary_at_K is not None:
            return float(self.boundary_at_K(t))
        return 1.0 if self.kind == DEFAULT else 0.0

    def terminal(self, v: np.ndarray) -> np.ndarray:
        if self.kind == SURVIVAL:
            return np.ones_like(v)
        if self.kind == DEFAULT:
            return np.zeros_like(v)
        return np.asarray(self.terminal_payoff(v), dtype=float) * np.ones_like(v)


@dataclass(frozen=True, eq=False)
class FullInfoGrid:
    """Values h(t, v) on a time-by-space grid.

    At a dividend date t_n the time node appears twice: first the value just
    before the payment (t_n-), then the ex-dividend value (t_n).  For the
    stock the grid covers one dividend period and is extended periodically.
    """

    t_nodes: np.ndarray
    v_nodes: np.ndarray
    values: np.ndarray
    claim: ClaimSpec
    period: float | None = None
    info: dict = field(default_factory=dict)

    @property
    def K(self) -> float:
        return float(self.v_nodes[0])

    @property
    def N(self) -> float:
        return float(self.v_nodes[-1])

    def _local_time(self, t: float, pre: bool) -> float:
        if self.period is None:
            lo, hi = self.t_nodes[0], self.t_nodes[-1]
            if t < lo - 1e-12 or t > hi + 1e-12:
                raise ValueError(f"time {t} outside the grid range [{lo}, {hi}]")
            return min(max(t, lo), hi)
        s = t - self.period * math.floor(t / self.period + 1e-12)
        if s < 1e-12 * self.period:
            s = 0.0
        if pre and s == 0.0:
            s = self.period
        return s

    def at(self, t: float, pre: bool = False) -> np.ndarray:
        """h(t, .) on v_nodes; right-continuous in t unless pre=True."""
        s = self._local_time(t, pre)
        tn = self.t_nodes
        if pre:
            j = int(np.searchsorted(tn, s, side="left"))
            if j < len(tn) and tn[j] == s:
                return self.values[j].copy()
            j -= 1
        else:
            j = int(np.searchsorted(tn, s, side="right")) - 1
            if tn[j] == s:
                return self.values[j].copy()
        j = min(max(j, 0), len(tn) - 2)
        w = (s - tn[j]) / (tn[j + 1] - tn[j])
        return (1.0 - w) * self.values[j] + w * self.values[j + 1]

    def interp(self, t: float, v, pre: bool = False) -> np.ndarray:
        return np.interp(v, self.v_nodes, self.at(t, pre))

    def to_csv(self, path, header: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if header:
                for line in header.splitlines():
                    fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["t", "v", "h"])
            for t, row in zip(self.t_nodes, self.values):
                for v, h in zip(self.v_nodes, row):
                    w.writerow([f"{t:.17g}", f"{v:.17g}", f"{h:.17g}"])


# ---------------------------------------------------------------------------
# Dividend jump condition
# ---------------------------------------------------------------------------

def _jacobi_rule(law: DividendLaw, n: int = 64):
    """Nodes z and weights for integrals against the Beta density on (0, 1)."""
    # weight (1-s)^(beta-1) (1+s)^(alpha-1) on [-1, 1] maps to z^(alpha-1)(1-z)^(beta-1)
    s, w = special.roots_jacobi(n, law.beta - 1.0, law.alpha - 1.0)
    return 0.5 * (s + 1.0), w / w.sum()


def dividend_operator(v_nodes: np.ndarray, params: ModelParams, law: DividendLaw, n: int = 64):
    """Matrix D and vector q with (D h + q)(v) = int (h(v - kappa y) + y) phi(y, v) dy.

    h is interpolated linearly between nodes.  Row 0 (v = K) is the identity.
    """
    z, w = _jacobi_rule(law, n)
    nv = len(v_nodes)
    K = params.K
    surplus = v_nodes - K
    pts = v_nodes[:, None] - params.kappa * surplus[:, None] * z[None, :]
    idx = np.clip(np.searchsorted(v_nodes, pts, side="right") - 1, 0, nv - 2)
    lo, hi = v_nodes[idx], v_nodes[idx + 1]
    frac = np.clip((pts - lo) / (hi - lo), 0.0, 1.0)
    D = np.zeros((nv, nv))
    rows = np.broadcast_to(np.arange(nv)[:, None], idx.shape)
    np.add.at(D, (rows, idx), w[None, :] * (1.0 - frac))
    np.add.at(D, (rows, idx + 1), w[None, :] * frac)
    D[0] = 0.0
    D[0, 0] = 1.0
    q = surplus * float(np.dot(w, z))
    q[0] = 0.0
    return D, q


def apply_dividend_condition(h_after: np.ndarray, claim: ClaimSpec, params: ModelParams,
                             law: DividendLaw, v_nodes: np.ndarray) -> np.ndarray:
    """Value slice just before a dividend date from the ex-dividend slice."""
    D, q = dividend_operator(np.asarray(v_nodes, dtype=float), params, law)
    out = D @ np.asarray(h_after, dtype=float)
    if claim.kind == STOCK:
        out = out + q
    return out


# ---------------------------------------------------------------------------
# Crank-Nicolson in log space
# ---------------------------------------------------------------------------

class _Stepper:
    """Backward time steps for h_tau = L h on the log grid.

    The last row is either Dirichlet (h = g_N) or, with robin=gamma, the
    far-field condition h_x + gamma h = g_N.
    """

    def __init__(self, v_nodes: np.ndarray, params: ModelParams, robin: float | None = None):
        self.v = v_nodes
        x = np.log(v_nodes)
        self.dx = dx = x[1] - x[0]
        mu = params.r - 0.5 * params.sigma**2
        s2 = params.sigma**2
        self.a = 0.5 * s2 / dx**2 - 0.5 * mu / dx
        self.b = -s2 / dx**2 - params.r
        self.c = 0.5 * s2 / dx**2 + 0.5 * mu / dx
        self.n = len(v_nodes)
        self.robin = robin
        self._cache: dict = {}

    def _apply_L(self, h: np.ndarray) -> np.ndarray:
        out = np.zeros_like(h)
        out[1:-1] = self.a * h[:-2] + self.b * h[1:-1] + self.c * h[2:]
        return out

    def _factor(self, dtau: float, theta: float):
        key = (round(dtau, 15), theta)
        lu = self._cache.get(key)
        if lu is None:
            n = self.n
            rows, cols, vals = [0], [0], [1.0]
            i = np.arange(1, n - 1)
            f = theta * dtau
            for off, coef in ((-1, -f * self.a), (0, 1.0 - f * self.b), (1, -f * self.c)):
                rows.extend(i)
                cols.extend(i + off)
                vals.extend(np.full(len(i), coef))
            if self.robin is None:
                rows.append(n - 1)
                cols.append(n - 1)
                vals.append(1.0)
            else:
                dx = self.dx
                rows += [n - 1] * 3
                cols += [n - 1, n - 2, n - 3]
                vals += [1.5 / dx + self.robin, -2.0 / dx, 0.5 / dx]
            lu = splu(csc_matrix((vals, (rows, cols)), shape=(n, n)))
            self._cache[key] = lu
        return lu

    def step(self, h: np.ndarray, dtau: float, theta: float, gK, gN) -> np.ndarray:
        rhs = h + (1.0 - theta) * dtau * self._apply_L(h)
        rhs[0] = gK
        rhs[-1] = gN
        out = self._factor(dtau, theta).solve(rhs)
        out[0] = gK
        if self.robin is None:
            out[-1] = gN
        return out


def _segment(stepper: _Stepper, h: np.ndarray, t_end: float, t_start: float, nsteps: int,
             bK: Callable, bN: Callable, store: list | None, rannacher: bool = True) -> np.ndarray:
    """Solve backward from t_end to t_start; optionally record (t, h) slices.

    bK(t), bN(t) give the boundary data at K and N.
    """
    dt = (t_end - t_start) / nsteps
    for k in range(nsteps):
        if rannacher and k == 0 and nsteps >= 2:
            # two implicit half steps to damp the nonsmooth restart data
            for half in (0.5, 1.0):
                t = t_end - half * dt
                h = stepper.step(h, 0.5 * dt, 1.0, bK(t), bN(t))
        else:
            t = t_end - (k + 1) * dt
            h = stepper.step(h, dt, 0.5, bK(t), bN(t))
        if store is not None:
            store.append((t_start if k == nsteps - 1 else t_end - (k + 1) * dt, h))
    return h


def stock_tail_exponent(params: ModelParams, law: DividendLaw) -> float:
    """Decay exponent gamma of v - h_stock(v) ~ v^-gamma for large v.

    Balances the per-period growth of v^-gamma under the PDE against the
    dividend jump: psi(gamma) dt + ln E[(1 - delta)^-gamma] = 0 with
    psi(gamma) = 1/2 sigma^2 gamma (gamma + 1) - r gamma - r.
    """
    z, w = _jacobi_rule(law)
    s2, r, P = params.sigma**2, params.r, params.div_spacing

    def f(g):
        return (0.5 * s2 * g * (g + 1.0) - r * g - r) * P + math.log(np.dot(w, (1.0 - z) ** (-g)))

    hi = 1.0
    while f(hi) < 0.0:
        hi *= 2.0
    return float(brentq(f, 0.0, hi, xtol=1e-14))


def _log_nodes(params: ModelParams, nv: int) -> np.ndarray:
    v = np.exp(np.linspace(math.log(params.K), math.log(params.N), nv))
    v[0], v[-1] = params.K, params.N
    return v


def solve_fullinfo(claim: ClaimSpec, params: ModelParams, nt: int, nv: int,
                   law: DividendLaw | None = None, tol: float = 1e-8,
                   max_iter: int = 200) -> FullInfoGrid:
    """Full-information value grid of a claim.

    nt is the number of time steps over the claim's life (for the stock: over
    one dividend period) and nv the number of space nodes on [K, N].
    """
    if nt < 16 or nv < 16:
        raise ValueError(f"need nt, nv >= 16, got nt={nt}, nv={nv}")
    law = law_from_params(params) if law is None else law
    v = _log_nodes(params, nv)
    D, q = dividend_operator(v, params, law)
    if claim.kind == STOCK:
        return _solve_stock(claim, params, law, nt, v, D, q, tol, max_iter)

    stepper = _Stepper(v, params)
    T = claim.maturity
    gN_T = float(claim.terminal(np.array([params.N]))[0])

    def bN(t):
        # value of the claim for the process stopped at N
        return math.exp(-params.r * (T - t)) * gN_T

    dates = params.dividend_dates(0.0, T)
    bounds = np.concatenate([[0.0], dates[dates < T - 1e-12], [T]])
    h = claim.terminal(v)
    h[0] = claim.boundary(T)
    slices = [(T, h.copy())]
    for j in range(len(bounds) - 1, 0, -1):
        t_hi, t_lo = bounds[j], bounds[j - 1]
        if j < len(bounds) - 1 or np.any(np.isclose(dates, T)):
            # dividend at t_hi: slices[-1] is the ex-dividend value
            h = D @ h
            h[0] = claim.boundary(t_hi)
            h[-1] = bN(t_hi)
            slices.append((t_hi, h.copy()))
        n_seg = max(2, int(math.ceil(nt * (t_hi - t_lo) / T - 1e-9)))
        store: list = []
        h = _segment(stepper, h, t_hi, t_lo, n_seg, claim.boundary, bN, store)
        slices.extend(store)
    slices.reverse()
    t_nodes = np.array([s[0] for s in slices])
    values = np.array([s[1] for s in slices])
    return FullInfoGrid(t_nodes, v, values, claim)


def _solve_stock(claim, params, law, nt, v, D, q, tol, max_iter) -> FullInfoGrid:
    if params.kappa != 1:
        raise ModelError("the stock value is finite only when dividends reduce the asset value (kappa = 1)")
    gamma = stock_tail_exponent(params, law)
    stepper = _Stepper(v, params, robin=gamma)
    P = params.div_spacing
    n_seg = max(2, nt)
    nv = len(v)
    # one-period map h0 -> S(D h0 + q) is affine; propagate [D | q] column-wise
    X = np.column_stack([D, q])
    forcing = np.zeros(nv + 1)
    forcing[-1] = params.N * (1.0 + gamma)
    Y = _segment(stepper, X, P, 0.0, n_seg, lambda t: 0.0, lambda t: forcing, None)
    M, c = Y[:, :-1], Y[:, -1]
    lhs = np.eye(nv) - M
    h0 = np.linalg.solve(lhs, c)
    resid = np.inf
    for _ in range(max_iter):
        step = M @ h0 + c - h0
        resid = float(np.max(np.abs(step)))
        if resid < tol:
            break
        h0 = h0 + np.linalg.solve(lhs, step)
    else:
        raise FixedPointError(f"stock fixed point did not converge: residual {resid:.3e}")
    pre = D @ h0 + q
    gN = params.N * (1.0 + gamma)
    store: list = []
    _segment(stepper, pre.copy(), P, 0.0, n_seg, lambda t: 0.0, lambda t: gN, store)
    slices = [(P, pre)] + store
    slices.reverse()
    t_nodes = np.array([s[0] for s in slices])
    values = np.minimum(np.array([s[1] for s in slices]), v[None, :])
    info = {"fixed_point_residual": resid, "tail_exponent": gamma,
            "periodicity_gap": float(np.max(np.abs(values[0] - h0)))}
    return FullInfoGrid(t_nodes, v, values, claim, period=P, info=info)


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------

def blackcox_survival(v, horizon, params: ModelParams):
    """Probability that GBM(r, sigma) started at v stays above K up to horizon."""
    v = np.asarray(v, dtype=float)
    theta = np.asarray(horizon, dtype=float)
    x = np.log(np.maximum(v, params.K) / params.K)
    nu = params.r - 0.5 * params.sigma**2
    s = params.sigma
    with np.errstate(divide="ignore", invalid="ignore"):
        st = s * np.sqrt(theta)
        p = norm.cdf((x + nu * theta) / st) - np.exp(-2.0 * nu * x / s**2) * norm.cdf((-x + nu * theta) / st)
    p = np.where(theta > 0, p, (x > 0).astype(float))
    p = np.where(x > 0, p, 0.0)
    return float(p) if p.ndim == 0 else p


def mc_dividend_value(v0: float, n_paths: int, horizon_periods: int, params: ModelParams,
                      law: DividendLaw, rng: np.random.Generator, chunk: int = 50_000):
    """Monte Carlo of sum_n exp(-r t_n) d_n given V0 = v0; returns (estimate, std_error).

    V is not stopped at the barrier: no dividend is paid while V <= K.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    if params.kappa != 1:
        raise ModelError("dividend value identity requires kappa = 1")
    if v0 <= params.K:
        raise ModelError("v0 must exceed K")
    dt = params.div_spacing
    drift = (params.r - 0.5 * params.sigma**2) * dt
    vol = params.sigma * math.sqrt(dt)
    disc = np.exp(-params.r * dt * np.arange(1, horizon_periods + 1))
    total = np.empty(n_paths)
    for start in range(0, n_paths, chunk):
        n = min(chunk, n_paths - start)
        V = np.full(n, float(v0))
        acc = np.zeros(n)
        for k in range(horizon_periods):
            V *= np.exp(drift + vol * rng.standard_normal(n))
            d = rng.beta(law.alpha, law.beta, n) * np.maximum(V - params.K, 0.0)
            acc += disc[k] * d
            V -= d
        total[start:start + n] = acc
    return float(total.mean()), float(total.std(ddof=1) / math.sqrt(n_paths))
