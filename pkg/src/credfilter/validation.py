"""Oracle and acceptance checks shared by the `validate` command and the tests.

Every check returns a CheckResult with the measured statistic, the bound it
is compared against and the wall time.  Checks with a stated time budget
fail when the budget is exceeded.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.stats import norm

from .calibration import assemble_calibration, solve_qp_nonneg
from .fullinfo import ClaimSpec, FullInfoGrid, blackcox_survival, mc_dividend_value, solve_fullinfo
from .galerkin import (
    FilterState,
    assemble_matrices,
    build_basis,
    default_intensity,
    density_on_grid,
    initial_state,
)
from .model import ModelParams, ReferenceDensity, default_reference, law_from_params, preset_params
from .particles import run_particle_filter
from .pricing import (
    HedgeConfig,
    MCConfig,
    OptionSpec,
    hedge_discrete,
    instantaneous_quad_var,
    price_debt_claim,
    price_option_mc,
)
from .simulator import (
    chunk_rngs,
    run_filter_batch,
    run_filter_path,
    run_reference_batch,
    simulate_truth_batch,
)


@dataclass
class CheckResult:
    key: str
    title: str
    passed: bool
    value: float
    bound: float
    runtime: float
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return (f"[{tag}] {self.key:<24} {self.title}: {self.value:.4g} vs bound {self.bound:.4g}"
                f" ({self.runtime:.1f} s){'; ' + self.detail if self.detail else ''}")


@dataclass(frozen=True)
class Check:
    key: str
    title: str
    fn: Callable
    budget: float | None = None  # seconds
    quick: bool = False


def _table1():
    p = ModelParams()
    return p, law_from_params(p)


def _mats(p: ModelParams, m: int = 48):
    return assemble_matrices(build_basis(p.K, p.N, m), p)


# ---------------------------------------------------------------------------
# Acceptance criteria
# ---------------------------------------------------------------------------

def pde_blackcox(seed: int):
    """Survival claim without dividends against the closed-form first passage law."""
    p = ModelParams().with_(div_spacing=1e3)
    g = solve_fullinfo(ClaimSpec.survival(1.0), p, 400, 400)
    num = float(g.interp(0.0, 25.0))
    exact = math.exp(-p.r) * blackcox_survival(25.0, 1.0, p)
    rel = abs(num - exact) / exact
    return rel, 1e-3, rel < 1e-3, f"h(0,25)={num:.10f}, closed form {exact:.10f}"


def dividend_value(seed: int):
    """Discounted future dividends from V0 = 35 add up to 35."""
    p, law = _table1()
    # 1000 periods stand in for the infinite horizon; the tail beyond is below 1e-3
    est, se = mc_dividend_value(35.0, 100_000, 1000, p, law, np.random.default_rng(seed))
    z = abs(est - 35.0) / se
    return z, 3.0, z < 3.0, f"estimate {est:.4f} +- {se:.4f}"


def mass_martingale(seed: int):
    """(u(T),1) + nuK + nuN has mean one under the reference measure."""
    p, law = _table1()
    M = _mats(p)
    st = run_reference_batch(initial_state(M), M, law, 1.0, 1e-3, 5000, np.random.default_rng(seed))
    L = M.mass @ st.psi + st.nuK + st.nuN
    mean, se = float(L.mean()), float(L.std(ddof=1) / math.sqrt(L.size))
    z = abs(mean - 1.0) / se
    return z, 3.0, z < 3.0, f"mean {mean:.4f} +- {se:.4f}"


def filter_oracle(seed: int, n_paths: int = 10, n_particles: int = 20_000):
    """L1 distance between the Galerkin and particle densities at T on common paths."""
    p, law = _table1()
    M = _mats(p)
    dt = 1e-3
    tb = simulate_truth_batch(p, law, 1.0, dt, 4 * n_paths, np.random.default_rng(seed))
    surv = np.flatnonzero(tb.Y[-1] == 0)[:n_paths]
    grid = np.linspace(p.K, p.N, 4001)
    dists = []
    for k, idx in enumerate(surv):
        tp = tb.path(int(idx))
        fp = run_filter_path(tp, {"law": law, "record_every": len(tp.times) - 1}, M, M.basis, None)
        pt = run_particle_filter(tp.dZ, tp.dividends, n_particles, p, law,
                                 np.random.default_rng([seed, k]), dt, grid=grid)
        dens = density_on_grid(fp.states[-1], M, grid)
        dists.append(float(np.trapezoid(np.abs(dens - pt.density[-1]), grid)))
    worst = max(dists)
    return worst, 0.05, worst < 0.05, "per path " + " ".join(f"{d:.4f}" for d in dists)


def intensity_hazard(seed: int, n_paths: int = 100_000, horizon: float = 2.0, buckets: int = 10):
    """Default counts per time bucket against the integrated filtered intensity."""
    p, law = _table1()
    M = _mats(p)
    dt = 1e-2
    count = np.zeros(buckets)
    expect = np.zeros(buckets)
    for rng, P in chunk_rngs(seed, n_paths, 5000):
        tb = simulate_truth_batch(p, law, horizon, dt, P, rng)
        fb = run_filter_batch(tb, M, law)
        # trapezoid rule for the integral of lambda 1{t < tau} over each step
        L = (fb.lam * (tb.Y == 0)).sum(axis=1)
        contrib = 0.5 * (L[:-1] + L[1:]) * dt
        k = np.arange(contrib.size)
        np.add.at(expect, k * buckets // contrib.size, contrib)
        tau = tb.tau[np.isfinite(tb.tau)]
        np.add.at(count, np.minimum((tau / horizon * buckets - 1e-9).astype(int), buckets - 1), 1)
    z = (count - expect) / np.sqrt(np.maximum(expect, 1.0))
    worst = float(np.max(np.abs(z)))
    return worst, 3.0, worst < 3.0, ("defaults " + " ".join(f"{c:.0f}" for c in count)
                                     + " | expected " + " ".join(f"{e:.1f}" for e in expect))


def deterministic_between_dividends(seed: int, n_paths: int = 20):
    """Without news the stock price moves only at dividend dates."""
    p = preset_params("dividends_only")
    law = law_from_params(p)
    M = _mats(p)
    stock = solve_fullinfo(ClaimSpec.stock(), p, 200, 400, law)
    tb = simulate_truth_batch(p, law, 2.0, 1e-2, n_paths, np.random.default_rng(seed))
    fb = run_filter_batch(tb, M, law, stock)
    # a second run with unrelated observation noise must give the same S path
    tb2 = simulate_truth_batch(p, law, 2.0, 1e-2, n_paths, np.random.default_rng(seed))
    tb2.dZ[:] = np.random.default_rng(seed + 1).standard_normal(tb2.dZ.shape) * 0.1
    fb2 = run_filter_batch(tb2, M, law, stock)
    qv = float(np.max(fb.qv_innovation))
    gap = float(np.max(np.abs(fb.S - fb2.S)))
    worst = max(qv, gap)
    return worst, 1e-10, worst < 1e-10, f"max innovation QV {qv:.3g}, max S gap across noise {gap:.3g}"


def survival_martingale(seed: int, n_paths: int = 100_000, T: float = 5.0):
    """Monte Carlo of the discounted survival payoff against the filter price at 0."""
    p, law = _table1()
    M = _mats(p)
    g = solve_fullinfo(ClaimSpec.survival(T), p, 500, 400, law)
    price = float(price_debt_claim(initial_state(M), g, M))
    pay = []
    for rng, P in chunk_rngs(seed, n_paths, 20_000):
        tb = simulate_truth_batch(p, law, T, 1e-2, P, rng)
        pay.append(math.exp(-p.r * T) * (tb.Y[-1] == 0))
    X = np.concatenate(pay)
    mean, se = float(X.mean()), float(X.std(ddof=1) / math.sqrt(X.size))
    z = abs(mean - price) / se
    return z, 3.0, z < 3.0, f"MC {mean:.5f} +- {se:.5f}, filter price {price:.5f}"


def calibration_round_trip(seed: int):
    """Prices generated from a known nonnegative density are matched exactly."""
    p, law = _table1()
    M = _mats(p)
    psi0 = np.maximum(initial_state(M).psi, 0.0)
    psi0 /= M.mass @ psi0
    st = FilterState(0.0, psi0)
    claims = [ClaimSpec.survival(1.0), ClaimSpec.survival(3.0), ClaimSpec.survival(5.0),
              ClaimSpec.default(2.0), ClaimSpec.default(5.0)]
    grids = [solve_fullinfo(c, p, max(16, int(40 * c.maturity)), 400, law) for c in claims]
    prices = [float(price_debt_claim(st, g, M)) for g in grids]
    t0 = time.perf_counter()
    res = solve_qp_nonneg(assemble_calibration(prices, grids, M.basis, 0.0))
    solve_time = time.perf_counter() - t0
    cs = FilterState(0.0, res.psi)
    resid = max(abs(float(price_debt_claim(cs, g, M)) - q) for g, q in zip(grids, prices))
    kkt = max(res.kkt_residual, res.complementarity)
    ok = resid < 1e-8 and kkt < 1e-9 and res.objective <= psi0 @ M.Xi @ psi0
    return resid, 1e-8, ok, f"KKT {res.kkt_residual:.2g}, complementarity {res.complementarity:.2g}, QP {solve_time:.2f} s"


def reference_invariance(seed: int):
    """Filter outputs do not depend on the reference dividend density."""
    p, law = _table1()
    M = _mats(p)
    surv = solve_fullinfo(ClaimSpec.survival(3.0), p, 120, 400, law)
    tb = simulate_truth_batch(p, law, 2.0, 1e-2, 8, np.random.default_rng(seed))
    idx = int(np.flatnonzero(tb.Y[-1] == 0)[0])
    tp = tb.path(idx)
    refs = [default_reference(p), ReferenceDensity(default_reference(p).rate * 7.0)]
    out = [run_filter_path(tp, {"law": law, "ref": r}, M, M.basis, None, claims={"surv": surv})
           for r in refs]
    pis = [np.array([s.psi for s in fp.states]) / fp.C[:, None] for fp in out]
    d_pi = float(np.max(np.abs(pis[0] - pis[1])))
    d_lam = float(np.max(np.abs(out[0].lam - out[1].lam)))
    d_px = float(np.max(np.abs(out[0].prices["surv"] - out[1].prices["surv"])))
    worst = max(d_pi, d_lam, d_px)
    return worst, 1e-10, worst < 1e-10, f"pi {d_pi:.2g}, lambda {d_lam:.2g}, price {d_px:.2g}"


def hedging_sanity(seed: int):
    """Self-hedge is exact; hedging a stock call with the stock lowers the risk."""
    p, law = _table1()
    M = _mats(p)
    surv = solve_fullinfo(ClaimSpec.survival(2.0), p, 80, 400, law)
    stock = solve_fullinfo(ClaimSpec.stock(), p, 200, 400, law)
    dates = np.linspace(0.0, 1.0, 5)
    cfg = HedgeConfig(M, law, n_paths=1000, stock_grid=stock)
    self_risk = hedge_discrete(surv, [surv], dates, cfg, np.random.default_rng(seed)).total_residual_risk
    S0 = float(price_debt_claim(initial_state(M), stock, M))
    call = OptionSpec.call(stock, S0, 1.0)
    cfg = HedgeConfig(M, law, n_paths=10_000, stock_grid=stock, n_oos=10_000)
    hedged = hedge_discrete(call, [stock], dates, cfg, np.random.default_rng(seed + 1))
    naked = hedge_discrete(call, [], dates, cfg, np.random.default_rng(seed + 1))
    # paired comparison of total squared cost on common out-of-sample paths
    D = (naked.oos_cost**2).sum(axis=0) - (hedged.oos_cost**2).sum(axis=0)
    z = float(D.mean() / (D.std(ddof=1) / math.sqrt(D.size)))
    zcrit = float(norm.ppf(0.99))
    ok = self_risk < 1e-10 and z > zcrit
    return z, zcrit, ok, (f"self-hedge risk {self_risk:.2g}; total risk hedged "
                          f"{hedged.oos_residual_risk.sum():.4g} vs unhedged {naked.oos_residual_risk.sum():.4g}")


def truncation(seed: int, T: float = 5.0):
    """The t = 0 survival price barely moves when N doubles."""
    p, law = _table1()
    prices = []
    for N in (200.0, 400.0):
        scale = math.log(N / p.K) / math.log(200.0 / p.K)
        q = p.with_(N=N)
        M = _mats(q, int(round(48 * scale)))
        g = solve_fullinfo(ClaimSpec.survival(T), q, 200, int(round(400 * scale)), law)
        prices.append(float(price_debt_claim(initial_state(M), g, M)))
    d = abs(prices[1] - prices[0])
    return d, 1e-4, d < 1e-4, f"N=200: {prices[0]:.8f}, N=400: {prices[1]:.8f}"


# ---------------------------------------------------------------------------
# Quick sanity checks
# ---------------------------------------------------------------------------

def riskless_payoff(seed: int):
    """A unit payoff paid in every state is worth the discount factor."""
    p, law = _table1()
    M = _mats(p)
    surv = solve_fullinfo(ClaimSpec.survival(2.0), p, 80, 400, law)
    unit = OptionSpec(lambda x: np.ones(x.shape[1]), 1.0, (surv,), name="unit")
    res = price_option_mc(initial_state(M), unit, MCConfig(law, n_paths=1000), M,
                          rng=np.random.default_rng(seed))
    err = abs(res.price - math.exp(-p.r))
    return err, 1e-12, err < 1e-12, f"price {res.price:.15f}"


def quad_var_no_news(seed: int):
    """With a = 0 only the default term remains: v = lambda Pi^2."""
    p = preset_params("dividends_only")
    law = law_from_params(p)
    M = _mats(p)
    surv = solve_fullinfo(ClaimSpec.survival(2.0), p, 80, 400, law)
    st = initial_state(M).replace(t=0.5)
    v = float(instantaneous_quad_var(st, [surv], M)[0, 0])
    Pi = float(price_debt_claim(st, surv, M))
    lam = float(default_intensity(st, M))
    err = abs(v - lam * Pi * Pi)
    return err, 1e-15, err < 1e-15, f"v {v:.6g}, lambda Pi^2 {lam * Pi * Pi:.6g}"


def unit_claim_price(seed: int):
    """A claim worth 1 in every state prices at 1."""
    p, _ = _table1()
    M = _mats(p)
    v = np.exp(np.linspace(math.log(p.K), math.log(p.N), 50))
    ones = FullInfoGrid(np.array([0.0, 1.0]), v, np.ones((2, v.size)), ClaimSpec.survival(1.0))
    err = abs(float(price_debt_claim(initial_state(M), ones, M)) - 1.0)
    return err, 1e-13, err < 1e-13, ""


ACCEPTANCE = (
    Check("1_pde_blackcox", "PDE vs closed form, relative error", pde_blackcox, 5.0, True),
    Check("2_dividend_value", "dividend value identity, |z|", dividend_value, 30.0),
    Check("3_mass_martingale", "mass martingale under Q*, |z|", mass_martingale, 120.0),
    Check("4_filter_oracle", "Galerkin vs particle filter, max L1", filter_oracle, 300.0),
    Check("5_intensity_hazard", "default hazard vs intensity, max |z|", intensity_hazard, 300.0),
    Check("6_deterministic_S", "S without news, max QV", deterministic_between_dividends, None, True),
    Check("7_survival_martingale", "survival claim martingale, |z|", survival_martingale),
    Check("8_calibration", "calibration round trip, max residual", calibration_round_trip, 10.0, True),
    Check("9_reference_invariance", "phi* invariance, max difference", reference_invariance, None, True),
    Check("10_hedging", "hedging, paired z vs 99% quantile", hedging_sanity),
    Check("11_truncation", "N=200 vs N=400 price change", truncation, None, True),
)

SANITY = (
    Check("riskless_payoff", "unit payoff option price error", riskless_payoff, None, True),
    Check("quad_var_no_news", "quadratic variation without news", quad_var_no_news, None, True),
    Check("unit_claim", "unit claim price error", unit_claim_price, None, True),
)


def run_check(check: Check, seed: int = 20240601) -> CheckResult:
    t0 = time.perf_counter()
    try:
        value, bound, ok, detail = check.fn(seed)
    except Exception as exc:  # a crash is a failed check, not a crashed suite
        return CheckResult(check.key, check.title, False, float("nan"), float("nan"),
                           time.perf_counter() - t0, f"{type(exc).__name__}: {exc}")
    runtime = time.perf_counter() - t0
    if check.budget is not None and runtime > check.budget:
        ok = False
        detail = f"{detail}; over the {check.budget:.0f} s budget"
    return CheckResult(check.key, check.title, bool(ok), float(value), float(bound), runtime, detail)


def run_suite(quick: bool = False, seed: int = 20240601, only=None, report=None) -> list:
    """Run the acceptance checks (quick: only the fast deterministic tier)."""
    checks = [c for c in (*ACCEPTANCE, *SANITY) if not quick or c.quick]
    if only:
        checks = [c for c in checks if c.key in only or c.key.split("_")[0] in only]
    results = []
    for c in checks:
        r = run_check(c, seed)
        if report is not None:
            report(r)
        results.append(r)
    return results
