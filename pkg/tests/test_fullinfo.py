import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from credfilter.fullinfo import (
    ClaimSpec,
    apply_dividend_condition,
    blackcox_survival,
    mc_dividend_value,
    solve_fullinfo,
)
from credfilter.model import ModelError, ModelParams, law_from_params

# 2 Phi(ln(1.25) / 0.2) - 1: with r - sigma^2/2 = 0 the first-passage law is driftless
BLACKCOX_25_1 = 0.7354570325599146


def test_blackcox_frozen():
    assert blackcox_survival(25.0, 1.0, ModelParams()) == pytest.approx(BLACKCOX_25_1, rel=1e-12)


def test_blackcox_limits(params):
    assert blackcox_survival(params.K, 1.0, params) == 0.0
    assert blackcox_survival(30.0, 0.0, params) == 1.0
    assert blackcox_survival(30.0, 1e-8, params) == pytest.approx(1.0, abs=1e-12)


def test_survival_pde_matches_blackcox():
    p = ModelParams(div_spacing=1e3)
    g = solve_fullinfo(ClaimSpec.survival(1.0), p, 400, 400)
    want = math.exp(-p.r) * BLACKCOX_25_1
    assert g.interp(0.0, 25.0) == pytest.approx(want, rel=1e-3)


def test_default_pde_matches_blackcox():
    # without dividends the default claim is the discounted first-passage density
    p = ModelParams(div_spacing=1e3)
    g = solve_fullinfo(ClaimSpec.default(1.0), p, 400, 400)
    ts = np.linspace(0.0, 1.0, 4001)
    F = 1.0 - blackcox_survival(np.full(ts.size, 25.0), ts, p)
    want = float(np.sum(np.exp(-p.r * 0.5 * (ts[1:] + ts[:-1])) * np.diff(F)))
    assert g.interp(0.0, 25.0) == pytest.approx(want, rel=2e-3)


def test_boundary_and_terminal_values(grids, params):
    s2, d5 = grids["survival_2"], grids["default_5"]
    for t in (0.0, 0.5, 1.0, 1.5):
        assert s2.at(t)[0] == 0.0
        assert d5.at(t)[0] == 1.0
    np.testing.assert_array_equal(s2.at(2.0)[1:], 1.0)
    np.testing.assert_array_equal(d5.at(5.0)[1:], 0.0)


def test_monotone_and_bounded(grids, params):
    for name in ("survival_1", "survival_2", "survival_3"):
        g = grids[name]
        T = g.claim.maturity
        for j, t in enumerate(g.t_nodes):
            h = g.values[j]
            assert np.all(np.diff(h) >= -1e-6), name
            assert np.all(h >= -1e-12)
            # implicit start-up steps after each dividend date discount by
            # (1 + r dt / 4)^-2 instead of exp(-r dt / 2): an O((r dt)^2) overshoot
            assert np.all(h <= math.exp(-params.r * (T - t)) + 1e-6)
    for name in ("default_2", "default_5"):
        h = grids[name].values
        assert np.all(h >= -1e-12) and np.all(h <= 1 + 1e-12)
        assert np.all(np.diff(h, axis=1) <= 1e-12)


def test_survival_plus_default_below_one(grids):
    s, d = grids["survival_2"], grids["default_2"]
    for t in (0.0, 0.7, 1.3):
        tot = s.at(t) + np.interp(s.v_nodes, d.v_nodes, d.at(t))
        assert np.all(tot <= 1.0 + 1e-10)


def test_stock_properties(grids, params):
    g = grids["stock"]
    v = g.v_nodes
    assert np.all(g.values[:, 0] == 0.0)
    assert np.all(g.values[:, 1:] < v[None, 1:])
    assert np.all(np.diff(g.values, axis=1) >= -1e-12)
    assert g.info["periodicity_gap"] < 1e-7
    # period extension
    np.testing.assert_allclose(g.at(0.3), g.at(2.3), rtol=1e-14)


def test_refinement_order():
    p = ModelParams(div_spacing=1e3)
    vals = [np.array(solve_fullinfo(ClaimSpec.survival(1.0), p, n, n).interp(0.0, [25.0, 35.0, 60.0]))
            for n in (100, 200, 400)]
    e1 = np.max(np.abs(vals[1] - vals[0]))
    e2 = np.max(np.abs(vals[2] - vals[1]))
    assert math.log2(e1 / e2) >= 1.8


def test_dividend_condition_constants(params, law, grids):
    v = grids["survival_2"].v_nodes
    ones = np.ones_like(v)
    surv = ClaimSpec.survival(2.0)
    np.testing.assert_allclose(apply_dividend_condition(ones, surv, params, law, v), ones, atol=1e-12)
    out = apply_dividend_condition(np.zeros_like(v), ClaimSpec.stock(), params, law, v)
    np.testing.assert_allclose(out, params.div_mean * (v - params.K), rtol=1e-12, atol=1e-14)


@given(st.floats(0.0, 5.0), st.floats(-3.0, 3.0))
@settings(max_examples=30, deadline=None)
def test_dividend_condition_linear(a, b):
    # h(v) = a + b v is shifted by the mean dividend exactly
    p = ModelParams()
    law = law_from_params(p)
    v = np.linspace(p.K, p.N, 201)
    out = apply_dividend_condition(a + b * v, ClaimSpec.survival(1.0), p, law, v)
    want = a + b * (v - p.div_mean * (v - p.K))
    want[0] = a + b * v[0]
    np.testing.assert_allclose(out, want, rtol=1e-10, atol=1e-10)


def _remainder(v0, n_paths, periods, p, law, rng):
    """Monte Carlo of exp(-r H) V_H: the value not yet paid out after H periods."""
    V = np.full(n_paths, v0)
    for _ in range(periods):
        V = V * np.exp(p.r - 0.5 * p.sigma**2 + p.sigma * rng.standard_normal(n_paths))
        V = V - rng.beta(law.alpha, law.beta, n_paths) * np.maximum(V - p.K, 0.0)
    x = math.exp(-p.r * periods) * V
    return x.mean(), x.std(ddof=1) / math.sqrt(n_paths)


@pytest.mark.parametrize("r, periods", [(1.0, 60), (0.02, 200)])
def test_dividend_value_truncated_identity(law, r, periods):
    # paid dividends plus the discounted value left at H add up to v0
    p = ModelParams(r=r)
    est, se = mc_dividend_value(35.0, 20_000, periods, p, law, np.random.default_rng(4))
    rem, se_rem = _remainder(35.0, 20_000, periods, p, law, np.random.default_rng(40))
    assert abs(est + rem - 35.0) < 3 * math.hypot(se, se_rem)


def test_dividend_value_identity_long_horizon(params, law):
    est, se = mc_dividend_value(35.0, 100_000, 1000, params, law, np.random.default_rng(5))
    assert abs(est - 35.0) < 3 * se


@pytest.mark.xfail(strict=True, reason="200 periods leave about 1 unit of value undistributed;"
                                       " the truncation bias is about 3 standard errors")
def test_dividend_value_identity_200_periods(params, law):
    est, se = mc_dividend_value(35.0, 100_000, 200, params, law, np.random.default_rng(5))
    assert abs(est - 35.0) < 3 * se


@pytest.mark.xfail(strict=True, reason="discounted V decays through the payout ratio, not through r;"
                                       " after 60 periods about 35 * 0.98**60 remains unpaid")
def test_dividend_value_identity_fast_discounting(law):
    est, se = mc_dividend_value(35.0, 20_000, 60, ModelParams(r=1.0), law, np.random.default_rng(4))
    assert abs(est - 35.0) < 3 * se


def test_dividend_value_bad_input(params, law):
    with pytest.raises(ValueError):
        mc_dividend_value(35.0, 0, 10, params, law, np.random.default_rng(0))
    with pytest.raises(ModelError):
        mc_dividend_value(35.0, 10, 10, params.with_(kappa=0), law, np.random.default_rng(0))


def test_claim_validation(params):
    with pytest.raises(ValueError):
        ClaimSpec.survival(0.0)
    with pytest.raises(ValueError):
        ClaimSpec("stock", 1.0)
    with pytest.raises(ValueError):
        solve_fullinfo(ClaimSpec.survival(1.0), params, 8, 100)
    with pytest.raises(ModelError):
        solve_fullinfo(ClaimSpec.stock(), params.with_(kappa=0), 50, 50)


def test_grid_csv(grids, tmp_path):
    path = tmp_path / "h.csv"
    grids["survival_1"].to_csv(path, header="seed 1")
    lines = path.read_text().splitlines()
    assert lines[0] == "# seed 1" and lines[1] == "t,v,h"
