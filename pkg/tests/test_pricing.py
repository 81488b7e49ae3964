import math

import numpy as np
import pytest

from credfilter.fullinfo import ClaimSpec, FullInfoGrid
from credfilter.galerkin import (
    FilterError,
    FilterState,
    assemble_matrices,
    build_basis,
    default_intensity,
    initial_state,
)
from credfilter.model import ModelParams, law_from_params
from credfilter.pricing import (
    HedgeConfig,
    MCConfig,
    OptionSpec,
    hedge_discrete,
    instantaneous_quad_var,
    price_debt_claim,
    price_option_mc,
)
from credfilter.simulator import simulate_truth_batch


def _gauss(mu, sd):
    return lambda x: np.exp(-0.5 * ((x - mu) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))


def _unit_grid(p):
    v = np.exp(np.linspace(math.log(p.K), math.log(p.N), 50))
    return FullInfoGrid(np.array([0.0, 1.0]), v, np.ones((2, v.size)), ClaimSpec.survival(1.0))


def test_near_dirac_price(mats, grids):
    g = grids["survival_2"]
    s = initial_state(mats, density=_gauss(35.0, 0.5))
    assert float(price_debt_claim(s, g, mats)) == pytest.approx(float(g.interp(0.0, 35.0)), abs=1e-3)


def test_unit_claim_price(mats, params):
    s = initial_state(mats)
    assert float(price_debt_claim(s, _unit_grid(params), mats)) == pytest.approx(1.0, abs=1e-13)


def test_survival_price_vs_simulation(mats, params, law, grids):
    n = 100_000
    tb = simulate_truth_batch(params, law, 1.0, 1e-2, n, np.random.default_rng(21))
    x = math.exp(-params.r) * (tb.Y[-1] == 0)
    se = x.std(ddof=1) / math.sqrt(n)
    price = float(price_debt_claim(initial_state(mats), grids["survival_1"], mats))
    assert abs(price - x.mean()) < 3 * se


def test_price_outside_grid(mats, grids):
    s = initial_state(mats, t=3.0)
    with pytest.raises(ValueError):
        price_debt_claim(s, grids["survival_2"], mats)


def _cfg(law, **kw):
    return MCConfig(law=law, n_paths=kw.pop("n_paths", 2000), dt=kw.pop("dt", 2e-2), **kw)


def test_riskless_option(mats, law, grids):
    opt = OptionSpec(lambda p: np.ones(p.shape[1]), 1.0, (grids["survival_2"],), g_at_zero=1.0)
    res = price_option_mc(initial_state(mats), opt, _cfg(law), mats, rng=np.random.default_rng(1))
    assert res.price == pytest.approx(math.exp(-mats.params.r), rel=1e-12)


@pytest.mark.parametrize("measure", ["guided", "reference"])
def test_survival_indicator_option(mats, law, grids, measure):
    # 1 on survival, 0 on default: surviving prices are positive, so 1{p > 0} is that payoff
    opt = OptionSpec(lambda p: (p[0] > 0).astype(float), 1.0, (grids["survival_2"],), g_at_zero=0.0)
    s = initial_state(mats)
    res = price_option_mc(s, opt, _cfg(law, n_paths=4000, measure=measure), mats,
                          rng=np.random.default_rng(2))
    want = float(price_debt_claim(s, grids["survival_1"], mats))
    assert abs(res.price - want) < 3 * res.std_error


def test_option_homogeneous(mats, law, grids):
    opt = OptionSpec.call(grids["stock"], 22.0, 0.5)
    s = initial_state(mats)
    a = price_option_mc(s, opt, _cfg(law), mats, rng=np.random.default_rng(3))
    b = price_option_mc(s.replace(psi=7.0 * s.psi), opt, _cfg(law), mats, rng=np.random.default_rng(3))
    assert b.price == pytest.approx(a.price, rel=1e-12)


def test_stock_martingale(mats, law, grids):
    # the stock pays no dividend before 0.5, so its discounted price is a martingale
    opt = OptionSpec(lambda p: p[0], 0.5, (grids["stock"],))
    s = initial_state(mats)
    res = price_option_mc(s, opt, _cfg(law, n_paths=4000), mats, rng=np.random.default_rng(4))
    S0 = float(price_debt_claim(s, grids["stock"], mats))
    assert abs(res.price - S0) < 3 * res.std_error


def test_option_errors(mats, law, grids):
    opt = OptionSpec.call(grids["stock"], 22.0, 0.5)
    s = initial_state(mats)
    with pytest.raises(ValueError):
        price_option_mc(s, opt, _cfg(law, n_paths=10), mats, rng=np.random.default_rng(0))
    with pytest.raises(FilterError):
        price_option_mc(s.replace(psi=0 * s.psi), opt, _cfg(law), mats, rng=np.random.default_rng(0))
    with pytest.raises(ValueError):
        OptionSpec(lambda p: p[0] + 1.0, 1.0, (grids["stock"],), g_at_zero=0.0)


def _slope_free_state(m):
    # coefficients on interior basis functions only: zero slope at K, so lambda = 0
    s = initial_state(m)
    psi = s.psi.copy()
    psi[:2] = 0.0
    return FilterState(0.0, psi)


def test_quad_var_no_news():
    p = ModelParams(c1=0.0, c2=0.0)
    m = assemble_matrices(build_basis(p.K, p.N, 48), p)
    s = _slope_free_state(m)
    assert float(default_intensity(s, m)) == 0.0
    from credfilter.fullinfo import solve_fullinfo
    g = solve_fullinfo(ClaimSpec.survival(1.0), p, 50, 200)
    np.testing.assert_array_equal(instantaneous_quad_var(s, [g], m), 0.0)


def test_quad_var_default_term_only():
    p = ModelParams(c1=0.0, c2=0.0)
    m = assemble_matrices(build_basis(p.K, p.N, 48), p)
    from credfilter.fullinfo import solve_fullinfo
    g = solve_fullinfo(ClaimSpec.survival(1.0), p, 50, 200)
    s = initial_state(m, density=_gauss(24.0, 2.0))
    lam = float(default_intensity(s, m))
    assert lam > 0
    Pi = float(price_debt_claim(s, g, m))
    v = instantaneous_quad_var(s, [g], m)
    assert v[0, 0] == pytest.approx(lam * Pi**2, rel=1e-12)


def test_quad_var_psd(mats, law, grids):
    rng = np.random.default_rng(5)
    inst = [grids["survival_2"], grids["default_2"], grids["stock"]]
    base = initial_state(mats).psi
    for k in range(100):
        psi = base * rng.uniform(0.0, 2.0, mats.m) + rng.uniform(0, 1e-3, mats.m)
        s = FilterState(0.5, psi, 0.0, rng.uniform(0, 1e-3))
        v = instantaneous_quad_var(s, inst, mats, at_dividend=(k % 5 == 0), law=law)
        np.testing.assert_allclose(v, v.T, rtol=1e-12, atol=1e-15)
        assert np.linalg.eigvalsh(v).min() >= -1e-10 * max(1.0, np.abs(v).max())
        assert np.all(np.diag(v) >= 0.0)


def _hcfg(mats, law, **kw):
    return HedgeConfig(mats=mats, law=law, n_paths=kw.pop("n_paths", 1000), dt=kw.pop("dt", 1e-2), **kw)


def test_self_hedge(mats, law, grids):
    g = grids["survival_2"]
    rep = hedge_discrete(g, [g], np.linspace(0, 1, 5), _hcfg(mats, law), np.random.default_rng(6))
    np.testing.assert_allclose(rep.theta[:, 0], 1.0, atol=1e-8)
    assert rep.total_residual_risk < 1e-10
    assert rep.value_path_check < 1e-10


def test_zero_instruments(mats, law, grids):
    g = grids["survival_2"]
    rep = hedge_discrete(g, [], np.linspace(0, 1, 5), _hcfg(mats, law), np.random.default_rng(7))
    assert rep.theta.shape == (4, 0)
    # re-simulate the same paths to get the discounted price increments
    rep2 = hedge_discrete(g, [g], np.linspace(0, 1, 5), _hcfg(mats, law), np.random.default_rng(7))
    inc = rep2.gains[0]
    for j in range(4):
        alive = rep.cost[j] != 0.0
        x = inc[j][alive]
        assert rep.residual_risk[j] == pytest.approx(np.mean((x - x.mean()) ** 2), rel=1e-9)


def test_residuals_orthogonal(mats, law, grids):
    rep = hedge_discrete(grids["default_2"], [grids["survival_2"], grids["stock"]], np.linspace(0, 1, 3),
                         _hcfg(mats, law), np.random.default_rng(8))
    for j in range(2):
        c = rep.cost[j]
        scale = np.sqrt(np.mean(c * c)) + 1e-300
        assert abs(c.mean()) < 1e-10 * scale + 1e-14
        for i in range(2):
            g = rep.gains[i, j]
            assert abs(np.dot(c, g)) < 1e-9 * np.linalg.norm(c) * np.linalg.norm(g) + 1e-14


def test_rank_deficient_warns(mats, law, grids):
    g = grids["survival_2"]
    with pytest.warns(RuntimeWarning, match="rank-deficient"):
        rep = hedge_discrete(grids["default_2"], [g, g], np.linspace(0, 1, 3), _hcfg(mats, law),
                             np.random.default_rng(9))
    assert rep.warnings


def test_hedge_input_errors(mats, law, grids):
    g = grids["survival_1"]
    with pytest.raises(ValueError):
        hedge_discrete(g, [], [0.0], _hcfg(mats, law), np.random.default_rng(0))
    with pytest.raises(ValueError):
        hedge_discrete(g, [], [0.0, 2.0], _hcfg(mats, law), np.random.default_rng(0))
    with pytest.raises(ValueError):
        hedge_discrete(g, [], [0.0, 1.0], _hcfg(mats, law, n_paths=10), np.random.default_rng(0))


def test_hedge_csv(mats, law, grids, tmp_path):
    g = grids["survival_2"]
    rep = hedge_discrete(g, [g], np.linspace(0, 1, 3), _hcfg(mats, law), np.random.default_rng(6))
    rep.to_csv(tmp_path / "h.csv")
    head = (tmp_path / "h.csv").read_text().splitlines()[0]
    assert head == "date,theta_survival_2,eta,residual_risk"
