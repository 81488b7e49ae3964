import math

import numpy as np
import pytest

from credfilter.galerkin import assemble_matrices, build_basis, filter_expectation, initial_state
from credfilter.model import ModelParams, law_from_params, preset_params
from credfilter.simulator import (
    chunk_rngs,
    dividend_steps,
    run_filter_batch,
    run_filter_path,
    simulate_truth,
    simulate_truth_batch,
)

MIXTURE_DEFAULT_1 = 0.009021212113434896  # 1 - pi0-averaged first-passage survival


def test_degenerate_volatility():
    p = ModelParams(sigma=1e-9, r=0.0, c1=4.0, div_spacing=1e3)
    tb = simulate_truth_batch(p, law_from_params(ModelParams()), 1.0, 1e-2, 5, np.random.default_rng(0), v0=35.0)
    np.testing.assert_allclose(tb.V, 35.0, rtol=1e-6)
    assert np.all(np.isinf(tb.tau))
    a = 4.0 * math.log(35.0 / 20.0)
    # observation drift accumulates a(V0) t plus Brownian noise
    Z = tb.dZ[:, 0].sum(axis=0)
    assert np.all(np.abs(Z - a) < 5.0)


def test_default_frequency_matches_mixture():
    p = ModelParams(div_spacing=1e3)
    n = 100_000
    tb = simulate_truth_batch(p, law_from_params(p), 1.0, 1e-2, n, np.random.default_rng(1))
    freq = float(np.mean(tb.Y[-1]))
    se = math.sqrt(MIXTURE_DEFAULT_1 * (1 - MIXTURE_DEFAULT_1) / n)
    assert abs(freq - MIXTURE_DEFAULT_1) < 3 * se


def test_truth_invariants(params, law):
    tb = simulate_truth_batch(params, law, 5.0, 1e-2, 2000, np.random.default_rng(2))
    assert np.all(np.diff(tb.Y, axis=0) >= 0)
    dead = tb.Y[:-1] == 1
    np.testing.assert_array_equal(tb.V[1:][dead], tb.V[:-1][dead])
    k = tb.div_steps
    paid = tb.div[k] > 0
    # the dividend never exceeds the surplus: V stays above K after payment
    assert np.all(tb.V[k][paid] > params.K)
    np.testing.assert_array_equal(tb.div[k][tb.Y[k] == 1], 0.0)
    assert np.all(tb.V[tb.Y == 0] > params.K)


def test_reproducible(params, law):
    a = simulate_truth_batch(params, law, 1.0, 1e-2, 50, np.random.default_rng(9))
    b = simulate_truth_batch(params, law, 1.0, 1e-2, 50, np.random.default_rng(9))
    for f in ("V", "Y", "dZ", "div", "tau"):
        np.testing.assert_array_equal(getattr(a, f), getattr(b, f))


def test_chunk_rngs_independent_of_chunking():
    a = [g.standard_normal(3) for g, _ in chunk_rngs(5, 10, 4)]
    b = [g.standard_normal(3) for g, _ in chunk_rngs(5, 10, 4)]
    np.testing.assert_array_equal(np.concatenate(a), np.concatenate(b))
    assert [n for _, n in chunk_rngs(5, 10, 4)] == [4, 4, 2]


def test_grid_must_divide_dividend_spacing(params, law):
    with pytest.raises(ValueError):
        simulate_truth_batch(params, law, 1.0, 0.3, 5, np.random.default_rng(0))
    with pytest.raises(ValueError):
        simulate_truth_batch(params, law, -1.0, 0.1, 5, np.random.default_rng(0))


def test_dividend_steps(params):
    assert dividend_steps(params, 0.0, 3.0, 0.01) == {100: 1.0, 200: 2.0, 300: 3.0}
    assert dividend_steps(params, 1.0, 2.5, 0.5) == {2: 2.0}


def test_filter_path_stock(params, law, mats, basis, grids):
    stock = grids["stock"]
    truth = simulate_truth(params, law, 3.0, 1e-2, np.random.default_rng(5))
    fp = run_filter_path(truth, {"record_every": 10}, mats, basis, stock, law=law)
    alive = truth.Y[::10] == 0
    assert np.all(fp.S[~alive] == 0.0)
    assert np.all(fp.S[alive] > 0.0)
    for st, S in zip(fp.states, fp.S):
        if S > 0:
            ev = filter_expectation(st, mats, basis.nodes, params.N)
            assert S < ev


def test_stock_drops_to_zero_at_default(params, law, mats, grids):
    p = preset_params("near_default_news")
    m = assemble_matrices(build_basis(p.K, p.N, 48), p)
    tb = simulate_truth_batch(p, law, 3.0, 1e-2, 300, np.random.default_rng(6))
    fb = run_filter_batch(tb, m, law, grids["stock"])
    died = np.isfinite(tb.tau)
    assert died.any()
    for j in np.nonzero(died)[0]:
        k = int(round(tb.tau[j] / 1e-2))
        assert fb.S[k - 1, j] > 0.0
        assert np.all(fb.S[k:, j] == 0.0)


def test_batch_matches_path(params, law, mats, basis, grids):
    tb = simulate_truth_batch(params, law, 1.5, 1e-2, 3, np.random.default_rng(7))
    fb = run_filter_batch(tb, mats, law, grids["stock"], record_every=5)
    fp = run_filter_path(tb.path(1), {"record_every": 5}, mats, basis, grids["stock"], law=law)
    np.testing.assert_allclose(fp.S, fb.S[:, 1], rtol=1e-12)
    np.testing.assert_allclose(fp.lam, fb.lam[:, 1], rtol=1e-12, atol=1e-15)


def test_path_csv(params, law, mats, basis, grids, tmp_path):
    truth = simulate_truth(params, law, 0.2, 1e-2, np.random.default_rng(5))
    fp = run_filter_path(truth, None, mats, basis, grids["stock"], law=law,
                         claims={"survival_1": grids["survival_1"]})
    fp.to_csv(tmp_path / "x.csv", truth=truth, header="seed 5")
    lines = (tmp_path / "x.csv").read_text().splitlines()
    assert lines[0] == "# seed 5"
    assert lines[1].startswith("t,V,Y,S,lambda")
    assert "survival_1" in lines[1]
    assert len(lines) == 2 + 21
