import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from credfilter.galerkin import assemble_matrices, build_basis, default_intensity, initial_state, propagate_filter
from credfilter.model import ModelParams, law_from_params
from credfilter.particles import (
    FilterCollapse,
    ParticleCloud,
    dividend_reweight,
    effective_sample_size,
    init_cloud,
    kde_density,
    maybe_resample,
    run_particle_filter,
    step_cloud,
    survival_probability,
    systematic_resample,
)

NO_NEWS = ModelParams(c1=0.0, c2=0.0, div_spacing=1e3)
# P(no default by T = 1) for V0 ~ pi0 without dividends: the pi0-average of the
# first-passage survival probability, by adaptive quadrature
MIXTURE_SURVIVAL_1 = 0.9909787878865652


def test_survival_matches_mixture_oracle():
    n = 50_000
    tr = run_particle_filter(np.zeros((100, 2)), [], n, NO_NEWS, law_from_params(NO_NEWS),
                             np.random.default_rng(11), 1e-2)
    se = math.sqrt(MIXTURE_SURVIVAL_1 * (1 - MIXTURE_SURVIVAL_1) / n)
    assert abs(tr.survival_prob[-1] - MIXTURE_SURVIVAL_1) < 3 * se


def test_weights_stay_uniform_without_news():
    rng = np.random.default_rng(1)
    cloud = init_cloud(2000, NO_NEWS, rng)
    for _ in range(20):
        step_cloud(cloud, np.array([0.4, -0.2]), 1e-2, NO_NEWS, rng)
    w = cloud.weights
    np.testing.assert_allclose(w, 1.0 / cloud.n, rtol=1e-12)


def test_init_cloud_minimum_size(params):
    with pytest.raises(ValueError):
        init_cloud(10, params, np.random.default_rng(0))


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_systematic_resample_order_invariant(seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(20, 60, 300)
    w = rng.exponential(size=300)
    perm = rng.permutation(300)
    u = rng.uniform()
    a = systematic_resample(x, w / w.sum(), u)
    b = systematic_resample(x[perm], (w / w.sum())[perm], u)
    np.testing.assert_array_equal(np.sort(a), np.sort(b))


def test_systematic_resample_counts():
    x = np.arange(4.0)
    w = np.array([0.5, 0.25, 0.125, 0.125])
    out = systematic_resample(x, w, 0.5)
    # points 1/8, 3/8, 5/8, 7/8 against cumulative weights 1/2, 3/4, 7/8, 1
    assert [int(np.sum(out == k)) for k in range(4)] == [2, 1, 0, 1]


def test_effective_sample_size():
    assert effective_sample_size(np.ones(10)) == pytest.approx(10.0)
    assert effective_sample_size(np.array([1.0, 0.0, 0.0])) == pytest.approx(1.0)
    assert effective_sample_size(np.zeros(3)) == 0.0


def test_absorbed_mass_nondecreasing(params, law):
    rng = np.random.default_rng(2)
    cloud = init_cloud(5000, params, rng)
    mass = []
    for k in range(200):
        step_cloud(cloud, np.zeros(2), 1e-2, params, rng)
        if k == 99:
            dividend_reweight(cloud, 0.3, params, law, _ref(params))
        maybe_resample(cloud, params, rng.uniform())
        mass.append(1.0 - survival_probability(cloud, params))
        assert np.isfinite(effective_sample_size(cloud.weights))
    assert np.all(np.diff(mass) >= -1e-12)


def _ref(params):
    from credfilter.model import default_reference
    return default_reference(params)


def test_collapse_detected(params):
    cloud = ParticleCloud(np.full(1000, 30.0), np.full(1000, -np.inf))
    with pytest.raises(FilterCollapse):
        cloud.weights


def test_dividend_date_off_grid_rejected(params, law):
    with pytest.raises(ValueError):
        run_particle_filter(np.zeros((10, 2)), [(0.055, 0.3)], 1000, params, law,
                            np.random.default_rng(0), 1e-2)


def test_kde_intensity_matches_galerkin():
    # a density started close to the barrier, no news and no dividends
    p = NO_NEWS
    law = law_from_params(p)
    f = lambda x: np.where(x > p.K, np.exp(-0.5 * (np.log(np.maximum(x - p.K, 1e-300) / 3.0) / 0.4) ** 2)
                           / (np.maximum(x - p.K, 1e-300) * 0.4 * math.sqrt(2 * math.pi)), 0.0)
    mats = assemble_matrices(build_basis(p.K, p.N, 48), p)
    s = initial_state(mats, density=f)
    for _ in range(250):
        s = propagate_filter(s, np.zeros(2), 1e-3, mats)
    lam_gal = float(default_intensity(s, mats))
    rng = np.random.default_rng(3)
    n = 20_000
    cloud = ParticleCloud(p.K + 3.0 * np.exp(0.4 * rng.standard_normal(n)), np.zeros(n))
    tr = run_particle_filter(np.zeros((250, 2)), [], n, p, law, rng, 1e-3, cloud=cloud)
    assert abs(tr.intensity[-1] - lam_gal) < 0.25 * lam_gal


def test_kde_density_integrates_to_interior_share(params):
    rng = np.random.default_rng(4)
    cloud = init_cloud(20_000, params, rng)
    grid = np.linspace(params.K, params.N, 4001)
    dens = kde_density(cloud, grid, params)
    assert np.all(dens >= -1e-15)
    assert np.trapezoid(dens, grid) == pytest.approx(1.0, abs=2e-3)


def test_trajectory_csv(params, law, tmp_path):
    tr = run_particle_filter(np.zeros((5, 2)), [], 1000, params, law, np.random.default_rng(0), 1e-2,
                             grid=np.linspace(params.K, params.N, 11))
    tr.to_csv(tmp_path / "p.csv", header="x")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[1] == "t,x,density,survival_prob,intensity"
    assert len(lines) == 2 + 11
