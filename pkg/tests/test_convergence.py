"""Total-variation estimation and the four empirical convergence probes."""

import math

import numpy as np
import pytest
from scipy.stats import norm

from conftest import free_force, quadratic_force
from langevin_kit.convergence import (
    EstimationError,
    HistogramSpec,
    InsufficientSignalError,
    TvEstimate,
    estimate_tv,
    fit_exponential_decay,
    fit_geometric_rate,
    minorization_probe,
    solve_poisson,
    stationary_moment_bias,
)
import langevin_kit.convergence as convergence
from langevin_kit.core import ContractViolation, ForceModel, State
from langevin_kit.schemes import SchemeKind, SchemeParams


def test_histogram_spec_defaults_and_validation():
    spec = HistogramSpec()
    assert spec.bins_per_axis == 64
    assert spec.box == 6.0
    assert len(spec.edges()) == 65
    assert spec.edges()[0] == -6.0 and spec.edges()[-1] == 6.0
    with pytest.raises(ContractViolation):
        HistogramSpec(bins_per_axis=1)
    with pytest.raises(ContractViolation):
        HistogramSpec(box=0.0)


def test_tv_identical_and_disjoint():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((5000, 2))
    assert estimate_tv(a, a).value == 0.0
    left = np.full((1000, 1), -3.0)
    right = np.full((1000, 1), 3.0)
    assert estimate_tv(left, right).value == pytest.approx(2.0)
    # mass beyond the box is lumped into the boundary cells
    assert estimate_tv(np.full((100, 1), 7.0), np.full((100, 1), 100.0)).value == 0.0


def test_tv_two_gaussians_matches_analytic():
    rng = np.random.default_rng(6)
    a = rng.standard_normal((10**6, 1))
    b = rng.standard_normal((10**6, 1)) + 1.0
    est = estimate_tv(a, b)
    exact = 2.0 * (2.0 * norm.cdf(0.5) - 1.0)
    assert abs(est.value - exact) < 0.02
    assert est.std_error < 0.01


def test_tv_symmetry_and_triangle():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((2 * 10**4, 1))
    b = rng.standard_normal((2 * 10**4, 1)) + 0.5
    c = rng.standard_normal((2 * 10**4, 1)) + 1.0
    ab = estimate_tv(a, b).value
    ba = estimate_tv(b, a).value
    assert ab == ba
    # the histogram distance is a metric on the empirical laws, so the
    # triangle inequality holds exactly, not just within noise
    assert estimate_tv(a, c).value <= ab + estimate_tv(b, c).value + 1e-12


def test_tv_input_validation():
    good = np.zeros((10, 1))
    with pytest.raises(ContractViolation):
        estimate_tv(np.empty((0, 1)), good)
    with pytest.raises(ContractViolation):
        estimate_tv(good, np.zeros((10, 2)))
    with pytest.raises(ContractViolation):
        TvEstimate(value=2.5, std_error=0.0, bins=HistogramSpec())


def test_minorization_same_point_overlap():
    # with no force and a vanishing ball the two kernels coincide, so the
    # probe sees full overlap up to histogram noise
    free = free_force()
    res = minorization_probe(
        SchemeKind.EULER_MARUYAMA,
        SchemeParams(kappa=1.0, sigma=1.0, gamma=0.1, force=free),
        0.5,
        1e-6,
        [0.1],
        pairs=1,
        mc=4000,
        seed=0,
    )
    assert len(res) == 1
    assert res[0].epsilon > 0.95


def test_minorization_em_quadratic(quadratic):
    params = SchemeParams(kappa=1.0, sigma=1.0, gamma=0.05, force=quadratic)
    grid = [0.05, 0.025]
    res = minorization_probe(
        SchemeKind.EULER_MARUYAMA, params, 0.5, 1.0, grid, pairs=4, mc=2000, seed=0
    )
    eps = [r.epsilon for r in res]
    assert all(e > 0.0 for e in eps)
    assert max(eps) / min(eps) < 2.0
    assert [r.gamma for r in res] == grid
    assert all(r.pair_count == 4 for r in res)
    again = minorization_probe(
        SchemeKind.EULER_MARUYAMA, params, 0.5, 1.0, grid, pairs=4, mc=2000, seed=0
    )
    assert eps == [r.epsilon for r in again]


def test_minorization_validation(quadratic):
    params = SchemeParams(kappa=1.0, sigma=1.0, gamma=0.05, force=quadratic)
    with pytest.raises(ContractViolation):
        minorization_probe(SchemeKind.EULER_MARUYAMA, params, 0.0, 1.0, [0.05], 2, 100)
    with pytest.raises(ContractViolation):
        minorization_probe(SchemeKind.EULER_MARUYAMA, params, 0.5, -1.0, [0.05], 2, 100)
    with pytest.raises(ContractViolation):
        minorization_probe(SchemeKind.EULER_MARUYAMA, params, 0.5, 1.0, [0.05], 0, 100)


def test_minorization_divergence_names_the_pair():
    anti = ForceModel(
        b=lambda x: 4.0 * x,
        lipschitz=4.0,
        potential=lambda x: -2.0 * np.sum(np.square(x), axis=-1),
        grad_potential=lambda x: -4.0 * x,
        label="anti-restoring",
    )
    params = SchemeParams(kappa=1.0, sigma=1.0, gamma=0.1, force=anti)
    with pytest.raises(EstimationError, match="pair 0"):
        minorization_probe(
            SchemeKind.EULER_MARUYAMA, params, 25.0, 1.0, [0.1], pairs=1, mc=50, seed=0
        )


def test_exponential_fit_exact_recovery():
    times = np.linspace(0.25, 3.0, 12)
    prefactor, rho, r_squared = fit_exponential_decay(times, 2.0 * np.exp(-times))
    assert prefactor == pytest.approx(2.0, abs=1e-6)
    assert rho == pytest.approx(math.exp(-1.0), abs=1e-6)
    assert r_squared == 1.0
    with pytest.raises(ContractViolation):
        fit_exponential_decay(times, np.ones(3))
    with pytest.raises(ContractViolation):
        fit_exponential_decay([1.0, 2.0], [1.0, 0.0])


def test_rate_fit_validation(quadratic):
    params = SchemeParams(kappa=1.0, sigma=1.0, gamma=0.05, force=quadratic)
    start = State(np.array([5.0]), np.array([0.0]))
    with pytest.raises(ContractViolation):
        fit_geometric_rate(SchemeKind.EULER_MARUYAMA, params, start, 0.0, 8.0, 100)
    with pytest.raises(ContractViolation):
        fit_geometric_rate(SchemeKind.EULER_MARUYAMA, params, start, 0.1, 2.0, 100)
    wide = State(np.array([5.0, 0.0]), np.array([0.0, 0.0]))
    with pytest.raises(ContractViolation):
        fit_geometric_rate(SchemeKind.EULER_MARUYAMA, params, wide, 0.1, 8.0, 100)
    with pytest.raises(ContractViolation):
        fit_geometric_rate(SchemeKind.EULER_MARUYAMA, params, start, 0.1, 8.0, 1)


def test_rate_fit_short_reference(quadratic, monkeypatch):
    """Exercise the fit against a shortened stationary reference run.

    The production-length reference (1e7 steps) belongs to the acceptance
    suite; a 4e5-step stand-in keeps the shape of both the successful fit
    and the insufficient-signal failure.
    """
    monkeypatch.setattr(convergence, "_REFERENCE_STEPS", 400_000)
    monkeypatch.setattr(convergence, "_REFERENCE_BURN_IN", 4_000)
    params = SchemeParams(kappa=1.0, sigma=1.0, gamma=0.05, force=quadratic)
    # starting essentially at stationarity leaves nothing above the floor
    near = State(np.array([0.05]), np.array([0.0]))
    with pytest.raises(InsufficientSignalError):
        fit_geometric_rate(SchemeKind.EULER_MARUYAMA, params, near, 0.1, 3.0, mc=256, seed=4)
    far = State(np.array([5.0]), np.array([0.0]))
    rate = fit_geometric_rate(
        SchemeKind.EULER_MARUYAMA, params, far, 0.1, 8.0, mc=3 * 10**4, seed=4
    )
    assert 0.0 < rate.rho < 1.0
    assert rate.r_squared > 0.9
    assert rate.prefactor > 0.0
    assert rate.horizon == 8.0
    assert rate.times.shape == rate.values.shape


def test_moment_bias_exact_velocity_law():
    # the exponential integrator samples the OU velocity law exactly, so
    # with no force its bias is statistical noise and flagged as such
    free = free_force()
    out = stationary_moment_bias(
        SchemeKind.EXP_EULER,
        SchemeParams(kappa=1.0, sigma=1.0, gamma=0.4, force=free),
        (0.4, 0.2),
        mc=4 * 10**4,
        seed=8,
    )
    assert sorted(out) == ["v"]
    assert out["v"].inconclusive
    assert abs(out["v"].bias_coarse) < 3.0 * out["v"].se_coarse


def test_moment_bias_em_first_order(quadratic):
    out = stationary_moment_bias(
        SchemeKind.EULER_MARUYAMA,
        SchemeParams(kappa=1.0, sigma=1.0, gamma=0.4, force=quadratic),
        (0.4, 0.2),
        mc=2 * 10**5,
        seed=8,
    )
    assert sorted(out) == ["v", "x"]
    for bias in out.values():
        assert not bias.inconclusive
        assert bias.target == pytest.approx(0.5)
        assert bias.bias_coarse > 0.0 and bias.bias_fine > 0.0
        # halving gamma should land the bias ratio in first-order territory
        assert 1.5 < bias.ratio < 4.5


def test_moment_bias_validation(quadratic):
    params = SchemeParams(kappa=1.0, sigma=1.0, gamma=0.4, force=quadratic)
    with pytest.raises(ContractViolation):
        stationary_moment_bias(SchemeKind.EULER_MARUYAMA, params, (0.1, 0.2), 1000)
    with pytest.raises(ContractViolation):
        stationary_moment_bias(SchemeKind.EULER_MARUYAMA, params, (0.2, 0.2), 1000)


def test_poisson_zero_phi(quadratic):
    rep = solve_poisson(
        SchemeKind.EULER_MARUYAMA,
        SchemeParams(kappa=1.0, sigma=1.0, gamma=0.1, force=quadratic),
        lambda x, v: np.zeros(x.shape[0]),
        5,
        np.array([[0.0, 0.0], [1.0, -1.0]]),
        mc=500,
        seed=1,
    )
    np.testing.assert_array_equal(rep.psi, 0.0)
    np.testing.assert_array_equal(rep.residual, 0.0)
    assert rep.tail_fraction == 0.0
    assert not rep.warnings


def test_poisson_ou_velocity_chain():
    """phi = v on the force-free chain has psi(v) = gamma v / (1 - tau)."""
    free = free_force()
    gam, tau = 0.1, 0.9
    rep = solve_poisson(
        SchemeKind.EULER_MARUYAMA,
        SchemeParams(kappa=1.0, sigma=1.0, gamma=gam, force=free),
        lambda x, v: v[:, 0],
        80,
        np.array([[0.0, 2.0], [0.0, -1.0]]),
        mc=3 * 10**4,
        seed=2,
    )
    for j, point in enumerate(rep.eval_points):
        exact = gam * point[1] / (1.0 - tau)
        assert abs(rep.psi[j] - exact) < 3.0 * rep.psi_se[j]
        assert rep.residual[j] < 3.0 * rep.residual_se[j]
    assert rep.tail_fraction < 0.05
    assert not rep.warnings


def test_poisson_well_residual_shrinks_with_truncation(quadratic):
    params = SchemeParams(kappa=1.0, sigma=1.0, gamma=0.1, force=quadratic)
    pts = np.array([[2.0, 0.0], [-1.0, 1.0]])

    def run(k, mc=10**4):
        return solve_poisson(
            SchemeKind.EULER_MARUYAMA, params, lambda x, v: x[:, 0], k, pts, mc=mc, seed=3
        )

    short, mid, long = run(20), run(60), run(150)
    assert np.all(short.residual > mid.residual)
    assert np.all(mid.residual > long.residual)
    # at K = 150 the omitted term has decayed below the Monte-Carlo floor
    assert np.all(long.residual < 3.0 * long.residual_se)
    assert not long.warnings
    again = run(150)
    np.testing.assert_array_equal(long.psi, again.psi)


def test_poisson_tail_warning(quadratic):
    rep = solve_poisson(
        SchemeKind.EULER_MARUYAMA,
        SchemeParams(kappa=1.0, sigma=1.0, gamma=0.1, force=quadratic),
        lambda x, v: x[:, 0],
        5,
        np.array([[2.0, 0.0], [-1.0, 1.0]]),
        mc=4000,
        seed=3,
    )
    assert rep.tail_fraction > 0.05
    assert any("increase truncation_k" in w for w in rep.warnings)


def test_poisson_validation(quadratic):
    params = SchemeParams(kappa=1.0, sigma=1.0, gamma=0.1, force=quadratic)
    phi = lambda x, v: x[:, 0]
    pts = np.array([[0.0, 0.0]])
    with pytest.raises(ContractViolation):
        solve_poisson(SchemeKind.EULER_MARUYAMA, params, phi, 0, pts, mc=100)
    with pytest.raises(ContractViolation):
        solve_poisson(SchemeKind.EULER_MARUYAMA, params, phi, 5, pts, mc=1)
    with pytest.raises(ContractViolation):
        solve_poisson(SchemeKind.EULER_MARUYAMA, params, phi, 5, np.array([[0.0, 0.0, 0.0]]), mc=100)
