"""Energy functions, their bounding constants, and the drift machinery."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from conftest import free_force, quadratic_force
from langevin_kit.core import ContractViolation, ForceModel, NoiseDraw, State, step_ensemble
from langevin_kit.lyapunov import (
    LyapunovParams,
    derived_constants,
    estimate_drift,
    log_w_bar,
    noise_lipschitz_bound,
    phi_gamma,
    script_f,
    script_f_tilde,
    v_bar,
    v_cal,
    verify_d2,
    w_bar,
    w_gamma,
)
from langevin_kit.schemes import (
    SchemeKind,
    SchemeParams,
    a2_constant,
    as_general_scheme,
    gaussian_perturbation_estimator,
    vartheta_bar,
)

ALL_KINDS = list(SchemeKind)


def scheme_for(kind, gamma, kappa=1.0, sigma=1.0, force=None, d=2):
    force = quadratic_force() if force is None else force
    est = None
    if kind is SchemeKind.SG_EULER_MARUYAMA:
        est = gaussian_perturbation_estimator(force, 0.5, d)
    params = SchemeParams(kappa=kappa, sigma=sigma, gamma=gamma, force=force, sg_estimator=est)
    return as_general_scheme(kind, params), params


def lyapunov_for(kind, scheme, varpi=0.1):
    return LyapunovParams(
        varpi=varpi,
        vartheta=scheme.vartheta,
        vartheta_bar=vartheta_bar(kind, scheme.kappa),
    )


def constants_for(kind, kappa=1.0, lipschitz=1.0):
    scheme, _ = scheme_for(kind, gamma=0.01, kappa=kappa)
    return derived_constants(
        kappa, scheme.c_kappa, 1.0, vartheta_bar(kind, kappa), lipschitz, scheme.delta
    )


def test_lyapunov_params_validation():
    with pytest.raises(ContractViolation):
        LyapunovParams(varpi=0.0)
    with pytest.raises(ContractViolation):
        LyapunovParams(varpi=0.1, alpha_u=-1.0)
    with pytest.raises(ContractViolation):
        LyapunovParams(varpi=0.1, delta_u=1.5)
    with pytest.raises(ContractViolation):
        LyapunovParams(varpi=0.1, c_u=-0.1)


def test_w_gamma_hand_value_and_origin():
    # EM at kappa=1, gamma=0.1 has cross coefficient 1, so at (1, 1) the
    # energy is 0.5 + 1 + 1 + 2*(1/2) = 3.5.
    scheme, _ = scheme_for(SchemeKind.EULER_MARUYAMA, gamma=0.1, d=1)
    ly = lyapunov_for(SchemeKind.EULER_MARUYAMA, scheme)
    assert w_gamma([1.0], [1.0], scheme, ly) == pytest.approx(3.5, abs=1e-12)
    assert w_gamma([0.0], [0.0], scheme, ly) == 0.0
    # batched call agrees with the scalar one
    xs = np.array([[1.0], [0.0], [-2.0]])
    vs = np.array([[1.0], [0.0], [0.5]])
    batched = w_gamma(xs, vs, scheme, ly)
    singles = [w_gamma(x, v, scheme, ly) for x, v in zip(xs, vs)]
    np.testing.assert_allclose(batched, singles, rtol=1e-14)


def test_w_gamma_requires_potential():
    bare = ForceModel(b=lambda x: -x, lipschitz=1.0)
    params = SchemeParams(kappa=1.0, sigma=1.0, gamma=0.1, force=bare)
    scheme = as_general_scheme(SchemeKind.EULER_MARUYAMA, params)
    ly = LyapunovParams(varpi=0.1)
    with pytest.raises(ContractViolation):
        w_gamma([1.0], [1.0], scheme, ly)


def test_cross_term_vartheta_guard():
    scheme, _ = scheme_for(SchemeKind.EULER_MARUYAMA, gamma=0.1, d=1)
    ly = LyapunovParams(varpi=0.1, vartheta=0.3, vartheta_bar=0.1)
    with pytest.raises(ContractViolation):
        w_gamma([1.0], [1.0], scheme, ly)


def test_derived_constants_hand_values():
    dc1 = derived_constants(1.0, 0.5, 1.0, 0.0, 1.0, 1.0)
    assert dc1.c_w == pytest.approx(1.0 / 12.0, abs=1e-15)
    # EM at kappa=1: family ceiling 1/2, energy ceiling (1/12)/(0 + 2) = 1/24
    assert dc1.gamma_bar_w == pytest.approx(1.0 / 24.0, abs=1e-15)
    # sqrt(max(1, 1.5) + 0.5 * 3) = sqrt(3)
    assert dc1.frak_c_phi == pytest.approx(math.sqrt(3.0), abs=1e-15)
    assert dc1.l_phi > 0
    dc2 = derived_constants(2.0, 0.0, 1.0, 0.0, 1.0, 1.0)
    assert dc2.c_w == pytest.approx(1.0 / 8.0, abs=1e-15)
    with pytest.raises(ContractViolation):
        derived_constants(-1.0, 0.5, 1.0, 0.0, 1.0, 1.0)
    with pytest.raises(ContractViolation):
        derived_constants(1.0, 0.5, 1.0, -0.2, 1.0, 1.0)


@pytest.mark.parametrize("kind", ALL_KINDS, ids=[k.value for k in ALL_KINDS])
def test_pointwise_energy_bounds(kind):
    """Quadratic lower bound, linear phi upper bound, phi Lipschitz bound.

    All three hold pointwise on 1e5 random states for every scheme's
    (tau, vartheta) once gamma sits below the energy ceiling.
    """
    force = quadratic_force()
    dc = constants_for(kind)
    scheme, _ = scheme_for(kind, gamma=0.9 * dc.gamma_bar_w)
    ly = lyapunov_for(kind, scheme)
    rng = np.random.default_rng(0)
    n = 10**5
    xs = rng.standard_normal((n, 2)) * rng.uniform(0.1, 30.0, (n, 1))
    vs = rng.standard_normal((n, 2)) * rng.uniform(0.1, 30.0, (n, 1))

    w = w_gamma(xs, vs, scheme, ly)
    lower = dc.c_w * (np.sum(xs**2, axis=1) + np.sum(vs**2, axis=1)) + 2.0 * force.potential(xs)
    assert np.min(w - lower) > -1e-9

    phi = phi_gamma(xs, vs, scheme, ly)
    cap = 1.0 + dc.frak_c_phi * (np.linalg.norm(xs, axis=1) + np.linalg.norm(vs, axis=1))
    assert np.max(phi - cap) < 1e-9

    xs2 = xs + rng.standard_normal((n, 2))
    vs2 = vs + rng.standard_normal((n, 2))
    phi2 = phi_gamma(xs2, vs2, scheme, ly)
    dist = np.sqrt(np.sum((xs - xs2) ** 2, axis=1) + np.sum((vs - vs2) ** 2, axis=1))
    assert np.max(np.abs(phi - phi2) / dist) <= dc.l_phi


def test_w_bar_origin_and_overflow_guard():
    scheme, _ = scheme_for(SchemeKind.EULER_MARUYAMA, gamma=0.02, d=1)
    ly = lyapunov_for(SchemeKind.EULER_MARUYAMA, scheme, varpi=0.25)
    assert w_bar([0.0], [0.0], scheme, ly) == pytest.approx(math.exp(0.25), rel=1e-14)
    # far out the log exceeds 700 and the log-domain value is returned as-is
    far = w_bar([2.0e4], [0.0], scheme, ly)
    assert far == log_w_bar([2.0e4], [0.0], scheme, ly)
    assert far > 700.0
    mixed = w_bar([[0.0], [2.0e4]], [[0.0], [0.0]], scheme, ly)
    assert mixed[0] == pytest.approx(math.exp(0.25), rel=1e-14)
    assert mixed[1] == far


def test_v_bar_sandwich_fitted_exponents():
    """exp(varpi1 sqrt(1+V)) <= exp(varpi phi) <= exp(varpi2 sqrt(1+V)).

    The exponents come from the bracketing constants: the lower one from
    the quadratic floor of W, the upper one from the linear cap on phi.
    """
    force = quadratic_force()
    dc = constants_for(SchemeKind.EULER_MARUYAMA)
    scheme, _ = scheme_for(SchemeKind.EULER_MARUYAMA, gamma=0.02)
    varpi = 0.4
    ly = lyapunov_for(SchemeKind.EULER_MARUYAMA, scheme, varpi=varpi)
    varpi1 = varpi * math.sqrt(min(1.0, dc.c_w, 2.0 * ly.alpha_u))
    varpi2 = varpi * max(math.sqrt(2.0), 2.0 * dc.frak_c_phi)
    rng = np.random.default_rng(4)
    n = 10**5
    xs = rng.standard_normal((n, 2)) * rng.uniform(0.1, 50.0, (n, 1))
    vs = rng.standard_normal((n, 2)) * rng.uniform(0.1, 50.0, (n, 1))
    root_v = np.sqrt(1.0 + v_cal(xs, vs, force))
    mid = log_w_bar(xs, vs, scheme, ly)
    assert np.all(varpi1 * root_v <= mid + 1e-12)
    assert np.all(mid <= varpi2 * root_v + 1e-12)
    # v_bar shares the overflow convention
    assert v_bar([0.0, 0.0], [0.0, 0.0], varpi, force) == pytest.approx(math.exp(varpi))


def test_script_f_hand_values():
    force = quadratic_force()
    zero = np.zeros(1)
    assert script_f(zero, zero, zero, zero, force) == 0.0
    # |grad U|^2 + |v|^2 + |z|^2 + |w|^2 + |x| = 4 + 1 + 0 + 0 + 2
    assert script_f([2.0], [1.0], [0.0], [0.0], force) == pytest.approx(7.0, abs=1e-12)
    assert script_f_tilde([2.0], [1.0], [0.0], force) == pytest.approx(7.0, abs=1e-12)
    assert script_f([2.0], [1.0], [3.0], [0.0], force) == pytest.approx(16.0, abs=1e-12)
    with pytest.raises(ContractViolation):
        script_f([1.0], [0.0], [0.0], [0.0], free_force())


def test_script_f_noise_average():
    """Averaging out the scaled Gaussian slot adds exactly gamma sigma^2 d."""
    force = quadratic_force()
    gam, sig, d, n = 0.02, 1.0, 2, 10**6
    x = np.array([1.0, -2.0])
    v = np.array([0.5, 0.3])
    w = np.array([0.2, -0.1])
    z = np.random.default_rng(9).standard_normal((n, d))
    vals = script_f(
        np.broadcast_to(x, (n, d)),
        np.broadcast_to(v, (n, d)),
        math.sqrt(gam) * sig * z,
        np.broadcast_to(w, (n, d)),
        force,
    )
    se = float(np.std(vals, ddof=1) / math.sqrt(n))
    target = script_f_tilde(x, v, w, force) + gam * sig**2 * d
    assert abs(float(np.mean(vals)) - target) < 3.0 * se


@pytest.mark.parametrize("kind", ALL_KINDS, ids=[k.value for k in ALL_KINDS])
def test_noise_lipschitz_bound(kind):
    """One-step output moves at most noise_lipschitz_bound per unit (z, w1)."""
    force = quadratic_force()
    gam, d, n = 0.1, 2, 10**5
    scheme, params = scheme_for(kind, gamma=gam)
    m1, m2 = scheme.noise_spec.dims(d)
    rng = np.random.default_rng(1)
    xs = rng.standard_normal((n, d)) * rng.uniform(0.1, 10.0, (n, 1))
    vs = rng.standard_normal((n, d)) * rng.uniform(0.1, 10.0, (n, 1))
    z, zp = rng.standard_normal((2, n, d))
    w1, w1p = rng.standard_normal((2, n, m1))
    w2 = rng.standard_normal((n, m2))
    if scheme.noise_spec.w2_transform is not None and m2:
        w2 = scheme.noise_spec.w2_transform(w2)
    x1, v1 = step_ensemble(scheme, xs, vs, NoiseDraw(z, w1, w2))
    x1p, v1p = step_ensemble(scheme, xs, vs, NoiseDraw(zp, w1p, w2))
    moved = np.sqrt(np.sum((x1 - x1p) ** 2, axis=1) + np.sum((v1 - v1p) ** 2, axis=1))
    shaken = np.sqrt(np.sum((z - zp) ** 2, axis=1) + np.sum((w1 - w1p) ** 2, axis=1))
    cap = noise_lipschitz_bound(gam, a2_constant(kind, params), scheme.sigma_bar, scheme.d_bound)
    assert np.max(moved / shaken) <= cap


def test_verify_d2_euler_quadratic():
    force = quadratic_force()
    params = SchemeParams(kappa=1.0, sigma=1.0, gamma=0.04, force=force)
    report = verify_d2(
        SchemeKind.EULER_MARUYAMA, params, force, [0.04, 0.02, 0.01], 2000, seed=1
    )
    assert report.passed
    assert report.delta_u == 1.0
    assert report.alpha_u == 1.0
    assert all(fit.vartheta == 0.0 for fit in report.per_gamma)
    assert 0.0 < report.c_u < 1.0
    assert report.confinement_tail > 0.9
    assert 0.0 < report.zeta_u <= report.confinement_tail
    assert len(report.per_gamma) == 3
    assert not report.witnesses


def test_verify_d2_cabac_quadratic():
    force = quadratic_force()
    params = SchemeParams(kappa=1.0, sigma=1.0, gamma=0.04, force=force)
    report = verify_d2(SchemeKind.SPLIT_CABAC, params, force, [0.04, 0.02, 0.01], 2000, seed=1)
    assert report.passed
    assert report.delta_u == 0.5
    assert math.isfinite(report.c_u)
    assert report.cabac is not None and report.cabac.ok


def flat_tail_force(radius: float = 5.0) -> ForceModel:
    """Quadratic well whose potential goes flat beyond the given radius."""
    r2 = radius**2

    def pot(x):
        return 0.5 * np.minimum(np.sum(np.square(x), axis=-1), r2)

    def grad(x):
        inside = np.sum(np.square(x), axis=-1, keepdims=True) <= r2
        return np.where(inside, x, 0.0)

    return ForceModel(
        b=lambda x: -grad(x),
        lipschitz=1.0,
        potential=pot,
        grad_potential=grad,
        label="flat-tail",
    )


def test_verify_d2_flat_tail_witness():
    force = flat_tail_force()
    params = SchemeParams(kappa=1.0, sigma=1.0, gamma=0.04, force=force)
    report = verify_d2(SchemeKind.EULER_MARUYAMA, params, force, [0.04, 0.02], 500, seed=1)
    assert not report.passed
    assert report.c_u == math.inf
    assert any("confinement ratio" in text for text in report.witnesses)


def test_verify_d2_input_validation():
    force = quadratic_force()
    params = SchemeParams(kappa=1.0, sigma=1.0, gamma=0.04, force=force)
    with pytest.raises(ContractViolation):
        verify_d2(SchemeKind.EULER_MARUYAMA, params, force, [], 100)
    with pytest.raises(ContractViolation):
        verify_d2(SchemeKind.EULER_MARUYAMA, params, force, [0.04], 0)
    bare = ForceModel(b=lambda x: -x, lipschitz=1.0)
    with pytest.raises(ContractViolation):
        verify_d2(
            SchemeKind.EULER_MARUYAMA,
            SchemeParams(kappa=1.0, sigma=1.0, gamma=0.04, force=bare),
            bare,
            [0.04],
            100,
        )


def drift_grid():
    return [
        State(np.array([a]), np.array([b]))
        for a, b in [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0), (-7.0, 7.0), (12.0, -5.0)]
    ]


def test_drift_contracts_beyond_radius_ten():
    force = quadratic_force()
    params = SchemeParams(kappa=1.0, sigma=1.0, gamma=0.01, force=force)
    report = estimate_drift(
        SchemeKind.EULER_MARUYAMA, params, force, 0.1, drift_grid(), mc=10**5, seed=3
    )
    for row in report.rows:
        if row.radius >= 10.0:
            assert row.ratio < 1.0
    assert report.k_hat == 0.0
    assert 0.0 < report.lambda_hat < 1.0
    assert report.b_hat > 0.0
    assert not report.warnings


def test_drift_report_deterministic_and_thread_invariant(monkeypatch):
    force = quadratic_force()
    params = SchemeParams(kappa=1.0, sigma=1.0, gamma=0.01, force=force)

    def run():
        return estimate_drift(
            SchemeKind.EULER_MARUYAMA, params, force, 0.1, drift_grid(), mc=2 * 10**4, seed=5
        )

    monkeypatch.setenv("LANGEVIN_KIT_THREADS", "1")
    serial = run()
    repeat = run()
    monkeypatch.setenv("LANGEVIN_KIT_THREADS", "4")
    threaded = run()
    for a, b, c in zip(serial.rows, repeat.rows, threaded.rows):
        assert a.log_ratio == b.log_ratio == c.log_ratio
    assert serial.lambda_hat == threaded.lambda_hat
    assert serial.b_hat == threaded.b_hat


def test_drift_gamma_ceiling_and_validation():
    force = quadratic_force()
    # EM at kappa=1 tolerates at most gamma = 1/24
    params = SchemeParams(kappa=1.0, sigma=1.0, gamma=0.05, force=force)
    with pytest.raises(ContractViolation):
        estimate_drift(SchemeKind.EULER_MARUYAMA, params, force, 0.1, drift_grid(), mc=100)
    ok = SchemeParams(kappa=1.0, sigma=1.0, gamma=0.01, force=force)
    with pytest.raises(ContractViolation):
        estimate_drift(SchemeKind.EULER_MARUYAMA, ok, force, 0.1, [], mc=100)
    with pytest.raises(ContractViolation):
        estimate_drift(SchemeKind.EULER_MARUYAMA, ok, force, 0.1, drift_grid(), mc=1)


def test_drift_precision_warning_on_tiny_budget():
    force = quadratic_force()
    params = SchemeParams(kappa=1.0, sigma=1.0, gamma=0.04, force=force)
    report = estimate_drift(
        SchemeKind.EULER_MARUYAMA,
        params,
        force,
        3.0,
        [State(np.array([30.0]), np.array([0.0]))],
        mc=4,
        seed=2,
    )
    assert any("standard error" in text for text in report.warnings)


def test_drift_ou_v_marginal_matches_quadrature():
    """With no force the one-step weight mean is a 1-d Gaussian integral.

    The position update is deterministic, so the exact ratio follows from
    integrating exp(varpi sqrt(1 + W)) against the Gaussian law of V1.
    """
    free = free_force()
    gam, varpi, tau = 0.02, 0.3, 0.98
    params = SchemeParams(kappa=1.0, sigma=1.0, gamma=gam, force=free)
    grid = [State(np.array([0.0]), np.array([2.0])), State(np.array([0.0]), np.array([-1.0]))]
    report = estimate_drift(
        SchemeKind.EULER_MARUYAMA, params, free, varpi, grid, mc=4 * 10**5, seed=21
    )
    sd = math.sqrt(gam)
    for row in report.rows:
        v0 = row.v[0]
        x1 = gam * v0

        def integrand(u):
            w = 0.5 * x1 * x1 + u * u + x1 * u
            dens = math.exp(-0.5 * ((u - tau * v0) / sd) ** 2) / (sd * math.sqrt(2.0 * math.pi))
            return math.exp(varpi * math.sqrt(1.0 + w)) * dens

        val, _ = quad(integrand, tau * v0 - 10.0 * sd, tau * v0 + 10.0 * sd)
        exact = math.log(val) - varpi * math.sqrt(1.0 + v0 * v0)
        assert abs(row.log_ratio - exact) < 3.0 * row.se_log
