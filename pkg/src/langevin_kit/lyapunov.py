"""Exponential Lyapunov machinery for the general one-step recursion.

The central object is the step-dependent quadratic-plus-potential energy

    W(x, v) = kappa^2/2 |x|^2 + |v|^2
              + kappa^2 gamma (1 + gamma^delta vartheta) / (1 - tau) <x, v>
              + 2 alpha_U U(x),

together with phi = sqrt(1 + W) and the exponential weight
exp(varpi phi). The module evaluates these, derives the constants that
bracket them (lower quadratic constant, admissible timestep ceiling, upper
and Lipschitz constants of phi), verifies the drift-structure conditions on
the scheme's corrections f and g by sampling, and estimates the one-step
geometric drift of the exponential weight by Monte Carlo.

Everything involving the exponential weight is computed in the log domain;
ratios of weights at far-out states stay finite even when the weights
themselves overflow.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from . import _rng
from .core import (
    ContractViolation,
    ForceModel,
    GeneralScheme,
    NoiseDraw,
    step_ensemble,
    validate_d1,
)
from .schemes import (
    SchemeKind,
    SchemeParams,
    as_general_scheme,
    cabac_coefficients,
    vartheta_bar,
)

__all__ = [
    "LyapunovParams",
    "DerivedConstants",
    "w_gamma",
    "phi_gamma",
    "w_bar",
    "log_w_bar",
    "v_cal",
    "v_bar",
    "script_f",
    "script_f_tilde",
    "derived_constants",
    "noise_lipschitz_bound",
    "verify_d2",
    "D2Report",
    "estimate_drift",
    "DriftReport",
    "DriftRow",
]

_OVERFLOW_EXPONENT = 700.0


@dataclass(frozen=True)
class LyapunovParams:
    """Drift-structure constants attached to a scheme family and potential.

    ``vartheta`` is the v-prefactor of the correction f at the working
    timestep; when None it is taken from the scheme. ``vartheta_bar`` bounds
    its magnitude over all admissible timesteps.
    """

    varpi: float
    alpha_u: float = 1.0
    vartheta: float | None = None
    vartheta_bar: float = 0.0
    zeta_u: float = 1.0
    delta_u: float = 1.0
    c_u: float = 0.0

    def __post_init__(self):
        if self.varpi <= 0 or self.alpha_u <= 0 or self.zeta_u <= 0:
            raise ContractViolation("varpi, alpha_u and zeta_u must be positive")
        if not 0.0 < self.delta_u <= 1.0:
            raise ContractViolation("delta_u must lie in (0, 1]")
        if self.c_u < 0 or self.vartheta_bar < 0:
            raise ContractViolation("c_u and vartheta_bar must be nonnegative")


@dataclass(frozen=True)
class DerivedConstants:
    c_w: float
    gamma_bar_w: float
    frak_c_phi: float
    l_phi: float


def derived_constants(
    kappa: float,
    c_kappa: float,
    alpha_u: float,
    vartheta_bar: float,
    lipschitz: float,
    delta: float,
) -> DerivedConstants:
    """Constants bracketing the energy W and its square root.

    c_w is the quadratic lower constant, gamma_bar_w the timestep ceiling
    below which the lower bound holds (capped by the family ceiling
    1/(kappa + 2 c_kappa / kappa) and by 1), frak_c_phi the upper constant
    with phi <= 1 + frak_c_phi (|x| + |v|), and l_phi the uniform Lipschitz
    bound of phi.
    """
    if kappa <= 0 or alpha_u <= 0 or c_kappa < 0 or vartheta_bar < 0 or lipschitz < 0:
        raise ContractViolation("constants must be positive (c_kappa, vartheta_bar, L >= 0)")
    c_w = 0.5 * min(kappa**2 / 6.0, 0.25)
    gamma_bar = 1.0 / (kappa + 2.0 * c_kappa / kappa)
    ceiling = c_w / (kappa * vartheta_bar + (1.0 + vartheta_bar) * (2.0 * c_kappa + kappa**2))
    gamma_bar_w = min(1.0, gamma_bar, ceiling ** (1.0 / min(delta, 1.0)))
    frak_c_phi = math.sqrt(
        max(1.0, kappa**2 / 2.0 + alpha_u * lipschitz)
        + 0.5 * (1.0 + vartheta_bar) * (kappa**2 + kappa + 2.0 * c_kappa)
    )
    l_phi = (1.0 / math.sqrt(c_w)) * max(
        2.0,
        2.0 * alpha_u * lipschitz + kappa**2,
        (1.0 + vartheta_bar) * (kappa**2 + kappa + c_kappa),
    )
    return DerivedConstants(c_w=c_w, gamma_bar_w=gamma_bar_w, frak_c_phi=frak_c_phi, l_phi=l_phi)


def noise_lipschitz_bound(
    gamma: float, l_tilde: float, sigma_bar: float, d_bound: float
) -> float:
    """Lipschitz bound of (z, w1) -> one-step map at full noise scale."""
    return math.sqrt(2.0 * gamma) * (
        2.0 * l_tilde * max(1.0, sigma_bar) + d_bound * sigma_bar + sigma_bar
    )


def _require_potential(scheme: GeneralScheme, force: ForceModel | None) -> ForceModel:
    fm = force if force is not None else scheme.force
    if fm is None or fm.potential is None:
        raise ContractViolation("a force model carrying the potential U is required")
    return fm


def _cross_coefficient(scheme: GeneralScheme, params: LyapunovParams) -> float:
    theta = scheme.vartheta if params.vartheta is None else params.vartheta
    if abs(theta) > params.vartheta_bar * (1.0 + 1e-9) + 1e-12:
        raise ContractViolation(
            f"|vartheta| = {abs(theta):g} exceeds vartheta_bar = {params.vartheta_bar:g}"
        )
    g_ = scheme.gamma
    return scheme.kappa**2 * g_ * (1.0 + g_**scheme.delta * theta) / (1.0 - scheme.tau)


def w_gamma(x, v, scheme: GeneralScheme, params: LyapunovParams, force: ForceModel | None = None):
    """The quadratic-plus-potential energy at (x, v); batched over leading axes."""
    fm = _require_potential(scheme, force)
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    cross = _cross_coefficient(scheme, params)
    val = (
        0.5 * scheme.kappa**2 * np.sum(x * x, axis=-1)
        + np.sum(v * v, axis=-1)
        + cross * np.sum(x * v, axis=-1)
        + 2.0 * params.alpha_u * np.asarray(fm.potential(x), dtype=np.float64)
    )
    return float(val) if val.ndim == 0 else val


def phi_gamma(x, v, scheme: GeneralScheme, params: LyapunovParams, force: ForceModel | None = None):
    """sqrt(1 + W); the quantity whose exponential is the drift weight."""
    return np.sqrt(1.0 + w_gamma(x, v, scheme, params, force))


def log_w_bar(x, v, scheme: GeneralScheme, params: LyapunovParams, force: ForceModel | None = None):
    """Logarithm of the exponential weight: varpi * phi."""
    return params.varpi * phi_gamma(x, v, scheme, params, force)


def w_bar(x, v, scheme: GeneralScheme, params: LyapunovParams, force: ForceModel | None = None):
    """exp(varpi phi), except that exponents above 700 are returned as-is.

    The switch avoids inf at far-out states; use log_w_bar when a uniform
    log-domain value is wanted.
    """
    lg = log_w_bar(x, v, scheme, params, force)
    if np.ndim(lg) == 0:
        return math.exp(lg) if lg <= _OVERFLOW_EXPONENT else float(lg)
    lg = np.asarray(lg)
    return np.where(lg <= _OVERFLOW_EXPONENT, np.exp(np.minimum(lg, _OVERFLOW_EXPONENT)), lg)


def v_cal(x, v, force: ForceModel):
    """|x|^2 + |v|^2 + U(x), the scheme-free comparison energy."""
    if force.potential is None:
        raise ContractViolation("a force model carrying the potential U is required")
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    val = (
        np.sum(x * x, axis=-1)
        + np.sum(v * v, axis=-1)
        + np.asarray(force.potential(x), dtype=np.float64)
    )
    return float(val) if val.ndim == 0 else val


def v_bar(x, v, varpi: float, force: ForceModel):
    """exp(varpi sqrt(1 + V)) with the same overflow convention as w_bar."""
    lg = varpi * np.sqrt(1.0 + v_cal(x, v, force))
    if np.ndim(lg) == 0:
        return math.exp(lg) if lg <= _OVERFLOW_EXPONENT else float(lg)
    return np.where(lg <= _OVERFLOW_EXPONENT, np.exp(np.minimum(lg, _OVERFLOW_EXPONENT)), lg)


def _grad_sq_over_l2(x: np.ndarray, force: ForceModel) -> np.ndarray:
    if force.lipschitz <= 0:
        raise ContractViolation("the force model must declare a positive Lipschitz constant")
    grad = force.grad_potential(x) if force.grad_potential is not None else -force.b(x)
    return np.sum(np.asarray(grad) ** 2, axis=-1) / force.lipschitz**2


def script_f(x, v, z, w, force: ForceModel):
    """|grad U|^2/L^2 + |v|^2 + |z|^2 + |w|^2 + |x|; the last norm unsquared."""
    x = np.asarray(x, dtype=np.float64)
    val = (
        _grad_sq_over_l2(x, force)
        + np.sum(np.asarray(v, dtype=np.float64) ** 2, axis=-1)
        + np.sum(np.asarray(z, dtype=np.float64) ** 2, axis=-1)
        + np.sum(np.asarray(w, dtype=np.float64) ** 2, axis=-1)
        + np.linalg.norm(x, axis=-1)
    )
    return float(val) if val.ndim == 0 else val


def script_f_tilde(x, v, w, force: ForceModel):
    """The noise-averaged variant: script_f without the |z|^2 term."""
    x = np.asarray(x, dtype=np.float64)
    val = (
        _grad_sq_over_l2(x, force)
        + np.sum(np.asarray(v, dtype=np.float64) ** 2, axis=-1)
        + np.sum(np.asarray(w, dtype=np.float64) ** 2, axis=-1)
        + np.linalg.norm(x, axis=-1)
    )
    return float(val) if val.ndim == 0 else val


def _radial_confinement_tail(force: ForceModel, rng: np.random.Generator, d: int):
    """Worst direction of <grad U, x> / (|x| + |grad U|^2) on a radius grid.

    Returns (tail_value, witness) with the witness describing the minimizing
    radius once the profile has settled, or None when the tail stays positive.
    """
    radii = np.geomspace(1.0, 1e3, 13)
    dirs = rng.standard_normal((48, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    grad_fn = force.grad_potential if force.grad_potential is not None else lambda p: -force.b(p)
    profile = np.empty(radii.size)
    for i, r in enumerate(radii):
        pts = r * dirs
        grad = np.asarray(grad_fn(pts))
        num = np.sum(grad * pts, axis=1)
        den = r + np.sum(grad * grad, axis=1)
        profile[i] = float(np.min(num / den))
    tail = float(np.min(profile[-4:]))
    if tail > 1e-9:
        return tail, None
    bad = int(np.argmin(profile[-4:])) + radii.size - 4
    return tail, (
        f"confinement ratio <grad U, x>/(|x| + |grad U|^2) falls to {tail:.3g} "
        f"at radius {radii[bad]:.3g}"
    )


@dataclass(frozen=True)
class D2GammaFit:
    gamma: float
    vartheta: float
    c_quadratic: float
    c_position_f: float
    c_position_g: float


@dataclass(frozen=True)
class CabacBounds:
    c_bar_grid: float
    g_bar_grid: float
    c_bar_analytic: float
    g_bar_analytic: float
    k_fit: float
    k_bound: float
    ok: bool


@dataclass(frozen=True)
class D2Report:
    kind: SchemeKind
    passed: bool
    alpha_u: float
    zeta_u: float
    delta_u: float
    c_u: float
    confinement_tail: float
    uniform: bool
    per_gamma: list[D2GammaFit] = field(default_factory=list)
    witnesses: list[str] = field(default_factory=list)
    cabac: CabacBounds | None = None


def _d2_samples(rng, n, d, m1, m2, w2_transform):
    scale_x = np.choose(rng.integers(0, 3, n), [1.0, 10.0, 100.0])[:, None]
    scale = np.where(rng.random(n) < 0.5, 1.0, 10.0)[:, None]
    x = rng.standard_normal((n, d)) * scale_x
    v = rng.standard_normal((n, d)) * scale
    z = rng.standard_normal((n, d)) * scale
    w1 = rng.standard_normal((n, m1)) * scale if m1 else np.empty((n, 0))
    w2 = rng.standard_normal((n, m2))
    if w2_transform is not None and m2:
        w2 = w2_transform(w2)
    return x, v, z, w1, w2


def _cabac_cross_check(params: SchemeParams, gamma_grid) -> CabacBounds:
    kappa, sigma = params.kappa, params.sigma
    c_vals, g_vals, k_vals = [], [], []
    for gam in gamma_grid:
        co = cabac_coefficients(float(gam), kappa, sigma)
        c_vals.append(max(abs(co.c1), co.c2, co.c3, co.c4))
        g_vals.append(max(co.g1, co.g2, co.g3, co.g4))
        k_vals.append(abs(co.g1 - 1.0) / float(gam))
    c_bar_analytic = max(kappa / 2.0, 0.5, sigma / 4.0)
    g_bar_analytic = max(1.0, sigma / 4.0)
    k_bound = kappa / 2.0
    slack = 1.0 + 1e-9
    ok = (
        max(c_vals) <= c_bar_analytic * slack
        and max(g_vals) <= g_bar_analytic * slack
        and max(k_vals) <= k_bound * slack
    )
    return CabacBounds(
        c_bar_grid=max(c_vals),
        g_bar_grid=max(g_vals),
        c_bar_analytic=c_bar_analytic,
        g_bar_analytic=g_bar_analytic,
        k_fit=max(k_vals),
        k_bound=k_bound,
        ok=ok,
    )


def verify_d2(
    kind: SchemeKind,
    params: SchemeParams,
    potential: ForceModel,
    gamma_grid,
    sample_count: int,
    alpha_u: float = 1.0,
    zeta_u: float | None = None,
    seed: int = 0,
    d: int = 2,
) -> D2Report:
    """Probe the drift-structure inequalities on random samples and a gamma grid.

    For each gamma, draws mixed-scale (x, v, z, w) samples, evaluates the
    corrections f and g in their scaled slots, and fits the smallest constant
    making each of the three inequalities hold:

      |f|^2 + |g + alpha_U grad U|^2   <= C [1 + gamma^d_U F],
      <x, f> - gamma^delta theta <x,v> <= C [gamma^d_U |x||w1| + 1 + gamma^d_U F],
      <x, g> + zeta_U [|grad U|^2/L^2 + |x|] <= C [1 + gamma^d_U F],

    with F evaluated at (x, v, sqrt(gamma) sigma_gamma z, w). The exponent
    d_U is fitted: the largest candidate for which the per-gamma constants do
    not grow as gamma decreases is kept. A radial probe of the confinement
    ratio supplies zeta_u when it is not declared, and reports a witness when
    the ratio degenerates (potentials flattening at infinity).
    """
    gamma_grid = [float(g) for g in gamma_grid]
    if not gamma_grid or sample_count < 1:
        raise ContractViolation("a nonempty gamma grid and sample_count >= 1 are required")
    if potential.potential is None or potential.grad_potential is None:
        raise ContractViolation("verify_d2 needs a force model with U and grad U")
    rng = np.random.default_rng(seed)
    validate_d1(potential, rng.standard_normal((128, d)) * 3.0)

    witnesses: list[str] = []
    tail, tail_witness = _radial_confinement_tail(potential, rng, d)
    if tail_witness is not None:
        witnesses.append(tail_witness)
        zeta = 0.0 if zeta_u is None else zeta_u
        return D2Report(
            kind=kind,
            passed=False,
            alpha_u=alpha_u,
            zeta_u=zeta,
            delta_u=0.0,
            c_u=math.inf,
            confinement_tail=tail,
            uniform=False,
            witnesses=witnesses,
        )
    zeta = tail / 2.0 if zeta_u is None else zeta_u

    grad_fn = potential.grad_potential
    lips = potential.lipschitz
    fits_by_delta: dict[float, list[D2GammaFit]] = {}
    chosen_delta = None
    uniform = False
    for delta_u in (1.0, 0.5, 0.25):
        fits: list[D2GammaFit] = []
        for gam in gamma_grid:
            scheme = as_general_scheme(kind, replace(params, gamma=gam, force=potential))
            m1, m2 = scheme.noise_spec.dims(d)
            x, v, z, w1, w2 = _d2_samples(
                np.random.default_rng(seed + 1), sample_count, d, m1, m2,
                scheme.noise_spec.w2_transform,
            )
            v_s = gam**scheme.delta * v
            z_s = gam ** (scheme.delta + 0.5) * scheme.sigma_gamma * z
            f_val = scheme.f(x, v_s, z_s, w1, w2)
            g_val = scheme.g(x, v_s, z_s, w1, w2)
            grad = np.asarray(grad_fn(x))
            w_all = np.concatenate([w1, w2], axis=1)
            f_cal = script_f(x, v, math.sqrt(gam) * scheme.sigma_gamma * z, w_all, potential)
            bracket = 1.0 + gam**delta_u * f_cal
            norm_x = np.linalg.norm(x, axis=1)

            lhs1 = np.sum(f_val**2, axis=1) + np.sum((g_val + alpha_u * grad) ** 2, axis=1)
            c1 = float(np.max(lhs1 / bracket))

            lhs2 = np.sum(x * f_val, axis=1) - gam**scheme.delta * scheme.vartheta * np.sum(
                x * v, axis=1
            )
            den2 = gam**delta_u * norm_x * np.linalg.norm(w1, axis=1) + bracket
            c2 = max(0.0, float(np.max(lhs2 / den2)))

            lhs3 = np.sum(x * g_val, axis=1) + zeta * (
                _grad_sq_over_l2(x, potential) + norm_x
            )
            c3 = max(0.0, float(np.max(lhs3 / bracket)))
            fits.append(D2GammaFit(gam, scheme.vartheta, c1, c2, c3))
        fits_by_delta[delta_u] = fits
        ceu = np.array([max(f.c_quadratic, f.c_position_f, f.c_position_g) for f in fits])
        if len(gamma_grid) >= 3 and np.ptp(np.log(gamma_grid)) > 0:
            slope = np.polyfit(np.log(gamma_grid), np.log(ceu + 1e-300), 1)[0]
            uniform = bool(slope > -0.25)
        else:
            uniform = True
        if uniform:
            chosen_delta = delta_u
            break
    if chosen_delta is None:
        chosen_delta = 0.25
        witnesses.append(
            "fitted constant grows as gamma decreases for every candidate exponent; "
            "no uniform drift-structure constant found"
        )
    fits = fits_by_delta[chosen_delta]
    c_u = max(max(f.c_quadratic, f.c_position_f, f.c_position_g) for f in fits)
    if not math.isfinite(c_u):
        witnesses.append("fitted constant is not finite")

    cabac = None
    if kind is SchemeKind.SPLIT_CABAC:
        cabac = _cabac_cross_check(params, gamma_grid)
        if not cabac.ok:
            witnesses.append("analytic coefficient bounds violated on the gamma grid")

    passed = uniform and math.isfinite(c_u) and not witnesses
    return D2Report(
        kind=kind,
        passed=passed,
        alpha_u=alpha_u,
        zeta_u=zeta,
        delta_u=chosen_delta,
        c_u=c_u,
        confinement_tail=tail,
        uniform=uniform,
        per_gamma=fits,
        witnesses=witnesses,
        cabac=cabac,
    )


@dataclass(frozen=True)
class DriftRow:
    x: np.ndarray
    v: np.ndarray
    radius: float
    log_ratio: float
    ratio: float
    se_log: float


@dataclass(frozen=True)
class DriftReport:
    rows: list[DriftRow]
    lambda_hat: float
    k_hat: float
    b_hat: float
    varpi: float
    gamma: float
    warnings: list[str] = field(default_factory=list)


def _default_lyapunov(kind: SchemeKind, scheme: GeneralScheme, varpi: float) -> LyapunovParams:
    return LyapunovParams(
        varpi=varpi,
        alpha_u=1.0,
        vartheta=scheme.vartheta,
        vartheta_bar=vartheta_bar(kind, scheme.kappa),
    )


def estimate_drift(
    kind: SchemeKind,
    params: SchemeParams,
    potential: ForceModel | None,
    varpi: float,
    grid,
    mc: int,
    seed: int = 0,
    lyap: LyapunovParams | None = None,
) -> DriftReport:
    """Monte-Carlo one-step drift ratios of the exponential weight.

    For each grid state, estimates E[exp(varpi phi(X1, V1))] over ``mc``
    one-step samples and reports its log-ratio against the starting weight.
    The report fits the smallest radius k_hat beyond which every state
    contracts with 95% confidence, the per-unit-time factor lambda_hat over
    those states, and the additive constant b_hat inside. States use
    independent RNG substreams, so the report is reproducible and does not
    depend on the evaluation order or thread count.
    """
    scheme = as_general_scheme(kind, params)
    force = _require_potential(scheme, potential)
    ly = lyap if lyap is not None else _default_lyapunov(kind, scheme, varpi)
    if lyap is not None and lyap.varpi != varpi:
        ly = replace(lyap, varpi=varpi)
    dc = derived_constants(
        scheme.kappa, scheme.c_kappa, ly.alpha_u, ly.vartheta_bar, force.lipschitz, scheme.delta
    )
    if params.gamma > dc.gamma_bar_w * (1.0 + 1e-12):
        raise ContractViolation(
            f"gamma = {params.gamma:g} exceeds the energy ceiling {dc.gamma_bar_w:g}"
        )
    states = list(grid)
    if not states or mc < 2:
        raise ContractViolation("a nonempty state grid and mc >= 2 are required")
    d = states[0].d
    m1, m2 = scheme.noise_spec.dims(d)
    children = np.random.SeedSequence(seed).spawn(len(states))

    def one_state(idx: int) -> DriftRow:
        st = states[idx]
        rng = np.random.default_rng(children[idx])
        z = rng.standard_normal((mc, d))
        w1 = rng.standard_normal((mc, m1))
        w2 = rng.standard_normal((mc, m2))
        if scheme.noise_spec.w2_transform is not None and m2:
            w2 = scheme.noise_spec.w2_transform(w2)
        xs = np.broadcast_to(st.x, (mc, d))
        vs = np.broadcast_to(st.v, (mc, d))
        x1, v1 = step_ensemble(scheme, xs, vs, NoiseDraw(z, w1, w2))
        a = ly.varpi * phi_gamma(x1, v1, scheme, ly, force)
        log_mean = float(logsumexp(a) - math.log(mc))
        se_log = float(np.std(np.exp(a - log_mean), ddof=1) / math.sqrt(mc))
        log_start = ly.varpi * phi_gamma(st.x, st.v, scheme, ly, force)
        log_ratio = log_mean - log_start
        radius = float(np.linalg.norm(st.x) + np.linalg.norm(st.v))
        return DriftRow(st.x, st.v, radius, log_ratio, math.exp(log_ratio), se_log)

    n_threads = _rng.worker_threads()
    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            rows = list(pool.map(one_state, range(len(states))))
    else:
        rows = [one_state(i) for i in range(len(states))]

    warnings = [
        f"state at radius {row.radius:.3g}: relative standard error {row.se_log:.2g} "
        "exceeds 10% of the estimate"
        for row in rows
        if row.se_log > 0.1
    ]

    radii = sorted({row.radius for row in rows})
    k_hat = math.inf
    for cand in [0.0] + radii:
        outside = [r for r in rows if r.radius > cand]
        if outside and all(r.log_ratio + 1.96 * r.se_log < 0.0 for r in outside):
            k_hat = cand
            break
    if math.isinf(k_hat):
        warnings.append("no radius with uniformly contracting tail found")
        lambda_hat = 1.0
        inside = rows
        log_lambda_gamma = 0.0
    else:
        outside = [r for r in rows if r.radius > k_hat]
        log_lambda_gamma = max(r.log_ratio for r in outside)
        lambda_hat = math.exp(log_lambda_gamma / params.gamma)
        inside = [r for r in rows if r.radius <= k_hat]

    b_hat = 0.0
    for row in inside:
        log_start = ly.varpi * phi_gamma(row.x, row.v, scheme, ly, force)
        lm = row.log_ratio + log_start
        lr = log_lambda_gamma + log_start
        if lm > lr:
            log_diff = lm + math.log1p(-math.exp(lr - lm))
            with np.errstate(over="ignore"):
                b_hat = max(b_hat, float(np.exp(log_diff - math.log(params.gamma))))
    return DriftReport(
        rows=rows,
        lambda_hat=lambda_hat,
        k_hat=k_hat,
        b_hat=b_hat,
        varpi=ly.varpi,
        gamma=params.gamma,
        warnings=warnings,
    )
