"""Named discretizations, natively and as instances of the general recursion.

Seven schemes: Euler-Maruyama, the Verlet-type BAC splitting, the CAB, ABCBA
and CABAC splittings, the stochastic exponential Euler integrator, and
Euler-Maruyama with a stochastic gradient. Each kind has a native update rule
(``native_step``) and an exact embedding into the general form
(``as_general_scheme``); the two agree pointwise.

The CABAC and exponential Euler schemes drive two correlated Gaussian noises
per step; they are reconstructed inside the step from the independent pair
(z, w1), matching the change of variables used to embed them.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import (
    ContractViolation,
    ForceModel,
    GeneralScheme,
    NoiseDraw,
    NoiseSpec,
    State,
)
from .gaussian import continuous_covariance, sigma_tilde_sq

__all__ = [
    "SchemeKind",
    "SchemeParams",
    "SgEstimator",
    "gaussian_perturbation_estimator",
    "native_step",
    "as_general_scheme",
    "a2_constant",
    "vartheta_bar",
    "scalar_step_closure",
    "check_a1_a2",
    "AssumptionReport",
    "cabac_coefficients",
    "CabacCoefficients",
]


class SchemeKind(enum.Enum):
    EULER_MARUYAMA = "EulerMaruyama"
    VERLET_BAC = "VerletBAC"
    SPLIT_CAB = "SplitCAB"
    SPLIT_ABCBA = "SplitABCBA"
    SPLIT_CABAC = "SplitCABAC"
    EXP_EULER = "ExpEuler"
    SG_EULER_MARUYAMA = "SgEulerMaruyama"


@dataclass(frozen=True)
class SgEstimator:
    """Stochastic-gradient estimator: h(x, y) approximates b(x) on average.

    ``m2`` is the width of the per-step sample y, drawn by applying
    ``w2_transform`` to standard normals (identity if None). ``lipschitz``
    bounds the Lipschitz constant of x -> h(x, y) uniformly in y.
    """

    h: Callable[[np.ndarray, np.ndarray], np.ndarray]
    m2: int
    w2_transform: Callable[[np.ndarray], np.ndarray] | None = None
    lipschitz: float = 0.0


def gaussian_perturbation_estimator(force: ForceModel, noise_scale: float, d: int) -> SgEstimator:
    """Unbiased estimator h(x, y) = b(x) + y with y ~ N(0, noise_scale^2 I_d)."""
    return SgEstimator(
        h=lambda x, y: force.b(x) + y,
        m2=d,
        w2_transform=lambda eps: noise_scale * eps,
        lipschitz=force.lipschitz,
    )


@dataclass(frozen=True)
class SchemeParams:
    kappa: float
    sigma: float
    gamma: float
    force: ForceModel
    sg_estimator: SgEstimator | None = None

    def __post_init__(self):
        if not (self.kappa > 0 and self.sigma > 0 and self.gamma > 0):
            raise ContractViolation("kappa, sigma and gamma must be positive")


def _require_sg(p: SchemeParams) -> SgEstimator:
    if p.sg_estimator is None:
        raise ContractViolation("SgEulerMaruyama requires an sg_estimator")
    return p.sg_estimator


def _noise_spec(kind: SchemeKind, p: SchemeParams) -> NoiseSpec:
    if kind in (SchemeKind.SPLIT_CABAC, SchemeKind.EXP_EULER):
        return NoiseSpec(m1="d")
    if kind is SchemeKind.SG_EULER_MARUYAMA:
        est = _require_sg(p)
        return NoiseSpec(m2=est.m2, w2_transform=est.w2_transform)
    return NoiseSpec()


def _check_native_noise(kind: SchemeKind, p: SchemeParams, d: int, noise: NoiseDraw) -> None:
    m1, m2 = _noise_spec(kind, p).dims(d)
    if noise.z.shape[-1] != d:
        raise ContractViolation(f"z must have width {d}, got {noise.z.shape[-1]}")
    if noise.w1.shape[-1] != m1:
        raise ContractViolation(f"{kind.value} needs w1 of width {m1}, got {noise.w1.shape[-1]}")
    if noise.w2.shape[-1] != m2:
        raise ContractViolation(f"{kind.value} needs w2 of width {m2}, got {noise.w2.shape[-1]}")


@dataclass(frozen=True)
class CabacCoefficients:
    """Coefficients of the CABAC drift corrections in scaled variables.

    f = c1 v + (gamma/2) b(x + c2 v + c3 z + gamma^(3/2) c4 w) + 2 sqrt(gamma) c4 w,
    g = g1b b(x + g2 v + g3 z + gamma^(3/2) g4 w), with c2 = g2, c3 = g3,
    c4 = g4.
    """

    c1: float
    c2: float
    c3: float
    c4: float
    g1: float
    g2: float
    g3: float
    g4: float


def cabac_coefficients(gamma: float, kappa: float, sigma: float) -> CabacCoefficients:
    e = math.exp(-kappa * gamma)
    eh = math.exp(-kappa * gamma / 2.0)
    st_half_sq = sigma_tilde_sq(gamma / 2.0, kappa, sigma)
    c4 = math.sqrt(st_half_sq / (8.0 * (1.0 + e)))
    return CabacCoefficients(
        c1=(eh - 1.0) / gamma,
        c2=eh / 2.0,
        c3=eh / (2.0 * (1.0 + e)),
        c4=c4,
        g1=eh,
        g2=eh / 2.0,
        g3=eh / (2.0 * (1.0 + e)),
        g4=c4,
    )


def native_step(kind: SchemeKind, p: SchemeParams, s: State, noise: NoiseDraw) -> State:
    """One step of the scheme's own printed update rule."""
    _check_native_noise(kind, p, s.d, noise)
    x, v = _native_arrays(kind, p, s.x, s.v, noise.z, noise.w1, noise.w2)
    return State(x, v)


def _native_arrays(kind, p, x, v, z, w1, w2):
    k_, s_, g_ = p.kappa, p.sigma, p.gamma
    b = p.force.b

    if kind is SchemeKind.EULER_MARUYAMA:
        x_new = x + g_ * v
        v_new = (1.0 - k_ * g_) * v + g_ * b(x) + math.sqrt(g_) * s_ * z
        return x_new, v_new

    if kind is SchemeKind.SG_EULER_MARUYAMA:
        est = _require_sg(p)
        x_new = x + g_ * v
        v_new = (1.0 - k_ * g_) * v + g_ * est.h(x, w2) + math.sqrt(g_) * s_ * z
        return x_new, v_new

    e = math.exp(-k_ * g_)

    if kind is SchemeKind.VERLET_BAC:
        x_new = x + g_ * v + g_**2 * b(x)
        v_new = e * v + g_ * e * b(x) + math.sqrt((1.0 - e**2) / (2.0 * k_)) * s_ * z
        return x_new, v_new

    if kind is SchemeKind.SPLIT_CAB:
        st = math.sqrt(sigma_tilde_sq(g_, k_, s_))
        x_new = x + g_ * e * v + g_**1.5 * st * z
        v_new = e * v + g_ * b(x_new) + math.sqrt(g_) * st * z
        return x_new, v_new

    if kind is SchemeKind.SPLIT_ABCBA:
        st = math.sqrt(sigma_tilde_sq(g_, k_, s_))
        bm = b(x + 0.5 * g_ * v)
        x_new = (
            x
            + 0.5 * g_ * (1.0 + e) * v
            + 0.25 * g_**2 * (1.0 + e) * bm
            + 0.5 * g_**1.5 * st * z
        )
        v_new = e * v + 0.5 * g_ * (1.0 + e) * bm + math.sqrt(g_) * st * z
        return x_new, v_new

    if kind is SchemeKind.SPLIT_CABAC:
        eh = math.exp(-k_ * g_ / 2.0)
        st_half = math.sqrt(sigma_tilde_sq(g_ / 2.0, k_, s_))
        alpha = eh / math.sqrt(1.0 + e)
        xi1 = alpha * z + math.sqrt(1.0 - alpha**2) * w1
        xi2 = math.sqrt(1.0 + e) * z - eh * xi1
        inner = x + 0.5 * g_ * eh * v + g_**1.5 / (2.0 * math.sqrt(2.0)) * st_half * xi1
        ba = b(inner)
        x_new = x + g_ * eh * v + 0.5 * g_**2 * ba + g_**1.5 / math.sqrt(2.0) * st_half * xi1
        v_new = e * v + g_ * eh * ba + math.sqrt(g_ / 2.0) * st_half * (eh * xi1 + xi2)
        return x_new, v_new

    if kind is SchemeKind.EXP_EULER:
        cov = continuous_covariance(g_, k_, s_)
        alpha = cov.s2 / math.sqrt(cov.s1 * cov.s3)
        eta = math.sqrt(cov.s1) * (alpha * z + math.sqrt(1.0 - alpha**2) * w1)
        xi = math.sqrt(cov.s3) * z
        bx = b(x)
        x_new = x + (1.0 - e) / k_ * v + (k_ * g_ + e - 1.0) / k_**2 * bx + eta
        v_new = e * v + (1.0 - e) / k_ * bx + xi
        return x_new, v_new

    raise ContractViolation(f"unknown scheme kind {kind!r}")


def _zero_f(x, vs, zs, w1, w2):
    return np.zeros_like(x)


def as_general_scheme(kind: SchemeKind, p: SchemeParams) -> GeneralScheme:
    """Exact embedding of the scheme into the general one-step recursion.

    The drift corrections f and g are the printed scaled-slot functions of
    each scheme; tau, sigma_gamma and the D factor are the printed
    coefficients. The returned object also carries the family metadata
    (c_kappa, sigma_bar, d_bound, gamma_bar, vartheta) used by the
    assumption-checking and Lyapunov layers.
    """
    k_, s_, g_ = p.kappa, p.sigma, p.gamma
    b = p.force.b
    spec = _noise_spec(kind, p)
    common = dict(
        gamma=g_, delta=1.0, noise_spec=spec, kappa=k_, sigma=s_, sigma_bar=s_, force=p.force
    )

    if kind in (SchemeKind.EULER_MARUYAMA, SchemeKind.SG_EULER_MARUYAMA):
        if kind is SchemeKind.EULER_MARUYAMA:
            def g_fn(x, vs, zs, w1, w2):
                return b(x)
        else:
            est = _require_sg(p)

            def g_fn(x, vs, zs, w1, w2):
                return est.h(x, w2)

        return GeneralScheme(
            tau=1.0 - k_ * g_,
            sigma_gamma=s_,
            d_matrix=0.0,
            f=_zero_f,
            g=g_fn,
            c_kappa=k_**2 / 2.0,
            d_bound=0.0,
            gamma_bar=1.0 / (2.0 * k_),
            vartheta=0.0,
            label=kind.value,
            **common,
        )

    e = math.exp(-k_ * g_)
    st = math.sqrt(sigma_tilde_sq(g_, k_, s_))
    exact_tau = dict(tau=e, c_kappa=0.0, gamma_bar=1.0 / k_)

    if kind is SchemeKind.VERLET_BAC:
        return GeneralScheme(
            sigma_gamma=st,
            d_matrix=0.0,
            f=lambda x, vs, zs, w1, w2: g_ * b(x),
            g=lambda x, vs, zs, w1, w2: e * b(x),
            d_bound=0.0,
            vartheta=0.0,
            label=kind.value,
            **exact_tau,
            **common,
        )

    if kind is SchemeKind.SPLIT_CAB:
        return GeneralScheme(
            sigma_gamma=st,
            d_matrix=1.0,
            f=lambda x, vs, zs, w1, w2: (e - 1.0) / g_ * vs,
            g=lambda x, vs, zs, w1, w2: b(x + e * vs + zs),
            d_bound=1.0,
            vartheta=(e - 1.0) / g_,
            label=kind.value,
            **exact_tau,
            **common,
        )

    if kind is SchemeKind.SPLIT_ABCBA:
        return GeneralScheme(
            sigma_gamma=st,
            d_matrix=0.5,
            f=lambda x, vs, zs, w1, w2: (e - 1.0) / (2.0 * g_) * vs
            + 0.25 * g_ * (1.0 + e) * b(x + 0.5 * vs),
            g=lambda x, vs, zs, w1, w2: 0.5 * (1.0 + e) * b(x + 0.5 * vs),
            d_bound=0.5,
            vartheta=(e - 1.0) / (2.0 * g_),
            label=kind.value,
            **exact_tau,
            **common,
        )

    if kind is SchemeKind.SPLIT_CABAC:
        co = cabac_coefficients(g_, k_, s_)
        sigma_gamma = math.sqrt(sigma_tilde_sq(g_ / 2.0, k_, s_) * (1.0 + e) / 2.0)
        w_free = 2.0 * math.sqrt(g_) * co.c4
        w_inner = g_**1.5 * co.c4

        def f_fn(x, vs, zs, w1, w2):
            return (
                co.c1 * vs
                + 0.5 * g_ * b(x + co.c2 * vs + co.c3 * zs + w_inner * w1)
                + w_free * w1
            )

        def g_fn(x, vs, zs, w1, w2):
            return co.g1 * b(x + co.g2 * vs + co.g3 * zs + w_inner * w1)

        return GeneralScheme(
            sigma_gamma=sigma_gamma,
            d_matrix=math.exp(-k_ * g_ / 2.0) / (1.0 + e),
            f=f_fn,
            g=g_fn,
            d_bound=0.5,
            vartheta=co.c1,
            label=kind.value,
            **exact_tau,
            **common,
        )

    if kind is SchemeKind.EXP_EULER:
        cov = continuous_covariance(g_, k_, s_)
        alpha = cov.s2 / math.sqrt(cov.s1 * cov.s3)
        d_scalar = cov.s2 / (st * math.sqrt(g_**3 * cov.s3))
        c_v = (1.0 - k_ * g_ - e) / (k_ * g_**2)
        w_coef = math.sqrt(cov.s1 * (1.0 - alpha**2)) / g_

        def f_fn(x, vs, zs, w1, w2):
            return c_v * (vs - g_ / k_ * b(x)) + w_coef * w1

        def g_fn(x, vs, zs, w1, w2):
            return (1.0 - e) / (k_ * g_) * b(x)

        return GeneralScheme(
            sigma_gamma=st,
            d_matrix=d_scalar,
            f=f_fn,
            g=g_fn,
            d_bound=0.5,
            vartheta=c_v,
            label=kind.value,
            **exact_tau,
            **common,
        )

    raise ContractViolation(f"unknown scheme kind {kind!r}")


def vartheta_bar(kind: SchemeKind, kappa: float) -> float:
    """Uniform bound on |vartheta| over gamma, per scheme family.

    vartheta is the v-prefactor of the drift correction f in scaled
    variables: 0 when f has no v-term, and an (exp(-c kappa gamma) - 1)/gamma
    expression otherwise, whose magnitude is largest as gamma -> 0.
    """
    if kind in (SchemeKind.EULER_MARUYAMA, SchemeKind.SG_EULER_MARUYAMA, SchemeKind.VERLET_BAC):
        return 0.0
    if kind is SchemeKind.SPLIT_CAB:
        return kappa
    if kind in (SchemeKind.SPLIT_ABCBA, SchemeKind.SPLIT_CABAC, SchemeKind.EXP_EULER):
        return kappa / 2.0
    raise ContractViolation(f"unknown scheme kind {kind!r}")


def a2_constant(kind: SchemeKind, p: SchemeParams) -> float:
    """A valid Lipschitz constant for the scaled-slot drift corrections.

    Bounds both |f(a) - f(a')| and |g(a) - g(a')| by
    L (|(x,v) - (x',v')| + |z - z'|) at this kind's gamma.
    """
    k_, g_ = p.kappa, p.gamma
    lb = p.force.lipschitz
    e = math.exp(-k_ * g_)

    if kind is SchemeKind.EULER_MARUYAMA:
        return lb
    if kind is SchemeKind.SG_EULER_MARUYAMA:
        return _require_sg(p).lipschitz
    if kind is SchemeKind.VERLET_BAC:
        return lb * max(g_, e)
    if kind is SchemeKind.SPLIT_CAB:
        return max((1.0 - e) / g_, lb * math.sqrt(1.0 + e**2), lb)
    if kind is SchemeKind.SPLIT_ABCBA:
        half = math.sqrt(1.25)  # |(dx, dv/2)| <= sqrt(5)/2 |(dx, dv)|
        f_l = (1.0 - e) / (2.0 * g_) + 0.25 * g_ * (1.0 + e) * lb * half
        g_l = 0.5 * (1.0 + e) * lb * half
        return max(f_l, g_l)
    if kind is SchemeKind.SPLIT_CABAC:
        co = cabac_coefficients(g_, p.kappa, p.sigma)
        inner = max(math.sqrt(1.0 + co.c2**2), co.c3)
        return max(abs(co.c1) + 0.5 * g_ * lb * inner, co.g1 * lb * inner)
    if kind is SchemeKind.EXP_EULER:
        c_v = abs((1.0 - k_ * g_ - e) / (k_ * g_**2))
        return max(c_v * math.sqrt(1.0 + (g_ * lb / k_) ** 2), (1.0 - e) / (k_ * g_) * lb)
    raise ContractViolation(f"unknown scheme kind {kind!r}")


def scalar_step_closure(
    kind: SchemeKind, p: SchemeParams, b_scalar: Callable[[float], float] | None = None
) -> Callable[[float, float, float, float], tuple[float, float]]:
    """Specialize the one-dimensional update to plain floats.

    Returns step(x, v, z, w1) -> (x, v). Long single-chain runs are pure
    recursions, so the array machinery dominates the cost at d = 1; this
    closure precomputes every coefficient and works on scalars. The
    stochastic-gradient variant draws its estimator sample per call and is
    not supported here.
    """
    if kind is SchemeKind.SG_EULER_MARUYAMA:
        raise ContractViolation("no scalar fast path for the stochastic-gradient scheme")
    if b_scalar is None:
        vec_b = p.force.b

        def b_scalar(xx: float) -> float:
            return float(vec_b(np.array([xx]))[0])

    k_, s_, g_ = p.kappa, p.sigma, p.gamma
    sq_g = math.sqrt(g_)

    if kind is SchemeKind.EULER_MARUYAMA:
        damp = 1.0 - k_ * g_
        ns = sq_g * s_

        def step(x, v, z, w1):
            return x + g_ * v, damp * v + g_ * b_scalar(x) + ns * z

        return step

    e = math.exp(-k_ * g_)

    if kind is SchemeKind.VERLET_BAC:
        ns = math.sqrt((1.0 - e**2) / (2.0 * k_)) * s_
        g2 = g_**2

        def step(x, v, z, w1):
            bx = b_scalar(x)
            return x + g_ * v + g2 * bx, e * v + g_ * e * bx + ns * z

        return step

    if kind is SchemeKind.SPLIT_CAB:
        st = math.sqrt(sigma_tilde_sq(g_, k_, s_))
        cx, cz, nv = g_ * e, g_**1.5 * st, sq_g * st

        def step(x, v, z, w1):
            x_new = x + cx * v + cz * z
            return x_new, e * v + g_ * b_scalar(x_new) + nv * z

        return step

    if kind is SchemeKind.SPLIT_ABCBA:
        st = math.sqrt(sigma_tilde_sq(g_, k_, s_))
        cv = 0.5 * g_ * (1.0 + e)
        cb_x, cz = 0.5 * g_ * cv, 0.5 * g_**1.5 * st
        nv, hg = sq_g * st, 0.5 * g_

        def step(x, v, z, w1):
            bm = b_scalar(x + hg * v)
            return x + cv * v + cb_x * bm + cz * z, e * v + cv * bm + nv * z

        return step

    if kind is SchemeKind.SPLIT_CABAC:
        eh = math.exp(-k_ * g_ / 2.0)
        st_half = math.sqrt(sigma_tilde_sq(g_ / 2.0, k_, s_))
        alpha = eh / math.sqrt(1.0 + e)
        beta = math.sqrt(1.0 - alpha**2)
        rt1e = math.sqrt(1.0 + e)
        ci = 0.5 * g_ * eh
        czi = g_**1.5 / (2.0 * math.sqrt(2.0)) * st_half
        cx_v, cx_b, cx_z = g_ * eh, 0.5 * g_**2, g_**1.5 / math.sqrt(2.0) * st_half
        cv_b, cv_z = g_ * eh, math.sqrt(g_ / 2.0) * st_half

        def step(x, v, z, w1):
            xi1 = alpha * z + beta * w1
            xi2 = rt1e * z - eh * xi1
            ba = b_scalar(x + ci * v + czi * xi1)
            x_new = x + cx_v * v + cx_b * ba + cx_z * xi1
            return x_new, e * v + cv_b * ba + cv_z * (eh * xi1 + xi2)

        return step

    if kind is SchemeKind.EXP_EULER:
        cov = continuous_covariance(g_, k_, s_)
        alpha = cov.s2 / math.sqrt(cov.s1 * cov.s3)
        cz_x = math.sqrt(cov.s1) * alpha
        cw_x = math.sqrt(cov.s1) * math.sqrt(1.0 - alpha**2)
        cz_v = math.sqrt(cov.s3)
        cv_x = (1.0 - e) / k_
        cb_x = (k_ * g_ + e - 1.0) / k_**2
        cb_v = (1.0 - e) / k_

        def step(x, v, z, w1):
            bx = b_scalar(x)
            x_new = x + cv_x * v + cb_x * bx + cz_x * z + cw_x * w1
            return x_new, e * v + cb_v * bx + cz_v * z

        return step

    raise ContractViolation(f"unknown scheme kind {kind!r}")


@dataclass(frozen=True)
class AssumptionReport:
    """Outcome of the consistency and Lipschitz probes for one scheme family."""

    kind: SchemeKind
    passed: bool
    fitted_c_kappa: float
    fitted_sigma_bar: float
    fitted_d_bound: float
    declared_l: float
    worst_ratio: float
    violations: list[str] = field(default_factory=list)


def check_a1_a2(
    kind: SchemeKind, p: SchemeParams, trials: int, seed: int = 0, d: int = 1
) -> AssumptionReport:
    """Probe the consistency conditions on a gamma grid and Lipschitz bounds.

    Fits the smallest empirical (C_kappa, sigma_bar, D-bound) over a gamma
    grid up to the family's gamma_bar, then samples ``trials`` random pairs of
    scaled-slot arguments and compares the drift-correction increments against
    the declared constant with 1% slack. Violations are returned with witness
    coordinates rather than raised.
    """
    from dataclasses import replace

    violations: list[str] = []
    probe = as_general_scheme(kind, p)
    gammas = np.geomspace(probe.gamma_bar * 1e-3, probe.gamma_bar, 40)
    fitted_ck = 0.0
    fitted_sb = 0.0
    fitted_db = 0.0
    for gam in gammas:
        sch = as_general_scheme(kind, replace(p, gamma=float(gam)))
        gap = abs(sch.tau - math.exp(-p.kappa * gam))
        fitted_ck = max(fitted_ck, gap / gam**2)
        fitted_sb = max(fitted_sb, sch.sigma_gamma)
        fitted_db = max(fitted_db, sch.d_norm())
        if not 0.0 < sch.tau < 1.0:
            violations.append(f"A1-tau: tau={sch.tau:g} outside (0,1) at gamma={gam:g}")
        if gap > sch.c_kappa * gam**2 + 1e-12:
            violations.append(f"A1-consistency: gap {gap:g} > C_kappa gamma^2 at gamma={gam:g}")
        if sch.sigma_gamma > sch.sigma_bar * (1 + 1e-12):
            violations.append(f"A1-sigma: sigma_gamma {sch.sigma_gamma:g} above bound")
        if sch.d_norm() > sch.d_bound * (1 + 1e-12) + 1e-15:
            violations.append(f"A1-D: |D| {sch.d_norm():g} above bound")

    declared = a2_constant(kind, p)
    scheme = probe
    m1, m2 = scheme.noise_spec.dims(d)
    rng = np.random.default_rng(seed)
    worst = 0.0
    witness = ""
    scales = np.where(rng.random(trials) < 0.5, 1.0, 10.0)[:, None]
    pts = {
        name: rng.standard_normal((trials, width)) * scales
        for name, width in (("x", d), ("v", d), ("z", d), ("x2", d), ("v2", d), ("z2", d))
    }
    w1 = rng.standard_normal((trials, m1))
    w2_base = rng.standard_normal((trials, m2))
    w2 = scheme.noise_spec.w2_transform(w2_base) if scheme.noise_spec.w2_transform else w2_base

    fa = scheme.f(pts["x"], pts["v"], pts["z"], w1, w2)
    fb = scheme.f(pts["x2"], pts["v2"], pts["z2"], w1, w2)
    ga = scheme.g(pts["x"], pts["v"], pts["z"], w1, w2)
    gb = scheme.g(pts["x2"], pts["v2"], pts["z2"], w1, w2)
    denom = (
        np.sqrt(
            np.sum((pts["x"] - pts["x2"]) ** 2, axis=1)
            + np.sum((pts["v"] - pts["v2"]) ** 2, axis=1)
        )
        + np.linalg.norm(pts["z"] - pts["z2"], axis=1)
    )
    for name, da in (("f", fa - fb), ("g", ga - gb)):
        ratios = np.linalg.norm(np.atleast_2d(da), axis=1) / denom
        idx = int(np.argmax(ratios))
        if ratios[idx] > worst:
            worst = float(ratios[idx])
            witness = f"{name} at pair {idx}"
    if worst > declared * 1.01 + 1e-12:
        violations.append(
            f"A2-{witness}: ratio {worst:g} exceeds declared {declared:g} (+1% slack)"
        )

    return AssumptionReport(
        kind=kind,
        passed=not violations,
        fitted_c_kappa=fitted_ck,
        fitted_sigma_bar=fitted_sb,
        fitted_d_bound=fitted_db,
        declared_l=declared,
        worst_ratio=worst,
        violations=violations,
    )
