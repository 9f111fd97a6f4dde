"""General one-step map for discretized kinetic Langevin dynamics.

The continuous dynamics are dX = V dt, dV = (b(X) - kappa V) dt + sigma dB.
A discretization with timestep gamma is encoded by

    X' = x + gamma v + gamma f(x, gamma^delta v, gamma^(delta+1/2) sigma_g z, w)
         + gamma^(delta+1/2) sigma_g D z,
    V' = tau v + gamma g(x, gamma^delta v, gamma^(delta+1/2) sigma_g z, w)
         + sqrt(gamma) sigma_g z,

with z a standard d-dimensional Gaussian and w = (w1, w2) auxiliary noise
(w1 Gaussian from higher-order time integration, w2 stochastic-gradient
input). The drift corrections f and g always receive the already-scaled
velocity and noise arguments.

All step functions are vectorized: positions and velocities may carry leading
batch axes (ensemble, d), and the force field must broadcast accordingly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from .gaussian import weight_vectors

__all__ = [
    "DIVERGENCE_LIMIT",
    "ContractViolation",
    "DivergedError",
    "State",
    "ForceModel",
    "NoiseDraw",
    "NoiseSpec",
    "GeneralScheme",
    "TrajectoryConfig",
    "TrajectoryRecord",
    "general_step",
    "step_ensemble",
    "full_noise_step",
    "simulate_chain",
    "aggregate_closed_form",
    "validate_d1",
]

DIVERGENCE_LIMIT = 1e12

_A1_SLACK = 1e-9


class ContractViolation(ValueError):
    """An argument violates a documented precondition."""


class DivergedError(FloatingPointError):
    """A state component left the admissible range during stepping."""

    def __init__(self, component: str, step: int | None = None):
        self.component = component
        self.step = step
        where = f" at step {step}" if step is not None else ""
        super().__init__(
            f"|{component}| exceeded {DIVERGENCE_LIMIT:g} or became non-finite{where}"
        )


def _as_vector(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ContractViolation(f"{name} must be a nonempty 1-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ContractViolation(f"{name} must be finite")
    return arr


@dataclass(frozen=True)
class State:
    """Position and velocity in R^d."""

    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        x = _as_vector(self.x, "x")
        v = _as_vector(self.v, "v")
        if x.shape != v.shape:
            raise ContractViolation(f"x and v must share a shape, got {x.shape} vs {v.shape}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)

    @property
    def d(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True)
class ForceModel:
    """Force field b, optionally of gradient type b = -grad U.

    :param b: vectorized force, maps arrays of shape (..., d) to (..., d).
    :param lipschitz: declared Lipschitz constant of b (of grad U when present).
    :param potential: optional U, maps (..., d) to (...), with U >= 0, U(0) = 0.
    :param grad_potential: optional grad U; when given, b should equal -grad U.
    """

    b: Callable[[np.ndarray], np.ndarray]
    lipschitz: float
    potential: Callable[[np.ndarray], np.ndarray] | None = None
    grad_potential: Callable[[np.ndarray], np.ndarray] | None = None
    label: str = "custom"

    def __post_init__(self):
        if self.lipschitz < 0:
            raise ContractViolation("lipschitz must be nonnegative")


def validate_d1(force: ForceModel, points: np.ndarray, tol: float = 1e-9) -> None:
    """Check the gradient-type conditions at the origin and on sample points.

    Requires U(0) = 0, grad U(0) = 0, U >= 0 at every row of ``points``, and
    b = -grad U there. Raises ContractViolation on the first failure.
    """
    if force.potential is None or force.grad_potential is None:
        raise ContractViolation("force model does not carry a potential and its gradient")
    d = points.shape[-1]
    origin = np.zeros(d)
    if abs(float(force.potential(origin))) > tol:
        raise ContractViolation("U(0) must vanish")
    if np.max(np.abs(force.grad_potential(origin))) > tol:
        raise ContractViolation("grad U(0) must vanish")
    u = force.potential(points)
    if np.min(u) < -tol:
        raise ContractViolation("U must be nonnegative on the sampled points")
    gap = np.max(np.abs(force.b(points) + force.grad_potential(points)))
    if gap > tol * (1.0 + np.max(np.abs(force.grad_potential(points)))):
        raise ContractViolation("b must equal -grad U on the sampled points")


@dataclass(frozen=True)
class NoiseDraw:
    """One step of driving noise: Gaussian z plus auxiliary (w1, w2)."""

    z: np.ndarray
    w1: np.ndarray = field(default_factory=lambda: np.empty(0))
    w2: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        object.__setattr__(self, "z", np.asarray(self.z, dtype=np.float64))
        object.__setattr__(self, "w1", np.asarray(self.w1, dtype=np.float64))
        object.__setattr__(self, "w2", np.asarray(self.w2, dtype=np.float64))


@dataclass(frozen=True)
class NoiseSpec:
    """Shape of the auxiliary noise consumed per step.

    ``m1`` and ``m2`` are widths of the Gaussian auxiliary block w1 and the
    gradient-noise block w2; the string "d" means "the state dimension",
    resolved when a state is seen. ``w2_transform`` maps standard-normal base
    draws of width m2 to the distribution the scheme expects (for example a
    scale for Gaussian gradient noise); identity when omitted.
    """

    m1: int | str = 0
    m2: int | str = 0
    w2_transform: Callable[[np.ndarray], np.ndarray] | None = None

    def dims(self, d: int) -> tuple[int, int]:
        m1 = d if self.m1 == "d" else int(self.m1)
        m2 = d if self.m2 == "d" else int(self.m2)
        return m1, m2

    def width(self, d: int) -> int:
        m1, m2 = self.dims(d)
        return d + m1 + m2

    def split(self, block: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        m1, _ = self.dims(d)
        z = block[..., :d]
        w1 = block[..., d : d + m1]
        w2 = block[..., d + m1 :]
        if self.w2_transform is not None and w2.shape[-1]:
            w2 = self.w2_transform(w2)
        return z, w1, w2


@dataclass(frozen=True)
class GeneralScheme:
    """Coefficients and drift corrections of one discretization at fixed gamma.

    f and g have signature f(x, v_scaled, z_scaled, w1, w2) and receive the
    already-scaled velocity gamma^delta * v and noise
    gamma^(delta+1/2) * sigma_gamma * Z; they must broadcast over leading axes.
    ``d_matrix`` is either a scalar multiple of the identity or a (d, d) array.

    The remaining fields record the consistency metadata of the family the
    scheme was drawn from: tau must stay within c_kappa * gamma^2 of
    exp(-kappa gamma), sigma_gamma below sigma_bar, the operator norm of
    d_matrix below d_bound, and gamma within (0, gamma_bar].
    """

    gamma: float
    tau: float
    sigma_gamma: float
    d_matrix: float | np.ndarray
    delta: float
    f: Callable[..., np.ndarray]
    g: Callable[..., np.ndarray]
    noise_spec: NoiseSpec
    kappa: float
    sigma: float
    c_kappa: float
    sigma_bar: float
    d_bound: float
    gamma_bar: float
    vartheta: float = 0.0
    label: str = "general"
    force: ForceModel | None = None

    def __post_init__(self):
        if not (self.gamma > 0 and self.gamma <= self.gamma_bar * (1 + _A1_SLACK)):
            raise ContractViolation(
                f"gamma must lie in (0, {self.gamma_bar:g}], got {self.gamma:g}"
            )
        if not (0.0 < self.tau < 1.0):
            raise ContractViolation(f"tau must lie in (0, 1), got {self.tau:g}")
        drift = abs(self.tau - math.exp(-self.kappa * self.gamma))
        if drift > self.c_kappa * self.gamma**2 + _A1_SLACK:
            raise ContractViolation(
                f"|tau - exp(-kappa gamma)| = {drift:g} exceeds c_kappa gamma^2"
            )
        if self.sigma_gamma > self.sigma_bar * (1 + _A1_SLACK):
            raise ContractViolation("sigma_gamma exceeds sigma_bar")
        if self.d_norm() > self.d_bound * (1 + _A1_SLACK) + _A1_SLACK:
            raise ContractViolation("operator norm of d_matrix exceeds d_bound")

    def d_norm(self) -> float:
        if np.isscalar(self.d_matrix):
            return abs(float(self.d_matrix))
        return float(np.linalg.norm(self.d_matrix, ord=2))

    def apply_d(self, z: np.ndarray) -> np.ndarray:
        if np.isscalar(self.d_matrix):
            return float(self.d_matrix) * z
        return z @ np.asarray(self.d_matrix).T


def _check_noise_widths(scheme: GeneralScheme, d: int, z, w1, w2) -> None:
    m1, m2 = scheme.noise_spec.dims(d)
    if z.shape[-1] != d:
        raise ContractViolation(f"z must have width d={d}, got {z.shape[-1]}")
    if w1.shape[-1] != m1:
        raise ContractViolation(f"w1 must have width m1={m1}, got {w1.shape[-1]}")
    if w2.shape[-1] != m2:
        raise ContractViolation(f"w2 must have width m2={m2}, got {w2.shape[-1]}")


def _guard(x: np.ndarray, v: np.ndarray, step: int | None) -> None:
    mx = float(np.max(np.abs(x))) if x.size else 0.0
    if not math.isfinite(mx) or mx > DIVERGENCE_LIMIT:
        raise DivergedError("x", step)
    mv = float(np.max(np.abs(v))) if v.size else 0.0
    if not math.isfinite(mv) or mv > DIVERGENCE_LIMIT:
        raise DivergedError("v", step)


def _step_arrays(scheme: GeneralScheme, x, v, z, w1, w2, step: int | None = None):
    g_, d_ = scheme.gamma, scheme.delta
    v_s = g_**d_ * v
    z_s = g_ ** (d_ + 0.5) * scheme.sigma_gamma * z
    fx = scheme.f(x, v_s, z_s, w1, w2)
    gx = scheme.g(x, v_s, z_s, w1, w2)
    x_new = x + g_ * v + g_ * fx + g_ ** (d_ + 0.5) * scheme.sigma_gamma * scheme.apply_d(z)
    v_new = scheme.tau * v + g_ * gx + math.sqrt(g_) * scheme.sigma_gamma * z
    _guard(x_new, v_new, step)
    return x_new, v_new


def general_step(scheme: GeneralScheme, state: State, noise: NoiseDraw) -> State:
    """Apply one step of the general recursion to a single state."""
    _check_noise_widths(scheme, state.d, noise.z, noise.w1, noise.w2)
    x, v = _step_arrays(scheme, state.x, state.v, noise.z, noise.w1, noise.w2)
    return State(x, v)


def step_ensemble(
    scheme: GeneralScheme, x: np.ndarray, v: np.ndarray, noise: NoiseDraw
) -> tuple[np.ndarray, np.ndarray]:
    """Apply one step to a batch of states of shape (n, d)."""
    _check_noise_widths(scheme, x.shape[-1], noise.z, noise.w1, noise.w2)
    return _step_arrays(scheme, x, v, noise.z, noise.w1, noise.w2)


def full_noise_step(scheme: GeneralScheme, x, v, z_full, w1, w2, step: int | None = None):
    """One step driven by an explicit full-size velocity noise vector.

    ``z_full`` plays the role of sqrt(gamma) sigma_gamma Z; passing exactly
    that value reproduces ``general_step``. Used by perturbation probes that
    shift the noise rather than the Gaussian seed.
    """
    g_, d_ = scheme.gamma, scheme.delta
    v_s = g_**d_ * v
    z_s = g_**d_ * z_full
    fx = scheme.f(x, v_s, z_s, w1, w2)
    gx = scheme.g(x, v_s, z_s, w1, w2)
    x_new = x + g_ * v + g_ * fx + g_**d_ * scheme.apply_d(z_full)
    v_new = scheme.tau * v + g_ * gx + z_full
    _guard(x_new, v_new, step)
    return x_new, v_new


@dataclass(frozen=True)
class TrajectoryConfig:
    n_steps: int
    seed: int
    ensemble: int = 1
    record_every: int = 1

    def __post_init__(self):
        if self.n_steps < 1 or self.ensemble < 1 or self.record_every < 1:
            raise ContractViolation("n_steps, ensemble and record_every must be >= 1")


@dataclass(frozen=True)
class TrajectoryRecord:
    """Recorded steps of an ensemble run.

    ``xs`` and ``vs`` have shape (n_records, ensemble, d); ``steps`` holds the
    step index of each record (step 0 is always first, the final step last).
    """

    steps: np.ndarray
    xs: np.ndarray
    vs: np.ndarray

    @property
    def final_x(self) -> np.ndarray:
        return self.xs[-1]

    @property
    def final_v(self) -> np.ndarray:
        return self.vs[-1]

    def final_state(self) -> State:
        if self.xs.shape[1] != 1:
            raise ContractViolation("final_state() is for single-chain records")
        return State(self.xs[-1, 0], self.vs[-1, 0])

    def states(self) -> Iterator[State]:
        if self.xs.shape[1] != 1:
            raise ContractViolation("states() is for single-chain records")
        for x, v in zip(self.xs[:, 0], self.vs[:, 0]):
            yield State(x, v)


def simulate_chain(scheme: GeneralScheme, init: State, config: TrajectoryConfig) -> TrajectoryRecord:
    """Run an ensemble of chains from a common initial state.

    Chains use disjoint substreams of the counter-based noise source keyed by
    the config seed, so results do not depend on evaluation order. Raises
    DivergedError (carrying the step index) if any component passes the
    divergence guard.
    """
    from ._rng import NoiseSource

    d = init.d
    spec = scheme.noise_spec
    n = config.ensemble
    x = np.broadcast_to(init.x, (n, d)).copy()
    v = np.broadcast_to(init.v, (n, d)).copy()
    source = NoiseSource(config.seed, n, spec.width(d))

    rec_steps = [0]
    rec_x = [x.copy()]
    rec_v = [v.copy()]
    for k in range(config.n_steps):
        z, w1, w2 = spec.split(source.block_at(k), d)
        x, v = _step_arrays(scheme, x, v, z, w1, w2, step=k + 1)
        if (k + 1) % config.record_every == 0 or k + 1 == config.n_steps:
            rec_steps.append(k + 1)
            rec_x.append(x.copy())
            rec_v.append(v.copy())
    return TrajectoryRecord(np.asarray(rec_steps), np.asarray(rec_x), np.asarray(rec_v))


def aggregate_closed_form(scheme: GeneralScheme, init: State, noises: Sequence[NoiseDraw]) -> State:
    """Closed-form state after len(noises) steps.

    Combines the transition-matrix action on the initial state, the
    noise-weight sums applied to the drift corrections along the path, and
    the Gaussian aggregates of the raw draws. The intermediate states feeding
    the drift terms are obtained by forward iteration; the returned state
    equals iterating ``general_step`` up to floating-point reordering.
    """
    if not noises:
        raise ContractViolation("at least one noise draw is required")
    k = len(noises) - 1
    g_ = scheme.gamma
    tau = scheme.tau
    delta = scheme.delta
    d = init.d
    w = weight_vectors(k, g_, tau)
    g1, g2 = w.g1, w.g2

    x_i = init.x.copy()
    v_i = init.v.copy()
    sum_g = np.zeros(d)
    sum_f = np.zeros(d)
    sum_dz = np.zeros(d)
    sum_gv = np.zeros(d)
    for i, draw in enumerate(noises):
        _check_noise_widths(scheme, d, draw.z, draw.w1, draw.w2)
        z_full = math.sqrt(g_) * scheme.sigma_gamma * draw.z
        v_s = g_**delta * v_i
        z_s = g_**delta * z_full
        f_i = scheme.f(x_i, v_s, z_s, draw.w1, draw.w2)
        gd_i = scheme.g(x_i, v_s, z_s, draw.w1, draw.w2)
        if i < k:
            sum_g = sum_g + g1[i] * (g_ * gd_i + z_full)
        sum_f = sum_f + f_i
        sum_dz = sum_dz + scheme.apply_d(z_full)
        sum_gv = sum_gv + g2[i] * (g_ * gd_i + z_full)
        x_i = x_i + g_ * v_i + g_ * f_i + g_**delta * scheme.apply_d(z_full)
        v_i = tau * v_i + g_ * gd_i + z_full

    x_out = (
        init.x
        + g_ * (1.0 - tau ** (k + 1)) / (1.0 - tau) * init.v
        + sum_g
        + g_ * sum_f
        + g_**delta * sum_dz
    )
    v_out = tau ** (k + 1) * init.v + sum_gv
    return State(x_out, v_out)
