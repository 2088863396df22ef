"""Problem containers: dynamics and cost models, constraint sets, validation.

A :class:`ProblemSpec` bundles the horizon, a dynamics model, a stage-cost
model, per-stage state and control sets, and the per-channel frequency
supports.  :func:`validate` checks consistency, builds the frequency
constraint, and either returns the completed spec or raises with the complete
list of violations.

Specs are immutable once validated and safe to share across threads.  User
supplied evaluators (drift, gain, cost callables) must be pure functions of
their arguments; solvers and verifiers call them at arbitrary points in any
order.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .spectrum import FrequencyConstraint, SupportSpec, build_frequency_constraint

__all__ = [
    "LtiDynamics",
    "ControlAffineDynamics",
    "GeneralDynamics",
    "DynamicsModel",
    "QuadraticCost",
    "GeneralCost",
    "CostModel",
    "Free",
    "Fixed",
    "Box",
    "FREE",
    "Trajectory",
    "ProblemSpec",
    "ProblemValidationError",
    "validate",
    "check_jacobians",
    "JacobianCheck",
    "general_wrap",
    "rollout",
    "trajectory_cost",
    "lti_spec",
    "control_affine_spec",
]


def _frozen_array(value, dtype=float) -> np.ndarray:
    arr = np.array(value, dtype=dtype)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# dynamics models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LtiDynamics:
    """x_{t+1} = A x_t + B u_t."""

    A: np.ndarray
    B: np.ndarray

    kind = "lti"

    def __post_init__(self):
        A = _frozen_array(self.A)
        B = _frozen_array(self.B)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got shape {A.shape}")
        if B.ndim != 2 or B.shape[0] != A.shape[0]:
            raise ValueError(f"B must be ({A.shape[0]}, m), got shape {B.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def step(self, t: int, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.A @ x + self.B @ u

    def jac_x(self, t: int, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.A

    def jac_u(self, t: int, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.B


@dataclass(frozen=True)
class ControlAffineDynamics:
    """x_{t+1} = drift_t(x) + gain_t(x) @ u.

    ``drift(t, x)`` returns an n-vector, ``gain(t, x)`` an (n, m) matrix.
    ``drift_jac(t, x)`` is the (n, n) Jacobian of the drift; ``gain_jac(t, x)``
    is the (n, m, n) array with entry [i, j, l] = d gain[i, j] / d x[l], and
    may be omitted when the gain does not depend on the state.
    """

    n: int
    m: int
    drift: Callable[[int, np.ndarray], np.ndarray]
    gain: Callable[[int, np.ndarray], np.ndarray]
    drift_jac: Callable[[int, np.ndarray], np.ndarray]
    gain_jac: Callable[[int, np.ndarray], np.ndarray] | None = None

    kind = "control_affine"

    def step(self, t: int, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        return np.asarray(self.drift(t, x), dtype=float) + np.asarray(
            self.gain(t, x), dtype=float
        ).reshape(self.n, self.m) @ u

    def jac_x(self, t: int, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        jac = np.asarray(self.drift_jac(t, x), dtype=float).reshape(self.n, self.n)
        if self.gain_jac is not None:
            gj = np.asarray(self.gain_jac(t, x), dtype=float).reshape(self.n, self.m, self.n)
            jac = jac + np.einsum("ijl,j->il", gj, u)
        return jac

    def jac_u(self, t: int, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return np.asarray(self.gain(t, np.asarray(x, dtype=float)), dtype=float).reshape(
            self.n, self.m
        )

    def gain_state_jacobian(self, t: int, x: np.ndarray) -> np.ndarray:
        if self.gain_jac is None:
            return np.zeros((self.n, self.m, self.n))
        return np.asarray(self.gain_jac(t, np.asarray(x, dtype=float)), dtype=float).reshape(
            self.n, self.m, self.n
        )


@dataclass(frozen=True)
class GeneralDynamics:
    """x_{t+1} = f(t, x, u) with user-supplied Jacobians."""

    n: int
    m: int
    f: Callable[[int, np.ndarray, np.ndarray], np.ndarray]
    f_jac_x: Callable[[int, np.ndarray, np.ndarray], np.ndarray]
    f_jac_u: Callable[[int, np.ndarray, np.ndarray], np.ndarray]

    kind = "general"

    def step(self, t, x, u):
        return np.asarray(self.f(t, np.asarray(x, float), np.asarray(u, float)), float).reshape(
            self.n
        )

    def jac_x(self, t, x, u):
        return np.asarray(
            self.f_jac_x(t, np.asarray(x, float), np.asarray(u, float)), float
        ).reshape(self.n, self.n)

    def jac_u(self, t, x, u):
        return np.asarray(
            self.f_jac_u(t, np.asarray(x, float), np.asarray(u, float)), float
        ).reshape(self.n, self.m)


DynamicsModel = Union[LtiDynamics, ControlAffineDynamics, GeneralDynamics]


def general_wrap(model: DynamicsModel) -> GeneralDynamics:
    """View any dynamics model through the general (t, x, u) interface."""
    return GeneralDynamics(model.n, model.m, model.step, model.jac_x, model.jac_u)


# ---------------------------------------------------------------------------
# cost models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadraticCost:
    """Stage cost 0.5 x'Qx + 0.5 u'Ru, Q positive semidefinite, R positive definite."""

    Q: np.ndarray
    R: np.ndarray

    kind = "quadratic"

    def __post_init__(self):
        object.__setattr__(self, "Q", _frozen_array(self.Q))
        object.__setattr__(self, "R", _frozen_array(self.R))

    def value(self, t: int, x: np.ndarray, u: np.ndarray) -> float:
        return 0.5 * float(x @ self.Q @ x) + 0.5 * float(u @ self.R @ u)

    def grad_x(self, t: int, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.Q @ x

    def grad_u(self, t: int, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.R @ u


@dataclass(frozen=True)
class GeneralCost:
    """Stage cost c(t, x, u) with user-supplied gradients."""

    fn: Callable[[int, np.ndarray, np.ndarray], float]
    fn_grad_x: Callable[[int, np.ndarray, np.ndarray], np.ndarray]
    fn_grad_u: Callable[[int, np.ndarray, np.ndarray], np.ndarray]

    kind = "general"

    def value(self, t, x, u) -> float:
        return float(self.fn(t, np.asarray(x, float), np.asarray(u, float)))

    def grad_x(self, t, x, u) -> np.ndarray:
        return np.asarray(self.fn_grad_x(t, np.asarray(x, float), np.asarray(u, float)), float)

    def grad_u(self, t, x, u) -> np.ndarray:
        return np.asarray(self.fn_grad_u(t, np.asarray(x, float), np.asarray(u, float)), float)


CostModel = Union[QuadraticCost, GeneralCost]


# ---------------------------------------------------------------------------
# constraint sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Free:
    """The whole space."""

    kind = "free"


@dataclass(frozen=True)
class Fixed:
    """A single admissible point."""

    point: np.ndarray

    kind = "fixed"

    def __post_init__(self):
        object.__setattr__(self, "point", _frozen_array(np.atleast_1d(self.point)))


@dataclass(frozen=True)
class Box:
    """Componentwise bounds lower <= v <= upper."""

    lower: np.ndarray
    upper: np.ndarray

    kind = "box"

    def __post_init__(self):
        object.__setattr__(self, "lower", _frozen_array(np.atleast_1d(self.lower)))
        object.__setattr__(self, "upper", _frozen_array(np.atleast_1d(self.upper)))


FREE = Free()


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Trajectory:
    """Paired state sequence x_0..x_N and control sequence u_0..u_{N-1}."""

    states: np.ndarray
    controls: np.ndarray

    def __post_init__(self):
        states = _frozen_array(np.atleast_2d(self.states))
        controls = _frozen_array(np.atleast_2d(self.controls))
        if states.shape[0] != controls.shape[0] + 1:
            raise ValueError(
                f"need one more state than controls, got {states.shape[0]} states "
                f"and {controls.shape[0]} controls"
            )
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "controls", controls)

    @property
    def horizon(self) -> int:
        return self.controls.shape[0]

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def m(self) -> int:
        return self.controls.shape[1]


def rollout(dynamics: DynamicsModel, x0, controls) -> Trajectory:
    """Propagate the dynamics forward from x0 under the given controls."""
    u = np.asarray(controls, dtype=float)
    if u.ndim == 1:
        u = u.reshape(-1, dynamics.m)
    if u.ndim != 2 or u.shape[1] != dynamics.m:
        raise ValueError(f"controls must be (horizon, {dynamics.m}), got shape {u.shape}")
    states = np.zeros((u.shape[0] + 1, dynamics.n))
    states[0] = np.asarray(x0, dtype=float).reshape(dynamics.n)
    for t in range(u.shape[0]):
        states[t + 1] = dynamics.step(t, states[t], u[t])
    return Trajectory(states=states, controls=u)


def trajectory_cost(cost: CostModel, traj: Trajectory) -> float:
    """Total stage cost sum_{t=0}^{N-1} c_t(x_t, u_t)."""
    return float(
        sum(cost.value(t, traj.states[t], traj.controls[t]) for t in range(traj.horizon))
    )


# ---------------------------------------------------------------------------
# problem spec and validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProblemSpec:
    """Full problem statement; run :func:`validate` before handing to solvers."""

    horizon: int
    dynamics: DynamicsModel
    cost: CostModel
    state_sets: tuple
    control_sets: tuple
    supports: SupportSpec
    frequency_constraint: FrequencyConstraint | None = None

    @property
    def n(self) -> int:
        return self.dynamics.n

    @property
    def m(self) -> int:
        return self.dynamics.m


class ProblemValidationError(ValueError):
    """Raised by :func:`validate`; ``errors`` holds every violation found."""

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _check_symmetric(name: str, mat: np.ndarray, errors: list[str]) -> None:
    scale = 1.0 + float(np.max(np.abs(mat))) if mat.size else 1.0
    if np.max(np.abs(mat - mat.T)) > 1e-10 * scale:
        errors.append(f"{name}: matrix is not symmetric")


def validate(spec: ProblemSpec) -> ProblemSpec:
    """Check dimensions, definiteness, and bounds; build the frequency constraint.

    Returns a completed copy with ``frequency_constraint`` filled in, or raises
    :class:`ProblemValidationError` carrying the complete list of violations,
    each naming the offending stage and field.
    """
    errors: list[str] = []
    n, m = spec.dynamics.n, spec.dynamics.m
    horizon = int(spec.horizon)

    if horizon < 1:
        errors.append(f"horizon: must be >= 1, got {spec.horizon}")

    cost = spec.cost
    if isinstance(cost, QuadraticCost):
        if cost.Q.shape != (n, n):
            errors.append(f"cost.Q: expected shape ({n}, {n}), got {cost.Q.shape}")
        else:
            _check_symmetric("cost.Q", cost.Q, errors)
            if np.min(np.linalg.eigvalsh((cost.Q + cost.Q.T) / 2)) < -1e-10:
                errors.append("cost.Q: not positive semidefinite")
        if cost.R.shape != (m, m):
            errors.append(f"cost.R: expected shape ({m}, {m}), got {cost.R.shape}")
        else:
            _check_symmetric("cost.R", cost.R, errors)
            if np.min(np.linalg.eigvalsh((cost.R + cost.R.T) / 2)) <= 0.0:
                errors.append("cost.R: R not positive definite")

    if len(spec.state_sets) != horizon + 1:
        errors.append(
            f"state_sets: expected {horizon + 1} entries, got {len(spec.state_sets)}"
        )
    for t, s in enumerate(spec.state_sets):
        if isinstance(s, Fixed):
            if s.point.shape != (n,):
                errors.append(f"state_sets[{t}].point: expected dimension {n}, got {s.point.shape}")
        elif isinstance(s, Box):
            if s.lower.shape != (n,) or s.upper.shape != (n,):
                errors.append(f"state_sets[{t}]: box bounds must have dimension {n}")
            else:
                for i in np.flatnonzero(s.lower > s.upper):
                    errors.append(
                        f"state_sets[{t}]: box lower[{i}]={s.lower[i]} > upper[{i}]={s.upper[i]}"
                    )
        elif not isinstance(s, Free):
            errors.append(f"state_sets[{t}]: unknown set variant {type(s).__name__}")

    if len(spec.control_sets) != horizon:
        errors.append(f"control_sets: expected {horizon} entries, got {len(spec.control_sets)}")
    for t, s in enumerate(spec.control_sets):
        if isinstance(s, Box):
            if s.lower.shape != (m,) or s.upper.shape != (m,):
                errors.append(f"control_sets[{t}]: box bounds must have dimension {m}")
            else:
                for i in np.flatnonzero(s.lower > s.upper):
                    errors.append(
                        f"control_sets[{t}]: box lower[{i}]={s.lower[i]} > upper[{i}]={s.upper[i]}"
                    )
        elif not isinstance(s, Free):
            errors.append(
                f"control_sets[{t}]: {type(s).__name__} is not an admissible control set"
            )

    constraint = None
    if spec.supports.channels != m:
        errors.append(
            f"supports: {spec.supports.channels} channels, expected {m}"
        )
    elif horizon >= 1:
        try:
            constraint = build_frequency_constraint(spec.supports, horizon, m)
        except ValueError as exc:
            errors.append(f"supports: {exc}")

    if errors:
        raise ProblemValidationError(errors)
    return dataclasses.replace(spec, frequency_constraint=constraint)


def lti_spec(A, B, Q, R, horizon: int, x0=None, xf=None, banned=None) -> ProblemSpec:
    """Validated LTI/quadratic spec with fixed endpoints where given, free sets elsewhere."""
    dynamics = LtiDynamics(A, B)
    n, m = dynamics.n, dynamics.m
    state_sets = [FREE] * (horizon + 1)
    if x0 is not None:
        state_sets[0] = Fixed(np.asarray(x0, dtype=float).reshape(n))
    if xf is not None:
        state_sets[horizon] = Fixed(np.asarray(xf, dtype=float).reshape(n))
    supports = (
        SupportSpec.from_banned(banned, horizon)
        if banned is not None
        else SupportSpec.all_allowed(horizon, m)
    )
    return validate(
        ProblemSpec(
            horizon=horizon,
            dynamics=dynamics,
            cost=QuadraticCost(Q, R),
            state_sets=tuple(state_sets),
            control_sets=(FREE,) * horizon,
            supports=supports,
        )
    )


def control_affine_spec(
    dynamics: ControlAffineDynamics, Q, R, horizon: int, x0, xf, banned=None
) -> ProblemSpec:
    """Validated control-affine/quadratic spec with fixed endpoints."""
    n, m = dynamics.n, dynamics.m
    state_sets = [FREE] * (horizon + 1)
    state_sets[0] = Fixed(np.asarray(x0, dtype=float).reshape(n))
    state_sets[horizon] = Fixed(np.asarray(xf, dtype=float).reshape(n))
    supports = (
        SupportSpec.from_banned(banned, horizon)
        if banned is not None
        else SupportSpec.all_allowed(horizon, m)
    )
    return validate(
        ProblemSpec(
            horizon=horizon,
            dynamics=dynamics,
            cost=QuadraticCost(Q, R),
            state_sets=tuple(state_sets),
            control_sets=(FREE,) * horizon,
            supports=supports,
        )
    )


# ---------------------------------------------------------------------------
# derivative checking
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JacobianCheck:
    """Max absolute deviation between supplied derivatives and central differences."""

    dynamics_jac_x: float
    dynamics_jac_u: float
    cost_grad_x: float
    cost_grad_u: float

    @property
    def worst(self) -> float:
        return max(self.dynamics_jac_x, self.dynamics_jac_u, self.cost_grad_x, self.cost_grad_u)


def _fd_jacobian(fun, v: np.ndarray) -> np.ndarray:
    """Central finite differences columnwise, step 1e-6 * (1 + |coordinate|)."""
    base = np.atleast_1d(np.asarray(fun(v), dtype=float))
    jac = np.zeros((base.size, v.size))
    for j in range(v.size):
        h = 1e-6 * (1.0 + abs(v[j]))
        vp = v.copy()
        vm = v.copy()
        vp[j] += h
        vm[j] -= h
        jac[:, j] = (
            np.atleast_1d(np.asarray(fun(vp), dtype=float))
            - np.atleast_1d(np.asarray(fun(vm), dtype=float))
        ) / (2 * h)
    return jac


def check_jacobians(dynamics: DynamicsModel, cost: CostModel, samples) -> JacobianCheck:
    """Compare supplied Jacobians/gradients against central finite differences
    at each sample (t, x, u); returns the max deviation per block."""
    dev_fx = dev_fu = dev_cx = dev_cu = 0.0
    for i, (t, x, u) in enumerate(samples):
        x = np.asarray(x, dtype=float).reshape(dynamics.n)
        u = np.asarray(u, dtype=float).reshape(dynamics.m)
        try:
            fd_fx = _fd_jacobian(lambda v: dynamics.step(t, v, u), x)
            fd_fu = _fd_jacobian(lambda v: dynamics.step(t, x, v), u)
            dev_fx = max(dev_fx, float(np.max(np.abs(fd_fx - dynamics.jac_x(t, x, u)))))
            dev_fu = max(dev_fu, float(np.max(np.abs(fd_fu - dynamics.jac_u(t, x, u)))))
            fd_cx = _fd_jacobian(lambda v: cost.value(t, v, u), x).ravel()
            fd_cu = _fd_jacobian(lambda v: cost.value(t, x, v), u).ravel()
            dev_cx = max(dev_cx, float(np.max(np.abs(fd_cx - cost.grad_x(t, x, u)))))
            dev_cu = max(dev_cu, float(np.max(np.abs(fd_cu - cost.grad_u(t, x, u)))))
        except Exception as exc:
            raise RuntimeError(f"evaluator failed at sample {i} (t={t})") from exc
    return JacobianCheck(dev_fx, dev_fu, dev_cx, dev_cu)
