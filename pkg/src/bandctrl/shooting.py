"""Damped-Newton solver for the two-point boundary value system.

For control-affine (or LTI) dynamics with fixed endpoints, free interior
states, free controls, and the banned-frequency constraint, the first-order
conditions in normal form (eta_c = 1) are a square algebraic system in the
stacked unknowns z = (x_1..x_{N-1}, u_0..u_{N-1}, p_0..p_{N-1}, nu):

    x_{t+1} - f_t(x_t, u_t) = 0          (x_0, x_N substituted)
    p_{t-1} - (df_t/dx)'p_t + dc_t/dx = 0     t = 1..N-1
    -dc_t/du + (df_t/du)'p_t - F_t'nu = 0     t = 0..N-1
    sum_t F_t u_t = 0

Since both endpoints are fixed, the transversality conditions place no
restriction on p_0 and p_{N-1}; they stay free unknowns, which makes the
system exactly square.  The Newton iteration backtracks on the residual
max-norm; for LTI dynamics the residual is affine in z, so one undamped step
solves the system from any starting point.

The analytic residual Jacobian uses first derivatives of the dynamics plus
the gain's state Jacobian; second derivatives of the drift and gain are taken
as zero, which is exact for LTI models and for control-affine models whose
drift Jacobian and gain are affine in the state (such as the builtin toy).
Set ``NewtonOptions.fd_jacobian`` for models with curvature beyond that; a
general (non-quadratic) cost forces the finite-difference path as well.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .extremal import (
    AbnormalRegimeError,
    ExtremalLift,
    NormalityClass,
    classify_normality_freq,
    lift_from_solver,
)
from .lq import SolveStatus, lq_transfer_freq_solve
from .problem import (
    ControlAffineDynamics,
    Fixed,
    Free,
    GeneralCost,
    LtiDynamics,
    ProblemSpec,
    QuadraticCost,
    Trajectory,
    rollout,
)
from .spectrum import numerical_rank

__all__ = [
    "StackedUnknowns",
    "NewtonOptions",
    "ShootingResult",
    "SingularJacobianError",
    "assemble_residual",
    "residual_jacobian",
    "default_initialization",
    "newton_solve",
]


def _inf(a) -> float:
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


@dataclass(frozen=True)
class StackedUnknowns:
    """Flat vector of interior states, controls, adjoints, and the frequency
    multiplier, with the layout recorded."""

    z: np.ndarray
    n: int
    m: int
    horizon: int
    q: int

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float).ravel()
        expected = (self.horizon - 1) * self.n + self.horizon * self.m + self.horizon * self.n + self.q
        if z.size != expected:
            raise ValueError(f"flat vector has length {z.size}, layout requires {expected}")
        object.__setattr__(self, "z", z)

    @property
    def segments(self) -> dict[str, slice]:
        n, m, N, q = self.n, self.m, self.horizon, self.q
        ox, ou = 0, (N - 1) * n
        op = ou + N * m
        ov = op + N * n
        return {
            "states": slice(ox, ou),
            "controls": slice(ou, op),
            "adjoints": slice(op, ov),
            "nu": slice(ov, ov + q),
        }

    def states(self) -> np.ndarray:
        return self.z[self.segments["states"]].reshape(self.horizon - 1, self.n)

    def controls(self) -> np.ndarray:
        return self.z[self.segments["controls"]].reshape(self.horizon, self.m)

    def adjoints(self) -> np.ndarray:
        return self.z[self.segments["adjoints"]].reshape(self.horizon, self.n)

    def nu(self) -> np.ndarray:
        return self.z[self.segments["nu"]]

    @classmethod
    def pack(cls, interior_states, controls, adjoints, nu) -> "StackedUnknowns":
        xs = np.atleast_2d(np.asarray(interior_states, dtype=float))
        us = np.atleast_2d(np.asarray(controls, dtype=float))
        ps = np.atleast_2d(np.asarray(adjoints, dtype=float))
        nu = np.atleast_1d(np.asarray(nu, dtype=float))
        N, m = us.shape
        n = ps.shape[1]
        if N == 1:
            xs = np.zeros((0, n))
        flat = np.concatenate([xs.ravel(), us.ravel(), ps.ravel(), nu])
        return cls(flat, n=n, m=m, horizon=N, q=nu.size)

    @classmethod
    def zeros(cls, n: int, m: int, horizon: int, q: int) -> "StackedUnknowns":
        size = (horizon - 1) * n + horizon * m + horizon * n + q
        return cls(np.zeros(size), n=n, m=m, horizon=horizon, q=q)


@dataclass(frozen=True)
class NewtonOptions:
    max_iterations: int = 60
    tolerance: float = 1e-10  # absolute, residual max-norm
    backtrack_factor: float = 0.5
    min_step: float = 2.0 ** -30
    fd_jacobian: bool = False

    def __post_init__(self):
        if self.tolerance <= 0 or self.max_iterations < 1:
            raise ValueError("tolerance must be > 0 and max_iterations >= 1")


@dataclass(frozen=True)
class ShootingResult:
    trajectory: Trajectory
    lift: ExtremalLift
    iterations: int
    final_residual: float
    converged: bool
    trace: tuple  # (iteration, residual max-norm, accepted step)
    init_warning: bool = False


class SingularJacobianError(RuntimeError):
    """Newton hit a singular residual Jacobian; carries iterate diagnostics."""

    def __init__(self, iteration: int, size: int, rank: int, residual: float):
        self.iteration = iteration
        self.size = size
        self.rank = rank
        self.residual = residual
        super().__init__(
            f"singular residual Jacobian at iteration {iteration}: "
            f"numerical rank {rank} of {size}, residual {residual:.3e}"
        )


def _check_supported(spec: ProblemSpec) -> None:
    if not isinstance(spec.dynamics, (LtiDynamics, ControlAffineDynamics)):
        raise ValueError(
            f"shooting requires LTI or control-affine dynamics, got {type(spec.dynamics).__name__}"
        )
    for t, s in enumerate(spec.control_sets):
        if not isinstance(s, Free):
            raise ValueError(
                f"shooting requires free control sets; control_sets[{t}] is {type(s).__name__}"
            )
    for t in range(1, spec.horizon):
        if not isinstance(spec.state_sets[t], Free):
            raise ValueError(
                f"shooting requires free interior state sets; state_sets[{t}] is "
                f"{type(spec.state_sets[t]).__name__}"
            )
    for t in (0, spec.horizon):
        if not isinstance(spec.state_sets[t], Fixed):
            raise ValueError(
                f"shooting requires fixed endpoints; state_sets[{t}] is "
                f"{type(spec.state_sets[t]).__name__}"
            )
    if spec.frequency_constraint is None:
        raise ValueError("spec must be validated first (frequency constraint missing)")


def _layout(spec: ProblemSpec):
    n, m, N = spec.n, spec.m, spec.horizon
    q = spec.frequency_constraint.row_count if spec.frequency_constraint else 0
    ox, ou = 0, (N - 1) * n
    op = ou + N * m
    ov = op + N * n
    return n, m, N, q, ox, ou, op, ov


def _full_states(zvec, spec, x0, xf):
    n, m, N, q, ox, ou, op, ov = _layout(spec)
    states = np.empty((N + 1, n))
    states[0] = x0
    if N > 1:
        states[1:N] = zvec[ox:ou].reshape(N - 1, n)
    states[N] = xf
    return states


def _residual_vec(zvec: np.ndarray, spec: ProblemSpec, x0, xf) -> np.ndarray:
    n, m, N, q, ox, ou, op, ov = _layout(spec)
    x0 = np.asarray(x0, dtype=float).reshape(n)
    xf = np.asarray(xf, dtype=float).reshape(n)
    states = _full_states(zvec, spec, x0, xf)
    controls = zvec[ou:op].reshape(N, m)
    adjoints = zvec[op:ov].reshape(N, n)
    nu = zvec[ov:]
    blocks = spec.frequency_constraint.blocks
    dyn, cost = spec.dynamics, spec.cost

    res = np.zeros(zvec.size)
    row = 0
    for t in range(N):  # (a) state dynamics
        res[row : row + n] = states[t + 1] - dyn.step(t, states[t], controls[t])
        row += n
    for t in range(1, N):  # (b) adjoint dynamics, eta_c = 1
        res[row : row + n] = (
            adjoints[t - 1]
            - dyn.jac_x(t, states[t], controls[t]).T @ adjoints[t]
            + cost.grad_x(t, states[t], controls[t])
        )
        row += n
    for t in range(N):  # (c) stationarity dH/du
        g = -cost.grad_u(t, states[t], controls[t]) + dyn.jac_u(t, states[t], controls[t]).T @ adjoints[t]
        if q:
            g = g - blocks[t].T @ nu
        res[row : row + m] = g
        row += m
    if q:  # (d) frequency residual
        res[row : row + q] = np.einsum("tqm,tm->q", blocks, controls)
    return res


def assemble_residual(z: StackedUnknowns, spec: ProblemSpec, x0, xf) -> np.ndarray:
    """Stacked residual of the first-order system at the given unknowns.

    Blocks in order: state dynamics (endpoints substituted), adjoint dynamics,
    control stationarity, frequency residual.  Zero exactly at a normal
    extremal of the fixed-endpoint problem.
    """
    _check_supported(spec)
    n, m, N, q, *_ = _layout(spec)
    if (z.n, z.m, z.horizon, z.q) != (n, m, N, q):
        raise ValueError(
            f"unknown layout ({z.n}, {z.m}, {z.horizon}, {z.q}) does not match the "
            f"spec ({n}, {m}, {N}, {q})"
        )
    return _residual_vec(z.z, spec, x0, xf)


def _gain_state_jac(dyn, t, x):
    if isinstance(dyn, ControlAffineDynamics):
        return dyn.gain_state_jacobian(t, x)
    return np.zeros((dyn.n, dyn.m, dyn.n))


def _jacobian_analytic(zvec, spec, x0, xf) -> np.ndarray:
    n, m, N, q, ox, ou, op, ov = _layout(spec)
    states = _full_states(zvec, spec, np.asarray(x0, float).reshape(n), np.asarray(xf, float).reshape(n))
    controls = zvec[ou:op].reshape(N, m)
    adjoints = zvec[op:ov].reshape(N, n)
    blocks = spec.frequency_constraint.blocks
    dyn, cost = spec.dynamics, spec.cost
    Q, R = cost.Q, cost.R

    size = zvec.size
    jac = np.zeros((size, size))
    eye = np.eye(n)
    row = 0
    for t in range(N):  # (a)
        if t + 1 <= N - 1:
            jac[row : row + n, ox + t * n : ox + (t + 1) * n] += eye
        if 1 <= t:
            jac[row : row + n, ox + (t - 1) * n : ox + t * n] -= dyn.jac_x(t, states[t], controls[t])
        jac[row : row + n, ou + t * m : ou + (t + 1) * m] -= dyn.jac_u(t, states[t], controls[t])
        row += n
    for t in range(1, N):  # (b); drift/gain second derivatives taken as zero
        jac[row : row + n, op + (t - 1) * n : op + t * n] += eye
        jac[row : row + n, op + t * n : op + (t + 1) * n] -= dyn.jac_x(t, states[t], controls[t]).T
        jac[row : row + n, ox + (t - 1) * n : ox + t * n] += Q
        gj = _gain_state_jac(dyn, t, states[t])
        if np.any(gj):
            jac[row : row + n, ou + t * m : ou + (t + 1) * m] -= np.einsum(
                "ijl,i->lj", gj, adjoints[t]
            )
        row += n
    for t in range(N):  # (c)
        jac[row : row + m, ou + t * m : ou + (t + 1) * m] -= R
        jac[row : row + m, op + t * n : op + (t + 1) * n] += dyn.jac_u(t, states[t], controls[t]).T
        if 1 <= t <= N - 1:
            gj = _gain_state_jac(dyn, t, states[t])
            if np.any(gj):
                jac[row : row + m, ox + (t - 1) * n : ox + t * n] += np.einsum(
                    "ijl,i->jl", gj, adjoints[t]
                )
        if q:
            jac[row : row + m, ov:] -= blocks[t].T
        row += m
    if q:  # (d)
        for t in range(N):
            jac[row : row + q, ou + t * m : ou + (t + 1) * m] += blocks[t]
    return jac


def _jacobian_fd(zvec, spec, x0, xf) -> np.ndarray:
    size = zvec.size
    jac = np.zeros((size, size))
    for j in range(size):
        h = 1e-7 * (1.0 + abs(zvec[j]))
        zp = zvec.copy()
        zm = zvec.copy()
        zp[j] += h
        zm[j] -= h
        jac[:, j] = (_residual_vec(zp, spec, x0, xf) - _residual_vec(zm, spec, x0, xf)) / (2 * h)
    return jac


def residual_jacobian(
    z: StackedUnknowns, spec: ProblemSpec, x0, xf, fd: bool = False
) -> np.ndarray:
    """Jacobian of :func:`assemble_residual` with respect to the unknowns."""
    _check_supported(spec)
    if fd or isinstance(spec.cost, GeneralCost):
        return _jacobian_fd(z.z, spec, x0, xf)
    return _jacobian_analytic(z.z, spec, x0, xf)


def default_initialization(spec: ProblemSpec, x0, xf) -> tuple[StackedUnknowns, bool]:
    """Initial iterate from the exactly-solved linearized problem.

    LTI specs initialize at their own exact solution.  Control-affine specs
    linearize about (x0, 0) and lift the resulting LTI solution.  If that
    transfer is infeasible or in an abnormal regime (for instance a vanishing
    linearized gain), falls back to the zero iterate and sets the warning flag.
    """
    _check_supported(spec)
    n, m, N, q, *_ = _layout(spec)
    x0 = np.asarray(x0, dtype=float).reshape(n)
    xf = np.asarray(xf, dtype=float).reshape(n)
    dyn = spec.dynamics
    zero_u = np.zeros(m)
    A = np.asarray(dyn.jac_x(0, x0, zero_u), dtype=float)
    B = np.asarray(dyn.jac_u(0, x0, zero_u), dtype=float)
    if isinstance(spec.cost, QuadraticCost):
        Q, R = spec.cost.Q, spec.cost.R
    else:
        Q, R = np.eye(n), np.eye(m)
    try:
        sol = lq_transfer_freq_solve(A, B, Q, R, N, x0, xf, spec.frequency_constraint)
    except AbnormalRegimeError:
        return StackedUnknowns.zeros(n, m, N, q), True
    if sol.status is not SolveStatus.SOLVED:
        return StackedUnknowns.zeros(n, m, N, q), True
    interior = sol.trajectory.states[1:N] if N > 1 else np.zeros((0, n))
    return (
        StackedUnknowns.pack(interior, sol.trajectory.controls, sol.adjoints, sol.nu),
        False,
    )


def newton_solve(
    spec: ProblemSpec,
    x0,
    xf,
    init: StackedUnknowns | None = None,
    opts: NewtonOptions | None = None,
) -> ShootingResult:
    """Damped Newton iteration on the stacked first-order residual.

    Backtracks by halving until the residual max-norm strictly decreases;
    stops when the residual drops below ``opts.tolerance`` or the iteration
    budget runs out.  For LTI specs the residual is affine, so any starting
    point converges in a single undamped step.  LTI specs in an all-abnormal
    regime are refused with :class:`AbnormalRegimeError`; a singular Jacobian
    raises :class:`SingularJacobianError` with iterate diagnostics.
    """
    _check_supported(spec)
    opts = opts or NewtonOptions()
    n, m, N, q, ox, ou, op, ov = _layout(spec)
    x0 = np.asarray(x0, dtype=float).reshape(n)
    xf = np.asarray(xf, dtype=float).reshape(n)

    if isinstance(spec.dynamics, LtiDynamics):
        verdict = classify_normality_freq(
            spec.dynamics.A, spec.dynamics.B, N, spec.frequency_constraint
        )
        if verdict.classification is NormalityClass.ALL_ABNORMAL:
            raise AbnormalRegimeError(verdict)

    init_warning = False
    if init is None:
        init, init_warning = default_initialization(spec, x0, xf)

    z = init.z.copy()
    residual = _residual_vec(z, spec, x0, xf)
    norm = _inf(residual)
    trace: list[tuple[int, float, float]] = [(0, norm, 0.0)]
    iterations = 0
    use_fd = opts.fd_jacobian or isinstance(spec.cost, GeneralCost)

    while norm > opts.tolerance and iterations < opts.max_iterations:
        iterations += 1
        jac = (
            _jacobian_fd(z, spec, x0, xf) if use_fd else _jacobian_analytic(z, spec, x0, xf)
        )
        try:
            step = np.linalg.solve(jac, -residual)
        except np.linalg.LinAlgError:
            raise SingularJacobianError(iterations, jac.shape[0], numerical_rank(jac), norm)
        if not np.all(np.isfinite(step)):
            raise SingularJacobianError(iterations, jac.shape[0], numerical_rank(jac), norm)
        alpha = 1.0
        accepted = False
        while alpha >= opts.min_step:
            z_try = z + alpha * step
            r_try = _residual_vec(z_try, spec, x0, xf)
            norm_try = _inf(r_try)
            if norm_try < norm:
                accepted = True
                break
            alpha *= opts.backtrack_factor
        if not accepted:
            iterations -= 1  # no step taken
            break
        z, residual, norm = z_try, r_try, norm_try
        trace.append((iterations, norm, alpha))

    controls = z[ou:op].reshape(N, m)
    adjoints = z[op:ov].reshape(N, n)
    nu = z[ov:].copy()
    traj = rollout(spec.dynamics, x0, controls)
    lift = lift_from_solver(spec, traj, adjoints, nu, eta_c=1.0)
    return ShootingResult(
        trajectory=traj,
        lift=lift,
        iterations=iterations,
        final_residual=norm,
        converged=norm <= opts.tolerance,
        trace=tuple(trace),
        init_warning=init_warning,
    )
