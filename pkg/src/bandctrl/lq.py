"""Exact solvers for the linear-quadratic problem family.

Four entry points, all for x_{t+1} = A x_t + B u_t with stage cost
0.5 x'Qx + 0.5 u'Ru (Q psd, R pd):

* :func:`riccati_solve` - free final state, backward value recursion and
  feedback rollout;
* :func:`lq_pmp_solve` - same problem through the first-order two-point
  system, assembled and solved as one linear system;
* :func:`lq_transfer_solve` - fixed endpoints x_0 = x0, x_N = xf;
* :func:`lq_transfer_freq_solve` - fixed endpoints plus the banned-frequency
  equality constraint sum_t F_t u_t = 0, with its multiplier nu.

The transfer systems are square; they are solved directly, with a least
squares fallback (minimum-norm over the whole stacked vector, hence over the
multipliers when those are non-unique).  A least-squares residual above
1e-7 * (1 + |rhs|) flags the transfer as infeasible.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .extremal import AbnormalRegimeError, NormalityClass, classify_normality_freq
from .problem import LtiDynamics, QuadraticCost, Trajectory, rollout, trajectory_cost
from .spectrum import FrequencyConstraint

__all__ = [
    "SolveStatus",
    "RiccatiSolution",
    "LqSolution",
    "riccati_solve",
    "riccati_adjoints",
    "lq_pmp_solve",
    "lq_transfer_solve",
    "lq_transfer_freq_solve",
    "INFEASIBILITY_TOL",
]

INFEASIBILITY_TOL = 1e-7


class SolveStatus(Enum):
    SOLVED = "SOLVED"
    INFEASIBLE = "INFEASIBLE"
    SINGULAR = "SINGULAR"


def _inf(a) -> float:
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def _as_lq(A, B, Q, R):
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    n, m = B.shape
    if A.shape != (n, n) or Q.shape != (n, n) or R.shape != (m, m):
        raise ValueError(
            f"inconsistent shapes: A{A.shape} B{B.shape} Q{Q.shape} R{R.shape}"
        )
    return A, B, Q, R, n, m


@dataclass(frozen=True)
class RiccatiSolution:
    """Backward value matrices S_0..S_N, feedback gains K_0..K_{N-1}, and the
    rolled-out cost; S_N = 0 and u_t = K_t x_t."""

    value_matrices: np.ndarray  # (N+1, n, n)
    gains: np.ndarray  # (N, m, n)
    cost: float
    status: SolveStatus = SolveStatus.SOLVED


@dataclass(frozen=True)
class LqSolution:
    trajectory: Trajectory | None
    adjoints: np.ndarray | None
    nu: np.ndarray
    cost: float
    status: SolveStatus
    ls_residual: float = 0.0
    endpoint_gap: float = 0.0


def riccati_solve(A, B, Q, R, horizon: int, x0) -> tuple[RiccatiSolution, Trajectory | None]:
    """Bellman recursion for the free-final-state LQ problem.

    S_N = 0;  K_t = -(R + B'S_{t+1}B)^(-1) B'S_{t+1}A;
    S_t = (A + B K_t)' S_{t+1} (A + B K_t) + K_t' R K_t + Q;  u_t = K_t x_t.
    """
    A, B, Q, R, n, m = _as_lq(A, B, Q, R)
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    x0 = np.asarray(x0, dtype=float).reshape(n)
    S = np.zeros((horizon + 1, n, n))
    K = np.zeros((horizon, m, n))
    for t in range(horizon - 1, -1, -1):
        BSB = R + B.T @ S[t + 1] @ B
        try:
            K[t] = -np.linalg.solve(BSB, B.T @ S[t + 1] @ A)
        except np.linalg.LinAlgError:
            return (
                RiccatiSolution(S, K, float("nan"), SolveStatus.SINGULAR),
                None,
            )
        closed = A + B @ K[t]
        St = closed.T @ S[t + 1] @ closed + K[t].T @ R @ K[t] + Q
        S[t] = 0.5 * (St + St.T)
    states = np.zeros((horizon + 1, n))
    controls = np.zeros((horizon, m))
    states[0] = x0
    for t in range(horizon):
        controls[t] = K[t] @ states[t]
        states[t + 1] = A @ states[t] + B @ controls[t]
    traj = Trajectory(states=states, controls=controls)
    cost = trajectory_cost(QuadraticCost(Q, R), traj)
    return RiccatiSolution(S, K, cost, SolveStatus.SOLVED), traj


def riccati_adjoints(solution: RiccatiSolution, traj: Trajectory) -> np.ndarray:
    """Adjoints consistent with the value recursion: p_t = -S_{t+1} x_{t+1}."""
    horizon = traj.horizon
    return np.array(
        [-solution.value_matrices[t + 1] @ traj.states[t + 1] for t in range(horizon)]
    )


def _solve_stacked(M: np.ndarray, rhs: np.ndarray):
    """Solve a square stacked system, falling back to least squares.

    Returns (z, residual, consistent); residual is the max-norm of M z - rhs
    and consistency uses INFEASIBILITY_TOL * (1 + |rhs|).
    """
    threshold = INFEASIBILITY_TOL * (1.0 + _inf(rhs))
    z = None
    try:
        cand = np.linalg.solve(M, rhs)
        if np.all(np.isfinite(cand)):
            z = cand
    except np.linalg.LinAlgError:
        z = None
    if z is None or _inf(M @ z - rhs) > threshold:
        z = np.linalg.lstsq(M, rhs, rcond=None)[0]
    # one step of iterative refinement sharpens consistent solves to machine level
    try:
        z = z + np.linalg.solve(M, rhs - M @ z)
    except np.linalg.LinAlgError:
        z = z + np.linalg.lstsq(M, rhs - M @ z, rcond=None)[0]
    residual = _inf(M @ z - rhs)
    return z, residual, residual <= threshold


def lq_pmp_solve(A, B, Q, R, horizon: int, x0) -> LqSolution:
    """Free-final-state LQ problem through its first-order system.

    Stacks x_1..x_N, u_0..u_{N-1}, p_0..p_{N-1} and solves

        x_{t+1} = A x_t + B u_t,       x_0 = x0,
        p_{t-1} = A'p_t - Q x_t,       t = 1..N-1,
        R u_t   = B'p_t,               p_{N-1} = 0.

    eta_c = 1 throughout: the free-endpoint problem has no abnormal extremals
    (a zero cost multiplier forces the whole adjoint sequence to zero).
    """
    A, B, Q, R, n, m = _as_lq(A, B, Q, R)
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    x0 = np.asarray(x0, dtype=float).reshape(n)
    N = horizon
    off_x, off_u, off_p = 0, N * n, N * n + N * m
    size = 2 * N * n + N * m
    M = np.zeros((size, size))
    rhs = np.zeros(size)
    row = 0
    eye = np.eye(n)
    for t in range(N):  # dynamics
        M[row : row + n, off_x + t * n : off_x + (t + 1) * n] += eye
        if t >= 1:
            M[row : row + n, off_x + (t - 1) * n : off_x + t * n] -= A
        else:
            rhs[row : row + n] += A @ x0
        M[row : row + n, off_u + t * m : off_u + (t + 1) * m] -= B
        row += n
    for t in range(1, N):  # adjoint recursion
        M[row : row + n, off_p + (t - 1) * n : off_p + t * n] += eye
        M[row : row + n, off_p + t * n : off_p + (t + 1) * n] -= A.T
        M[row : row + n, off_x + (t - 1) * n : off_x + t * n] += Q
        row += n
    for t in range(N):  # stationarity
        M[row : row + m, off_u + t * m : off_u + (t + 1) * m] += R
        M[row : row + m, off_p + t * n : off_p + (t + 1) * n] -= B.T
        row += m
    M[row : row + n, off_p + (N - 1) * n : off_p + N * n] += eye  # p_{N-1} = 0
    try:
        z = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError:
        return LqSolution(None, None, np.zeros(0), float("nan"), SolveStatus.SINGULAR)
    if not np.all(np.isfinite(z)):
        return LqSolution(None, None, np.zeros(0), float("nan"), SolveStatus.SINGULAR)
    controls = z[off_u:off_p].reshape(N, m)
    adjoints = z[off_p:].reshape(N, n)
    traj = rollout(LtiDynamics(A, B), x0, controls)
    cost = trajectory_cost(QuadraticCost(Q, R), traj)
    return LqSolution(traj, adjoints, np.zeros(0), cost, SolveStatus.SOLVED)


def _transfer_system(A, B, Q, R, N, n, m, x0, xf, blocks):
    """Square first-order system for the fixed-endpoint transfer, with the
    frequency rows appended when blocks has q > 0 rows."""
    q = blocks.shape[1]
    off_x, off_u = 0, (N - 1) * n
    off_p = off_u + N * m
    off_v = off_p + N * n
    size = off_v + q
    M = np.zeros((size, size))
    rhs = np.zeros(size)
    eye = np.eye(n)
    row = 0
    for t in range(N):  # dynamics, endpoints substituted
        if t + 1 <= N - 1:
            M[row : row + n, off_x + t * n : off_x + (t + 1) * n] += eye
        else:
            rhs[row : row + n] -= xf
        if 1 <= t:
            M[row : row + n, off_x + (t - 1) * n : off_x + t * n] -= A
        else:
            rhs[row : row + n] += A @ x0
        M[row : row + n, off_u + t * m : off_u + (t + 1) * m] -= B
        row += n
    for t in range(1, N):  # adjoint recursion (interior states only)
        M[row : row + n, off_p + (t - 1) * n : off_p + t * n] += eye
        M[row : row + n, off_p + t * n : off_p + (t + 1) * n] -= A.T
        M[row : row + n, off_x + (t - 1) * n : off_x + t * n] += Q
        row += n
    for t in range(N):  # stationarity R u = B'p - F'nu
        M[row : row + m, off_u + t * m : off_u + (t + 1) * m] += R
        M[row : row + m, off_p + t * n : off_p + (t + 1) * n] -= B.T
        if q:
            M[row : row + m, off_v:] += blocks[t].T
        row += m
    if q:  # frequency residual
        for t in range(N):
            M[row : row + q, off_u + t * m : off_u + (t + 1) * m] += blocks[t]
    return M, rhs, (off_x, off_u, off_p, off_v)


def _solve_transfer(A, B, Q, R, horizon, x0, xf, blocks) -> LqSolution:
    A, B, Q, R, n, m = _as_lq(A, B, Q, R)
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    x0 = np.asarray(x0, dtype=float).reshape(n)
    xf = np.asarray(xf, dtype=float).reshape(n)
    N = horizon
    M, rhs, (off_x, off_u, off_p, off_v) = _transfer_system(A, B, Q, R, N, n, m, x0, xf, blocks)
    z, residual, consistent = _solve_stacked(M, rhs)
    nu = z[off_v:].copy()
    if not consistent:
        return LqSolution(None, None, nu, float("nan"), SolveStatus.INFEASIBLE, residual)
    controls = z[off_u:off_p].reshape(N, m)
    adjoints = z[off_p:off_v].reshape(N, n)
    traj = rollout(LtiDynamics(A, B), x0, controls)
    cost = trajectory_cost(QuadraticCost(Q, R), traj)
    gap = _inf(traj.states[N] - xf)
    return LqSolution(traj, adjoints, nu, cost, SolveStatus.SOLVED, residual, gap)


def lq_transfer_solve(A, B, Q, R, horizon: int, x0, xf) -> LqSolution:
    """Fixed-endpoint LQ transfer.  The adjoints p_0 and p_{N-1} are free
    unknowns; an unreachable target surfaces as INFEASIBLE with the least
    squares residual reported."""
    n, m = np.asarray(B).shape
    return _solve_transfer(A, B, Q, R, horizon, x0, xf, np.zeros((horizon, 0, m)))


def lq_transfer_freq_solve(
    A, B, Q, R, horizon: int, x0, xf, constraint: FrequencyConstraint
) -> LqSolution:
    """Fixed-endpoint LQ transfer under sum_t F_t u_t = 0.

    Adds the multiplier nu to the unknowns, F_t' nu to the stationarity rows,
    and the frequency residual rows to the system; solved in normal form
    (eta_c = 1).  Refuses to run when :func:`classify_normality_freq` reports
    an all-abnormal regime, raising :class:`AbnormalRegimeError`.  When the
    multiplier is non-unique the least-squares path returns the minimum-norm
    stacked solution, so nu is the minimum-norm multiplier consistent with the
    (unique) optimal controls.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    verdict = classify_normality_freq(A, B, horizon, constraint)
    if verdict.classification is NormalityClass.ALL_ABNORMAL:
        raise AbnormalRegimeError(verdict)
    return _solve_transfer(A, B, Q, R, horizon, x0, xf, constraint.blocks)
