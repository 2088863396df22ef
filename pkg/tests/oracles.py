"""Independent oracles used to freeze expected values.

Each oracle is written against the problem definition directly, not against
the library's solution path: the DFT oracle is the naive double sum, the LQ
oracle is a dense KKT factorization over stacked controls obtained by
eliminating the states with explicit matrix powers, and the nonlinear oracle
is a generic constrained optimizer over the raw control vector started from
several seeds.
"""

import numpy as np


def naive_dft(signal):
    """O(N^2) double-sum DFT with the unitary 1/sqrt(N) scaling."""
    u = np.asarray(signal, dtype=float)
    size = len(u)
    out = np.zeros(size, dtype=complex)
    for xi in range(size):
        acc = 0.0 + 0.0j
        for t in range(size):
            acc += u[t] * np.exp(-2j * np.pi * xi * t / size)
        out[xi] = acc / np.sqrt(size)
    return out


def lti_rollout(A, B, x0, controls):
    A = np.asarray(A, float)
    B = np.asarray(B, float)
    u = np.atleast_2d(np.asarray(controls, float))
    states = np.zeros((u.shape[0] + 1, A.shape[0]))
    states[0] = np.asarray(x0, float).ravel()
    for t in range(u.shape[0]):
        states[t + 1] = A @ states[t] + B @ u[t]
    return states


def quadratic_cost(Q, R, states, controls):
    Q = np.asarray(Q, float)
    R = np.asarray(R, float)
    total = 0.0
    for t in range(len(controls)):
        total += 0.5 * states[t] @ Q @ states[t] + 0.5 * controls[t] @ R @ controls[t]
    return float(total)


def transfer_qp_oracle(A, B, Q, R, horizon, x0, xf=None, freq_matrix=None):
    """Dense equality-constrained QP over the time-stacked control vector.

    States are eliminated with explicit powers of A (x_t = A^t x0 + G_t w),
    the endpoint and frequency constraints become linear rows on w, and the
    KKT system [[H, E'], [E, 0]] is factorized by least squares.  Returns a
    dict with the controls, cost, states, and a feasibility flag based on the
    constraint residual of the recovered point.
    """
    A = np.asarray(A, float)
    B = np.asarray(B, float)
    Q = np.asarray(Q, float)
    R = np.asarray(R, float)
    n, m = B.shape
    N = horizon
    x0 = np.asarray(x0, float).ravel()

    powers = [np.eye(n)]
    for _ in range(N):
        powers.append(A @ powers[-1])
    # x_t = powers[t] x0 + G[t] w with w = (u_0; ...; u_{N-1})
    G = [np.zeros((n, N * m)) for _ in range(N + 1)]
    for t in range(1, N + 1):
        for s in range(t):
            G[t][:, s * m : (s + 1) * m] = powers[t - 1 - s] @ B
    H = np.kron(np.eye(N), R)
    g = np.zeros(N * m)
    for t in range(N):
        H += G[t].T @ Q @ G[t]
        g += G[t].T @ Q @ (powers[t] @ x0)

    rows = []
    rhs = []
    if xf is not None:
        rows.append(G[N])
        rhs.append(np.asarray(xf, float).ravel() - powers[N] @ x0)
    if freq_matrix is not None and np.asarray(freq_matrix).size:
        fm = np.asarray(freq_matrix, float)
        rows.append(fm)
        rhs.append(np.zeros(fm.shape[0]))
    if rows:
        E = np.vstack(rows)
        b = np.concatenate(rhs)
        kkt = np.block([[H, E.T], [E, np.zeros((E.shape[0], E.shape[0]))]])
        vec = np.concatenate([-g, b])
        sol = np.linalg.lstsq(kkt, vec, rcond=None)[0]
        w = sol[: N * m]
        feasible = np.max(np.abs(E @ w - b)) <= 1e-8 * (1.0 + np.max(np.abs(b), initial=0.0))
    else:
        w = np.linalg.lstsq(H, -g, rcond=None)[0]
        feasible = True
    controls = w.reshape(N, m)
    states = lti_rollout(A, B, x0, controls)
    return {
        "controls": controls,
        "states": states,
        "cost": quadratic_cost(Q, R, states, controls),
        "feasible": bool(feasible),
    }


def direct_transcription_oracle(step, stage_cost, horizon, m, x0, xf, freq_matrix=None, seeds=(0, 1, 2)):
    """Minimize the rolled-out cost over the raw control vector with a generic
    SQP solver from several starts; endpoint (and optional frequency) rows are
    equality constraints.  Returns the best (cost, controls) found."""
    from scipy.optimize import minimize

    x0 = np.asarray(x0, float).ravel()
    xf = np.asarray(xf, float).ravel()
    n = x0.size

    def roll(w):
        u = w.reshape(horizon, m)
        states = np.zeros((horizon + 1, n))
        states[0] = x0
        for t in range(horizon):
            states[t + 1] = step(t, states[t], u[t])
        return states, u

    def objective(w):
        states, u = roll(w)
        return sum(stage_cost(t, states[t], u[t]) for t in range(horizon))

    constraints = [{"type": "eq", "fun": lambda w: roll(w)[0][horizon] - xf}]
    if freq_matrix is not None and np.asarray(freq_matrix).size:
        fm = np.asarray(freq_matrix, float)
        constraints.append({"type": "eq", "fun": lambda w: fm @ w})

    best = None
    rng_starts = [np.zeros(horizon * m), np.full(horizon * m, 0.2)]
    for seed in seeds:
        rng_starts.append(np.random.default_rng(seed).standard_normal(horizon * m) * 0.3)
    for w0 in rng_starts:
        res = minimize(
            objective,
            w0,
            method="SLSQP",
            constraints=constraints,
            options={"ftol": 1e-14, "maxiter": 600},
        )
        if not res.success:
            continue
        if best is None or res.fun < best[0]:
            best = (float(res.fun), res.x.reshape(horizon, m))
    assert best is not None, "direct transcription oracle failed from every start"
    return best


def has_nontrivial_nullspace(matrix):
    """Brute-force null-space test by SVD."""
    M = np.atleast_2d(np.asarray(matrix, float))
    if M.shape[1] == 0:
        return False
    if M.shape[0] < M.shape[1]:
        return True
    s = np.linalg.svd(M, compute_uv=False)
    return bool(s[-1] <= max(M.shape) * s[0] * 1e-12 + 1e-12)


def random_lq_matrices(rng, n, m, spectral_radius=0.95):
    """Generic LQ data: A scaled to the given spectral radius, Q psd, R pd."""
    A = rng.standard_normal((n, n))
    radius = np.max(np.abs(np.linalg.eigvals(A)))
    if radius > 1e-12:
        A *= spectral_radius / radius
    B = rng.standard_normal((n, m))
    Mq = rng.standard_normal((n, n))
    Q = Mq.T @ Mq / n
    Mr = rng.standard_normal((m, m))
    R = Mr.T @ Mr / m + (0.2 + rng.random()) * np.eye(m)
    return A, B, Q, R


def random_banned_sets(rng, horizon, channels, max_total=2):
    """Small random banned sets, at most ``max_total`` seed frequencies overall."""
    banned = [[] for _ in range(channels)]
    for _ in range(int(rng.integers(0, max_total + 1))):
        banned[int(rng.integers(channels))].append(int(rng.integers(horizon)))
    return banned
