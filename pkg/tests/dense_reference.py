"""Reference implementations used as oracles by the test suite.

Everything here is deliberately written the slow, obvious way (dense
matrices, explicit loops) and independently of the package internals, so
agreement between the two routes is meaningful.
"""

import numpy as np


def dense_kalman(times, Z, rho, observation_map=None, measurement_cov=None,
                 retained=None):
    """Dense normal-equation solve of the batch smoothing objective.

    Minimizes ||H X - Z||^2_{R^-1} + rho * ||G s||^2_{Q^-1} over the stacked
    state s = (x_1, v_1, ..., x_m, v_m), where G takes per-step increments
    (x_{i+1} - x_i - dt v_i, v_{i+1} - v_i) and Q is the integrated-Wiener
    step covariance. Returns (states, derivatives) shaped like Z.
    """
    times = np.asarray(times, dtype=float)
    Z = np.asarray(Z, dtype=float)
    n_obs, m = Z.shape
    dt = times[1] - times[0]
    H = np.eye(n_obs) if observation_map is None else np.asarray(observation_map, float)
    n = H.shape[1]
    R = np.eye(n_obs) if measurement_cov is None else np.asarray(measurement_cov, float)
    R_inv = np.linalg.inv(R)
    if retained is None:
        retained = np.arange(m)
    retained = set(int(i) for i in np.asarray(retained).ravel())

    dim = 2 * n * m

    def x_slice(i):
        return slice(2 * n * i, 2 * n * i + n)

    def v_slice(i):
        return slice(2 * n * i + n, 2 * n * (i + 1))

    A = np.zeros((dim, dim))
    b = np.zeros(dim)

    # measurement term: sum over retained i of (H x_i - z_i)' R^-1 (H x_i - z_i)
    HtRH = H.T @ R_inv @ H
    for i in range(m):
        if i not in retained:
            continue
        A[x_slice(i), x_slice(i)] += HtRH
        b[x_slice(i)] += H.T @ R_inv @ Z[:, i]

    # process term: per-step increment w_i = (x_{i+1} - x_i - dt v_i, v_{i+1} - v_i)
    Q = np.array([[dt**3 / 3.0, dt**2 / 2.0], [dt**2 / 2.0, dt]])
    Q_inv = np.linalg.inv(Q)
    for i in range(m - 1):
        # rows of the increment map into the stacked state, kron with eye(n)
        G = np.zeros((2 * n, dim))
        G[:n, x_slice(i + 1)] = np.eye(n)
        G[:n, x_slice(i)] = -np.eye(n)
        G[:n, v_slice(i)] = -dt * np.eye(n)
        G[n:, v_slice(i + 1)] = np.eye(n)
        G[n:, v_slice(i)] = -np.eye(n)
        W = np.kron(Q_inv, np.eye(n))
        A += rho * G.T @ W @ G

    s = np.linalg.solve(A, b)
    states = np.empty((n, m))
    derivs = np.empty((n, m))
    for i in range(m):
        states[:, i] = s[x_slice(i)]
        derivs[:, i] = s[v_slice(i)]
    return states, derivs


def kalman_objective(times, Z, states, derivs, rho, retained=None):
    """Direct evaluation of the smoothing objective at a candidate point."""
    times = np.asarray(times, dtype=float)
    Z = np.asarray(Z, dtype=float)
    m = Z.shape[1]
    dt = times[1] - times[0]
    if retained is None:
        retained = np.arange(m)
    retained = np.asarray(sorted(set(int(i) for i in np.asarray(retained).ravel())))
    meas = float(np.sum((states[:, retained] - Z[:, retained]) ** 2))
    Q = np.array([[dt**3 / 3.0, dt**2 / 2.0], [dt**2 / 2.0, dt]])
    Q_inv = np.linalg.inv(Q)
    proc = 0.0
    for i in range(m - 1):
        for c in range(Z.shape[0]):
            w = np.array([
                states[c, i + 1] - states[c, i] - dt * derivs[c, i],
                derivs[c, i + 1] - derivs[c, i],
            ])
            proc += float(w @ Q_inv @ w)
    return meas + rho * proc, meas, proc


def rk4_fixed(rhs, x0, duration, dt):
    """Classical fixed-step fourth-order Runge-Kutta integrator."""
    steps = int(round(duration / dt))
    x = np.asarray(x0, dtype=float).copy()
    out = np.empty((x.size, steps + 1))
    out[:, 0] = x
    for i in range(steps):
        k1 = rhs(x)
        k2 = rhs(x + 0.5 * dt * k1)
        k3 = rhs(x + 0.5 * dt * k2)
        k4 = rhs(x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[:, i + 1] = x
    return out
