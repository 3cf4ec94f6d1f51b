"""State and derivative estimation from noisy uniform-grid measurements.

Four interchangeable smoothers, all returning a :class:`SmoothResult` with
states X-hat and derivatives dX-hat of the same layout as the input:

- :class:`KalmanSmoother`: batch maximum-a-posteriori smoothing under a
  Brownian-velocity prior, i.e. the minimizer of
  ``||H X - Z||^2_{R^-1} + rho * ||G [Xdot, X]||^2_{Q^-1}``
  solved via banded Cholesky on the block-tridiagonal normal equations.
- :class:`TotalVariationSmoother`: derivative estimation by penalizing the
  total variation of the derivative (exact L1, operator splitting).
- :class:`SavitzkyGolaySmoother`: local polynomial fits on centered windows,
  truncated one-sidedly at the boundaries.
- :class:`FiniteDifferenceSmoother`: second-order centered differences with
  one-sided second-order boundary stencils; states pass through unchanged.

All smoothers follow the scikit-learn estimator convention (parameters in
``__init__``, ``get_params``/``set_params``) and expose a ``smooth`` method
taking a :class:`~dynosmith.systems.MeasurementSet`.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import get_lapack_funcs, solveh_banded
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import as_float_array, check_positive, check_spd
from .exceptions import ConfigurationError, NumericalError

__all__ = [
    "SmoothResult",
    "KalmanSmoother",
    "TotalVariationSmoother",
    "SavitzkyGolaySmoother",
    "FiniteDifferenceSmoother",
    "kalman_smooth",
    "tv_smooth",
    "savitzky_golay",
    "finite_difference",
    "kalman_objective_terms",
    "write_smooth_result",
    "read_smooth_result",
]


@dataclass(frozen=True)
class SmoothResult:
    """Smoothed states and derivatives on the measurement grid."""

    times: np.ndarray
    states_hat: np.ndarray
    derivatives_hat: np.ndarray
    method: str
    hyperparameters: dict
    objective_value: float | None = None
    info: dict = field(default_factory=dict)


class Smoother(TransformerMixin, BaseEstimator):
    """Common estimator shell: validation plus fit/transform sugar."""

    _method = None

    def smooth(self, z):
        """Run the smoother on a measurement set."""
        times = z.times
        Z = z.observations
        if times.shape[0] < 3:
            raise ValueError("smoothing requires at least 3 samples")
        dt = z.dt
        states, derivs, hyper, objective, info = self._smooth(times, Z, dt)
        if not (np.all(np.isfinite(states)) and np.all(np.isfinite(derivs))):
            raise NumericalError(f"{self._method} produced non-finite output")
        return SmoothResult(
            times=times,
            states_hat=states,
            derivatives_hat=derivs,
            method=self._method,
            hyperparameters=hyper,
            objective_value=objective,
            info=info,
        )

    def fit(self, z, y=None):
        self.result_ = self.smooth(z)
        return self

    def transform(self, z):
        return self.smooth(z).states_hat

    def fit_transform(self, z, y=None):
        return self.fit(z).result_.states_hat


# ---------------------------------------------------------------------------
# Kalman smoothing
# ---------------------------------------------------------------------------

# Scalar kernels on one (position, velocity) pair. A advances a block one
# step; Q2 is the integrated-Wiener increment covariance at unit sigma_x.
def _process_kernels(dt):
    q_inv = np.array([[12.0 / dt**3, -6.0 / dt**2], [-6.0 / dt**2, 4.0 / dt]])
    # P2 = A^T Q^-1 A and U2 = -A^T Q^-1 with A = [[1, dt], [0, 1]]
    p2 = np.array([[12.0 / dt**3, 6.0 / dt**2], [6.0 / dt**2, 4.0 / dt]])
    u2 = np.array([[-12.0 / dt**3, 6.0 / dt**2], [-6.0 / dt**2, 2.0 / dt]])
    return q_inv, p2, u2


# Above this ratio the normal equations lose the measurement term to round-off
# (the process block scales like rho * 24/dt^3 while measurements stay O(1)),
# and the solution is numerically indistinguishable from its rho -> infinity
# limit, a straight line per coordinate. The crossover constant comes from
# equating the two error estimates eps*rho*|C| and 1/(rho*lambda_min(C)).
def _limit_threshold(m, dt):
    return 1e5 * m**2 * dt**3


class KalmanSmoother(Smoother):
    """Batch Kalman smoothing by banded Cholesky on the normal equations.

    Parameters
    ----------
    rho : float
        Ratio (sigma_z / sigma_x)^2 weighting the process penalty against
        the measurement fit. Larger values smooth harder; the limit is a
        straight-line fit per coordinate.
    measurement_cov : ndarray (k, k), optional
        Measurement covariance R; identity when omitted.
    observation_map : ndarray (k, n), optional
        Observation matrix H; identity (full-state observation) when omitted.

    Notes
    -----
    The minimizer of the objective is computed jointly over states and
    velocities, stacked per time step as (positions, velocities). With the
    default identity H the coordinates decouple exactly. For extremely large
    rho (beyond the round-off crossover) the exact limiting problem - a
    weighted least-squares line fit - is solved instead; the path taken is
    recorded in ``result.info["solver"]``.
    """

    _method = "kalman"

    def __init__(self, rho=1.0, measurement_cov=None, observation_map=None):
        self.rho = rho
        self.measurement_cov = measurement_cov
        self.observation_map = observation_map

    def smooth(self, z, retained=None):
        """Smooth a measurement set, optionally fitting only a subset of
        sample indices (``retained``) in the measurement term. The process
        prior always spans the full grid."""
        self._retained = retained
        try:
            return super().smooth(z)
        finally:
            del self._retained

    def _resolve_operators(self, k):
        if self.observation_map is None:
            H = np.eye(k)
        else:
            H = as_float_array(self.observation_map, "observation_map", ndim=2)
            if H.shape[0] != k:
                raise ConfigurationError(
                    f"observation_map has {H.shape[0]} rows, measurements have {k}"
                )
        if self.measurement_cov is None:
            R_inv = np.eye(k)
        else:
            R = check_spd(self.measurement_cov, "measurement_cov")
            if R.shape[0] != k:
                raise ConfigurationError(
                    f"measurement_cov has size {R.shape[0]}, measurements have {k}"
                )
            R_inv = np.linalg.inv(R)
        return H, R_inv

    def _smooth(self, times, Z, dt):
        rho = check_positive(self.rho, "rho")
        k, m = Z.shape
        H, R_inv = self._resolve_operators(k)
        n = H.shape[1]
        retained = getattr(self, "_retained", None)
        mask = np.zeros(m, dtype=bool)
        if retained is None:
            mask[:] = True
        else:
            idx = np.asarray(retained, dtype=int)
            if idx.size == 0:
                raise ConfigurationError("retained index set must be nonempty")
            if np.any(idx < 0) or np.any(idx >= m):
                raise ConfigurationError("retained indices out of range")
            mask[idx] = True

        if rho > _limit_threshold(m, dt):
            states, derivs = _kalman_line_limit(times, Z, H, R_inv, mask)
            solver = "line_limit"
        else:
            states, derivs = _kalman_banded(Z, dt, rho, H, R_inv, mask, n)
            solver = "banded"

        meas, proc = kalman_objective_terms(
            times, Z, states, derivs, observation_map=H,
            measurement_cov_inv=R_inv, retained_mask=mask,
        )
        info = {"solver": solver, "measurement_term": meas, "process_term": proc}
        return states, derivs, {"rho": rho}, meas + rho * proc, info


def _kalman_banded(Z, dt, rho, H, R_inv, mask, n):
    """Assemble and solve the block-tridiagonal normal equations."""
    k, m = Z.shape
    B = 2 * n
    N = B * m
    nsup = 2 * B - 1

    q_inv, p2, u2 = _process_kernels(dt)
    eye_n = np.eye(n)
    C = np.zeros((B, B))
    C[:n, :n] = H.T @ R_inv @ H
    D_first = rho * np.kron(p2, eye_n)
    D_mid = rho * np.kron(p2 + q_inv, eye_n)
    D_last = rho * np.kron(q_inv, eye_n)
    U = rho * np.kron(u2, eye_n)

    ab = np.zeros((nsup + 1, N))
    masked_idx = np.where(~mask)[0]
    for r in range(B):
        for c in range(r, B):
            row = nsup + r - c
            ab[row, c::B] = D_mid[r, c] + C[r, c]
            ab[row, c] = D_first[r, c] + C[r, c]
            ab[row, c + B * (m - 1)] = D_last[r, c] + C[r, c]
            if masked_idx.size and C[r, c] != 0.0:
                ab[row, B * masked_idx + c] -= C[r, c]
        for c in range(B):
            row = nsup + r - c - B
            if row >= 0:
                ab[row, B + c::B] = U[r, c]

    f = np.zeros(N)
    idx = np.where(mask)[0]
    G = (H.T @ R_inv) @ Z[:, idx]
    for a in range(n):
        f[B * idx + a] = G[a]

    try:
        sol = solveh_banded(ab, f, lower=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"banded Cholesky failed at rho={rho:g}", rho=rho) from exc
    blocks = sol.reshape(m, B)
    return blocks[:, :n].T, blocks[:, n:].T


def _kalman_line_limit(times, Z, H, R_inv, mask):
    """Exact rho -> infinity limit: weighted least-squares line per state."""
    idx = np.where(mask)[0]
    t = times[idx] - times[idx].mean()
    T = H.T @ R_inv @ H
    HRz = (H.T @ R_inv) @ Z[:, idx]
    n = H.shape[1]
    M = np.block([
        [idx.size * T, t.sum() * T],
        [t.sum() * T, (t**2).sum() * T],
    ])
    rhs = np.concatenate([HRz.sum(axis=1), HRz @ t])
    try:
        coef = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError:
        coef, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    intercept, slope = coef[:n], coef[n:]
    tau = times - times[idx].mean()
    states = intercept[:, None] + slope[:, None] * tau
    derivs = np.repeat(slope[:, None], times.shape[0], axis=1)
    return states, derivs


def kalman_objective_terms(times, Z, states, derivatives, observation_map=None,
                           measurement_cov_inv=None, retained_mask=None):
    """Evaluate the two terms of the smoothing objective at a candidate.

    Returns ``(measurement_term, process_term)`` where the full objective is
    ``measurement_term + rho * process_term``. The process term uses the
    integrated-Wiener increment covariance at unit sigma_x.
    """
    Z = np.asarray(Z, dtype=float)
    X = np.asarray(states, dtype=float)
    V = np.asarray(derivatives, dtype=float)
    m = Z.shape[1]
    dt = (times[-1] - times[0]) / (m - 1)
    H = np.eye(Z.shape[0]) if observation_map is None else observation_map
    R_inv = np.eye(Z.shape[0]) if measurement_cov_inv is None else measurement_cov_inv
    if retained_mask is None:
        retained_mask = np.ones(m, dtype=bool)

    resid = H @ X[:, retained_mask] - Z[:, retained_mask]
    meas = float(np.sum(resid * (R_inv @ resid)))

    q_inv, _, _ = _process_kernels(dt)
    w_pos = X[:, 1:] - X[:, :-1] - dt * V[:, :-1]
    w_vel = V[:, 1:] - V[:, :-1]
    proc = float(
        q_inv[0, 0] * np.sum(w_pos**2)
        + 2.0 * q_inv[0, 1] * np.sum(w_pos * w_vel)
        + q_inv[1, 1] * np.sum(w_vel**2)
    )
    return meas, proc


# ---------------------------------------------------------------------------
# Total-variation-regularized differentiation
# ---------------------------------------------------------------------------

class TotalVariationSmoother(Smoother):
    """Derivative estimation with an exact L1 penalty on derivative jumps.

    Per coordinate, finds u minimizing
    ``||A u - (z - z_1)||^2 + lam * sum_i |u_{i+1} - u_i|``
    where A is trapezoidal cumulative integration from the first sample;
    the smoothed states are ``z_1 + A u``. Solved by ADMM with the split
    v = D u; the u-update is an equality-constrained least-squares problem
    solved through a banded KKT system (factored once, reused every
    iteration). Non-convergence at the iteration cap is reported in
    ``result.info``, not raised.

    Parameters
    ----------
    lam : float
        Total-variation penalty weight (>= 0).
    tol : float, default 1e-6
        Relative primal/dual residual tolerance.
    max_iter : int, default 10000
        Iteration cap.
    """

    _method = "tv"

    def __init__(self, lam=0.1, tol=1e-6, max_iter=10_000):
        self.lam = lam
        self.tol = tol
        self.max_iter = max_iter

    def _smooth(self, times, Z, dt):
        if self.lam < 0:
            raise ConfigurationError(f"lam must be >= 0, got {self.lam!r}")
        u, iterations, converged = _tv_admm(
            Z.T.copy(), dt, float(self.lam), float(self.tol), int(self.max_iter)
        )
        states = Z[:, :1] + cumulative_trapezoid(u, dx=dt, axis=0, initial=0.0).T
        objective = float(
            np.sum((states - Z) ** 2)
            + self.lam * np.sum(np.abs(np.diff(u, axis=0)))
        )
        info = {"converged": converged, "iterations": iterations}
        if not converged:
            info["warning"] = f"operator splitting hit the {self.max_iter}-iteration cap"
        return states, u.T, {"lam": float(self.lam)}, objective, info


def _tv_kkt_factor(m, dt, tau):
    """Factor the banded KKT system of the TV u-update.

    Unknowns are interleaved [u_0, (mu_0, r_0, u_1), (mu_1, r_1, u_2), ...]
    where r is the integration residual at samples 1..m-1 and mu the
    multiplier tying r to u. Bandwidth is 3 on both sides.
    """
    kl = ku = 3
    N = 3 * m - 2
    ab = np.zeros((2 * kl + ku + 1, N))

    def put(i, j, value):
        ab[kl + ku + i - j, j] += value

    half = dt / 2.0
    for i in range(m):
        row = 3 * i
        put(row, 3 * i, tau * (1.0 if i in (0, m - 1) else 2.0))
        if i >= 1:
            put(row, 3 * i - 3, -tau)
            put(row, 3 * i - 2, -half)  # mu_{i-1}
        if i <= m - 2:
            put(row, 3 * i + 3, -tau)
            put(row, 3 * i + 1, -half)  # mu_i
    for j in range(m - 1):
        row = 3 * j + 1  # residual recursion: r_j - r_{j-1} - (dt/2)(u_j + u_{j+1})
        put(row, 3 * j + 2, 1.0)
        if j >= 1:
            put(row, 3 * j - 1, -1.0)
        put(row, 3 * j, -half)
        put(row, 3 * j + 3, -half)
        row = 3 * j + 2  # stationarity in r: 2 r_j + mu_j - mu_{j+1}
        put(row, 3 * j + 2, 2.0)
        put(row, 3 * j + 1, 1.0)
        if j <= m - 3:
            put(row, 3 * j + 4, -1.0)

    gbtrf, gbtrs = get_lapack_funcs(("gbtrf", "gbtrs"), (ab,))
    lu, ipiv, ok = gbtrf(ab, kl, ku)
    if ok != 0:
        raise NumericalError("banded LU of the TV subproblem failed")

    def solve(rhs):
        x, ok = gbtrs(lu, kl, ku, rhs, ipiv)
        if ok != 0:
            raise NumericalError("banded solve of the TV subproblem failed")
        return x

    return solve


def _tv_admm(Zcols, dt, lam, tol, max_iter, alpha=1.8):
    """Run batched ADMM on columns of Zcols (shape (m, q))."""
    m, q = Zcols.shape
    N = 3 * m - 2
    dz = np.diff(Zcols, axis=0)

    def d_op(u):
        return np.diff(u, axis=0)

    def dt_op(v):  # D^T
        out = np.empty((m, v.shape[1]))
        out[0] = -v[0]
        out[-1] = v[-1]
        out[1:-1] = v[:-1] - v[1:]
        return out

    # initial penalty weight balances the two quadratic operators
    col = np.arange(m)
    col_sq = np.where(
        col == 0,
        (m - 1) * dt**2 / 4.0,
        (m - 1 - col) * dt**2 + dt**2 / 4.0,
    )
    tau = max(2.0 * col_sq.sum() / (2.0 * (m - 1)), 1e-12)

    solve = _tv_kkt_factor(m, dt, tau)
    u = np.gradient(Zcols, dt, axis=0, edge_order=2)
    v = d_op(u)
    w = np.zeros_like(v)
    rhs = np.zeros((N, q))
    rhs[1::3] = -dz

    sqrt_m = np.sqrt(m)
    iterations = 0
    converged = False
    for iterations in range(1, max_iter + 1):
        rhs[0::3] = tau * dt_op(v - w)
        u = solve(rhs)[0::3]
        du = d_op(u)
        h = alpha * du + (1.0 - alpha) * v
        v_old = v
        v = np.sign(h + w) * np.maximum(np.abs(h + w) - lam / tau, 0.0)
        w = w + h - v

        r_norm = np.linalg.norm(du - v, axis=0)
        s_norm = tau * np.linalg.norm(dt_op(v - v_old), axis=0)
        eps_pri = 1e-10 * sqrt_m + tol * np.maximum(
            np.linalg.norm(du, axis=0), np.linalg.norm(v, axis=0)
        )
        eps_dual = 1e-10 * sqrt_m + tol * tau * np.linalg.norm(dt_op(w), axis=0)
        if np.all(r_norm <= eps_pri) and np.all(s_norm <= eps_dual):
            converged = True
            break

        # residual balancing keeps the two convergence rates comparable
        if iterations % 50 == 0 and iterations < max_iter // 2:
            r_tot, s_tot = r_norm.max(), s_norm.max()
            if r_tot > 10.0 * s_tot:
                tau *= 2.0
                w /= 2.0
                solve = _tv_kkt_factor(m, dt, tau)
            elif s_tot > 10.0 * r_tot:
                tau /= 2.0
                w *= 2.0
                solve = _tv_kkt_factor(m, dt, tau)

    return u, iterations, converged


# ---------------------------------------------------------------------------
# Savitzky-Golay
# ---------------------------------------------------------------------------

class SavitzkyGolaySmoother(Smoother):
    """Local least-squares polynomial smoothing and differentiation.

    At each sample a degree-``order`` polynomial is fitted over a centered
    window of ``window`` samples and evaluated (value and first derivative)
    at that sample. Near the boundaries the window is truncated one-sidedly
    and the fit degree capped at the truncated window size minus one. Even
    window lengths are rounded up to the next odd integer.
    """

    _method = "savgol"

    def __init__(self, window=11, order=3):
        self.window = window
        self.order = order

    def _smooth(self, times, Z, dt):
        window = int(self.window)
        order = int(self.order)
        if window < 2:
            raise ConfigurationError(f"window must be >= 2, got {self.window!r}")
        if window % 2 == 0:
            window += 1
        m = Z.shape[1]
        if window > m:
            raise ConfigurationError(f"window {window} exceeds sample count {m}")
        if not 0 <= order < window:
            raise ConfigurationError(f"order must satisfy 0 <= order < window, got {order}")

        half = (window - 1) // 2
        states = np.empty_like(Z)
        derivs = np.empty_like(Z)

        # interior: one set of filter taps applied by sliding windows
        if m >= window:
            scale = max(half, 1) * dt
            offsets = (np.arange(window) - half) * dt / scale
            V = np.vander(offsets, order + 1, increasing=True)
            taps = np.linalg.pinv(V)
            windows = np.lib.stride_tricks.sliding_window_view(Z, window, axis=1)
            states[:, half:m - half] = windows @ taps[0]
            if order >= 1:
                derivs[:, half:m - half] = (windows @ taps[1]) / scale
            else:
                derivs[:, half:m - half] = 0.0

        # boundaries: truncated windows, degree capped by available samples
        for i in list(range(half)) + list(range(m - half, m)):
            lo, hi = max(0, i - half), min(m - 1, i + half)
            size = hi - lo + 1
            local_order = min(order, size - 1)
            scale = max(hi - i, i - lo, 1) * dt
            offsets = (np.arange(lo, hi + 1) - i) * dt / scale
            V = np.vander(offsets, local_order + 1, increasing=True)
            beta, *_ = np.linalg.lstsq(V, Z[:, lo:hi + 1].T, rcond=None)
            states[:, i] = beta[0]
            derivs[:, i] = beta[1] / scale if local_order >= 1 else 0.0

        return states, derivs, {"window": window, "order": order}, None, {}


# ---------------------------------------------------------------------------
# Finite differences
# ---------------------------------------------------------------------------

class FiniteDifferenceSmoother(Smoother):
    """Second-order finite differences; states pass through unchanged."""

    _method = "finite_diff"

    def __init__(self):
        pass

    def _smooth(self, times, Z, dt):
        derivs = np.gradient(Z, dt, axis=1, edge_order=2)
        return Z.copy(), derivs, {}, None, {}


# ---------------------------------------------------------------------------
# Functional wrappers and serialization
# ---------------------------------------------------------------------------

def kalman_smooth(z, rho=1.0, measurement_cov=None, observation_map=None, retained=None):
    """Kalman-smooth a measurement set; see :class:`KalmanSmoother`."""
    smoother = KalmanSmoother(
        rho=rho, measurement_cov=measurement_cov, observation_map=observation_map
    )
    return smoother.smooth(z, retained=retained)


def tv_smooth(z, lam, tol=1e-6, max_iter=10_000):
    """Total-variation differentiation; see :class:`TotalVariationSmoother`."""
    return TotalVariationSmoother(lam=lam, tol=tol, max_iter=max_iter).smooth(z)


def savitzky_golay(z, window, order=3):
    """Savitzky-Golay smoothing; see :class:`SavitzkyGolaySmoother`."""
    return SavitzkyGolaySmoother(window=window, order=order).smooth(z)


def finite_difference(z):
    """Finite-difference derivatives; see :class:`FiniteDifferenceSmoother`."""
    return FiniteDifferenceSmoother().smooth(z)


def write_smooth_result(result, csv_path, sidecar_path=None):
    """Write t, xhat1..n, dxhat1..n columns plus a JSON sidecar."""
    n = result.states_hat.shape[0]
    header = (
        ["t"]
        + [f"xhat{i + 1}" for i in range(n)]
        + [f"dxhat{i + 1}" for i in range(n)]
    )
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for j in range(result.times.shape[0]):
            row = [result.times[j], *result.states_hat[:, j], *result.derivatives_hat[:, j]]
            writer.writerow([repr(float(v)) for v in row])
    if sidecar_path is not None:
        payload = {
            "method": result.method,
            "hyperparameters": result.hyperparameters,
            "objective_value": result.objective_value,
            "info": {k: v for k, v in result.info.items()},
        }
        with open(sidecar_path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, default=float)
            fh.write("\n")


def read_smooth_result(csv_path):
    """Read back (times, states_hat, derivatives_hat) from a result CSV."""
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.asarray(rows).T
    by_name = dict(zip(header, data))
    n = sum(1 for name in header if name.startswith("xhat"))
    states = np.stack([by_name[f"xhat{i + 1}"] for i in range(n)])
    derivs = np.stack([by_name[f"dxhat{i + 1}"] for i in range(n)])
    return by_name["t"], states, derivs
