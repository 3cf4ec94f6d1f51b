"""Uniform-grid adaptive integration shared by the benchmark systems and
fitted models. RK45 with tight tolerances, dense output onto t = 0, dt, ...,
and blow-up detection against a fixed magnitude bound."""

import numpy as np
from scipy.integrate import solve_ivp

from .exceptions import ConfigurationError

BLOWUP_BOUND = 1e6
RTOL = 1e-9
ATOL = 1e-12


def uniform_grid(duration, dt, min_steps=1):
    """Build t = 0, dt, ..., duration, validating that dt divides duration."""
    if not (np.isfinite(duration) and duration > 0):
        raise ConfigurationError(f"duration must be positive, got {duration!r}")
    if not (np.isfinite(dt) and dt > 0):
        raise ConfigurationError(f"dt must be positive, got {dt!r}")
    steps = int(round(duration / dt))
    if steps < min_steps or abs(steps * dt - duration) > 1e-9 * max(duration, dt):
        raise ConfigurationError(
            f"duration {duration} must be a multiple of dt {dt} "
            f"with at least {min_steps} steps"
        )
    return np.arange(steps + 1) * dt


def solve_uniform(rhs, x0, duration, dt, min_steps=1):
    """Integrate ``dx/dt = rhs(x)`` onto a uniform grid.

    Returns
    -------
    times : ndarray, shape (m_done,)
        Grid points actually reached (the full grid unless the solution
        blew up or the solver stalled).
    states : ndarray, shape (n, m_done)
    blowup_time : float or None
        Time at which |state| first exceeded the bound, or None on success.
    """
    t_eval = uniform_grid(duration, dt, min_steps=min_steps)
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim != 1 or not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be a finite vector")

    def event(t, y):
        peak = np.max(np.abs(y))
        return BLOWUP_BOUND - peak if np.isfinite(peak) else -1.0

    event.terminal = True

    with np.errstate(over="ignore", invalid="ignore"):
        sol = solve_ivp(
            lambda t, y: rhs(y),
            (0.0, duration),
            x0,
            method="RK45",
            t_eval=t_eval,
            rtol=RTOL,
            atol=ATOL,
            events=event,
            dense_output=False,
        )
    if sol.status == 1:  # terminated by the blow-up event
        blowup_time = float(sol.t_events[0][0])
        return sol.t, sol.y, blowup_time
    if sol.status < 0:  # step-size underflow; treat as divergence at the stall
        blowup_time = float(sol.t[-1]) if sol.t.size else 0.0
        return sol.t, sol.y, blowup_time
    return t_eval, sol.y, None
