"""Scoring of discovered models against ground truth.

Three views of model quality: support recovery (F1 over the nonzero
pattern), coefficient accuracy (mean absolute error over all entries, with
a true-support-only variant), and forward-simulation fidelity (RMS state
error against fresh trajectories, with divergence flags and, for chaotic
systems, a bounded-attractor check since pointwise error says little there).
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError
from .sindy import simulate_model
from .systems import integrate

__all__ = [
    "TrialScore",
    "coefficient_f1",
    "coefficient_mae",
    "simulation_score",
    "score_trial",
]

SUPPORT_TOL = 1e-10

# pointwise RMSE is uninformative for these; report attractor containment too
CHAOTIC_SYSTEMS = ("lorenz", "rossler")


@dataclass(frozen=True)
class TrialScore:
    """Metric bundle for one fitted model.

    ``mae`` averages |est - truth| over all n*p entries; ``mae_true_support``
    restricts the average to the truth's nonzero positions. ``sim_rmse`` and
    ``diverged`` hold one entry per test trajectory; ``bounded`` is None for
    non-chaotic systems.
    """

    f1: float
    mae: float
    mae_true_support: float
    sim_rmse: tuple = ()
    diverged: tuple = ()
    bounded: tuple | None = None


def _check_match(est, truth):
    if est.values.shape != truth.values.shape:
        raise ConfigurationError(
            f"coefficient shapes differ: {est.values.shape} vs {truth.values.shape}"
        )
    if (
        est.library is not None
        and truth.library is not None
        and est.library.terms != truth.library.terms
    ):
        raise ConfigurationError("coefficient matrices use different libraries")


def coefficient_f1(est, truth, tol=SUPPORT_TOL):
    """F1 of the estimated nonzero pattern against the true one.

    Counts true/false positives and false negatives over all n*p positions
    with |value| > tol defining "nonzero". Two empty supports score 1.0.
    """
    _check_match(est, truth)
    if tol < 0:
        raise ConfigurationError(f"tol must be >= 0, got {tol!r}")
    a = est.support(tol)
    b = truth.support(tol)
    tp = int(np.sum(a & b))
    fp = int(np.sum(a & ~b))
    fn = int(np.sum(~a & b))
    if tp + fp + fn == 0:
        return 1.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


def coefficient_mae(est, truth, true_support_only=False):
    """Mean absolute coefficient error.

    The headline value averages over all n*p entries, penalizing spurious
    terms; ``true_support_only`` restricts to the truth's nonzero entries.
    """
    _check_match(est, truth)
    diff = np.abs(est.values - truth.values)
    if true_support_only:
        mask = truth.support(SUPPORT_TOL)
        if not mask.any():
            return 0.0
        return float(diff[mask].mean())
    return float(diff.mean())


def _bounding_box(states, factor=3.0):
    lo = states.min(axis=1)
    hi = states.max(axis=1)
    center = (lo + hi) / 2.0
    half = (hi - lo) / 2.0
    return center - factor * half, center + factor * half


def simulation_score(xi, system, test_ics, duration, dt):
    """Forward-simulation fidelity against fresh true trajectories.

    For each test initial condition, integrates both the true system and
    the discovered model on the same grid and reports the RMS state error
    over time and coordinates. If the model blows up, the comparison is
    truncated at the last grid point it reached and the trajectory is
    flagged. For chaotic systems a containment flag is added: does the
    simulation stay within 3x the true trajectory's bounding box?

    Returns ``(sim_rmse, diverged, bounded)`` tuples over ICs; ``bounded``
    is None for non-chaotic systems.
    """
    test_ics = np.atleast_2d(np.asarray(test_ics, dtype=float))
    rmses, flags, contained = [], [], []
    chaotic = system.name in CHAOTIC_SYSTEMS
    for x0 in test_ics:
        true_traj = integrate(system, x0, duration, dt)
        sim = simulate_model(xi, x0, duration, dt)
        if sim.trajectory is None:
            rmses.append(float("inf"))
            flags.append(True)
            if chaotic:
                contained.append(False)
            continue
        m_cmp = sim.trajectory.times.shape[0]
        diff = sim.trajectory.states - true_traj.states[:, :m_cmp]
        rmses.append(float(np.sqrt(np.mean(diff**2))))
        flags.append(sim.diverged)
        if chaotic:
            lo, hi = _bounding_box(true_traj.states)
            inside = np.all(
                (sim.trajectory.states >= lo[:, None])
                & (sim.trajectory.states <= hi[:, None])
            )
            contained.append(bool(inside) and not sim.diverged)
    bounded = tuple(contained) if chaotic else None
    return tuple(rmses), tuple(flags), bounded


def score_trial(est, system, test_ics=None, duration=8.0, dt=0.01):
    """Assemble a :class:`TrialScore` for one fitted coefficient matrix."""
    truth = system.true_coefficients
    f1 = coefficient_f1(est, truth)
    mae = coefficient_mae(est, truth)
    mae_ts = coefficient_mae(est, truth, true_support_only=True)
    if test_ics is None:
        return TrialScore(f1=f1, mae=mae, mae_true_support=mae_ts)
    rmse, diverged, bounded = simulation_score(est, system, test_ics, duration, dt)
    return TrialScore(
        f1=f1, mae=mae, mae_true_support=mae_ts,
        sim_rmse=rmse, diverged=diverged, bounded=bounded,
    )
