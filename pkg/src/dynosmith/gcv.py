"""Automatic selection of the Kalman ratio rho by cross-validation.

A fraction of interior measurement samples is withheld; for each candidate
rho the smoother runs on the retained samples only (the process prior still
spans the full grid, so the smoothed states are defined at withheld times)
and is scored by mean squared error against the withheld measurements. A
coarse sweep over decades of rho is followed by golden-section refinement
around the coarse minimizer.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError
from .smoothing import KalmanSmoother

__all__ = ["GcvConfig", "GcvResult", "gcv_select_rho", "smooth_with_mask"]

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def _default_grid():
    return tuple(float(e) for e in range(-8, 5))


@dataclass(frozen=True)
class GcvConfig:
    """Free parameters of the rho search.

    ``coarse_grid`` holds log10-rho values. ``n_folds`` > 1 switches to
    K-fold scoring over disjoint holdout sets; the default single split
    withholds ``holdout_fraction`` of the interior samples once.
    """

    holdout_fraction: float = 0.2
    coarse_grid: tuple = field(default_factory=_default_grid)
    refine_tolerance: float = 0.05
    seed: int = 0
    n_folds: int = 1

    def __post_init__(self):
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ConfigurationError(
                f"holdout_fraction must lie in (0, 1), got {self.holdout_fraction!r}"
            )
        grid = tuple(float(g) for g in self.coarse_grid)
        if len(grid) == 0:
            raise ConfigurationError("coarse_grid must be nonempty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigurationError("coarse_grid must be strictly increasing")
        object.__setattr__(self, "coarse_grid", grid)
        if self.refine_tolerance <= 0:
            raise ConfigurationError("refine_tolerance must be positive")
        if int(self.n_folds) < 1:
            raise ConfigurationError("n_folds must be >= 1")
        object.__setattr__(self, "n_folds", int(self.n_folds))


@dataclass(frozen=True)
class GcvResult:
    """Outcome of the search: every (rho, score) pair plus the winner."""

    rho_star: float
    score_curve: tuple
    converged: bool

    def to_dict(self):
        return {
            "rho_star": self.rho_star,
            "converged": self.converged,
            "curve": [[rho, mse] for rho, mse in self.score_curve],
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            payload = json.load(fh)
        return cls(
            rho_star=float(payload["rho_star"]),
            score_curve=tuple((float(r), float(s)) for r, s in payload["curve"]),
            converged=bool(payload["converged"]),
        )


def smooth_with_mask(z, retained, rho=1.0, measurement_cov=None, observation_map=None):
    """Kalman smoothing with the measurement term restricted to ``retained``.

    The returned states and derivatives cover the full grid. The first and
    last samples must be retained so the process chain stays anchored.
    """
    idx = np.unique(np.asarray(retained, dtype=int))
    m = z.times.shape[0]
    if idx.size < 3:
        raise ConfigurationError("retained set must contain at least 3 samples")
    if 0 not in idx or (m - 1) not in idx:
        raise ConfigurationError("retained set must include the first and last samples")
    smoother = KalmanSmoother(
        rho=rho, measurement_cov=measurement_cov, observation_map=observation_map
    )
    return smoother.smooth(z, retained=idx)


def _holdout_folds(m, cfg):
    """Seeded partition of interior indices into one or more withheld sets."""
    interior = np.arange(1, m - 1)
    rng = np.random.default_rng(cfg.seed)
    if cfg.n_folds == 1:
        n_out = int(round(cfg.holdout_fraction * interior.size))
        if n_out < 2:
            raise ConfigurationError(
                f"holdout of {n_out} samples is too small; need at least 2"
            )
        held = np.sort(rng.choice(interior, size=n_out, replace=False))
        return [held]
    permuted = rng.permutation(interior)
    folds = [np.sort(part) for part in np.array_split(permuted, cfg.n_folds)]
    if any(f.size < 2 for f in folds):
        raise ConfigurationError("each fold must withhold at least 2 samples")
    return folds


def gcv_select_rho(z, cfg=None):
    """Pick rho by held-out mean squared error; see module docstring.

    Returns a :class:`GcvResult` whose ``rho_star`` attains the minimum of
    the recorded score curve, ties broken toward the smallest rho.
    ``converged`` is False when the coarse-grid minimum sits at an endpoint
    of the search range (no bracket to refine).
    """
    if cfg is None:
        cfg = GcvConfig()
    m = z.times.shape[0]
    if m < 20:
        raise ConfigurationError(f"rho selection needs at least 20 samples, got {m}")

    folds = _holdout_folds(m, cfg)
    all_idx = np.arange(m)
    splits = []
    for held in folds:
        mask = np.ones(m, dtype=bool)
        mask[held] = False
        splits.append((all_idx[mask], held))

    def score(log_rho):
        rho = 10.0**log_rho
        total = 0.0
        for retained, held in splits:
            result = smooth_with_mask(z, retained, rho=rho)
            resid = result.states_hat[:, held] - z.observations[:, held]
            total += float(np.mean(resid**2))
        return rho, total / len(splits)

    # near-ties (degenerate data where every rho fits equally) go to the
    # smallest rho; the tolerance is relative to the measurement scale
    tie_eps = 1e-12 * float(np.mean(z.observations**2)) + 1e-300

    curve = [score(g) for g in cfg.coarse_grid]
    scores = np.array([s for _, s in curve])
    i_best = int(np.where(scores <= scores.min() + tie_eps)[0][0])
    converged = 0 < i_best < len(cfg.coarse_grid) - 1

    if converged:
        lo, hi = cfg.coarse_grid[i_best - 1], cfg.coarse_grid[i_best + 1]
        a, b = lo, hi
        x1 = b - _GOLDEN * (b - a)
        x2 = a + _GOLDEN * (b - a)
        f1, f2 = score(x1), score(x2)
        curve.extend([f1, f2])
        while b - a > cfg.refine_tolerance:
            if f1[1] <= f2[1]:
                b, x2, f2 = x2, x1, f1
                x1 = b - _GOLDEN * (b - a)
                f1 = score(x1)
                curve.append(f1)
            else:
                a, x1, f1 = x1, x2, f2
                x2 = a + _GOLDEN * (b - a)
                f2 = score(x2)
                curve.append(f2)

    rhos = np.array([r for r, _ in curve])
    scores = np.array([s for _, s in curve])
    candidates = np.where(scores <= scores.min() + tie_eps)[0]
    winner = candidates[np.argmin(rhos[candidates])]
    return GcvResult(
        rho_star=float(rhos[winner]),
        score_curve=tuple((float(r), float(s)) for r, s in curve),
        converged=converged,
    )
