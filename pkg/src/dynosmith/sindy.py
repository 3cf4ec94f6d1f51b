"""Sparsity-constrained regression of dynamics onto a monomial library.

Given library values Theta (p x m) and derivative targets dX (n x m), each
equation row is fitted by exact best-subset selection at a prescribed
nonzero count: the support minimizing the ridge-regularized residual is
found by exhaustive enumeration when the support count is small enough,
otherwise by greedy selection plus best-swap local search, and the final
coefficients are unbiased by a plain least-squares refit on the winning
support. Bagged ensembling (median aggregation) and model simulation round
out the pipeline.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from ._integrate import solve_uniform
from ._validation import as_float_array
from .exceptions import ConfigurationError
from .library import CoefficientMatrix, FeatureLibrary, evaluate_library
from .systems import Trajectory

__all__ = [
    "FeatureLibrary",
    "CoefficientMatrix",
    "EnsembleResult",
    "ModelSimulation",
    "FixedSparsityRegressor",
    "fit_fixed_sparsity",
    "ensemble_fit",
    "simulate_model",
    "evaluate_library",
]

# exhaustive enumeration is used while C(p, k) stays below this
_EXHAUSTIVE_CAP = 200_000
_CHUNK = 4096


def _support_objective(gram, corr, y_norm2, supports, ridge):
    """Ridge objectives for a batch of supports via the Gram identity.

    For each support S, solving (G_S + ridge I) xi = b_S gives the
    regularized objective ||y||^2 - b_S . xi at the minimizer.
    """
    S = np.asarray(supports)
    k = S.shape[1]
    G = gram[S[:, :, None], S[:, None, :]] + ridge * np.eye(k)
    b = corr[S]
    xi = np.linalg.solve(G, b[..., None])[..., 0]
    return y_norm2 - np.einsum("ij,ij->i", b, xi)


def _best_exhaustive(gram, corr, y_norm2, p, k, ridge):
    best_obj, best_sup = np.inf, None
    combos = itertools.combinations(range(p), k)
    while True:
        chunk = list(itertools.islice(combos, _CHUNK))
        if not chunk:
            break
        objs = _support_objective(gram, corr, y_norm2, chunk, ridge)
        i = int(np.argmin(objs))
        if objs[i] < best_obj:
            best_obj, best_sup = float(objs[i]), chunk[i]
    return best_obj, list(best_sup)


def _best_greedy_swap(gram, corr, y_norm2, p, k, ridge):
    support = []
    remaining = list(range(p))
    obj = y_norm2
    for _ in range(k):
        trial = [support + [j] for j in remaining]
        objs = _support_objective(gram, corr, y_norm2, trial, ridge)
        i = int(np.argmin(objs))
        obj = float(objs[i])
        support.append(remaining.pop(i))

    improved = True
    passes = 0
    while improved and passes < 50:
        improved = False
        passes += 1
        for pos in range(k):
            others = [j for j in range(p) if j not in support]
            trial = [support[:pos] + [j] + support[pos + 1:] for j in others]
            objs = _support_objective(gram, corr, y_norm2, trial, ridge)
            i = int(np.argmin(objs))
            if objs[i] < obj - 1e-15 * max(1.0, abs(obj)):
                obj = float(objs[i])
                support[pos] = others[i]
                improved = True
    return obj, sorted(support)


def _best_support(gram, corr, y_norm2, p, k, ridge):
    if math.comb(p, k) <= _EXHAUSTIVE_CAP:
        return _best_exhaustive(gram, corr, y_norm2, p, k, ridge)
    return _best_greedy_swap(gram, corr, y_norm2, p, k, ridge)


def _unbiased_refit(theta, y, support):
    """Plain least squares on the support; smallest-norm when deficient."""
    A = theta[support].T
    coef, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
    return coef, rank < len(support)


def _normalize_sparsity(sparsity, n, p, m):
    if np.isscalar(sparsity):
        ks = [int(sparsity)] * n
    else:
        ks = [int(k) for k in sparsity]
        if len(ks) != n:
            raise ConfigurationError(
                f"sparsity has {len(ks)} entries for {n} equation rows"
            )
    for k in ks:
        if not 1 <= k <= p:
            raise ConfigurationError(f"row sparsity must lie in [1, {p}], got {k}")
        if m <= k:
            raise ConfigurationError(
                f"need more samples ({m}) than nonzero terms ({k})"
            )
    return ks


def fit_fixed_sparsity(theta, dxdt, sparsity, ridge=0.01, library=None, mode="per_row"):
    """Best-subset regression of each derivative row onto library columns.

    Parameters
    ----------
    theta : ndarray (p, m)
        Library values per sample. Columns are NOT normalized.
    dxdt : ndarray (n, m)
        Derivative targets per sample.
    sparsity : int or sequence of int
        Nonzero count per row (``mode="per_row"``), or the total count over
        the whole matrix (``mode="total"``, distributed optimally across
        rows by dynamic programming).
    ridge : float, default 0.01
        L2 weight applied during support search only; the returned
        coefficients are an unbiased plain least-squares refit.
    library : FeatureLibrary, optional
        Attached to the result for interpretation and serialization.
    """
    theta = as_float_array(theta, "theta", ndim=2)
    dxdt = as_float_array(dxdt, "dxdt", ndim=2)
    p, m = theta.shape
    n = dxdt.shape[0]
    if dxdt.shape[1] != m:
        raise ConfigurationError(
            f"theta has {m} samples but dxdt has {dxdt.shape[1]}"
        )
    if library is not None and library.n_terms != p:
        raise ConfigurationError(
            f"library has {library.n_terms} terms but theta has {p} rows"
        )
    if ridge < 0:
        raise ConfigurationError(f"ridge must be >= 0, got {ridge!r}")

    gram = theta @ theta.T
    values = np.zeros((n, p))
    flagged = []

    if mode == "per_row":
        ks = _normalize_sparsity(sparsity, n, p, m)
        supports = []
        for r in range(n):
            y = dxdt[r]
            corr = theta @ y
            _, sup = _best_support(gram, corr, float(y @ y), p, ks[r], ridge)
            supports.append(sup)
    elif mode == "total":
        supports = _total_sparsity_supports(gram, theta, dxdt, int(sparsity), ridge)
    else:
        raise ConfigurationError(f"mode must be 'per_row' or 'total', got {mode!r}")

    for r, sup in enumerate(supports):
        if not sup:
            continue
        coef, deficient = _unbiased_refit(theta, dxdt[r], sup)
        values[r, sup] = coef
        if deficient:
            flagged.append(r)
    return CoefficientMatrix(
        library=library, values=values, rank_deficient_rows=tuple(flagged)
    )


def _total_sparsity_supports(gram, theta, dxdt, total, ridge):
    """Distribute a matrix-wide nonzero budget across rows optimally."""
    n, m = dxdt.shape
    p = gram.shape[0]
    if not 1 <= total <= n * p:
        raise ConfigurationError(f"total sparsity must lie in [1, {n * p}], got {total}")
    k_max = min(p, total, m - 1)
    # per-row best objective at every candidate count, then a knapsack
    table = np.full((n, k_max + 1), np.inf)
    sups = [[None] * (k_max + 1) for _ in range(n)]
    for r in range(n):
        y = dxdt[r]
        corr = theta @ y
        table[r, 0] = float(y @ y)
        sups[r][0] = []
        for k in range(1, k_max + 1):
            table[r, k], sups[r][k] = _best_support(
                gram, corr, float(y @ y), p, k, ridge
            )
    dp = np.full((n + 1, total + 1), np.inf)
    dp[0, 0] = 0.0
    choice = np.zeros((n, total + 1), dtype=int)
    for r in range(n):
        for budget in range(total + 1):
            for k in range(0, min(k_max, budget) + 1):
                cand = dp[r, budget - k] + table[r, k]
                if cand < dp[r + 1, budget]:
                    dp[r + 1, budget] = cand
                    choice[r, budget] = k
    budget = total
    ks = [0] * n
    for r in range(n - 1, -1, -1):
        ks[r] = int(choice[r, budget])
        budget -= ks[r]
    return [sups[r][ks[r]] for r in range(n)]


class FixedSparsityRegressor(RegressorMixin, BaseEstimator):
    """Estimator wrapper around :func:`fit_fixed_sparsity`.

    Follows the scikit-learn sample layout: ``fit(X, y)`` with X of shape
    (m, p) and y of shape (m, n) or (m,). Fitted coefficients land in
    ``coef_`` with shape (n, p).
    """

    def __init__(self, sparsity=1, ridge=0.01, mode="per_row"):
        self.sparsity = sparsity
        self.ridge = ridge
        self.mode = mode

    def fit(self, X, y):
        X = as_float_array(X, "X", ndim=2)
        y = as_float_array(y, "y")
        if y.ndim == 1:
            y = y[:, None]
        result = fit_fixed_sparsity(
            X.T, y.T, self.sparsity, ridge=self.ridge, mode=self.mode
        )
        self.coef_ = result.values
        self.rank_deficient_rows_ = result.rank_deficient_rows
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        X = as_float_array(X, "X", ndim=2)
        out = X @ self.coef_.T
        return out[:, 0] if out.shape[1] == 1 else out


@dataclass(frozen=True)
class EnsembleResult:
    """Bagged fits plus their elementwise-median aggregate."""

    member_coefficients: tuple
    aggregate: CoefficientMatrix
    bag_fraction: float
    n_bags: int


def ensemble_fit(theta, dxdt, sparsity, ridge=0.01, n_bags=20, bag_fraction=0.6,
                 rng=None, library=None, mode="per_row", bag_indices=None):
    """Fit on ``n_bags`` column subsamples and aggregate by median.

    Each bag draws ``floor(bag_fraction * m)`` sample columns without
    replacement from ``rng`` (all index sets are drawn up front, so member
    fits could run in any order). ``bag_indices`` overrides the drawing
    with precomputed index sets.
    """
    theta = as_float_array(theta, "theta", ndim=2)
    dxdt = as_float_array(dxdt, "dxdt", ndim=2)
    m = theta.shape[1]
    if bag_indices is None:
        if not 0.0 < bag_fraction <= 1.0:
            raise ConfigurationError(
                f"bag_fraction must lie in (0, 1], got {bag_fraction!r}"
            )
        if n_bags < 1:
            raise ConfigurationError(f"n_bags must be >= 1, got {n_bags!r}")
        size = int(np.floor(bag_fraction * m))
        max_k = int(np.max(sparsity))
        if size <= max_k:
            raise ConfigurationError(
                f"bags of {size} samples cannot support sparsity {max_k}"
            )
        if rng is None:
            rng = np.random.default_rng(0)
        bag_indices = [rng.choice(m, size=size, replace=False) for _ in range(n_bags)]
    else:
        bag_indices = [np.asarray(b, dtype=int) for b in bag_indices]
        n_bags = len(bag_indices)
        bag_fraction = bag_indices[0].size / m

    members = tuple(
        fit_fixed_sparsity(
            theta[:, idx], dxdt[:, idx], sparsity, ridge=ridge,
            library=library, mode=mode,
        )
        for idx in bag_indices
    )
    stack = np.stack([mem.values for mem in members])
    flagged = sorted({r for mem in members for r in mem.rank_deficient_rows})
    aggregate = CoefficientMatrix(
        library=library,
        values=np.median(stack, axis=0),
        rank_deficient_rows=tuple(flagged),
    )
    return EnsembleResult(
        member_coefficients=members,
        aggregate=aggregate,
        bag_fraction=float(bag_fraction),
        n_bags=int(n_bags),
    )


@dataclass(frozen=True)
class ModelSimulation:
    """Integration of a discovered model; partial when it blows up.

    ``trajectory`` is None when the model diverged before reaching the
    second grid point (nothing representable was produced).
    """

    trajectory: Trajectory | None
    diverged: bool
    blowup_time: float | None


def simulate_model(xi, x0, duration, dt):
    """Integrate ``xdot = Xi Theta(x)`` under the standard divergence rule.

    Unlike :func:`dynosmith.systems.integrate`, divergence is not an error:
    the partial trajectory up to the last completed grid point is returned
    with ``diverged=True``.
    """
    lib = xi.library
    if lib is None:
        raise ConfigurationError("simulation requires a CoefficientMatrix with a library")
    x0 = as_float_array(x0, "x0", ndim=1)
    if x0.shape[0] != lib.dim:
        raise ConfigurationError(
            f"x0 has dimension {x0.shape[0]}, model has {lib.dim}"
        )
    values = xi.values
    exponents = np.asarray(lib.terms, dtype=float)

    def rhs(x):
        return values @ np.prod(x**exponents, axis=1)

    times, states, blowup = solve_uniform(rhs, x0, duration, dt, min_steps=10)
    if times.shape[0] < 2:
        return ModelSimulation(trajectory=None, diverged=True, blowup_time=blowup)
    derivs = values @ lib.evaluate(states)
    traj = Trajectory(times=times, states=states, derivatives=derivs)
    return ModelSimulation(
        trajectory=traj, diverged=blowup is not None, blowup_time=blowup
    )
