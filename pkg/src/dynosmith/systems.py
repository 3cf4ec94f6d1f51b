"""Benchmark ODE systems, trajectory generation, and noisy measurements.

Eight low-dimensional systems, each expressible without residual in the
degree-3 polynomial library, with ground-truth coefficient matrices for
scoring discovered models. Initial conditions are drawn around a per-system
mean with variance 9 (Gaussian, except Lotka-Volterra which uses a gamma
distribution to keep populations positive). Measurement noise is white
Gaussian with variance set relative to the trajectory's mean squared value.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import _integrate
from ._validation import as_float_array, check_uniform_times
from .exceptions import DegenerateSignalError, DivergenceError
from .library import CoefficientMatrix, FeatureLibrary


@dataclass(frozen=True)
class OdeSystem:
    """A benchmark system: right-hand side plus its exact library expansion."""

    name: str
    params: dict
    rhs: callable
    true_coefficients: CoefficientMatrix
    ic_mean: np.ndarray
    ic_distribution: str = "normal"

    @property
    def dim(self):
        return self.ic_mean.shape[0]


@dataclass(frozen=True)
class Trajectory:
    """States and exact derivatives sampled on a uniform time grid."""

    times: np.ndarray
    states: np.ndarray
    derivatives: np.ndarray

    def __post_init__(self):
        check_uniform_times(self.times)
        if self.states.shape != self.derivatives.shape:
            raise ValueError("states and derivatives must have matching shapes")
        if self.states.shape[1] != self.times.shape[0]:
            raise ValueError("states must have one column per time sample")

    @property
    def dt(self):
        return float(self.times[1] - self.times[0])


@dataclass(frozen=True)
class MeasurementSet:
    """Observations Z = H X + noise on the trajectory's time grid."""

    times: np.ndarray
    observations: np.ndarray
    noise_std: float | None = None
    relative_noise: float | None = None

    def __post_init__(self):
        check_uniform_times(self.times)
        obs = as_float_array(self.observations, "observations", ndim=2)
        if obs.shape[1] != self.times.shape[0]:
            raise ValueError("observations must have one column per time sample")
        object.__setattr__(self, "observations", obs)
        if self.noise_std is not None and self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")

    @property
    def dt(self):
        return float(self.times[1] - self.times[0])


def _coefficients(dim, entries):
    """Build a CoefficientMatrix from {(row, exponent-tuple): value}."""
    library = FeatureLibrary(dim, 3)
    index = {term: j for j, term in enumerate(library.terms)}
    values = np.zeros((dim, library.n_terms))
    for (row, term), value in entries.items():
        values[row, index[term]] = value
    return CoefficientMatrix(library=library, values=values)


def linear_damped_oscillator(alpha=0.1, beta=2.0):
    def rhs(x):
        return np.stack([-alpha * x[0] + beta * x[1], -beta * x[0] - alpha * x[1]])

    coeffs = _coefficients(2, {
        (0, (1, 0)): -alpha, (0, (0, 1)): beta,
        (1, (1, 0)): -beta, (1, (0, 1)): -alpha,
    })
    return OdeSystem("linear_damped_oscillator", {"alpha": alpha, "beta": beta},
                     rhs, coeffs, np.array([0.0, 0.0]))


def lorenz(sigma=10.0, rho=28.0, beta=8.0 / 3.0):
    def rhs(x):
        return np.stack([
            sigma * (x[1] - x[0]),
            x[0] * (rho - x[2]) - x[1],
            x[0] * x[1] - beta * x[2],
        ])

    coeffs = _coefficients(3, {
        (0, (1, 0, 0)): -sigma, (0, (0, 1, 0)): sigma,
        (1, (1, 0, 0)): rho, (1, (0, 1, 0)): -1.0, (1, (1, 0, 1)): -1.0,
        (2, (1, 1, 0)): 1.0, (2, (0, 0, 1)): -beta,
    })
    return OdeSystem("lorenz", {"sigma": sigma, "rho": rho, "beta": beta},
                     rhs, coeffs, np.array([0.0, 0.0, 15.0]))


def cubic_damped_oscillator(alpha=0.1, beta=2.0):
    def rhs(x):
        return np.stack([
            -alpha * x[0] ** 3 + beta * x[1] ** 3,
            -beta * x[0] ** 3 - alpha * x[1] ** 3,
        ])

    coeffs = _coefficients(2, {
        (0, (3, 0)): -alpha, (0, (0, 3)): beta,
        (1, (3, 0)): -beta, (1, (0, 3)): -alpha,
    })
    return OdeSystem("cubic_damped_oscillator", {"alpha": alpha, "beta": beta},
                     rhs, coeffs, np.array([0.0, 0.0]))


def duffing(alpha=0.2, beta=0.05, gamma=1.0):
    def rhs(x):
        return np.stack([x[1], -alpha * x[1] - beta * x[0] - gamma * x[0] ** 3])

    coeffs = _coefficients(2, {
        (0, (0, 1)): 1.0,
        (1, (0, 1)): -alpha, (1, (1, 0)): -beta, (1, (3, 0)): -gamma,
    })
    return OdeSystem("duffing", {"alpha": alpha, "beta": beta, "gamma": gamma},
                     rhs, coeffs, np.array([0.0, 0.0]))


def hopf(alpha=0.05, beta=1.0, gamma=1.0):
    def rhs(x):
        r2 = x[0] ** 2 + x[1] ** 2
        return np.stack([
            -alpha * x[0] - beta * x[1] - gamma * x[0] * r2,
            beta * x[0] - alpha * x[1] - gamma * x[1] * r2,
        ])

    coeffs = _coefficients(2, {
        (0, (1, 0)): -alpha, (0, (0, 1)): -beta,
        (0, (3, 0)): -gamma, (0, (1, 2)): -gamma,
        (1, (1, 0)): beta, (1, (0, 1)): -alpha,
        (1, (2, 1)): -gamma, (1, (0, 3)): -gamma,
    })
    return OdeSystem("hopf", {"alpha": alpha, "beta": beta, "gamma": gamma},
                     rhs, coeffs, np.array([0.0, 0.0]))


def lotka_volterra(alpha=5.0, beta=1.0):
    def rhs(x):
        return np.stack([
            alpha * x[0] - beta * x[0] * x[1],
            beta * x[0] * x[1] - 2.0 * alpha * x[1],
        ])

    coeffs = _coefficients(2, {
        (0, (1, 0)): alpha, (0, (1, 1)): -beta,
        (1, (1, 1)): beta, (1, (0, 1)): -2.0 * alpha,
    })
    return OdeSystem("lotka_volterra", {"alpha": alpha, "beta": beta},
                     rhs, coeffs, np.array([5.0, 5.0]), ic_distribution="gamma")


def rossler(a=0.2, b=0.2, c=5.7):
    def rhs(x):
        return np.stack([-x[1] - x[2], x[0] + a * x[1], b + (x[0] - c) * x[2]])

    coeffs = _coefficients(3, {
        (0, (0, 1, 0)): -1.0, (0, (0, 0, 1)): -1.0,
        (1, (1, 0, 0)): 1.0, (1, (0, 1, 0)): a,
        (2, (0, 0, 0)): b, (2, (1, 0, 1)): 1.0, (2, (0, 0, 1)): -c,
    })
    return OdeSystem("rossler", {"a": a, "b": b, "c": c},
                     rhs, coeffs, np.array([0.0, 0.0, 0.0]))


def van_der_pol(mu=0.5):
    def rhs(x):
        return np.stack([x[1], mu * (1.0 - x[0] ** 2) * x[1] - x[0]])

    coeffs = _coefficients(2, {
        (0, (0, 1)): 1.0,
        (1, (0, 1)): mu, (1, (2, 1)): -mu, (1, (1, 0)): -1.0,
    })
    return OdeSystem("van_der_pol", {"mu": mu}, rhs, coeffs, np.array([0.0, 0.0]))


SYSTEM_FACTORIES = {
    "linear_damped_oscillator": linear_damped_oscillator,
    "lorenz": lorenz,
    "cubic_damped_oscillator": cubic_damped_oscillator,
    "duffing": duffing,
    "hopf": hopf,
    "lotka_volterra": lotka_volterra,
    "rossler": rossler,
    "van_der_pol": van_der_pol,
}

SYSTEM_NAMES = tuple(SYSTEM_FACTORIES)


def get_system(name):
    try:
        return SYSTEM_FACTORIES[name]()
    except KeyError:
        raise KeyError(f"unknown system {name!r}; available: {', '.join(SYSTEM_NAMES)}") from None


def integrate(system, x0, duration, dt):
    """Integrate a benchmark system onto t = 0, dt, ..., duration.

    Uses adaptive RK45 (rtol 1e-9, atol 1e-12) interpolated onto the uniform
    grid. Raises :class:`DivergenceError` if any state magnitude exceeds 1e6.
    """
    times, states, blowup_time = _integrate.solve_uniform(
        system.rhs, x0, duration, dt, min_steps=10
    )
    if blowup_time is not None:
        raise DivergenceError(
            f"integration of {system.name} exceeded |state| = 1e6 at t = {blowup_time:.6g}",
            time=blowup_time,
        )
    return Trajectory(times=times, states=states, derivatives=system.rhs(states))


def sample_initial_condition(system, rng):
    """Draw one initial condition: Normal(ic_mean, 9 I), or per-coordinate
    Gamma matched to (mean, variance 9) for systems flagged as gamma."""
    mean = system.ic_mean
    if system.ic_distribution == "gamma":
        if np.any(mean <= 0):
            raise ValueError("gamma initial conditions require positive means")
        shape = mean**2 / 9.0
        scale = 9.0 / mean
        return rng.gamma(shape, scale)
    return rng.normal(mean, 3.0)


def add_noise(trajectory, relative_noise, rng, rule="variance"):
    """Corrupt a trajectory with white Gaussian measurement noise.

    The noise level is relative: under the default ``"variance"`` rule
    sigma_z**2 = relative_noise * mean(X**2); under the alternative ``"std"``
    rule sigma_z = relative_noise * sqrt(mean(X**2)).
    """
    if relative_noise < 0:
        raise ValueError("relative_noise must be nonnegative")
    if rule not in ("variance", "std"):
        raise ValueError(f"unknown noise rule {rule!r}")
    X = trajectory.states
    if relative_noise == 0:
        return MeasurementSet(trajectory.times, X.copy(), 0.0, 0.0)
    mean_sq = float(np.mean(X**2))
    if mean_sq == 0.0:
        raise DegenerateSignalError("all-zero trajectory cannot define relative noise")
    if rule == "variance":
        sigma = float(np.sqrt(relative_noise * mean_sq))
    else:
        sigma = float(relative_noise * np.sqrt(mean_sq))
    Z = X + sigma * rng.standard_normal(X.shape)
    return MeasurementSet(trajectory.times, Z, sigma, float(relative_noise))


def true_support(system, tol=1e-10):
    """Nonzero pattern of the true coefficients; row sums are the
    per-equation target sparsities fed to the optimizer."""
    return system.true_coefficients.support(tol)


def target_sparsity(system):
    """Per-equation nonzero counts of the true model."""
    return true_support(system).sum(axis=1)


def write_dataset_csv(path, times, states=None, observations=None):
    """Write columns t, x1..xn, z1..zn (either block optional)."""
    if states is None and observations is None:
        raise ValueError("nothing to write")
    header = ["t"]
    columns = [np.asarray(times, dtype=float)]
    for prefix, block in (("x", states), ("z", observations)):
        if block is not None:
            block = np.asarray(block, dtype=float)
            for i in range(block.shape[0]):
                header.append(f"{prefix}{i + 1}")
                columns.append(block[i])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in zip(*columns):
            writer.writerow([repr(float(v)) for v in row])


def read_dataset_csv(path):
    """Read a dataset CSV; returns (times, states | None, observations | None)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.asarray(rows).T
    by_name = dict(zip(header, data))
    if "t" not in by_name:
        raise ValueError(f"{path} has no 't' column")

    def block(prefix):
        cols = []
        for i in range(1, len(header) + 1):
            name = f"{prefix}{i}"
            if name not in by_name:
                break
            cols.append(by_name[name])
        return np.stack(cols) if cols else None

    return by_name["t"], block("x"), block("z")


def write_manifest(path, **fields):
    with open(path, "w") as fh:
        json.dump(fields, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path):
    with open(path) as fh:
        return json.load(fh)
