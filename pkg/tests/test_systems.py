"""Benchmark systems: right-hand sides, integration, sampling, noise, I/O.

Covers:
  - hand-computed rhs spot values for all eight systems
  - exact agreement between rhs and the library expansion of the true
    coefficients (the defining invariant of the coefficient matrices)
  - integration against a closed-form solution and an independent RK4
  - fourth-order convergence of the fixed-step reference against the
    adaptive integrator
  - divergence detection with the failure time attached
  - Monte-Carlo checks of the initial-condition sampler (variance 9,
    gamma positivity) and of the relative-noise rule
  - deterministic seeding, CSV and manifest round-trips
"""

import numpy as np
import pytest

from dynosmith import (
    DegenerateSignalError,
    DivergenceError,
    FeatureLibrary,
    MeasurementSet,
    Trajectory,
    add_noise,
    get_system,
    integrate,
    sample_initial_condition,
    target_sparsity,
    true_support,
)
from dynosmith.systems import (
    SYSTEM_NAMES,
    duffing,
    read_dataset_csv,
    read_manifest,
    write_dataset_csv,
    write_manifest,
)
from dense_reference import rk4_fixed

# hand-evaluated rhs values at probe states, one per system
RHS_SPOT_VALUES = {
    "linear_damped_oscillator": ((1.0, 1.0), (1.9, -2.1)),
    "cubic_damped_oscillator": ((1.0, 2.0), (15.9, -2.8)),
    "lorenz": ((1.0, 2.0, 3.0), (10.0, 23.0, -6.0)),
    "duffing": ((1.0, 2.0), (2.0, -1.45)),
    "hopf": ((1.0, 2.0), (-7.05, -9.1)),
    "lotka_volterra": ((1.0, 2.0), (3.0, -18.0)),
    "rossler": ((1.0, 2.0, 3.0), (-5.0, 1.4, -13.9)),
    "van_der_pol": ((1.0, 2.0), (2.0, -1.0)),
}

TARGET_SPARSITIES = {
    "linear_damped_oscillator": (2, 2),
    "cubic_damped_oscillator": (2, 2),
    "lorenz": (2, 3, 2),
    "duffing": (1, 3),
    "hopf": (4, 4),
    "lotka_volterra": (2, 2),
    "rossler": (2, 2, 3),
    "van_der_pol": (1, 3),
}


def test_all_eight_systems_present():
    assert set(SYSTEM_NAMES) == set(RHS_SPOT_VALUES)
    assert len(SYSTEM_NAMES) == 8


@pytest.mark.parametrize("name", sorted(RHS_SPOT_VALUES))
def test_rhs_spot_values(name):
    x, expected = RHS_SPOT_VALUES[name]
    system = get_system(name)
    got = system.rhs(np.asarray(x))
    assert np.allclose(got, expected, rtol=0, atol=1e-12)


def test_lorenz_rhs_at_mean_initial_condition():
    system = get_system("lorenz")
    assert np.allclose(system.rhs(np.array([0.0, 0.0, 15.0])), [0.0, 0.0, -40.0])


def test_linear_oscillator_rhs_at_unit_start():
    system = get_system("linear_damped_oscillator")
    assert np.allclose(system.rhs(np.array([1.0, 0.0])), [-0.1, -2.0])


@pytest.mark.parametrize("name", sorted(RHS_SPOT_VALUES))
def test_true_coefficients_reproduce_rhs(name):
    # the library expansion must match the closed-form rhs at random states
    system = get_system(name)
    library = system.true_coefficients.library
    assert library.dim == system.dim
    rng = np.random.default_rng(7)
    x = rng.uniform(-10, 10, size=(system.dim, 100))
    expanded = system.true_coefficients.values @ library.evaluate(x)
    direct = system.rhs(x)
    assert np.max(np.abs(expanded - direct)) <= 1e-10


@pytest.mark.parametrize("name", sorted(TARGET_SPARSITIES))
def test_target_sparsity(name):
    assert tuple(target_sparsity(get_system(name))) == TARGET_SPARSITIES[name]


def test_true_support_shapes_and_counts():
    lorenz = get_system("lorenz")
    mask = true_support(lorenz)
    assert mask.shape == (3, 20)
    assert mask.sum() == 7
    ldo = get_system("linear_damped_oscillator")
    mask = true_support(ldo)
    assert mask.sum() == 4
    # all four nonzeros are degree-1 terms
    degrees = [sum(t) for t in ldo.true_coefficients.library.terms]
    for row in range(2):
        for j in np.flatnonzero(mask[row]):
            assert degrees[j] == 1


def test_rhs_vectorization_matches_columnwise():
    rng = np.random.default_rng(3)
    for name in SYSTEM_NAMES:
        system = get_system(name)
        X = rng.normal(size=(system.dim, 17))
        batch = system.rhs(X)
        for i in range(17):
            assert np.allclose(batch[:, i], system.rhs(X[:, i]), atol=1e-14)


# ---------------------------------------------------------------------------
# integration
# ---------------------------------------------------------------------------

def test_integrate_grid_shape_and_initial_state():
    system = get_system("duffing")
    traj = integrate(system, np.array([1.0, 0.0]), duration=1.0, dt=0.01)
    assert traj.times.shape == (101,)
    assert traj.states.shape == (2, 101)
    assert np.allclose(traj.states[:, 0], [1.0, 0.0], atol=1e-12)
    assert traj.times[0] == 0.0
    assert abs(traj.times[-1] - 1.0) < 1e-12
    assert abs(traj.dt - 0.01) < 1e-14


def test_integrate_linear_oscillator_closed_form():
    # z = x + i y obeys dz/dt = (-alpha - i beta) z, so the solution is a
    # decaying rotation with known amplitude and phase
    system = get_system("linear_damped_oscillator")
    alpha, beta = system.params["alpha"], system.params["beta"]
    traj = integrate(system, np.array([1.0, 0.0]), duration=10.0, dt=0.01)
    t = traj.times
    envelope = np.exp(-alpha * t)
    exact = np.stack([envelope * np.cos(beta * t), -envelope * np.sin(beta * t)])
    assert np.max(np.abs(traj.states - exact)) <= 1e-7
    exact_deriv = np.stack([
        -alpha * exact[0] + beta * exact[1],
        -beta * exact[0] - alpha * exact[1],
    ])
    assert np.max(np.abs(traj.derivatives - exact_deriv)) <= 1e-6


def test_integrate_derivatives_are_rhs_of_states():
    system = get_system("lorenz")
    traj = integrate(system, np.array([1.0, 1.0, 1.0]), duration=2.0, dt=0.01)
    assert np.array_equal(traj.derivatives, system.rhs(traj.states))


def test_integrate_matches_fixed_step_rk4_on_lorenz():
    system = get_system("lorenz")
    x0 = np.array([1.0, 1.0, 1.0])
    traj = integrate(system, x0, duration=2.0, dt=0.01)
    reference = rk4_fixed(system.rhs, x0, 2.0, 1e-4)
    # compare on the coarse grid (every 100th fine sample)
    assert np.max(np.abs(traj.states - reference[:, ::100])) <= 1e-5


def test_reference_integrator_converges_at_fourth_order():
    # halving the fixed step should shrink the error against the adaptive
    # solution by about 2^4
    system = get_system("van_der_pol")
    x0 = np.array([2.0, 0.0])
    truth = integrate(system, x0, duration=4.0, dt=0.04).states[:, -1]
    errs = []
    for dt in (0.04, 0.02, 0.01):
        approx = rk4_fixed(system.rhs, x0, 4.0, dt)[:, -1]
        errs.append(np.max(np.abs(approx - truth)))
    assert errs[0] / errs[1] > 10.0
    assert errs[1] / errs[2] > 10.0


def test_integrate_divergence_reports_time():
    # flipping the sign of the cubic stiffness makes the origin's basin
    # finite; a far-out start escapes to infinity in finite time
    system = duffing(gamma=-1.0)
    with pytest.raises(DivergenceError) as exc_info:
        integrate(system, np.array([5.0, 5.0]), duration=20.0, dt=0.01)
    assert exc_info.value.time is not None
    assert 0.0 < exc_info.value.time <= 20.0


def test_integrate_rejects_too_few_steps():
    system = get_system("duffing")
    with pytest.raises(Exception):
        integrate(system, np.array([1.0, 0.0]), duration=0.05, dt=0.01)


# ---------------------------------------------------------------------------
# initial-condition sampling
# ---------------------------------------------------------------------------

def test_sample_ic_is_deterministic():
    system = get_system("lorenz")
    a = sample_initial_condition(system, np.random.default_rng(42))
    b = sample_initial_condition(system, np.random.default_rng(42))
    assert np.array_equal(a, b)


def test_sample_ic_normal_moments():
    system = get_system("lorenz")
    rng = np.random.default_rng(11)
    draws = np.stack([sample_initial_condition(system, rng) for _ in range(100_000)])
    assert draws.shape == (100_000, 3)
    assert np.max(np.abs(draws.mean(axis=0) - system.ic_mean)) < 0.05
    var = draws.var(axis=0, ddof=1)
    assert np.all(var > 8.7) and np.all(var < 9.3)


def test_sample_ic_gamma_positive_with_matched_moments():
    system = get_system("lotka_volterra")
    rng = np.random.default_rng(5)
    draws = np.stack([sample_initial_condition(system, rng) for _ in range(100_000)])
    assert np.all(draws > 0)
    assert np.max(np.abs(draws.mean(axis=0) - 5.0)) < 0.05
    var = draws.var(axis=0, ddof=1)
    assert np.all(var > 8.7) and np.all(var < 9.3)


# ---------------------------------------------------------------------------
# measurement noise
# ---------------------------------------------------------------------------

def test_add_noise_zero_level_copies_exactly():
    traj = integrate(get_system("duffing"), np.array([1.0, 0.0]), 1.0, 0.01)
    ms = add_noise(traj, 0.0, np.random.default_rng(0))
    assert np.array_equal(ms.observations, traj.states)
    assert ms.noise_std == 0.0


def test_add_noise_constant_signal_scale():
    # X identically 2 with eta = 0.25 gives sigma_z = sqrt(0.25 * 4) = 1
    times = np.arange(0.0, 10.0, 0.01)
    states = np.full((2, times.size), 2.0)
    traj = Trajectory(times=times, states=states, derivatives=np.zeros_like(states))
    ms = add_noise(traj, 0.25, np.random.default_rng(1))
    assert abs(ms.noise_std - 1.0) < 1e-12
    resid = ms.observations - states
    assert abs(resid.std() - 1.0) < 0.05


def test_add_noise_variance_ratio_on_lorenz():
    system = get_system("lorenz")
    # long trajectory so the empirical ratio over >= 1e5 entries is tight
    traj = integrate(system, np.array([2.0, 1.0, 20.0]), duration=400.0, dt=0.01)
    assert traj.states.size >= 100_000
    ms = add_noise(traj, 0.1, np.random.default_rng(9))
    ratio = np.var(ms.observations - traj.states) / np.mean(traj.states**2)
    assert 0.095 <= ratio <= 0.105


def test_add_noise_std_rule():
    times = np.arange(0.0, 5.0, 0.01)
    states = np.full((1, times.size), 3.0)
    traj = Trajectory(times=times, states=states, derivatives=np.zeros_like(states))
    ms = add_noise(traj, 0.1, np.random.default_rng(2), rule="std")
    assert abs(ms.noise_std - 0.3) < 1e-12


def test_add_noise_is_unbiased_and_seeded():
    traj = integrate(get_system("lorenz"), np.array([2.0, 1.0, 20.0]), 100.0, 0.01)
    ms1 = add_noise(traj, 0.1, np.random.default_rng(33))
    ms2 = add_noise(traj, 0.1, np.random.default_rng(33))
    assert np.array_equal(ms1.observations, ms2.observations)
    resid = ms1.observations - traj.states
    assert abs(resid.mean()) <= 3 * ms1.noise_std / np.sqrt(resid.size)


def test_add_noise_degenerate_zero_signal():
    times = np.arange(0.0, 1.0, 0.01)
    states = np.zeros((2, times.size))
    traj = Trajectory(times=times, states=states, derivatives=states.copy())
    with pytest.raises(DegenerateSignalError):
        add_noise(traj, 0.1, np.random.default_rng(0))


def test_add_noise_rejects_negative_level():
    traj = integrate(get_system("duffing"), np.array([1.0, 0.0]), 1.0, 0.01)
    with pytest.raises(ValueError):
        add_noise(traj, -0.1, np.random.default_rng(0))


# ---------------------------------------------------------------------------
# containers and serialization
# ---------------------------------------------------------------------------

def test_trajectory_rejects_nonuniform_times():
    times = np.array([0.0, 0.1, 0.25, 0.3])
    data = np.zeros((1, 4))
    with pytest.raises(Exception):
        Trajectory(times=times, states=data, derivatives=data.copy())


def test_measurement_set_rejects_shape_mismatch():
    times = np.arange(0.0, 1.0, 0.1)
    with pytest.raises(ValueError):
        MeasurementSet(times=times, observations=np.zeros((2, 3)))


def test_dataset_csv_round_trip(tmp_path):
    traj = integrate(get_system("rossler"), np.array([1.0, 1.0, 1.0]), 1.0, 0.01)
    ms = add_noise(traj, 0.1, np.random.default_rng(4))
    path = tmp_path / "data.csv"
    write_dataset_csv(path, traj.times, states=traj.states, observations=ms.observations)
    t, X, Z = read_dataset_csv(path)
    assert np.array_equal(t, traj.times)
    assert np.array_equal(X, traj.states)
    assert np.array_equal(Z, ms.observations)


def test_dataset_csv_observations_only(tmp_path):
    times = np.arange(0.0, 1.0, 0.1)
    obs = np.random.default_rng(0).normal(size=(2, times.size))
    path = tmp_path / "obs.csv"
    write_dataset_csv(path, times, observations=obs)
    t, X, Z = read_dataset_csv(path)
    assert X is None
    assert np.array_equal(Z, obs)


def test_manifest_round_trip(tmp_path):
    path = tmp_path / "manifest.json"
    write_manifest(path, system="lorenz", seed=19, eta=0.1, dt=0.01)
    loaded = read_manifest(path)
    assert loaded == {"system": "lorenz", "seed": 19, "eta": 0.1, "dt": 0.01}
