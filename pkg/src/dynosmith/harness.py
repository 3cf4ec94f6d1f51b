"""Experiment orchestration: systems x noise x duration x method x seeds.

Each trial generates ``n_trajectories`` noisy trajectories of one system,
smooths them with one method, pools all columns into a single regression
problem, fits a bagged fixed-sparsity model, and scores it against the
ground-truth coefficients. Grid methods pick their hyperparameter by best
F1 against the truth (an oracle, and marked as such in the record);
``kalman_gcv`` selects rho per trajectory without truth access.

Determinism rules: every random draw comes from a stream seeded by a
digest of the canonicalized trial parameters. Data-level streams (initial
conditions, noise, bag indices, test points) do not include the method, so
every method sees identical data within a trial cell. Trial keys are
digests of the full per-trial parameter set; rerunning any subset of the
grid reproduces identical rows byte for byte.
"""

import csv
import hashlib
import io
import json
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import __version__
from .exceptions import ConfigurationError
from .gcv import GcvConfig, gcv_select_rho
from .library import FeatureLibrary
from .metrics import coefficient_f1, coefficient_mae, simulation_score
from .sindy import ensemble_fit, simulate_model
from .smoothing import (
    finite_difference,
    kalman_smooth,
    savitzky_golay,
    tv_smooth,
)
from .systems import (
    SYSTEM_NAMES,
    add_noise,
    get_system,
    integrate,
    sample_initial_condition,
    target_sparsity,
)

__all__ = [
    "ExperimentConfig",
    "TrialRecord",
    "run_trial",
    "run_grid",
    "report",
    "trial_key",
    "read_results",
    "RESULT_COLUMNS",
]

METHODS = ("kalman_gcv", "kalman_grid", "tv_grid", "savgol_grid", "finite_diff")

RESULT_COLUMNS = (
    "trial_key", "system", "method", "noise", "duration", "seed",
    "oracle_selected", "selected_hyperparameters", "f1", "mae",
    "mae_true_support", "sim_rmse", "diverged", "bounded", "error",
)


def _default_systems():
    return tuple(SYSTEM_NAMES)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a grid run depends on; serializes to/from JSON.

    The sweep is the union of the noise grid at the default duration and
    the duration grid at the default noise (``full_cross_product`` switches
    to all pairs). Open interpretation switches: ``noise_rule`` scales noise
    by mean squared signal ("variance") or mean absolute signal ("std");
    ``pooling`` concatenates trajectories into one regression ("pooled") or
    fits per trajectory and medians the models ("per_trajectory");
    ``sparsity_mode`` reads the target sparsity per equation row or as a
    matrix total.
    """

    systems: tuple = field(default_factory=_default_systems)
    methods: tuple = METHODS
    noise_grid: tuple = (0.05, 0.1, 0.15, 0.2, 0.25, 0.3)
    duration_grid: tuple = (0.5, 1.0, 2.0, 4.0, 8.0, 16.0)
    default_noise: float = 0.1
    default_duration: float = 16.0
    dt: float = 0.01
    n_trajectories: int = 10
    n_seeds: int = 1
    master_seed: int = 19
    kalman_rho_grid: tuple = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)
    tv_lam_grid: tuple = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)
    savgol_window_grid: tuple = (5, 8, 12, 15)
    savgol_order: int = 3
    ridge: float = 0.01
    n_bags: int = 20
    bag_fraction: float = 0.6
    sparsity_mode: str = "per_row"
    noise_rule: str = "variance"
    pooling: str = "pooled"
    gcv_holdout: float = 0.2
    gcv_folds: int = 1
    n_test_trajectories: int = 2
    sim_duration: float = 8.0
    full_cross_product: bool = False

    def __post_init__(self):
        object.__setattr__(self, "systems", tuple(self.systems))
        object.__setattr__(self, "methods", tuple(self.methods))
        for name in ("noise_grid", "duration_grid", "kalman_rho_grid", "tv_lam_grid"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        object.__setattr__(
            self, "savgol_window_grid", tuple(int(v) for v in self.savgol_window_grid)
        )
        unknown = set(self.systems) - set(SYSTEM_NAMES)
        if unknown:
            raise ConfigurationError(f"unknown systems: {sorted(unknown)}")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ConfigurationError(f"unknown methods: {sorted(unknown)}")
        if any(v < 0 for v in self.noise_grid) or self.default_noise < 0:
            raise ConfigurationError("noise levels must be nonnegative")
        for name in ("duration_grid", "kalman_rho_grid", "tv_lam_grid",
                     "savgol_window_grid"):
            if any(v <= 0 for v in getattr(self, name)):
                raise ConfigurationError(f"{name} values must be positive")
        if self.dt <= 0:
            raise ConfigurationError("dt must be positive")
        for duration in set(self.duration_grid) | {self.default_duration, self.sim_duration}:
            steps = duration / self.dt
            if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
                raise ConfigurationError(
                    f"dt {self.dt} does not divide duration {duration}"
                )
        if self.n_trajectories < 1 or self.n_seeds < 1:
            raise ConfigurationError("n_trajectories and n_seeds must be >= 1")
        if self.sparsity_mode not in ("per_row", "total"):
            raise ConfigurationError(f"unknown sparsity_mode {self.sparsity_mode!r}")
        if self.noise_rule not in ("variance", "std"):
            raise ConfigurationError(f"unknown noise_rule {self.noise_rule!r}")
        if self.pooling not in ("pooled", "per_trajectory"):
            raise ConfigurationError(f"unknown pooling {self.pooling!r}")
        if self.n_test_trajectories < 0:
            raise ConfigurationError("n_test_trajectories must be >= 0")

    def to_dict(self):
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out

    @classmethod
    def from_dict(cls, payload):
        known = {f.name for f in fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**payload)

    def digest(self):
        return _digest(self.to_dict())

    def cells(self):
        """The (noise, duration) pairs of the sweep, deduplicated."""
        if self.full_cross_product:
            pairs = [(n, d) for n in self.noise_grid for d in self.duration_grid]
        else:
            pairs = [(n, self.default_duration) for n in self.noise_grid]
            pairs += [(self.default_noise, d) for d in self.duration_grid]
        seen, out = set(), []
        for pair in pairs:
            if pair not in seen:
                seen.add(pair)
                out.append(pair)
        return out


@dataclass(frozen=True)
class TrialRecord:
    """One results-table row; wall_time is kept out of the canonical table."""

    trial_key: str
    system: str
    method: str
    noise: float
    duration: float
    seed: int
    oracle_selected: bool
    selected_hyperparameters: dict
    f1: float | None
    mae: float | None
    mae_true_support: float | None
    sim_rmse: tuple = ()
    diverged: tuple = ()
    bounded: tuple | None = None
    error: str = ""
    wall_time: float = 0.0


def _canonical(payload):
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def _digest(payload):
    return hashlib.sha256(_canonical(payload).encode()).hexdigest()


def _method_params(cfg, method):
    if method == "kalman_grid":
        return {"rho_grid": list(cfg.kalman_rho_grid)}
    if method == "tv_grid":
        return {"lam_grid": list(cfg.tv_lam_grid)}
    if method == "savgol_grid":
        return {"window_grid": list(cfg.savgol_window_grid), "order": cfg.savgol_order}
    if method == "kalman_gcv":
        return {"holdout": cfg.gcv_holdout, "folds": cfg.gcv_folds}
    return {}


def _trial_payload(cfg, system, method, noise, duration, seed):
    return {
        "bag_fraction": cfg.bag_fraction,
        "dt": cfg.dt,
        "duration": duration,
        "master_seed": cfg.master_seed,
        "method": method,
        "method_params": _method_params(cfg, method),
        "n_bags": cfg.n_bags,
        "n_test_trajectories": cfg.n_test_trajectories,
        "n_trajectories": cfg.n_trajectories,
        "noise": noise,
        "noise_rule": cfg.noise_rule,
        "pooling": cfg.pooling,
        "ridge": cfg.ridge,
        "seed": seed,
        "sim_duration": cfg.sim_duration,
        "sparsity_mode": cfg.sparsity_mode,
        "system": system,
    }


def trial_key(cfg, system, method, noise, duration, seed=0):
    """Deterministic 16-hex reproducibility key for one trial."""
    return _digest(_trial_payload(cfg, system, method, noise, duration, seed))[:16]


def _stream(cfg, system, noise, duration, seed, purpose, index=0):
    """RNG for one purpose within a trial's data cell (method-independent)."""
    payload = {
        "dt": cfg.dt,
        "duration": duration,
        "index": index,
        "master_seed": cfg.master_seed,
        "n_trajectories": cfg.n_trajectories,
        "noise": noise,
        "noise_rule": cfg.noise_rule,
        "purpose": purpose,
        "seed": seed,
        "system": system,
    }
    return np.random.default_rng(int(_digest(payload), 16) % 2**63)


_IC_ATTEMPT_CAP = 50


def _generate_data(cfg, system_name, noise, duration, seed):
    """Trajectories, noisy measurements, bag indices, and test points.

    Initial conditions whose true trajectory diverges are redrawn from the
    same stream (deterministically), up to a cap.
    """
    system = get_system(system_name)
    ic_rng = _stream(cfg, system_name, noise, duration, seed, "ic")
    trajectories = []
    attempts = 0
    while len(trajectories) < cfg.n_trajectories:
        if attempts >= _IC_ATTEMPT_CAP + cfg.n_trajectories:
            raise ConfigurationError(
                f"{system_name}: could not draw {cfg.n_trajectories} "
                f"non-divergent initial conditions"
            )
        attempts += 1
        x0 = sample_initial_condition(system, ic_rng)
        try:
            trajectories.append(integrate(system, x0, duration, cfg.dt))
        except Exception:
            continue

    noise_rng = _stream(cfg, system_name, noise, duration, seed, "noise")
    measurements = [
        add_noise(traj, noise, noise_rng, rule=cfg.noise_rule)
        for traj in trajectories
    ]

    m_total = sum(t.times.shape[0] for t in trajectories)
    bag_size = int(np.floor(cfg.bag_fraction * m_total))
    bag_rng = _stream(cfg, system_name, noise, duration, seed, "bags")
    bag_indices = [
        bag_rng.choice(m_total, size=bag_size, replace=False)
        for _ in range(cfg.n_bags)
    ]

    test_ics = []
    if cfg.n_test_trajectories > 0:
        test_rng = _stream(cfg, system_name, noise, duration, seed, "test_ic")
        guard = 0
        while len(test_ics) < cfg.n_test_trajectories:
            if guard >= _IC_ATTEMPT_CAP + cfg.n_test_trajectories:
                raise ConfigurationError(
                    f"{system_name}: could not draw test initial conditions"
                )
            guard += 1
            x0 = sample_initial_condition(system, test_rng)
            try:
                integrate(system, x0, cfg.sim_duration, cfg.dt)
            except Exception:
                continue
            test_ics.append(x0)

    return system, trajectories, measurements, bag_indices, test_ics


def _smooth_one(method, ms, value, order=3, gcv_cfg=None):
    if method in ("kalman_grid", "kalman_gcv"):
        return kalman_smooth(ms, rho=value)
    if method == "tv_grid":
        return tv_smooth(ms, lam=value)
    if method == "savgol_grid":
        return savitzky_golay(ms, window=value, order=order)
    if method == "finite_diff":
        return finite_difference(ms)
    raise ConfigurationError(f"unknown method {method!r}")


def _fit_from_smooths(cfg, system, smooths, bag_indices, library):
    sparsity = target_sparsity(system)
    if cfg.sparsity_mode == "total":
        sparsity = int(np.sum(sparsity))
    if cfg.pooling == "pooled":
        theta = np.concatenate([library.evaluate(s.states_hat) for s in smooths], axis=1)
        dxdt = np.concatenate([s.derivatives_hat for s in smooths], axis=1)
        ens = ensemble_fit(
            theta, dxdt, sparsity, ridge=cfg.ridge, library=library,
            mode=cfg.sparsity_mode, bag_indices=bag_indices,
        )
        return ens.aggregate
    # per-trajectory mode: one plain fit per trajectory, median across models
    members = []
    for s in smooths:
        theta = library.evaluate(s.states_hat)
        ens = ensemble_fit(
            theta, s.derivatives_hat, sparsity, ridge=cfg.ridge, library=library,
            mode=cfg.sparsity_mode, bag_indices=[np.arange(theta.shape[1])],
        )
        members.append(ens.aggregate)
    from .library import CoefficientMatrix

    stack = np.stack([m.values for m in members])
    flagged = sorted({r for m in members for r in m.rank_deficient_rows})
    return CoefficientMatrix(
        library=library, values=np.median(stack, axis=0),
        rank_deficient_rows=tuple(flagged),
    )


def run_trial(cfg, system_name, method, noise, duration, seed=0, collect=False):
    """Run one (system, method, noise, duration, seed) pipeline end to end.

    Grid methods fit the full pipeline at every grid value and keep the one
    with the best F1 against the true coefficients (ties to the smallest
    value); the record marks them ``oracle_selected``. Errors at any stage
    are captured in the record rather than raised.

    With ``collect=True`` returns ``(record, artifacts)`` where artifacts
    hold the measurement sets, winning smooths, fitted model, and test
    simulations for export.
    """
    key = trial_key(cfg, system_name, method, noise, duration, seed)
    start = time.perf_counter()
    artifacts = None
    try:
        record, artifacts = _run_trial_inner(
            cfg, system_name, method, noise, duration, seed, key, collect
        )
    except Exception as exc:
        record = TrialRecord(
            trial_key=key, system=system_name, method=method, noise=noise,
            duration=duration, seed=seed,
            oracle_selected=method.endswith("_grid"),
            selected_hyperparameters={}, f1=None, mae=None,
            mae_true_support=None, error=f"{type(exc).__name__}: {exc}",
        )
    record = replace(record, wall_time=time.perf_counter() - start)
    return (record, artifacts) if collect else record


def _run_trial_inner(cfg, system_name, method, noise, duration, seed, key, collect):
    system, trajectories, measurements, bag_indices, test_ics = _generate_data(
        cfg, system_name, noise, duration, seed
    )
    library = FeatureLibrary(system.dim, 3)
    truth = system.true_coefficients
    oracle = method.endswith("_grid")

    if method == "finite_diff":
        smooths = [_smooth_one(method, ms, None) for ms in measurements]
        fit = _fit_from_smooths(cfg, system, smooths, bag_indices, library)
        selected = {}
    elif method == "kalman_gcv":
        rhos, converged = [], []
        smooths = []
        for j, ms in enumerate(measurements):
            gcv_seed = int(
                _digest({"key": key[:8], "purpose": "gcv", "traj": j,
                         "master_seed": cfg.master_seed, "system": system_name,
                         "noise": noise, "duration": duration, "seed": seed}),
                16,
            ) % 2**31
            gcv_cfg = GcvConfig(
                holdout_fraction=cfg.gcv_holdout, seed=gcv_seed, n_folds=cfg.gcv_folds
            )
            res = gcv_select_rho(ms, gcv_cfg)
            rhos.append(res.rho_star)
            converged.append(res.converged)
            smooths.append(kalman_smooth(ms, rho=res.rho_star))
        fit = _fit_from_smooths(cfg, system, smooths, bag_indices, library)
        selected = {"rho_per_trajectory": rhos, "converged": converged}
    else:
        if method == "kalman_grid":
            grid, param = cfg.kalman_rho_grid, "rho"
        elif method == "tv_grid":
            grid, param = cfg.tv_lam_grid, "lam"
        elif method == "savgol_grid":
            grid, param = cfg.savgol_window_grid, "window"
        else:
            raise ConfigurationError(f"unknown method {method!r}")
        best = None
        for value in grid:
            smooths_v = [
                _smooth_one(method, ms, value, order=cfg.savgol_order)
                for ms in measurements
            ]
            fit_v = _fit_from_smooths(cfg, system, smooths_v, bag_indices, library)
            f1_v = coefficient_f1(fit_v, truth)
            if best is None or f1_v > best[0]:
                best = (f1_v, value, fit_v, smooths_v)
        _, value, fit, smooths = best
        selected = {param: value}

    f1 = coefficient_f1(fit, truth)
    mae = coefficient_mae(fit, truth)
    mae_ts = coefficient_mae(fit, truth, true_support_only=True)
    sim_rmse, diverged, bounded = (), (), None
    simulations = []
    if test_ics:
        sim_rmse, diverged, bounded = simulation_score(
            fit, system, test_ics, cfg.sim_duration, cfg.dt
        )
        if collect:
            simulations = [
                simulate_model(fit, x0, cfg.sim_duration, cfg.dt) for x0 in test_ics
            ]

    record = TrialRecord(
        trial_key=key, system=system_name, method=method, noise=noise,
        duration=duration, seed=seed, oracle_selected=oracle,
        selected_hyperparameters=selected, f1=f1, mae=mae,
        mae_true_support=mae_ts, sim_rmse=sim_rmse, diverged=diverged,
        bounded=bounded,
    )
    artifacts = None
    if collect:
        artifacts = {
            "trajectories": trajectories,
            "measurements": measurements,
            "smooths": smooths,
            "fit": fit,
            "test_ics": test_ics,
            "simulations": simulations,
        }
    return record, artifacts


# ---------------------------------------------------------------------------
# Results persistence
# ---------------------------------------------------------------------------

def _cell(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(float(value))
    if isinstance(value, (dict, list, tuple)):
        return _canonical(_jsonable(value))
    return str(value)


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, float) and not np.isfinite(value):
        return "inf" if value > 0 else "-inf" if value < 0 else "nan"
    return value


def _record_row(rec):
    return [
        rec.trial_key, rec.system, rec.method, _cell(rec.noise),
        _cell(rec.duration), str(rec.seed), _cell(rec.oracle_selected),
        _cell(rec.selected_hyperparameters), _cell(rec.f1), _cell(rec.mae),
        _cell(rec.mae_true_support), _cell(list(rec.sim_rmse)),
        _cell(list(rec.diverged)),
        _cell(list(rec.bounded)) if rec.bounded is not None else "",
        rec.error,
    ]


def _rows_to_csv_bytes(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    writer.writerows(rows)
    return buf.getvalue()


def read_results(path):
    """Load a results table as a list of dicts (strings as stored)."""
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run_grid(cfg, out_dir, resume=False, progress=None):
    """Run the full sweep, writing results.csv, timings.csv, manifest.json.

    Rows append as trials finish (crash-safe); on completion the table is
    rewritten sorted by trial_key, so completion order never shows. With
    ``resume=True`` existing rows are kept and their trials skipped; the
    manifest must match the config.
    """
    import os

    os.makedirs(out_dir, exist_ok=True)
    results_path = os.path.join(out_dir, "results.csv")
    timings_path = os.path.join(out_dir, "timings.csv")
    manifest_path = os.path.join(out_dir, "manifest.json")

    existing = {}
    if resume and os.path.exists(results_path):
        if os.path.exists(manifest_path):
            with open(manifest_path) as fh:
                manifest = json.load(fh)
            if manifest.get("config_digest") != cfg.digest():
                raise ConfigurationError(
                    "resume requested but the existing manifest was produced "
                    "by a different config"
                )
        for row in read_results(results_path):
            existing[row["trial_key"]] = [row[c] for c in RESULT_COLUMNS]

    trials = []
    for noise, duration in cfg.cells():
        for system in cfg.systems:
            for seed in range(cfg.n_seeds):
                for method in cfg.methods:
                    trials.append((system, method, noise, duration, seed))

    rows = dict(existing)
    timings = []
    append_fh = open(results_path + ".partial", "w", newline="")
    appender = csv.writer(append_fh, lineterminator="\n")
    appender.writerow(RESULT_COLUMNS)
    for row in existing.values():
        appender.writerow(row)
    append_fh.flush()

    done = 0
    for system, method, noise, duration, seed in trials:
        key = trial_key(cfg, system, method, noise, duration, seed)
        if key in rows:
            continue
        record = run_trial(cfg, system, method, noise, duration, seed)
        rows[key] = _record_row(record)
        timings.append((key, record.wall_time))
        appender.writerow(rows[key])
        append_fh.flush()
        done += 1
        if progress is not None:
            progress(record)
    append_fh.close()

    ordered = [rows[k] for k in sorted(rows)]
    with open(results_path, "w", newline="") as fh:
        fh.write(_rows_to_csv_bytes(ordered))
    os.remove(results_path + ".partial")

    with open(timings_path, "a", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if fh.tell() == 0:
            writer.writerow(["trial_key", "wall_time"])
        for key, wall in timings:
            writer.writerow([key, repr(wall)])

    manifest = {
        "config": cfg.to_dict(),
        "config_digest": cfg.digest(),
        "version": __version__,
        "n_rows": len(ordered),
        "n_new_rows": done,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return results_path


# ---------------------------------------------------------------------------
# Reporting
# ---------------------------------------------------------------------------

def _median_or_blank(values):
    vals = [float(v) for v in values if v not in ("", None)]
    return repr(float(np.median(vals))) if vals else ""


def _summary_rows(records, cfg, sweep):
    if sweep == "noise":
        grid = cfg.noise_grid
        fixed = ("duration", cfg.default_duration)
        varying = "noise"
    else:
        grid = cfg.duration_grid
        fixed = ("noise", cfg.default_noise)
        varying = "duration"
    rows = []
    for system in cfg.systems:
        for method in cfg.methods:
            for value in grid:
                hits = [
                    r for r in records
                    if r["system"] == system and r["method"] == method
                    and float(r[varying]) == value
                    and float(r[fixed[0]]) == fixed[1]
                    and not r["error"]
                ]
                rows.append([
                    system, method, repr(value), str(len(hits)),
                    _median_or_blank(r["f1"] for r in hits),
                    _median_or_blank(r["mae"] for r in hits),
                    _median_or_blank(r["mae_true_support"] for r in hits),
                    "0" if hits else "1",
                ])
    return rows


EXPORT_NOISE = 0.1
EXPORT_DURATION = 8.0


def report(results_dir, out_dir=None):
    """Summarize a finished run: medians per sweep plus trajectory exports.

    Writes ``summary_noise.csv`` and ``summary_duration.csv`` (per system
    and method: trial count, median F1/MAE, and a missing flag for empty
    cells), and for every trial in the (noise 0.1, 8 s) cell regenerates
    and exports the measured, smoothed, and simulated trajectories.
    """
    import os

    from .smoothing import write_smooth_result
    from .systems import write_dataset_csv

    out_dir = results_dir if out_dir is None else out_dir
    os.makedirs(out_dir, exist_ok=True)
    manifest_path = os.path.join(results_dir, "manifest.json")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    cfg = ExperimentConfig.from_dict(manifest["config"])
    records = read_results(os.path.join(results_dir, "results.csv"))
    if not records:
        raise ConfigurationError("results table is empty; nothing to report")

    for sweep in ("noise", "duration"):
        rows = _summary_rows(records, cfg, sweep)
        path = os.path.join(out_dir, f"summary_{sweep}.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([
                "system", "method", sweep, "n_trials", "median_f1",
                "median_mae", "median_mae_true_support", "missing",
            ])
            writer.writerows(rows)

    export_root = os.path.join(out_dir, "trajectories")
    exported = []
    for rec in records:
        if rec["error"]:
            continue
        if float(rec["noise"]) != EXPORT_NOISE or float(rec["duration"]) != EXPORT_DURATION:
            continue
        _, artifacts = run_trial(
            cfg, rec["system"], rec["method"], float(rec["noise"]),
            float(rec["duration"]), int(rec["seed"]), collect=True,
        )
        if artifacts is None:
            continue
        trial_dir = os.path.join(export_root, rec["trial_key"])
        os.makedirs(trial_dir, exist_ok=True)
        for j, (traj, ms, sm) in enumerate(
            zip(artifacts["trajectories"], artifacts["measurements"],
                artifacts["smooths"])
        ):
            write_dataset_csv(
                os.path.join(trial_dir, f"data_{j:02d}.csv"),
                traj.times, states=traj.states, observations=ms.observations,
            )
            write_smooth_result(
                sm, os.path.join(trial_dir, f"smoothed_{j:02d}.csv"),
                os.path.join(trial_dir, f"smoothed_{j:02d}.json"),
            )
        artifacts["fit"].save(os.path.join(trial_dir, "model.json"))
        for j, sim in enumerate(artifacts["simulations"]):
            if sim.trajectory is None:
                continue
            write_dataset_csv(
                os.path.join(trial_dir, f"simulated_{j:02d}.csv"),
                sim.trajectory.times, states=sim.trajectory.states,
            )
        exported.append(rec["trial_key"])
    return {"exported_trials": exported, "out_dir": out_dir}
