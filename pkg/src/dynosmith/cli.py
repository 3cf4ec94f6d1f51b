"""Command-line entry points.

Five subcommands cover the pipeline stages:

- ``dynosmith simulate``: integrate a benchmark system from sampled or
  given initial conditions, optionally adding measurement noise.
- ``dynosmith smooth``: estimate states and derivatives from a dataset CSV.
- ``dynosmith fit``: sparse regression on a smoothed CSV, emitting the
  model JSON and rendered equations.
- ``dynosmith experiment``: run the benchmark sweep into an output
  directory (resumable).
- ``dynosmith report``: summarize a finished sweep and export the
  plot-ready trajectory files.

Configuration errors exit with status 2; per-trial failures inside an
experiment are recorded in the results table and do not fail the process.
"""

import argparse
import json
import os
import sys

import numpy as np

from .exceptions import ConfigurationError
from .harness import ExperimentConfig, report, run_grid
from .library import FeatureLibrary
from .sindy import ensemble_fit
from .smoothing import (
    finite_difference,
    kalman_smooth,
    read_smooth_result,
    savitzky_golay,
    tv_smooth,
    write_smooth_result,
)
from .systems import (
    MeasurementSet,
    SYSTEM_NAMES,
    add_noise,
    get_system,
    integrate,
    read_dataset_csv,
    sample_initial_condition,
    write_dataset_csv,
    write_manifest,
)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="dynosmith",
        description="sparse ODE identification from noisy trajectories",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate a benchmark system")
    p.add_argument("--system", required=True, choices=SYSTEM_NAMES)
    p.add_argument("--duration", type=float, default=16.0)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--n", type=int, default=1, help="number of trajectories")
    p.add_argument("--seed", type=int, default=19)
    p.add_argument("--noise", type=float, default=0.0, help="relative noise level")
    p.add_argument("--x0", help="comma-separated initial state (overrides sampling)")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("smooth", help="estimate states and derivatives")
    p.add_argument("--input", required=True, help="dataset CSV from simulate")
    p.add_argument(
        "--method", required=True,
        choices=["kalman", "tv", "savgol", "finite_diff"],
    )
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--lam", type=float, default=0.1)
    p.add_argument("--window", type=int, default=11)
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--out", required=True, help="output CSV path")

    p = sub.add_parser("fit", help="sparse regression on a smoothed CSV")
    p.add_argument("--input", required=True, help="smoothed CSV")
    p.add_argument(
        "--sparsity", required=True,
        help="per-row nonzero counts, e.g. '2,3,2', or one total with --total",
    )
    p.add_argument("--total", action="store_true", help="read --sparsity as a matrix total")
    p.add_argument("--ridge", type=float, default=0.01)
    p.add_argument("--bags", type=int, default=20)
    p.add_argument("--bag-fraction", type=float, default=0.6)
    p.add_argument("--seed", type=int, default=19)
    p.add_argument("--out", required=True, help="output model JSON path")

    p = sub.add_parser("experiment", help="run the benchmark sweep")
    p.add_argument("--config", help="JSON file mirroring ExperimentConfig")
    p.add_argument("--seed", type=int, help="override master_seed")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--methods", help="comma-separated method subset")
    p.add_argument("--systems", help="comma-separated system subset")
    p.add_argument("--resume", action="store_true")
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("report", help="summarize a finished sweep")
    p.add_argument("--results", required=True, help="directory with results.csv")
    p.add_argument("--out", help="output directory (default: results dir)")
    return parser


def _cmd_simulate(args):
    system = get_system(args.system)
    rng = np.random.default_rng(args.seed)
    os.makedirs(args.out, exist_ok=True)
    written = []
    for j in range(args.n):
        if args.x0 is not None:
            x0 = np.array([float(v) for v in args.x0.split(",")])
        else:
            x0 = sample_initial_condition(system, rng)
        traj = integrate(system, x0, args.duration, args.dt)
        obs = None
        if args.noise > 0:
            obs = add_noise(traj, args.noise, rng).observations
        path = os.path.join(args.out, f"{args.system}_{j:02d}.csv")
        write_dataset_csv(path, traj.times, states=traj.states, observations=obs)
        written.append(path)
    write_manifest(
        os.path.join(args.out, "manifest.json"),
        command="simulate", system=args.system, duration=args.duration,
        dt=args.dt, n=args.n, seed=args.seed, noise=args.noise,
        x0=args.x0, files=[os.path.basename(p) for p in written],
    )
    for path in written:
        print(path)
    return 0


def _cmd_smooth(args):
    times, states, observations = read_dataset_csv(args.input)
    signal = observations if observations is not None else states
    if signal is None:
        raise ConfigurationError(f"{args.input} has neither observation nor state columns")
    ms = MeasurementSet(times=times, observations=signal)
    if args.method == "kalman":
        result = kalman_smooth(ms, rho=args.rho)
    elif args.method == "tv":
        result = tv_smooth(ms, lam=args.lam)
    elif args.method == "savgol":
        result = savitzky_golay(ms, window=args.window, order=args.order)
    else:
        result = finite_difference(ms)
    sidecar = os.path.splitext(args.out)[0] + ".json"
    write_smooth_result(result, args.out, sidecar)
    print(args.out)
    print(sidecar)
    return 0


def _cmd_fit(args):
    times, states, derivs = read_smooth_result(args.input)
    n = states.shape[0]
    library = FeatureLibrary(n, 3)
    if args.total:
        sparsity = int(args.sparsity)
        mode = "total"
    else:
        parts = [int(v) for v in args.sparsity.split(",")]
        sparsity = parts * n if len(parts) == 1 else parts
        if len(sparsity) != n:
            raise ConfigurationError(
                f"--sparsity has {len(parts)} entries for {n} equations"
            )
        mode = "per_row"
    theta = library.evaluate(states)
    ens = ensemble_fit(
        theta, derivs, sparsity, ridge=args.ridge, n_bags=args.bags,
        bag_fraction=args.bag_fraction, rng=np.random.default_rng(args.seed),
        library=library, mode=mode,
    )
    ens.aggregate.save(args.out)
    print(args.out)
    for line in ens.aggregate.equations():
        print(line)
    return 0


def _cmd_experiment(args):
    if args.config:
        with open(args.config) as fh:
            payload = json.load(fh)
    else:
        payload = {}
    if args.seed is not None:
        payload["master_seed"] = args.seed
    if args.methods:
        payload["methods"] = [m.strip() for m in args.methods.split(",") if m.strip()]
    if args.systems:
        payload["systems"] = [s.strip() for s in args.systems.split(",") if s.strip()]
    cfg = ExperimentConfig.from_dict(payload)

    def progress(record):
        if not args.quiet:
            status = "error" if record.error else f"f1={record.f1:.3f}"
            print(
                f"{record.trial_key} {record.system} {record.method} "
                f"noise={record.noise:g} duration={record.duration:g} "
                f"seed={record.seed} {status}",
                flush=True,
            )

    path = run_grid(cfg, args.out, resume=args.resume, progress=progress)
    print(path)
    return 0


def _cmd_report(args):
    summary = report(args.results, args.out)
    print(os.path.join(summary["out_dir"], "summary_noise.csv"))
    print(os.path.join(summary["out_dir"], "summary_duration.csv"))
    print(f"exported {len(summary['exported_trials'])} trial trajectory sets")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "smooth": _cmd_smooth,
    "fit": _cmd_fit,
    "experiment": _cmd_experiment,
    "report": _cmd_report,
}


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigurationError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
