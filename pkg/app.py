import argparse
import logging
import os
import sys

import numpy as np

sys.path.insert(0, os.path.abspath(os.path.dirname(__file__)))

from config.config import HISTORY_COLUMNS, LOG_LEVEL, MODEL_COLUMNS
from config.experiment import ExperimentConfig, SpeedupConfig, apply_overrides, load_config
from utils.errors import ConfigurationError
from utils.helpers import config_fingerprint, write_field_csv, write_json, write_rows_csv
from utils.metrics import speedup_table
from utils.theta import model_run
from utils.twoscale import prepare, reference_solve, run

logger = logging.getLogger("eikonal")

SPEEDUP_COLUMNS = ("N", "M", "d", "C", "threshold", "serial", "coarse_phase", "fine_phase")
MEAN_COLUMNS = ("k", "l1_rel", "l1_abs", "linf", "fine_l1_rel", "trials")


def skeleton_csv_values(coarse):
    """Skeleton array with non-coarse-family entries blanked to nan."""
    values = np.where(coarse.skeleton, coarse.U, np.nan)
    return values


def _problem(config, seed):
    problem_cfg = config.require_problem()
    spec = problem_cfg.grid_spec()
    return prepare(spec, problem_cfg.make_slowness(seed), problem_cfg.make_boundary(),
                   workers=config.solver.workers, max_rounds=config.solver.max_rounds,
                   update_rounds=config.solver.update_rounds)


def _write_run(directory, config, seed, result, reference):
    write_rows_csv(os.path.join(directory, "errors.csv"), result.history, HISTORY_COLUMNS)
    write_field_csv(os.path.join(directory, "coarse.csv"), skeleton_csv_values(result.coarse))
    write_field_csv(os.path.join(directory, "fine.csv"), result.patched)
    write_field_csv(os.path.join(directory, "reference.csv"), reference)
    for snap in result.snapshots:
        k = snap["k"]
        blank = np.where(result.coarse.skeleton, snap["U"], np.nan)
        write_field_csv(os.path.join(directory, "snapshots", f"coarse_k{k:03d}.csv"), blank)
        write_field_csv(os.path.join(directory, "snapshots", f"fine_k{k:03d}.csv"), snap["patched"])
    resolved = config.resolved()
    resolved["seed"] = seed
    write_json(os.path.join(directory, "diagnostics.json"), {
        "status": result.status,
        "iterations": result.iterations,
        "config": resolved,
        "fingerprint": config_fingerprint(resolved),
        "history": [{key: value for key, value in row.items() if key != "wall_ms"} for row in result.history],
    })


def _mean_errors(histories):
    length = max(len(h) for h in histories)
    rows = []
    for k in range(length):
        # shorter runs converged early; carry their last row forward
        picked = [h[min(k, len(h) - 1)] for h in histories]
        row = {"k": k, "trials": len(picked)}
        for key in ("l1_rel", "l1_abs", "linf", "fine_l1_rel"):
            row[key] = float(np.mean([p[key] for p in picked]))
        rows.append(row)
    return rows


def cmd_run(config):
    solver = config.solver
    policy = config.theta.to_policy()
    histories = []
    status = "converged"
    for t in range(config.trials):
        seed = config.seed + t
        problem = _problem(config, seed)
        reference, _ = reference_solve(problem, max_rounds=solver.reference_max_rounds)
        result = run(problem, policy, max_iters=solver.max_iters, conv_tol=solver.conv_tol,
                     reference=reference.values, snapshot_every=config.outputs.snapshot_every)
        directory = config.outputs.directory
        if config.trials > 1:
            directory = os.path.join(directory, f"trial_{t:02d}")
        _write_run(directory, config, seed, result, reference.values)
        histories.append(result.history)
        if not result.converged:
            status = result.status
        logger.info("trial %d (seed %d): %s after %d iterations", t, seed, result.status, result.iterations)

    if config.trials > 1:
        write_rows_csv(os.path.join(config.outputs.directory, "mean_errors.csv"), _mean_errors(histories),
                       MEAN_COLUMNS)
    print(f"run: {status}, outputs in {config.outputs.directory}")
    return 0


def cmd_reference(config):
    problem = _problem(config, config.seed)
    reference, report = reference_solve(problem, max_rounds=config.solver.reference_max_rounds)
    directory = config.outputs.directory
    write_field_csv(os.path.join(directory, "reference.csv"), reference.values)
    resolved = config.resolved()
    write_json(os.path.join(directory, "diagnostics.json"), {
        "rounds": report.rounds,
        "converged": report.converged,
        "config": resolved,
        "fingerprint": config_fingerprint(resolved),
    })
    print(f"reference: {report.rounds} rounds, converged={report.converged}")
    return 0


def cmd_model(config):
    model = config.model
    result = model_run(model.N, model.M, config.theta.to_policy(), max_k=model.max_k,
                       max_rounds=config.solver.max_rounds)
    directory = config.outputs.directory
    write_rows_csv(os.path.join(directory, "model_errors.csv"), result.records, MODEL_COLUMNS)
    write_field_csv(os.path.join(directory, "model_uf.csv"), result.uf)
    write_field_csv(os.path.join(directory, "model_U_final.csv"), result.U_history[-1])
    resolved = config.resolved()
    write_json(os.path.join(directory, "diagnostics.json"), {
        "reference_l1": result.reference_l1,
        "reference_l1_rel": result.reference_l1_rel,
        "reference_linf": result.reference_linf,
        "records": result.records,
        "config": resolved,
        "fingerprint": config_fingerprint(resolved),
    })
    print(f"model: {len(result.records) - 1} iterations, final linf={result.records[-1]['linf']:.3e}")
    return 0


def cmd_speedup(config):
    sp = config.speedup
    rows = speedup_table(sp.N, sp.M, d=sp.d, C=sp.C)
    for row in rows:
        print(f"N={row['N']:4d} M={row['M']:5d} d={row['d']} C={row['C']}  k << {row['threshold']:.2f}")
    write_rows_csv(os.path.join(config.outputs.directory, "speedup.csv"), rows, SPEEDUP_COLUMNS)
    return 0


def _workers(text):
    if text == "max":
        return os.cpu_count() or 1
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer or 'max', got {text!r}")


COMMANDS = {"run": cmd_run, "reference": cmd_reference, "model": cmd_model, "speedup": cmd_speedup}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--workers", type=_workers, help="worker threads for the parallel phases, or 'max'")
    common.add_argument("--seed", type=int, help="seed for randomized slowness kinds")
    common.add_argument("--out", help="output directory")
    common.add_argument("--snapshot-every", type=int, dest="snapshot_every",
                        help="keep coarse and fine snapshots every k iterations")
    common.add_argument("--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(prog="eikonal", description="Two-scale Eikonal solver experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="two-scale iteration with error history")
    sub.add_parser("reference", parents=[common], help="whole-domain fine sweep")
    sub.add_parser("model", parents=[common], help="strip model problem with θ windows")
    speedup = sub.add_parser("speedup", parents=[common], help="flop-model speedup threshold table")
    speedup.add_argument("--N", type=int, nargs="+", help="coarse cells per axis")
    speedup.add_argument("--M", type=int, nargs="+", help="fine cells per coarse cell")
    speedup.add_argument("--d", type=int, help="dimension")
    speedup.add_argument("--C", type=int, help="sweep rounds per solve")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else LOG_LEVEL,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        if args.config:
            config = load_config(args.config)
        elif args.command == "speedup":
            config = ExperimentConfig()
        else:
            raise ConfigurationError(f"'{args.command}' needs --config")
        config = apply_overrides(config, workers=args.workers, seed=args.seed, out=args.out,
                                 snapshot_every=args.snapshot_every)
        if args.command == "speedup":
            sp = config.speedup
            config = ExperimentConfig(
                speedup=SpeedupConfig(N=tuple(args.N or sp.N), M=tuple(args.M or sp.M),
                                      d=args.d or sp.d, C=args.C or sp.C),
                outputs=config.outputs)
        return COMMANDS[args.command](config)
    except ConfigurationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
