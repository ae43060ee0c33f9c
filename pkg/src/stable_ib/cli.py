"""Command-line front end.

Every solver command writes ``trajectory.csv`` (or one CSV per path or solver),
optional encoder snapshots, and ``manifest.json`` into ``--out``.  The manifest
is written even when a run aborts.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, info
from .blahut_arimoto import BaConfig, ba_sweep
from .continuation import ContinuationConfig, run_continuation
from .datasets import (
    MACRO_GROUPS,
    PAIR_GROUPS,
    DatasetError,
    HierarchicalParams,
    atomic_write_text,
    coarsen,
    load_joint,
    make_bsc,
    make_hierarchical_8x8,
    save_encoder,
    save_joint,
)
from .multipath import MultiPathError, run_multipath
from .objectives import ObjectiveSpec, PenaltyFunction
from .report import CompareConfig, compare, detect_jumps, max_step_change
from .trajectory import CSV_COLUMNS, TrajectoryRecord

log = logging.getLogger("stable_ib")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONFIG = 2
EXIT_DATASET = 3
EXIT_ABORT = 4


class ConfigError(ValueError):
    pass


class SolverAbort(RuntimeError):
    pass


# -- formatting --------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.12g}"


def records_csv(records: list[TrajectoryRecord], prefix: dict[str, object] | None = None) -> str:
    prefix = prefix or {}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([*prefix.keys(), *CSV_COLUMNS])
    for r in records:
        w.writerow([*(str(v) for v in prefix.values()), *(_fmt(v) for v in r.csv_row())])
    return buf.getvalue()


def stacked_csv(blocks: list[tuple[dict[str, object], list[TrajectoryRecord]]]) -> str:
    """Several record lists under one header, each row tagged by its block's prefix."""
    parts = [records_csv(recs, prefix) for prefix, recs in blocks]
    return parts[0] + "".join(p.split("\n", 1)[1] for p in parts[1:])


def dict_rows_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if rows:
        w.writerow(rows[0].keys())
        for row in rows:
            w.writerow([_fmt(v) for v in row.values()])
    return buf.getvalue()


def _jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return _jsonable(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, float)):
        return float(obj) if np.isfinite(obj) else str(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, PenaltyFunction):
        return str(obj)
    return obj


class Run:
    """Collects artifacts of one command and writes the manifest on exit."""

    def __init__(self, args: argparse.Namespace, argv: list[str]):
        self.out = Path(args.out)
        self.manifest: dict[str, object] = {
            "command": args.command,
            "argv": list(argv),
            "tool_version": __version__,
            "seed": getattr(args, "seed", None),
            "artifacts": [],
            "status": "running",
        }
        self.start = time.perf_counter()

    def write(self, name: str, text: str) -> Path:
        path = atomic_write_text(self.out / name, text)
        self.manifest["artifacts"].append(name)
        return path

    def write_encoder(self, name: str, enc, comment: str) -> None:
        save_encoder(enc, self.out / name, comment)
        self.manifest["artifacts"].append(name)

    def finish(self, status: str, reason: str = "") -> None:
        self.manifest["status"] = status
        if reason:
            self.manifest["reason"] = reason
        self.manifest["duration_seconds"] = time.perf_counter() - self.start
        self.manifest["artifacts"].append("manifest.json")
        atomic_write_text(self.out / "manifest.json", json.dumps(_jsonable(self.manifest), indent=2) + "\n")


# -- argument handling ------------------------------------------------------------


def _load_dataset(path: str) -> tuple[info.JointDistribution, dict]:
    joint = load_joint(path)
    digest = hashlib.sha256(Path(path).read_bytes()).hexdigest()
    desc = {"path": str(path), "sha256": digest, "x_size": joint.x_size, "y_size": joint.y_size,
            "i_xy_bits": info.bits(info.mutual_info_xy(joint))}
    return joint, desc


def _spec(args) -> ObjectiveSpec:
    try:
        return ObjectiveSpec(penalty=PenaltyFunction.parse(args.penalty), epsilon=args.epsilon)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _continuation_config(args) -> ContinuationConfig:
    try:
        return ContinuationConfig(beta_max=args.beta_max, delta_beta=args.dbeta, eta=args.eta,
                                  lambda_threshold=args.delta, epsilon_multiplier=args.alpha,
                                  seed=args.seed, snapshot_every=args.snapshot_every)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def parse_grid(text: str) -> np.ndarray:
    """``start:stop:step`` (inclusive stop) or a comma-separated list."""
    try:
        if ":" in text:
            start, stop, step = (float(t) for t in text.split(":"))
            if not step > 0:
                raise ConfigError("grid step must be > 0")
            n = int(np.floor((stop - start) / step + 1e-9))
            return np.round(start + step * np.arange(n + 1), 12)
        return np.array([float(t) for t in text.split(",")])
    except ValueError as exc:
        raise ConfigError(f"bad beta grid {text!r}") from exc


def _z_size(args, joint) -> int:
    z = args.z_size or joint.x_size
    if z < 2:
        raise ConfigError("--z-size must be >= 2")
    return z


def _add_solver_flags(p: argparse.ArgumentParser, beta_max: float = 3.0, dbeta: float = 0.01,
                      penalty: str = "square", epsilon: float = 0.0) -> None:
    p.add_argument("--penalty", default=penalty, help="identity, square or power:<p>")
    p.add_argument("--epsilon", type=float, default=epsilon, help="entropy weight")
    p.add_argument("--beta-max", type=float, default=beta_max)
    p.add_argument("--dbeta", type=float, default=dbeta)
    p.add_argument("--eta", type=float, default=0.5, help="corrector step size")
    p.add_argument("--delta", type=float, default=1e-3, help="eigenvalue alarm threshold")
    p.add_argument("--alpha", type=float, default=2.0, help="entropy multiplier on alarm")
    p.add_argument("--snapshot-every", type=int, default=10)


def _add_common(p: argparse.ArgumentParser, dataset: bool = True) -> None:
    if dataset:
        p.add_argument("--dataset", required=True, help="joint distribution file")
        p.add_argument("--z-size", type=int, default=None, help="number of clusters (default |X|)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stable-ib", description="Discrete information bottleneck solvers")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dataset", help="write a synthetic joint distribution")
    p.add_argument("kind", choices=["bsc", "hier8"])
    p.add_argument("--p-cross", type=float, default=0.1)
    p.add_argument("--weights", type=float, nargs=4, metavar=("SELF", "PAIR", "MACRO", "OTHER"), default=None)
    _add_common(p, dataset=False)

    p = sub.add_parser("sweep", help="standard IB by Blahut-Arimoto at every grid beta")
    p.add_argument("--beta-grid", default="0:3:0.05", help="start:stop:step or comma list")
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--max-iters", type=int, default=5000)
    p.add_argument("--tol", type=float, default=1e-10)
    _add_common(p)

    p = sub.add_parser("continue", help="predictor-corrector continuation")
    _add_solver_flags(p)
    _add_common(p)

    p = sub.add_parser("multipath", help="continuation from several seeds")
    _add_solver_flags(p, beta_max=8.0, dbeta=0.05, penalty="identity", epsilon=0.2)
    p.add_argument("--paths", type=int, default=3)
    p.add_argument("--seeds", type=int, nargs="+", default=None)
    p.add_argument("--workers", type=int, default=1)
    _add_common(p)

    p = sub.add_parser("compare", help="standard vs convexified vs entropy-regularized")
    p.add_argument("--beta-max", type=float, default=3.0)
    p.add_argument("--grid-step", type=float, default=0.05, help="Blahut-Arimoto grid spacing")
    p.add_argument("--dbeta", type=float, default=0.01, help="continuation step")
    p.add_argument("--penalty", default="square", help="penalty of the convexified solver")
    p.add_argument("--epsilon", type=float, default=0.1, help="entropy weight of the regularized solver")
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--jump-threshold", type=float, default=0.05)
    _add_common(p)
    return parser


# -- commands -----------------------------------------------------------------------


def cmd_dataset(args, run: Run) -> None:
    if args.kind == "bsc":
        joint = make_bsc(args.p_cross)
        params = {"p_cross": args.p_cross}
        summary: dict[str, object] = {}
    else:
        hp = HierarchicalParams(*args.weights) if args.weights else HierarchicalParams()
        joint = make_hierarchical_8x8(hp)
        params = dataclasses.asdict(hp)
        summary = {
            "i_pairs_y_bits": info.bits(info.mutual_info_xy(coarsen(joint, PAIR_GROUPS))),
            "i_macro_y_bits": info.bits(info.mutual_info_xy(coarsen(joint, MACRO_GROUPS))),
        }
    summary = {"kind": args.kind, "params": params, "i_xy_bits": info.bits(info.mutual_info_xy(joint)),
               "p_x": joint.p_x, "p_y": joint.p_y, **summary}
    name = f"{args.kind}.txt"
    save_joint(joint, run.out / name, comment=f"{args.kind} {json.dumps(params)}")
    run.manifest["artifacts"].append(name)
    run.write("summary.json", json.dumps(_jsonable(summary), indent=2) + "\n")
    run.manifest["dataset"] = summary
    print(json.dumps(_jsonable(summary), indent=2))


def cmd_sweep(args, run: Run) -> None:
    joint, desc = _load_dataset(args.dataset)
    run.manifest["dataset"] = desc
    z = _z_size(args, joint)
    grid = parse_grid(args.beta_grid)
    try:
        cfg = BaConfig(max_iters=args.max_iters, tol=args.tol, n_restarts=args.restarts, seed=args.seed)
        records = ba_sweep(joint, grid, z, cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    run.manifest["config"] = {**dataclasses.asdict(cfg), "beta_grid": grid, "z_size": z}
    run.write("trajectory.csv", records_csv(records))
    izy = [r.i_zy_bits for r in records]
    run.manifest["summary"] = {"max_step_bits": max_step_change(izy),
                               "jumps": [dataclasses.asdict(j) for j in detect_jumps(grid, izy)]}


def _write_snapshots(run: Run, records, subdir: str) -> None:
    for r in records:
        if r.encoder_snapshot is not None:
            run.write_encoder(f"{subdir}/encoder_beta_{r.beta:.6f}.txt", r.encoder_snapshot, f"beta {r.beta!r}")


def cmd_continue(args, run: Run) -> None:
    joint, desc = _load_dataset(args.dataset)
    run.manifest["dataset"] = desc
    spec, cfg = _spec(args), _continuation_config(args)
    z = _z_size(args, joint)
    run.manifest["spec"] = spec
    run.manifest["config"] = {**dataclasses.asdict(cfg), "z_size": z}
    traj = run_continuation(joint, z, spec, cfg, dataset_id=desc["path"])
    run.write("trajectory.csv", records_csv(traj.records))
    _write_snapshots(run, traj.records, "snapshots")
    run.manifest["summary"] = {"max_step_bits": max_step_change(traj.column("i_zy_bits")),
                               "final": _final(traj.final)}
    if not traj.completed:
        raise SolverAbort(traj.reason)


def _final(r: TrajectoryRecord) -> dict:
    return {"beta": r.beta, "i_xz_bits": r.i_xz_bits, "i_zy_bits": r.i_zy_bits, "objective_nats": r.objective_nats}


def cmd_multipath(args, run: Run) -> None:
    joint, desc = _load_dataset(args.dataset)
    run.manifest["dataset"] = desc
    spec, cfg = _spec(args), _continuation_config(args)
    z = _z_size(args, joint)
    run.manifest["spec"] = spec
    run.manifest["config"] = {**dataclasses.asdict(cfg), "z_size": z, "paths": args.paths, "seeds": args.seeds}
    try:
        result = run_multipath(joint, z, spec, cfg, n_paths=args.paths, seeds=args.seeds,
                               dataset_id=desc["path"], max_workers=args.workers)
        aborted = None
    except MultiPathError as exc:
        result, aborted = exc.result, str(exc)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    run.write("trajectory.csv", stacked_csv([({"seed": s}, p.records) for s, p in zip(result.seeds, result.paths)]))
    kl_rows = [{"seed": s, "beta": b, "step_kl": v}
               for s, p, kl in zip(result.seeds, result.paths, result.kl_series)
               for b, v in zip(p.betas[1:], kl)]
    run.write("step_kl.csv", dict_rows_csv(kl_rows))
    if result.best_index is not None:
        best = result.paths[result.best_index]
        run.write_encoder("best_encoder.txt", best.final.encoder_snapshot,
                          f"seed {result.seeds[result.best_index]} beta {best.final.beta!r}")
    run.manifest["summary"] = {
        "seeds": result.seeds,
        "best_seed": None if result.best_index is None else result.seeds[result.best_index],
        "final_objective_nats": result.selection_metric,
        "paths": [{"seed": s, "status": p.status, "reason": p.reason, "final": _final(p.final)}
                  for s, p in zip(result.seeds, result.paths)],
    }
    if aborted:
        raise SolverAbort(aborted)


def cmd_compare(args, run: Run) -> None:
    joint, desc = _load_dataset(args.dataset)
    run.manifest["dataset"] = desc
    z = _z_size(args, joint)
    try:
        cfg = CompareConfig(
            beta_max=args.beta_max,
            delta_beta=args.grid_step,
            z_size=z,
            convex_spec=ObjectiveSpec(penalty=PenaltyFunction.parse(args.penalty)),
            entropy_spec=ObjectiveSpec(epsilon=args.epsilon),
            continuation=ContinuationConfig(delta_beta=args.dbeta, seed=args.seed),
            ba=BaConfig(n_restarts=args.restarts, seed=args.seed),
            jump_threshold=args.jump_threshold,
        )
        if not cfg.delta_beta > 0:
            raise ValueError("grid step must be > 0")
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    run.manifest["config"] = cfg
    report = compare(joint, cfg, dataset_id=desc["path"])
    run.write("combined.csv", stacked_csv([({"solver": n}, r) for n, r in report.solver_records().items()]))
    run.write("aligned.csv", dict_rows_csv(report.aligned_rows()))
    run.write("report.json", json.dumps(_jsonable(report.to_dict()), indent=2) + "\n")
    run.manifest["summary"] = report.to_dict()
    print(json.dumps(_jsonable(report.to_dict()), indent=2))
    failed = [n for n, s in report.summaries.items() if s.status != "completed"]
    if failed:
        raise SolverAbort(f"aborted solvers: {', '.join(failed)}")


COMMANDS = {
    "dataset": cmd_dataset,
    "sweep": cmd_sweep,
    "continue": cmd_continue,
    "multipath": cmd_multipath,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("IB_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    run = Run(args, argv)
    try:
        COMMANDS[args.command](args, run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        run.finish("config-error", str(exc))
        return EXIT_CONFIG
    except DatasetError as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        run.finish("dataset-error", str(exc))
        return EXIT_DATASET
    except SolverAbort as exc:
        print(f"solver aborted: {exc}", file=sys.stderr)
        run.finish("aborted", str(exc))
        return EXIT_ABORT
    run.finish("completed")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
