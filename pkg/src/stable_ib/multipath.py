"""Several continuation paths from different symmetry-breaking seeds.

Each path is an ordinary continuation run; only the seed of the initial
perturbation differs.  The winner is the path with the lowest final objective.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .continuation import ContinuationConfig, run_continuation
from .info import JointDistribution
from .objectives import ObjectiveSpec
from .trajectory import Trajectory

log = logging.getLogger(__name__)

# exhaustive column matching is used up to this many clusters
MAX_EXHAUSTIVE_Z = 8


class MissingSnapshotsError(ValueError):
    """A per-step series was requested from a trajectory without per-step snapshots."""


class MultiPathError(RuntimeError):
    """Every path aborted; ``result`` carries the partial trajectories."""

    def __init__(self, message: str, result: "MultiPathResult"):
        super().__init__(message)
        self.result = result


@dataclass
class MultiPathResult:
    paths: list[Trajectory]
    seeds: list[int]
    best_index: int | None
    # final objective (nats) of every path; nan for aborted paths
    selection_metric: list[float]
    kl_series: list[np.ndarray] = field(default_factory=list)

    @property
    def best(self) -> Trajectory:
        if self.best_index is None:
            raise MultiPathError("no completed path", self)
        return self.paths[self.best_index]


def step_kl_series(trajectory: Trajectory, p_x) -> np.ndarray:
    """``sum_x p(x) KL(q_t(.|x) || q_{t-1}(.|x))`` between consecutive records.

    Every record must carry an encoder snapshot (``snapshot_every=1``).
    """
    snaps = [r.encoder_snapshot for r in trajectory.records]
    if any(s is None for s in snaps):
        raise MissingSnapshotsError("step KL needs a snapshot at every record; run with snapshot_every=1")
    p_x = np.asarray(p_x, dtype=float)
    out = np.empty(max(len(snaps) - 1, 0))
    for t in range(1, len(snaps)):
        cur, prev = snaps[t], snaps[t - 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(cur > 0, cur * np.log(cur / prev), 0.0)
        out[t - 1] = max(float(p_x @ terms.sum(axis=1)), 0.0)
    return out


def best_column_permutation(enc_a, enc_b) -> tuple[tuple[int, ...], float]:
    """Column order of ``enc_b`` closest to ``enc_a``.

    The permutation minimizing the summed L1 distance is found by exhaustive
    search; the returned distance is the largest per-row total variation
    under that permutation.
    """
    a = np.asarray(enc_a, dtype=float)
    b = np.asarray(enc_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("encoders must have the same shape")
    z = a.shape[1]
    if z > MAX_EXHAUSTIVE_Z:
        raise ValueError(f"exhaustive matching supports at most {MAX_EXHAUSTIVE_Z} clusters")
    cost = np.abs(a[:, :, None] - b[:, None, :]).sum(axis=0)
    perms = np.array(list(itertools.permutations(range(z))), dtype=int)
    totals = cost[np.arange(z), perms].sum(axis=1)
    perm = perms[int(np.argmin(totals))]
    tv = 0.5 * np.abs(a - b[:, perm]).sum(axis=1).max()
    return tuple(int(i) for i in perm), float(tv)


def _select(paths: list[Trajectory], seeds: list[int]) -> int | None:
    done = [i for i, p in enumerate(paths) if p.completed]
    if not done:
        return None
    # lowest objective, then higher I(Z;Y), then lower seed
    return min(done, key=lambda i: (paths[i].final.objective_nats, -paths[i].final.i_zy_bits, seeds[i]))


def _one_path(args):
    joint, z_size, spec, cfg, dataset_id = args
    return run_continuation(joint, z_size, spec, cfg, dataset_id=dataset_id)


def run_multipath(joint: JointDistribution, z_size: int, spec: ObjectiveSpec, cfg: ContinuationConfig,
                  n_paths: int = 3, seeds=None, dataset_id: str = "", max_workers: int = 1) -> MultiPathResult:
    """Run ``n_paths`` continuations differing only in their seed.

    Per-step snapshots are switched on so the step KL series can be formed.
    Results do not depend on ``max_workers``.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    seeds = list(range(cfg.seed, cfg.seed + n_paths)) if seeds is None else [int(s) for s in seeds]
    if len(seeds) != n_paths or len(set(seeds)) != n_paths:
        raise ValueError("need n_paths distinct seeds")
    jobs = [(joint, z_size, spec, cfg.replace(seed=s, snapshot_every=1), dataset_id) for s in seeds]
    if max_workers > 1 and n_paths > 1:
        with ProcessPoolExecutor(max_workers=min(max_workers, n_paths)) as pool:
            paths = list(pool.map(_one_path, jobs))
    else:
        paths = [_one_path(j) for j in jobs]
    metric = [p.final.objective_nats if p.completed else float("nan") for p in paths]
    kl = [step_kl_series(p, joint.p_x) for p in paths]
    result = MultiPathResult(paths, seeds, _select(paths, seeds), metric, kl)
    for s, p in zip(seeds, paths):
        log.info("path seed=%d: %s, final objective %.10g nats", s, p.status, p.final.objective_nats)
    if result.best_index is None:
        raise MultiPathError("all paths aborted", result)
    return result
