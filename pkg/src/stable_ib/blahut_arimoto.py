"""Per-beta Blahut-Arimoto solver for the classical IB Lagrangian.

This is the "standard IB" comparator: each beta is solved from fresh random
restarts with no warm start, so phase transitions show up as they would for
an independent solve.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import info
from .info import JointDistribution
from .objectives import ObjectiveSpec, objective_hessian, objective_value, min_eigenvalue
from .trajectory import TrajectoryRecord, make_record

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BaConfig:
    max_iters: int = 5000
    tol: float = 1e-10
    n_restarts: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.n_restarts < 1:
            raise ValueError("n_restarts must be >= 1")


@dataclass
class BaResult:
    encoder: np.ndarray
    record: TrajectoryRecord
    converged: bool
    iterations: int
    objective_history: list[float]


def _kl_rows(p_y_given_x: np.ndarray, p_y_given_z: np.ndarray) -> np.ndarray:
    """``KL(p(y|x) || p(y|z))`` for every (x, z) pair."""
    plogp = np.sum(p_y_given_x * np.log(np.maximum(p_y_given_x, info.LOG_FLOOR)), axis=1)
    cross = p_y_given_x @ np.log(np.maximum(p_y_given_z, info.LOG_FLOOR)).T
    return plogp[:, None] - cross


def ba_update(enc: np.ndarray, joint: JointDistribution, beta: float) -> np.ndarray:
    """One self-consistent sweep ``p(z|x) ~ p(z) exp(-beta KL(p(y|x) || p(y|z)))``."""
    p_z = joint.p_x @ enc
    p_zy = enc.T @ joint.p_xy
    p_y_given_z = np.divide(p_zy, p_z[:, None], out=np.zeros_like(p_zy), where=p_z[:, None] > 0)
    kl = _kl_rows(joint.p_y_given_x, p_y_given_z)
    with np.errstate(divide="ignore"):
        logits = np.log(p_z)[None, :] - beta * kl
    logits -= logits.max(axis=1, keepdims=True)
    new = np.exp(logits)
    return new / new.sum(axis=1, keepdims=True)


def _tv(a: np.ndarray, b: np.ndarray) -> float:
    return float(0.5 * np.max(np.sum(np.abs(a - b), axis=1)))


def _restart_rng(seed: int, restart: int) -> np.random.Generator:
    return np.random.default_rng([seed, restart])


def _run_once(joint, beta, enc, cfg: BaConfig):
    spec = ObjectiveSpec(beta=beta)
    history = [objective_value(enc, joint, spec)]
    for it in range(1, cfg.max_iters + 1):
        new = ba_update(enc, joint, beta)
        change = _tv(new, enc)
        enc = new
        history.append(objective_value(enc, joint, spec))
        if change < cfg.tol:
            return enc, True, it, history
    return enc, False, cfg.max_iters, history


def ba_solve(joint: JointDistribution, beta: float, z_size: int, cfg: BaConfig = BaConfig(),
             with_lambda: bool = True) -> BaResult:
    """Best-of-restarts BA fixed point at a single beta."""
    if not beta >= 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    best = None
    for r in range(cfg.n_restarts):
        rng = _restart_rng(cfg.seed, r)
        init = rng.dirichlet(np.ones(z_size), size=joint.x_size)
        enc, ok, iters, hist = _run_once(joint, beta, init, cfg)
        obj = hist[-1]
        if best is None or obj < best[0] - 1e-14:
            best = (obj, enc, ok, iters, hist)
    obj, enc, ok, iters, hist = best
    if not ok:
        log.warning("BA did not converge at beta=%g within %d iterations", beta, cfg.max_iters)
    spec = ObjectiveSpec(beta=beta)
    lam = float("nan")
    if with_lambda and np.min(enc) >= info.GRAD_FLOOR and z_size > 1:
        lam = min_eigenvalue(objective_hessian(enc, joint, spec))
    rec = make_record(enc, joint, spec, lambda_min=lam, corrector_steps=iters, converged=ok, snapshot=True)
    return BaResult(enc, rec, ok, iters, hist)


def ba_sweep(joint: JointDistribution, beta_grid, z_size: int, cfg: BaConfig = BaConfig(),
             with_lambda: bool = True) -> list[TrajectoryRecord]:
    grid = np.asarray(beta_grid, dtype=float)
    if grid.size == 0 or np.any(grid < 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("beta grid must be nonempty, ascending and nonnegative")
    return [ba_solve(joint, float(b), z_size, cfg, with_lambda).record for b in grid]
