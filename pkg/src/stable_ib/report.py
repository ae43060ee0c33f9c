"""Three-solver comparison and trajectory diagnostics.

The standard solver is the per-beta Blahut-Arimoto sweep; the convexified and
entropy-regularized solvers are continuation runs on the same beta grid.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import info
from .blahut_arimoto import BaConfig, ba_sweep
from .continuation import ContinuationConfig, beta_grid, run_continuation
from .info import JointDistribution
from .objectives import ObjectiveSpec, PenaltyFunction, min_eigenvalue, objective_hessian
from .trajectory import Trajectory, TrajectoryRecord

log = logging.getLogger(__name__)

JUMP_THRESHOLD_BITS = 0.05


@dataclass(frozen=True)
class Jump:
    beta_from: float
    beta_to: float
    delta_bits: float


def detect_jumps(betas, values, threshold: float = JUMP_THRESHOLD_BITS) -> list[Jump]:
    """Consecutive steps whose absolute change exceeds ``threshold``."""
    b = np.asarray(betas, dtype=float)
    v = np.asarray(values, dtype=float)
    d = np.diff(v)
    return [Jump(float(b[i]), float(b[i + 1]), float(d[i])) for i in np.nonzero(np.abs(d) > threshold)[0]]


def max_step_change(values) -> float:
    v = np.asarray(values, dtype=float)
    return float(np.max(np.abs(np.diff(v)))) if v.size > 1 else 0.0


def zero_crossing(betas, lams) -> float | None:
    """First sign change from positive to non-positive, linearly interpolated."""
    b = np.asarray(betas, dtype=float)
    lam = np.asarray(lams, dtype=float)
    for i in range(b.size - 1):
        lo, hi = lam[i], lam[i + 1]
        if np.isfinite(lo) and np.isfinite(hi) and lo > 0 >= hi:
            return float(b[i] + (b[i + 1] - b[i]) * lo / (lo - hi))
    return None


def first_below(betas, lams, threshold: float) -> float | None:
    for b, lam in zip(betas, lams):
        if np.isfinite(lam) and lam < threshold:
            return float(b)
    return None


def row_symmetric_complement(x_size: int, z_size: int) -> np.ndarray:
    """Orthonormal basis of reduced directions that differ between rows.

    Directions that shift every row identically only move p(z) and leave the
    trivial branch trivial; they are flat there and are projected out.
    """
    k = z_size - 1
    shared = np.zeros((x_size * k, k))
    for z in range(k):
        shared[z::k, z] = 1.0
    return scipy.linalg.null_space(shared.T)


def trivial_branch_lambda_min(joint: JointDistribution, z_size: int, spec: ObjectiveSpec) -> float:
    """Smallest Hessian eigenvalue at the uniform encoder, off the flat row-shared directions."""
    q = info.trivial_encoder(joint.x_size, z_size)
    basis = row_symmetric_complement(joint.x_size, z_size)
    hess = basis.T @ objective_hessian(q, joint, spec) @ basis
    return min_eigenvalue(0.5 * (hess + hess.T))


def trivial_branch_scan(joint: JointDistribution, z_size: int, betas, spec: ObjectiveSpec = ObjectiveSpec()) -> np.ndarray:
    return np.array([trivial_branch_lambda_min(joint, z_size, spec.with_beta(float(b))) for b in betas])


@dataclass
class SolverSummary:
    name: str
    max_step_bits: float
    jumps: list[Jump]
    final_i_xz_bits: float
    final_i_zy_bits: float
    status: str = "completed"
    reason: str = ""

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["jumps"] = [dataclasses.asdict(j) for j in self.jumps]
        return d


@dataclass
class CompareConfig:
    """Shared settings of a comparison.

    ``delta_beta`` is the spacing of the Blahut-Arimoto grid; continuation
    runs keep their own ``continuation.delta_beta`` so that step changes are
    measured at their native resolution.
    """

    beta_max: float = 3.0
    delta_beta: float = 0.05
    z_size: int | None = None
    convex_spec: ObjectiveSpec = ObjectiveSpec(penalty=PenaltyFunction("square"))
    entropy_spec: ObjectiveSpec = ObjectiveSpec(epsilon=0.1)
    continuation: ContinuationConfig = ContinuationConfig()
    ba: BaConfig = BaConfig()
    jump_threshold: float = JUMP_THRESHOLD_BITS


@dataclass
class CompareReport:
    betas: np.ndarray
    standard: list[TrajectoryRecord]
    convex: Trajectory
    entropy: Trajectory
    trivial_lambda: np.ndarray
    lambda_threshold: float
    summaries: dict[str, SolverSummary] = field(default_factory=dict)
    trivial_zero_crossing: float | None = None
    first_below_threshold: float | None = None

    def solver_records(self) -> dict[str, list[TrajectoryRecord]]:
        return {"standard": self.standard, "convex": self.convex.records, "entropy": self.entropy.records}

    def aligned_rows(self) -> list[dict]:
        """One row per grid beta; continuation values are taken at the matching beta, else nan."""

        def lookup(records):
            return {round(r.beta, 9): r for r in records}

        convex, entropy = lookup(self.convex.records), lookup(self.entropy.records)
        nan = float("nan")
        rows = []
        for b, std, lam in zip(self.betas, self.standard, self.trivial_lambda):
            c, e = convex.get(round(float(b), 9)), entropy.get(round(float(b), 9))
            rows.append({
                "beta": float(b),
                "standard_i_xz_bits": std.i_xz_bits,
                "standard_i_zy_bits": std.i_zy_bits,
                "standard_trivial_lambda_min": float(lam),
                "convex_beta_eff": c.beta_effective if c else nan,
                "convex_i_xz_bits": c.i_xz_bits if c else nan,
                "convex_i_zy_bits": c.i_zy_bits if c else nan,
                "entropy_i_xz_bits": e.i_xz_bits if e else nan,
                "entropy_i_zy_bits": e.i_zy_bits if e else nan,
            })
        return rows

    def to_dict(self) -> dict:
        return {
            "solvers": {k: v.to_dict() for k, v in self.summaries.items()},
            "standard_lambda_threshold": self.lambda_threshold,
            "standard_trivial_lambda_zero_crossing": self.trivial_zero_crossing,
            "standard_trivial_lambda_first_below_threshold": self.first_below_threshold,
        }


def summarize(name: str, records: list[TrajectoryRecord], threshold: float, status: str = "completed",
              reason: str = "") -> SolverSummary:
    betas = [r.beta for r in records]
    izy = [r.i_zy_bits for r in records]
    return SolverSummary(name, max_step_change(izy), detect_jumps(betas, izy, threshold),
                         records[-1].i_xz_bits, records[-1].i_zy_bits, status, reason)


def compare(joint: JointDistribution, cfg: CompareConfig = CompareConfig(), dataset_id: str = "") -> CompareReport:
    """Run the three solvers on one beta grid and summarize their differences."""
    z_size = cfg.z_size or joint.x_size
    ccfg = cfg.continuation.replace(beta_max=cfg.beta_max)
    convex = run_continuation(joint, z_size, cfg.convex_spec, ccfg, dataset_id)
    entropy = run_continuation(joint, z_size, cfg.entropy_spec, ccfg, dataset_id)
    betas = beta_grid(ccfg.replace(delta_beta=cfg.delta_beta))
    standard = ba_sweep(joint, betas, z_size, cfg.ba)
    trivial = trivial_branch_scan(joint, z_size, betas)
    report = CompareReport(betas, standard, convex, entropy, trivial, ccfg.lambda_threshold)
    report.summaries = {
        "standard": summarize("standard", standard, cfg.jump_threshold),
        "convex": summarize("convex", convex.records, cfg.jump_threshold, convex.status, convex.reason),
        "entropy": summarize("entropy", entropy.records, cfg.jump_threshold, entropy.status, entropy.reason),
    }
    report.trivial_zero_crossing = zero_crossing(betas, trivial)
    report.first_below_threshold = first_below(betas, trivial, ccfg.lambda_threshold)
    return report
