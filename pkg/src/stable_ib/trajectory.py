"""Per-beta records shared by every solver, and the trajectory container."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import info
from .info import JointDistribution
from .objectives import ObjectiveSpec, beta_effective, objective_value

CSV_COLUMNS = (
    "beta",
    "beta_eff",
    "i_xz_bits",
    "i_zy_bits",
    "h_zx_bits",
    "objective_nats",
    "lambda_min",
    "epsilon",
    "eff_clusters",
    "used_clusters",
    "corrector_steps",
    "converged",
)


@dataclass
class TrajectoryRecord:
    beta: float
    beta_effective: float
    i_xz_bits: float
    i_zy_bits: float
    h_z_given_x_bits: float
    objective_nats: float
    lambda_min: float
    epsilon_current: float
    effective_clusters: float
    used_clusters: int
    corrector_steps_taken: int = 0
    converged: bool = True
    encoder_snapshot: np.ndarray | None = field(default=None, repr=False)
    # lambda_min of the Hessian without the entropy term, for comparison
    lambda_min_unregularized: float = float("nan")
    guard_action: str = "none"

    def csv_row(self) -> tuple:
        return (
            self.beta,
            self.beta_effective,
            self.i_xz_bits,
            self.i_zy_bits,
            self.h_z_given_x_bits,
            self.objective_nats,
            self.lambda_min,
            self.epsilon_current,
            self.effective_clusters,
            self.used_clusters,
            self.corrector_steps_taken,
            int(self.converged),
        )


def make_record(
    enc,
    joint: JointDistribution,
    spec: ObjectiveSpec,
    lambda_min: float = float("nan"),
    corrector_steps: int = 0,
    converged: bool = True,
    snapshot: bool = False,
    **extra,
) -> TrajectoryRecord:
    q = np.asarray(enc, dtype=float)
    i_xz = info.mutual_info_xz(q, joint.p_x)
    try:
        b_eff = beta_effective(spec, max(i_xz, 0.0))
    except ZeroDivisionError:
        b_eff = float("nan")
    return TrajectoryRecord(
        beta=spec.beta,
        beta_effective=b_eff,
        i_xz_bits=info.bits(max(i_xz, 0.0)),
        i_zy_bits=info.bits(max(info.mutual_info_zy(q, joint), 0.0)),
        h_z_given_x_bits=info.bits(info.cond_entropy_z_given_x(q, joint.p_x)),
        objective_nats=objective_value(q, joint, spec),
        lambda_min=float(lambda_min),
        epsilon_current=spec.epsilon,
        effective_clusters=info.effective_clusters(q, joint.p_x),
        used_clusters=info.used_clusters(q),
        corrector_steps_taken=int(corrector_steps),
        converged=bool(converged),
        encoder_snapshot=q.copy() if snapshot else None,
        **extra,
    )


@dataclass
class Trajectory:
    records: list[TrajectoryRecord]
    dataset_id: str = ""
    spec_summary: dict = field(default_factory=dict)
    status: str = "completed"
    reason: str = ""

    @property
    def completed(self) -> bool:
        return self.status == "completed"

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    @property
    def betas(self) -> np.ndarray:
        return self.column("beta")

    @property
    def final(self) -> TrajectoryRecord:
        return self.records[-1]

    def snapshots(self) -> list[tuple[float, np.ndarray]]:
        return [(r.beta, r.encoder_snapshot) for r in self.records if r.encoder_snapshot is not None]
