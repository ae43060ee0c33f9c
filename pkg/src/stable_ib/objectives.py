"""Standard, convexified and entropy-regularized IB Lagrangians.

Every objective here has the form ``u(I(X;Z)) - beta * I(Z;Y) - epsilon * H(Z|X)``
with ``u`` the identity for the classical Lagrangian.  Gradients and Hessians
are taken in reduced coordinates (see :func:`stable_ib.info.reduce`).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import info
from .info import JointDistribution

HESSIAN_STEP = 1e-5


@dataclass(frozen=True)
class PenaltyFunction:
    """Monotone penalty ``u(t)`` applied to the compression term."""

    kind: str = "identity"
    power: float = 1.0

    def __post_init__(self):
        if self.kind == "identity":
            object.__setattr__(self, "power", 1.0)
        elif self.kind == "square":
            object.__setattr__(self, "power", 2.0)
        elif self.kind == "power":
            if not self.power > 1.0:
                raise ValueError(f"power penalty needs p > 1, got {self.power}")
        else:
            raise ValueError(f"unknown penalty kind {self.kind!r}")

    @classmethod
    def parse(cls, text: str) -> "PenaltyFunction":
        """Parse ``identity``, ``square`` or ``power:<p>``."""
        text = text.strip().lower()
        if text.startswith("power:"):
            return cls("power", float(text.split(":", 1)[1]))
        return cls(text)

    def __str__(self) -> str:
        return f"power:{self.power:g}" if self.kind == "power" else self.kind

    def value(self, t: float) -> float:
        return float(t) if self.kind == "identity" else float(max(t, 0.0) ** self.power)

    def derivative(self, t: float) -> float:
        if self.kind == "identity":
            return 1.0
        return float(self.power * max(t, 0.0) ** (self.power - 1.0))

    def second_derivative(self, t: float) -> float:
        if self.kind == "identity":
            return 0.0
        p = self.power
        if t > 0 or p >= 2.0:
            return float(p * (p - 1.0) * max(t, 0.0) ** (p - 2.0))
        return float("inf")


@dataclass(frozen=True)
class ObjectiveSpec:
    beta: float = 0.0
    epsilon: float = 0.0
    penalty: PenaltyFunction = PenaltyFunction()

    def __post_init__(self):
        if not (self.beta >= 0 and np.isfinite(self.beta)):
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if not (self.epsilon >= 0 and np.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")

    def with_beta(self, beta: float) -> "ObjectiveSpec":
        return dataclasses.replace(self, beta=float(beta))

    def with_epsilon(self, epsilon: float) -> "ObjectiveSpec":
        return dataclasses.replace(self, epsilon=float(epsilon))

    @property
    def is_standard(self) -> bool:
        return self.penalty.kind == "identity" and self.epsilon == 0.0


def objective_value(enc, joint: JointDistribution, spec: ObjectiveSpec) -> float:
    """``u(I(X;Z)) - beta I(Z;Y) - epsilon H(Z|X)`` in nats."""
    val = spec.penalty.value(info.mutual_info_xz(enc, joint.p_x))
    if spec.beta:
        val -= spec.beta * info.mutual_info_zy(enc, joint)
    if spec.epsilon:
        val -= spec.epsilon * info.cond_entropy_z_given_x(enc, joint.p_x)
    return val


def full_gradient(enc, joint: JointDistribution, spec: ObjectiveSpec, check: bool = True) -> np.ndarray:
    q = np.asarray(enc, dtype=float)
    i_xz = info.mutual_info_xz(q, joint.p_x)
    g = spec.penalty.derivative(i_xz) * info.grad_mutual_info_xz(q, joint.p_x, check=check)
    if spec.beta:
        g -= spec.beta * info.grad_mutual_info_zy(q, joint, check=False)
    if spec.epsilon:
        g -= spec.epsilon * info.grad_cond_entropy(q, joint.p_x, check=False)
    return g


def objective_gradient(enc, joint: JointDistribution, spec: ObjectiveSpec, check: bool = True) -> np.ndarray:
    """Reduced gradient of :func:`objective_value`."""
    return info.reduce(full_gradient(enc, joint, spec, check=check))


def hessian_steps(enc) -> np.ndarray:
    """Per-coordinate FD steps, relative to the coordinate and its implied partner."""
    q = np.asarray(enc, dtype=float)
    scale = np.minimum(q[:, :-1], q[:, -1:])
    return HESSIAN_STEP * np.minimum(scale, 1.0).ravel()


def objective_hessian(enc, joint: JointDistribution, spec: ObjectiveSpec) -> np.ndarray:
    """Symmetrized central-difference Jacobian of the reduced gradient."""
    q = np.asarray(enc, dtype=float)
    info._check_floor(q)
    steps = hessian_steps(q)
    n = steps.size
    hess = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = steps[i]
        gp = objective_gradient(info.displace(q, e), joint, spec, check=False)
        gm = objective_gradient(info.displace(q, -e), joint, spec, check=False)
        hess[:, i] = (gp - gm) / (2.0 * steps[i])
    if not np.all(np.isfinite(hess)):
        raise FloatingPointError("non-finite Hessian entry")
    return 0.5 * (hess + hess.T)


def _check_symmetric(hess) -> np.ndarray:
    h = np.asarray(hess, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError("Hessian must be square")
    if not np.all(np.isfinite(h)):
        raise ValueError("Hessian has non-finite entries")
    if np.max(np.abs(h - h.T), initial=0.0) > 1e-8 * max(1.0, np.max(np.abs(h), initial=0.0)):
        raise ValueError("Hessian is not symmetric")
    return h


def min_eigenvalue(hess) -> float:
    h = _check_symmetric(hess)
    if h.size == 0:
        return float("inf")
    return float(np.linalg.eigvalsh(h)[0])


def min_eigenpair(hess) -> tuple[float, np.ndarray]:
    h = _check_symmetric(hess)
    vals, vecs = np.linalg.eigh(h)
    return float(vals[0]), vecs[:, 0]


def beta_effective(spec: ObjectiveSpec, i_xz: float) -> float:
    """Classical multiplier matched by a convexified optimum: ``beta / u'(I(X;Z))``."""
    if i_xz < 0:
        raise ValueError("I(X;Z) must be nonnegative")
    slope = spec.penalty.derivative(i_xz)
    if slope <= 0:
        raise ZeroDivisionError(f"u'({i_xz}) = 0; beta_effective undefined")
    return spec.beta / slope
