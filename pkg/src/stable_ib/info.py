"""Exact information quantities for discrete distributions and their gradients.

All quantities are computed in nats. Encoders are plain ``(|X|, |Z|)`` arrays
holding ``p(z|x)``; the last z-column is the dependent coordinate when an
encoder is flattened to reduced coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LOG_FLOOR = 1e-12
GRAD_FLOOR = 1e-9
LN2 = float(np.log(2.0))


class DimensionError(ValueError):
    pass


class FloorViolation(ValueError):
    """Encoder entry below the gradient floor; caller must re-project."""


def bits(nats: float) -> float:
    return nats / LN2


def _xlogy(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # 0 * log(anything) == 0, logs clamped at LOG_FLOOR
    out = x * np.log(np.maximum(y, LOG_FLOOR))
    return np.where(x == 0.0, 0.0, out)


@dataclass(frozen=True)
class JointDistribution:
    """A joint pmf ``p(x, y)`` with cached marginals."""

    p_xy: np.ndarray
    p_x: np.ndarray = field(init=False, repr=False)
    p_y: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        p = np.array(self.p_xy, dtype=float)
        if p.ndim != 2:
            raise DimensionError("p_xy must be a matrix")
        if p.shape[0] < 2 or p.shape[1] < 2:
            raise DimensionError("need |X| >= 2 and |Y| >= 2")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ValueError("p_xy entries must be finite and nonnegative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"p_xy sums to {p.sum()!r}, not 1")
        p.setflags(write=False)
        p_x = p.sum(axis=1)
        p_y = p.sum(axis=0)
        p_x.setflags(write=False)
        p_y.setflags(write=False)
        object.__setattr__(self, "p_xy", p)
        object.__setattr__(self, "p_x", p_x)
        object.__setattr__(self, "p_y", p_y)

    @classmethod
    def from_conditional(cls, p_y_given_x, prior) -> "JointDistribution":
        cond = np.asarray(p_y_given_x, dtype=float)
        prior = np.asarray(prior, dtype=float)
        return cls(prior[:, None] * cond)

    @property
    def x_size(self) -> int:
        return self.p_xy.shape[0]

    @property
    def y_size(self) -> int:
        return self.p_xy.shape[1]

    @property
    def p_y_given_x(self) -> np.ndarray:
        px = self.p_x[:, None]
        return np.divide(self.p_xy, px, out=np.zeros_like(self.p_xy), where=px > 0)


def validate_encoder(enc, x_size: int | None = None, tol: float = 1e-10) -> np.ndarray:
    q = np.asarray(enc, dtype=float)
    if q.ndim != 2 or q.shape[1] < 1:
        raise DimensionError("encoder must be an (|X|, |Z|) matrix with |Z| >= 1")
    if x_size is not None and q.shape[0] != x_size:
        raise DimensionError(f"encoder has {q.shape[0]} rows, expected {x_size}")
    if not np.all(np.isfinite(q)) or np.any(q < 0):
        raise ValueError("encoder entries must be finite and nonnegative")
    if np.max(np.abs(q.sum(axis=1) - 1.0)) > tol:
        raise ValueError("encoder rows must sum to 1")
    return q


def _check_px(q: np.ndarray, p_x) -> np.ndarray:
    p_x = np.asarray(p_x, dtype=float)
    if p_x.ndim != 1 or p_x.shape[0] != q.shape[0]:
        raise DimensionError(f"p_x has shape {p_x.shape}, encoder has {q.shape[0]} rows")
    return p_x


def _check_joint(q: np.ndarray, joint: JointDistribution) -> None:
    if q.ndim != 2 or q.shape[0] != joint.x_size:
        raise DimensionError(f"encoder has shape {q.shape}, joint has |X|={joint.x_size}")


def _check_floor(q: np.ndarray) -> None:
    if np.min(q) < GRAD_FLOOR:
        raise FloorViolation(f"encoder entry {np.min(q):.3e} below gradient floor {GRAD_FLOOR}")


# -- values ---------------------------------------------------------------
#
# The value functions accept any nonnegative matrix, not only row-stochastic
# ones, so that full-coordinate finite differences are well defined.  p(x)
# and p(y) stay fixed at the data marginals in that extension.


def mutual_info_xz(enc, p_x) -> float:
    q = np.asarray(enc, dtype=float)
    p_x = _check_px(q, p_x)
    p_xz = p_x[:, None] * q
    p_z = p_xz.sum(axis=0)
    return float(np.sum(_xlogy(p_xz, q)) - np.sum(_xlogy(p_xz, np.broadcast_to(p_z, q.shape))))


def mutual_info_zy(enc, joint: JointDistribution) -> float:
    q = np.asarray(enc, dtype=float)
    _check_joint(q, joint)
    p_zy = q.T @ joint.p_xy
    p_z = joint.p_x @ q
    denom = p_z[:, None] * joint.p_y[None, :]
    return float(np.sum(_xlogy(p_zy, p_zy)) - np.sum(_xlogy(p_zy, denom)))


def mutual_info_xy(joint: JointDistribution) -> float:
    p = joint.p_xy
    denom = joint.p_x[:, None] * joint.p_y[None, :]
    return float(np.sum(_xlogy(p, p)) - np.sum(_xlogy(p, denom)))


def cond_entropy_z_given_x(enc, p_x) -> float:
    q = np.asarray(enc, dtype=float)
    p_x = _check_px(q, p_x)
    return float(-np.sum(p_x[:, None] * _xlogy(q, q)))


def entropy(p) -> float:
    p = np.asarray(p, dtype=float)
    return float(-np.sum(_xlogy(p, p)))


# -- full-coordinate gradients ---------------------------------------------


def grad_mutual_info_xz(enc, p_x, check: bool = True) -> np.ndarray:
    q = np.asarray(enc, dtype=float)
    p_x = _check_px(q, p_x)
    if check:
        _check_floor(q)
    p_z = p_x @ q
    logq = np.log(np.maximum(q, LOG_FLOOR))
    return p_x[:, None] * (logq - np.log(np.maximum(p_z, LOG_FLOOR))[None, :])


def grad_mutual_info_zy(enc, joint: JointDistribution, check: bool = True) -> np.ndarray:
    q = np.asarray(enc, dtype=float)
    _check_joint(q, joint)
    if check:
        _check_floor(q)
    p_zy = q.T @ joint.p_xy
    p_z = joint.p_x @ q
    # log p(y|z) - log p(y), shape (z, y)
    log_ratio = (
        np.log(np.maximum(p_zy, LOG_FLOOR))
        - np.log(np.maximum(p_z, LOG_FLOOR))[:, None]
        - np.log(np.maximum(joint.p_y, LOG_FLOOR))[None, :]
    )
    return joint.p_xy @ log_ratio.T


def grad_cond_entropy(enc, p_x, check: bool = True) -> np.ndarray:
    q = np.asarray(enc, dtype=float)
    p_x = _check_px(q, p_x)
    if check:
        _check_floor(q)
    return -p_x[:, None] * (np.log(np.maximum(q, LOG_FLOOR)) + 1.0)


# -- reduced coordinates ------------------------------------------------------


def reduce(full_gradient) -> np.ndarray:
    """Chain rule through the implied last column: ``g[x, z] - g[x, -1]``.

    Returns a flat vector of length ``|X| * (|Z| - 1)`` in row-major order.
    """
    g = np.asarray(full_gradient, dtype=float)
    return (g[:, :-1] - g[:, -1:]).ravel()


def to_reduced(enc) -> np.ndarray:
    q = np.asarray(enc, dtype=float)
    return q[:, :-1].ravel().copy()


def expand(values, z_size: int, tol: float = 1e-10) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if z_size < 1 or v.size % max(z_size - 1, 1) != 0:
        raise DimensionError(f"cannot expand {v.size} values with |Z|={z_size}")
    if z_size == 1:
        raise DimensionError("expand needs |Z| >= 2")
    free = v.reshape(-1, z_size - 1)
    if np.any(free < -tol) or np.any(free > 1 + tol):
        raise ValueError("reduced coordinates must lie in [0, 1]")
    last = 1.0 - free.sum(axis=1)
    if np.any(last < -tol):
        raise ValueError("reduced row sum exceeds 1")
    return np.hstack([free, last[:, None]])


def displace(enc, delta) -> np.ndarray:
    """Move an encoder by a reduced-coordinate displacement.

    Equivalent to ``expand_unchecked(to_reduced(enc) + delta)`` but updates
    the implied column as ``q[:, -1] - sum(delta)`` so that small entries
    there keep their relative precision.
    """
    q = np.asarray(enc, dtype=float)
    d = np.asarray(delta, dtype=float).reshape(q.shape[0], q.shape[1] - 1)
    return np.hstack([q[:, :-1] + d, q[:, -1:] - d.sum(axis=1, keepdims=True)])


def expand_unchecked(values, z_size: int) -> np.ndarray:
    free = np.asarray(values, dtype=float).reshape(-1, z_size - 1)
    return np.hstack([free, 1.0 - free.sum(axis=1, keepdims=True)])


# -- encoder summaries ----------------------------------------------------------


def cluster_marginal(enc, p_x) -> np.ndarray:
    return np.asarray(p_x, dtype=float) @ np.asarray(enc, dtype=float)


def effective_clusters(enc, p_x) -> float:
    """Perplexity of ``p(z)``."""
    z_size = np.asarray(enc).shape[1]
    return float(np.clip(np.exp(entropy(cluster_marginal(enc, p_x))), 1.0, z_size))


def used_clusters(enc) -> int:
    return int(np.sum(np.max(np.asarray(enc), axis=0) > 0.5))


def trivial_encoder(x_size: int, z_size: int) -> np.ndarray:
    return np.full((x_size, z_size), 1.0 / z_size)


def identity_encoder(x_size: int) -> np.ndarray:
    return np.eye(x_size)
