"""Predictor-corrector continuation of the IB optimum along beta.

Starting from the trivial encoder at ``beta = 0``, each step extrapolates the
optimum along the implicit ODE ``dq/dbeta = H^{-1} grad I(Z;Y)``, re-converges
with projected gradient descent at the new beta, then checks the smallest
Hessian eigenvalue and raises the entropy weight when it gets close to zero.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import info
from .info import JointDistribution
from .objectives import (
    HESSIAN_STEP,
    full_gradient,
    ObjectiveSpec,
    min_eigenpair,
    objective_gradient,
    objective_hessian,
    objective_value,
)
from .trajectory import Trajectory, TrajectoryRecord, make_record

log = logging.getLogger(__name__)

MAX_HALVINGS = 20
FAILURE_STREAK_LIMIT = 5
SINGULAR_RTOL = 1e-10
SADDLE_TOL = 1e-9
BB_MAX_RATIO = 1e3
NOISE_RTOL = 1e-13
NULL_CURVATURE = 1e-7
# entries this close to the floor can be held there by the constraint
ACTIVE_LEVEL = 10 * info.GRAD_FLOOR


@dataclass(frozen=True)
class ContinuationConfig:
    beta_max: float = 3.0
    delta_beta: float = 0.01
    eta: float = 0.5
    corrector_tol: float = 1e-9
    corrector_max_steps: int = 500
    lambda_threshold: float = 1e-3
    epsilon_multiplier: float = 2.0
    # None: start from the epsilon of the objective template
    epsilon_base: float | None = None
    epsilon_decay: float = 0.9
    guard_cooldown: int = 10
    init_perturbation: float = 1e-3
    seed: int = 0
    snapshot_every: int = 10
    use_predictor: bool = True
    # scale corrector steps by a saddle-free inverse Hessian
    precondition: bool = True
    # trust radius on a preconditioned corrector step (reduced coordinates)
    corrector_max_move: float = 0.05
    # trust radius on the Euler displacement (reduced coordinates, Euclidean)
    predictor_max_step: float = 0.05
    # leave saddles along the negative-curvature direction after the corrector
    escape_saddles: bool = True
    max_escapes: int = 5

    def __post_init__(self):
        if not self.delta_beta > 0:
            raise ValueError("delta_beta must be > 0")
        if not self.beta_max >= 0:
            raise ValueError("beta_max must be >= 0")
        if not self.eta > 0:
            raise ValueError("eta must be > 0")
        if not self.corrector_tol > 0:
            raise ValueError("corrector_tol must be > 0")
        if self.corrector_max_steps < 1:
            raise ValueError("corrector_max_steps must be >= 1")
        if not self.epsilon_multiplier >= 1:
            raise ValueError("epsilon_multiplier must be >= 1")
        if not 0 < self.epsilon_decay <= 1:
            raise ValueError("epsilon_decay must be in (0, 1]")
        if self.epsilon_base is not None and not self.epsilon_base >= 0:
            raise ValueError("epsilon_base must be >= 0")
        if not self.corrector_max_move > 0:
            raise ValueError("corrector_max_move must be > 0")
        if self.init_perturbation < 0:
            raise ValueError("init_perturbation must be >= 0")

    def replace(self, **changes) -> "ContinuationConfig":
        return dataclasses.replace(self, **changes)


def project_simplex_rows(raw, floor: float = info.GRAD_FLOOR) -> np.ndarray:
    """Clamp negatives, renormalize rows, then lift entries to ``floor``.

    A row with no positive mass is reset to uniform.
    """
    q = np.array(raw, dtype=float)
    if q.ndim != 2:
        raise ValueError("expected a matrix")
    if not np.all(np.isfinite(q)):
        raise ValueError("non-finite encoder entries")
    q = np.maximum(q, 0.0)
    sums = q.sum(axis=1, keepdims=True)
    dead = sums[:, 0] <= 0
    q[dead] = 1.0
    sums[dead] = q.shape[1]
    q /= sums
    if floor > 0:
        low = np.zeros(q.shape, dtype=bool)
        # rescaling the free entries can push another one under the floor
        while np.any(q[~low] < floor):
            low |= q < floor
            free = np.where(low, 0.0, q)
            budget = 1.0 - floor * low.sum(axis=1, keepdims=True)
            q = np.where(low, floor, free * budget / free.sum(axis=1, keepdims=True))
    return q


def init_trivial(joint: JointDistribution, z_size: int, perturbation: float = 1e-3, seed: int = 0) -> np.ndarray:
    """Uniform rows plus seeded noise of scale ``perturbation``."""
    if z_size < 2:
        raise ValueError("continuation needs |Z| >= 2")
    q = info.trivial_encoder(joint.x_size, z_size)
    if perturbation > 0:
        rng = np.random.default_rng(seed)
        q = project_simplex_rows(q + perturbation * rng.standard_normal(q.shape))
    return q


def _solve_symmetric(hess: np.ndarray, rhs: np.ndarray) -> np.ndarray | None:
    vals = np.linalg.eigvalsh(hess)
    scale = max(np.max(np.abs(vals)), 1e-300)
    if np.min(np.abs(vals)) <= SINGULAR_RTOL * scale:
        return None
    return scipy.linalg.solve(hess, rhs, assume_a="sym")


def predictor_step(enc, joint: JointDistribution, spec: ObjectiveSpec, delta_beta: float,
                   hessian: np.ndarray | None = None, max_step: float = np.inf,
                   basis: np.ndarray | None = None) -> tuple[np.ndarray, bool]:
    """Euler step along ``dq/dbeta = H^{-1} grad I(Z;Y)``.

    Returns ``(predicted encoder, accepted)``.  When the Hessian is singular
    the step is declined and the encoder comes back unchanged.  With a face
    ``basis`` the given Hessian is the one restricted to that face.
    """
    q = np.asarray(enc, dtype=float)
    if delta_beta == 0:
        return project_simplex_rows(q), True
    if hessian is None:
        hessian = objective_hessian(q, joint, spec)
    rhs = info.reduce(info.grad_mutual_info_zy(q, joint))
    if basis is not None:
        rhs = basis.T @ rhs
    dq = _solve_symmetric(hessian, rhs)
    if dq is None:
        return q.copy(), False
    if basis is not None:
        dq = basis @ dq
    disp = delta_beta * dq
    norm = float(np.linalg.norm(disp))
    if norm > max_step:
        disp *= max_step / norm
    return project_simplex_rows(info.displace(q, disp)), True


def active_face_basis(enc, full_grad: np.ndarray) -> np.ndarray | None:
    """Orthonormal basis of the face left free by floored entries.

    An entry is active when it sits at the floor and its full-coordinate
    gradient exceeds the row's multiplier (the gradient at the row's largest
    entry), i.e. the objective would rather push it further down.  A floored
    entry in the implied last column pins its row sum instead of a
    coordinate.  Returns None when no entry is active.
    """
    q = np.asarray(enc, dtype=float)
    x_size, z_size = q.shape
    rows_idx = np.arange(x_size)
    multiplier = full_grad[rows_idx, np.argmax(q, axis=1)][:, None]
    active = (q <= ACTIVE_LEVEL) & (full_grad > multiplier)
    if not active.any():
        return None
    n = x_size * (z_size - 1)
    rows = []
    for x, z in zip(*np.nonzero(active)):
        c = np.zeros(n)
        if z < z_size - 1:
            c[x * (z_size - 1) + z] = 1.0
        else:
            c[x * (z_size - 1):(x + 1) * (z_size - 1)] = 1.0
        rows.append(c)
    return scipy.linalg.null_space(np.array(rows))


def face_hessian(enc, joint: JointDistribution, spec: ObjectiveSpec, basis: np.ndarray) -> np.ndarray:
    """Central differences of the reduced gradient along each basis direction.

    Steps are relative to the smallest entry a direction moves, so floored
    entries outside the face do not set the scale.
    """
    q = np.asarray(enc, dtype=float)
    m = basis.shape[1]
    hess = np.empty((m, m))
    for j in range(m):
        b = basis[:, j]
        moved = np.abs(info.displace(np.zeros_like(q), b))
        touched = moved > 1e-12 * moved.max()
        h = HESSIAN_STEP * min(float(q[touched].min()), 1.0) / float(moved.max())
        gp = objective_gradient(info.displace(q, h * b), joint, spec, check=False)
        gm = objective_gradient(info.displace(q, -h * b), joint, spec, check=False)
        hess[:, j] = basis.T @ (gp - gm) / (2.0 * h)
    if not np.all(np.isfinite(hess)):
        raise FloatingPointError("non-finite Hessian entry")
    return 0.5 * (hess + hess.T)


def constrained_hessian(enc, joint: JointDistribution,
                        spec: ObjectiveSpec) -> tuple[np.ndarray, np.ndarray | None]:
    """Hessian on the free face and its basis (None: the full reduced Hessian)."""
    basis = active_face_basis(enc, full_gradient(enc, joint, spec))
    if basis is None:
        return objective_hessian(enc, joint, spec), None
    return face_hessian(enc, joint, spec, basis), basis


@dataclass
class CorrectorResult:
    encoder: np.ndarray
    steps: int
    converged: bool
    objective: float


def corrector(enc_pred, joint: JointDistribution, spec: ObjectiveSpec, cfg: ContinuationConfig) -> CorrectorResult:
    """Projected descent at fixed beta.

    With ``cfg.precondition`` the gradient is scaled by a saddle-free inverse
    Hessian and each step starts at unit length, capped by
    ``corrector_max_move``; otherwise steps are plain gradients with
    Barzilai-Borwein lengths starting from ``cfg.eta``.  Any step that raises
    the objective is halved and retried.  Changes too small for the objective
    to resolve are judged by the free-face gradient norm instead.
    Convergence is declared when ``eta`` times the gradient norm on the free
    face (see ``active_face_basis``) drops below ``corrector_tol``; at interior
    points this is the length of a plain gradient step of size ``eta``.
    """
    q = project_simplex_rows(enc_pred)
    f = f_entry = objective_value(q, joint, spec)
    q_entry = q
    x = info.to_reduced(q)
    G = full_gradient(q, joint, spec)
    alpha = cfg.eta
    alpha_min, alpha_max = cfg.eta * 1e-6, cfg.eta * BB_MAX_RATIO
    converged = False
    steps = 0
    while steps < cfg.corrector_max_steps:
        g, basis, free_g = _free_gradient(q, G)
        res = float(np.linalg.norm(free_g))
        if cfg.eta * res < cfg.corrector_tol:
            converged = True
            break
        steps += 1
        if cfg.precondition:
            if basis is None:
                direction = saddle_free_direction(objective_hessian(q, joint, spec), g, cfg.eta)
            else:
                hess = face_hessian(q, joint, spec, basis)
                direction = basis @ saddle_free_direction(hess, basis.T @ g, cfg.eta)
            norm = float(np.linalg.norm(direction))
            alpha = min(1.0, cfg.corrector_max_move / norm) if norm > 0 else 1.0
        else:
            direction = -free_g
        halvings = 0
        while True:
            cand = project_simplex_rows(info.displace(q, alpha * direction))
            f_new = objective_value(cand, joint, spec)
            x_new = info.to_reduced(cand)
            G_new = full_gradient(cand, joint, spec)
            g_new, _, free_new = _free_gradient(cand, G_new)
            res_new = float(np.linalg.norm(free_new))
            if _descends(f, f_new, res, res_new):
                break
            halvings += 1
            if halvings > MAX_HALVINGS:
                log.debug("corrector: %d halvings without descent", MAX_HALVINGS)
                return _finish(q, f, q_entry, f_entry, steps, False)
            alpha *= 0.5
        log.debug("corrector step %d: residual %.3e, move %.3e, halvings %d, face %s, df %.3e",
                  steps, cfg.eta * np.linalg.norm(free_g), float(np.linalg.norm(x_new - x)), halvings,
                  "full" if basis is None else basis.shape[1], f_new - f)
        if not cfg.precondition:
            s, y = x_new - x, g_new - g
            sy = float(s @ y)
            alpha = float(np.clip((s @ s) / sy, alpha_min, alpha_max)) if sy > 0 else alpha_max
        q, x, G, f = cand, x_new, G_new, f_new
    return _finish(q, f, q_entry, f_entry, steps, converged)


def saddle_free_direction(hess: np.ndarray, grad: np.ndarray, eta: float) -> np.ndarray:
    """Newton direction with eigenvalues replaced by their magnitudes.

    Modes with ``|lambda| <= NULL_CURVATURE`` (numerical zero modes, such as
    mass exchange between duplicate clusters) take a plain gradient step of
    size ``eta`` instead of an amplified one.
    """
    vals, vecs = np.linalg.eigh(hess)
    coef = vecs.T @ grad
    mags = np.abs(vals)
    scaled = np.where(mags > NULL_CURVATURE, coef / np.maximum(mags, NULL_CURVATURE), eta * coef)
    return -(vecs @ scaled)


def _free_gradient(q, full_grad):
    g = info.reduce(full_grad)
    basis = active_face_basis(q, full_grad)
    return g, basis, (g if basis is None else basis @ (basis.T @ g))


def _descends(f, f_new, res, res_new) -> bool:
    # below the objective's rounding level, compare stationarity residuals
    if abs(f_new - f) > NOISE_RTOL * max(1.0, abs(f)):
        return f_new < f
    return res_new <= res


def _finish(q, f, q_entry, f_entry, steps, converged) -> CorrectorResult:
    if f > f_entry + 1e-12:
        q, f = q_entry, f_entry
    return CorrectorResult(q, steps, converged, f)


def recycle_dead_clusters(enc, joint: JointDistribution, spec: ObjectiveSpec) -> np.ndarray:
    """Refill floored columns by halving the heaviest live clusters.

    Halving a column into two copies leaves I(X;Z) and I(Z;Y) unchanged, so
    with ``epsilon = 0`` the objective is untouched while the encoder moves
    off the boundary.  With ``epsilon > 0`` the encoder is returned as is.
    """
    q = np.array(enc, dtype=float)
    if spec.epsilon > 0:
        return q
    dead = np.flatnonzero(q.max(axis=0) <= ACTIVE_LEVEL)
    for d in dead:
        mass = info.cluster_marginal(q, joint.p_x)
        mass[dead] = -1.0
        k = int(np.argmax(mass))
        half = 0.5 * (q[:, k] + q[:, d])
        q[:, k] = half
        q[:, d] = half
        mass[k] = -1.0
    return q


@dataclass
class GuardState:
    epsilon: float
    epsilon_base: float
    last_raise: int | None = None


def eigenvalue_guard(lambda_min, cfg: ContinuationConfig, state: GuardState, step: int) -> tuple[GuardState, str]:
    """Raise epsilon near a singular Hessian, relax it once clear.

    ``lambda_min`` may be the Hessian itself.  Returns the updated state and
    one of ``"raise"``, ``"decay"``, ``"none"``.
    """
    if np.ndim(lambda_min) == 2:
        lambda_min = min_eigenpair(lambda_min)[0]
    delta = cfg.lambda_threshold
    recent = state.last_raise is not None and step - state.last_raise < cfg.guard_cooldown
    if lambda_min < delta:
        if recent or state.epsilon <= 0 or cfg.epsilon_multiplier == 1:
            return state, "none"
        return GuardState(state.epsilon * cfg.epsilon_multiplier, state.epsilon_base, step), "raise"
    if lambda_min > 2 * delta and state.epsilon > state.epsilon_base:
        eps = state.epsilon_base + (state.epsilon - state.epsilon_base) * cfg.epsilon_decay
        if eps - state.epsilon_base < 1e-12 * max(1.0, state.epsilon_base):
            eps = state.epsilon_base
        return GuardState(eps, state.epsilon_base, state.last_raise), "decay"
    return state, "none"


def escape_direction_sign(enc, direction: np.ndarray, rng: np.random.Generator) -> float:
    """Orient a curvature direction along the encoder's existing asymmetry.

    The asymmetry is the deviation of each row from the mean row; when the
    encoder is (numerically) symmetric the seeded generator decides.
    """
    q = np.asarray(enc, dtype=float)
    asym = info.to_reduced(q - q.mean(axis=0, keepdims=True))
    dot = float(asym @ direction)
    if abs(dot) > 1e-14:
        return math.copysign(1.0, dot)
    return 1.0 if rng.random() < 0.5 else -1.0


def negative_curvature_step(enc, joint: JointDistribution, spec: ObjectiveSpec, direction: np.ndarray,
                            sign: float, start: float = 1e-4, max_length: float = 0.5) -> np.ndarray:
    """Doubling line search on ``f(q + t d)``; returns the best point found."""
    q = np.asarray(enc, dtype=float)
    d = sign * direction / np.linalg.norm(direction)
    best, f_best = q, objective_value(q, joint, spec)
    t = start
    while t <= max_length:
        cand = project_simplex_rows(info.displace(q, t * d))
        f = objective_value(cand, joint, spec)
        if f >= f_best:
            break
        best, f_best = cand, f
        t *= 2.0
    return best


def _hessian_info(q, joint, spec):
    hess, basis = constrained_hessian(q, joint, spec)
    lam, vec = min_eigenpair(hess)
    if basis is not None:
        vec = basis @ vec
    return hess, basis, lam, vec


def beta_grid(cfg: ContinuationConfig) -> np.ndarray:
    n = int(math.floor(cfg.beta_max / cfg.delta_beta + 1e-9))
    # rounding keeps grid values free of accumulated float noise
    grid = np.round(cfg.delta_beta * np.arange(n + 1), 12)
    if cfg.beta_max - grid[-1] > 1e-9 * cfg.delta_beta:
        grid = np.append(grid, cfg.beta_max)
    return grid


def run_continuation(joint: JointDistribution, z_size: int, spec_template: ObjectiveSpec,
                     cfg: ContinuationConfig, dataset_id: str = "") -> Trajectory:
    """Track the optimum from the trivial encoder at beta=0 up to ``beta_max``."""
    base = spec_template.epsilon if cfg.epsilon_base is None else cfg.epsilon_base
    state = GuardState(epsilon=base, epsilon_base=base)
    grid = beta_grid(cfg)
    q = init_trivial(joint, z_size, cfg.init_perturbation, cfg.seed)

    def spec_at(beta, eps):
        return dataclasses.replace(spec_template, beta=float(beta), epsilon=float(eps))

    summary = {
        "penalty": str(spec_template.penalty),
        "epsilon_base": base,
        "z_size": z_size,
        **{k: v for k, v in dataclasses.asdict(cfg).items()},
    }
    spec = spec_at(0.0, state.epsilon)
    hess, basis, lam, _ = _hessian_info(q, joint, spec)
    records = [_record(q, joint, spec, lam, 0, True, True, "none")]
    escape_rng = np.random.default_rng([cfg.seed, 1])
    streak = 0
    status, reason = "completed", ""
    for k in range(1, grid.size):
        beta = grid[k]
        d_beta = beta - grid[k - 1]
        pred, accepted = q, False
        if cfg.use_predictor:
            pred, accepted = predictor_step(q, joint, spec, d_beta, hessian=hess,
                                            max_step=cfg.predictor_max_step, basis=basis)
        spec = spec_at(beta, state.epsilon)
        res = corrector(pred, joint, spec, cfg)
        q = res.encoder
        hess, basis, lam, vec = _hessian_info(q, joint, spec)
        action = "none" if accepted else "predictor-declined"
        steps, converged = res.steps, res.converged
        escapes = 0
        while cfg.escape_saddles and lam < -SADDLE_TOL * max(1.0, abs(hess).max()) and escapes < cfg.max_escapes:
            sign = escape_direction_sign(q, vec, escape_rng)
            q_esc = negative_curvature_step(q, joint, spec, vec, sign)
            if q_esc is q:
                break
            res = corrector(q_esc, joint, spec, cfg)
            q = res.encoder
            steps += res.steps
            converged = res.converged
            hess, basis, lam, vec = _hessian_info(q, joint, spec)
            escapes += 1
            action = "escape"
        q = recycle_dead_clusters(q, joint, spec)
        if q is not res.encoder:
            hess, basis, lam, vec = _hessian_info(q, joint, spec)
        streak = 0 if converged else streak + 1
        eps_used = state.epsilon
        state, guard_action = eigenvalue_guard(lam, cfg, state, k)
        if guard_action != "none":
            action = guard_action
        snap = (cfg.snapshot_every > 0 and k % cfg.snapshot_every == 0) or guard_action == "raise" or k == grid.size - 1
        records.append(_record(q, joint, spec_at(beta, eps_used), lam, steps, converged, snap, action))
        if state.epsilon != eps_used:
            # predictor for the next step uses the updated objective
            spec = spec_at(beta, state.epsilon)
            hess, basis = constrained_hessian(q, joint, spec)
        if streak > FAILURE_STREAK_LIMIT:
            status = "aborted"
            reason = f"corrector failed {streak} consecutive steps at beta={beta:g}"
            log.error(reason)
            break
    return Trajectory(records, dataset_id=dataset_id, spec_summary=summary, status=status, reason=reason)


def _record(q, joint, spec, lam, steps, converged, snapshot, action) -> TrajectoryRecord:
    lam_plain = lam
    if spec.epsilon > 0:
        lam_plain = min_eigenpair(constrained_hessian(q, joint, spec.with_epsilon(0.0))[0])[0]
    return make_record(q, joint, spec, lambda_min=lam, corrector_steps=steps, converged=converged,
                       snapshot=snapshot, lambda_min_unregularized=lam_plain, guard_action=action)
