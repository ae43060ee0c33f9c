import math

import numpy as np
import pytest

from stable_ib import info
from stable_ib.continuation import (
    ContinuationConfig,
    GuardState,
    active_face_basis,
    beta_grid,
    corrector,
    eigenvalue_guard,
    init_trivial,
    predictor_step,
    project_simplex_rows,
    recycle_dead_clusters,
    run_continuation,
)
from stable_ib.objectives import (
    ObjectiveSpec,
    PenaltyFunction,
    full_gradient,
    objective_gradient,
    objective_value,
)

SQUARE = ObjectiveSpec(penalty=PenaltyFunction("square"))
ENTROPY = ObjectiveSpec(epsilon=0.1)
FLOOR = info.GRAD_FLOOR


@pytest.fixture(scope="module")
def square_run(bsc):
    return run_continuation(bsc, 2, SQUARE, ContinuationConfig(beta_max=3.0, delta_beta=0.01))


@pytest.fixture(scope="module")
def entropy_run(bsc):
    return run_continuation(bsc, 2, ENTROPY, ContinuationConfig(beta_max=3.0, delta_beta=0.01))


# -- configuration ------------------------------------------------------------------------


@pytest.mark.parametrize("kw", [
    {"delta_beta": 0.0}, {"delta_beta": -0.1}, {"eta": 0.0}, {"corrector_tol": 0.0},
    {"epsilon_multiplier": 0.5}, {"epsilon_decay": 0.0}, {"epsilon_decay": 1.5}, {"corrector_max_steps": 0},
])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        ContinuationConfig(**kw)


def test_beta_grid_includes_endpoint():
    assert beta_grid(ContinuationConfig(beta_max=1.0, delta_beta=0.3)).tolist() == [0.0, 0.3, 0.6, 0.9, 1.0]
    assert beta_grid(ContinuationConfig(beta_max=3.0, delta_beta=0.01)).size == 301


# -- initialization and projection ---------------------------------------------------------


def test_init_without_perturbation_is_uniform(hier8):
    q = init_trivial(hier8, 4, perturbation=0.0)
    assert np.array_equal(q, np.full((8, 4), 0.25))
    assert info.mutual_info_xz(q, hier8.p_x) == 0.0


def test_init_is_seeded(hier8):
    assert np.array_equal(init_trivial(hier8, 8, 1e-3, seed=3), init_trivial(hier8, 8, 1e-3, seed=3))
    assert not np.array_equal(init_trivial(hier8, 8, 1e-3, seed=3), init_trivial(hier8, 8, 1e-3, seed=4))


def test_perturbation_breaks_symmetry(bsc):
    flat = info.reduce(info.grad_mutual_info_zy(init_trivial(bsc, 2, 0.0), bsc))
    bumped = info.reduce(info.grad_mutual_info_zy(init_trivial(bsc, 2, 1e-3), bsc))
    assert np.all(flat == 0.0)
    assert np.linalg.norm(bumped) > 1e-8


def test_projection_leaves_valid_encoder():
    q = np.array([[0.2, 0.3, 0.5], [0.6, 0.1, 0.3]])
    assert np.max(np.abs(project_simplex_rows(q) - q)) <= 1e-15


def test_projection_examples():
    out = project_simplex_rows(np.array([[1.2, -0.2], [0.0, 0.0]]))
    assert out[0, 1] == pytest.approx(FLOOR, rel=1e-12)
    assert out[0, 0] == pytest.approx(1 - FLOOR, abs=1e-15)
    assert np.array_equal(out[1], [0.5, 0.5])
    assert np.all(out >= FLOOR)
    assert np.allclose(out.sum(axis=1), 1.0, atol=1e-15)


def test_projection_floors_many_small_entries():
    out = project_simplex_rows(np.array([[1.0] + [0.0] * 7, [1e-10] * 7 + [1.0]]))
    assert np.all(out >= FLOOR)
    assert np.allclose(out.sum(axis=1), 1.0, atol=1e-15)


def test_projection_rejects_non_finite():
    with pytest.raises(ValueError):
        project_simplex_rows(np.array([[np.inf, 0.0], [0.5, 0.5]]))


# -- predictor ------------------------------------------------------------------------------


def test_predictor_zero_step_is_identity(bsc):
    q = np.array([[0.7, 0.3], [0.2, 0.8]])
    out, accepted = predictor_step(q, bsc, SQUARE.with_beta(2.0), 0.0)
    assert accepted and np.allclose(out, q, atol=1e-15)


def test_predictor_declines_singular_hessian(bsc):
    q = np.array([[0.6, 0.4], [0.3, 0.7]])
    out, accepted = predictor_step(q, bsc, SQUARE.with_beta(2.0), 0.1, hessian=np.zeros((2, 2)))
    assert not accepted and np.array_equal(out, q)


def test_predictor_saves_corrector_work(bsc):
    cfg = ContinuationConfig(beta_max=3.0, delta_beta=0.01)
    with_pred = run_continuation(bsc, 2, SQUARE, cfg)
    without = run_continuation(bsc, 2, SQUARE, cfg.replace(use_predictor=False))
    assert with_pred.column("corrector_steps_taken").sum() < without.column("corrector_steps_taken").sum()


def test_prediction_past_transition_needs_few_corrector_steps(entropy_run, bsc):
    rec = next(r for r in entropy_run.records if r.encoder_snapshot is not None and r.beta == 3.0)
    spec = ENTROPY.with_beta(3.0)
    pred, accepted = predictor_step(rec.encoder_snapshot, bsc, spec, 0.01)
    assert accepted
    assert corrector(pred, bsc, spec.with_beta(3.01), ContinuationConfig()).steps <= 3


# -- corrector -----------------------------------------------------------------------------


def test_corrector_at_optimum_barely_moves(entropy_run, bsc):
    rec = entropy_run.final
    res = corrector(rec.encoder_snapshot, bsc, ENTROPY.with_beta(rec.beta), ContinuationConfig())
    assert res.steps <= 1 and res.converged
    assert np.max(np.abs(res.encoder - rec.encoder_snapshot)) < 1e-8


def test_corrector_from_far_start_agrees_with_continuation(square_run, bsc):
    rec = square_run.final
    start = np.array([[0.3, 0.7], [0.8, 0.2]])
    res = corrector(start, bsc, SQUARE.with_beta(rec.beta), ContinuationConfig(corrector_max_steps=2000))
    assert res.converged
    tv = 0.5 * np.max(np.abs(res.encoder - rec.encoder_snapshot).sum(axis=1))
    tv_swapped = 0.5 * np.max(np.abs(res.encoder[:, ::-1] - rec.encoder_snapshot).sum(axis=1))
    assert min(tv, tv_swapped) < 1e-6


def test_corrector_never_raises_objective(hier8):
    rng = np.random.default_rng(0)
    spec = ObjectiveSpec(beta=3.0, epsilon=0.05)
    for _ in range(5):
        start = project_simplex_rows(rng.dirichlet(np.ones(4), size=8))
        res = corrector(start, hier8, spec, ContinuationConfig(corrector_max_steps=20))
        assert res.objective <= objective_value(start, hier8, spec) + 1e-12


def test_corrector_plain_gradient_mode(bsc):
    cfg = ContinuationConfig(precondition=False, corrector_max_steps=5000)
    res = corrector(np.array([[0.6, 0.4], [0.4, 0.6]]), bsc, ENTROPY.with_beta(3.0), cfg)
    ref = corrector(np.array([[0.6, 0.4], [0.4, 0.6]]), bsc, ENTROPY.with_beta(3.0), ContinuationConfig())
    assert res.converged and ref.converged
    assert np.max(np.abs(res.encoder - ref.encoder)) < 1e-6


def test_active_face_excludes_floored_coordinates():
    q = np.array([[1 - 2 * FLOOR, FLOOR, FLOOR], [0.3, 0.3, 0.4]])
    g = np.array([[0.0, 1.0, 1.0], [0.0, 0.0, 0.0]])
    basis = active_face_basis(q, g)
    assert basis.shape == (4, 2)
    assert np.allclose(basis[:2], 0.0)
    assert active_face_basis(q, -g) is None


def test_recycling_preserves_information(hier8):
    q = np.full((8, 4), FLOOR)
    q[:4, 0] = 1 - 3 * FLOOR
    q[4:, 1] = 1 - 3 * FLOOR
    spec = ObjectiveSpec(beta=2.0, penalty=PenaltyFunction("square"))
    out = recycle_dead_clusters(q, hier8, spec)
    assert out.max(axis=0).min() > 0.1
    # floored entries carry O(floor) mass into the split
    assert objective_value(out, hier8, spec) == pytest.approx(objective_value(q, hier8, spec), abs=1e-7)
    empty = q.copy()
    empty[:, 2:] = 0.0
    empty[:, :2] /= empty[:, :2].sum(axis=1, keepdims=True)
    split = recycle_dead_clusters(empty, hier8, spec)
    assert objective_value(split, hier8, spec) == pytest.approx(objective_value(empty, hier8, spec), abs=1e-14)
    assert np.array_equal(recycle_dead_clusters(q, hier8, spec.with_epsilon(0.1)), q)


# -- guard ----------------------------------------------------------------------------------


def test_guard_no_action_when_stable():
    state = GuardState(0.05, 0.05)
    assert eigenvalue_guard(0.5, ContinuationConfig(lambda_threshold=1e-3), state, 1) == (state, "none")


def test_guard_raises_epsilon():
    new, action = eigenvalue_guard(1e-4, ContinuationConfig(lambda_threshold=1e-3, epsilon_multiplier=2.0),
                                   GuardState(0.05, 0.05), 7)
    assert action == "raise" and new.epsilon == pytest.approx(0.10) and new.last_raise == 7


def test_guard_cooldown():
    cfg = ContinuationConfig(lambda_threshold=1e-3, guard_cooldown=10)
    state = GuardState(0.1, 0.05, last_raise=5)
    assert eigenvalue_guard(1e-4, cfg, state, 9)[1] == "none"
    assert eigenvalue_guard(1e-4, cfg, state, 15)[1] == "raise"


def test_guard_accepts_hessian():
    assert eigenvalue_guard(np.diag([1e-4, 1.0]), ContinuationConfig(), GuardState(0.1, 0.1), 0)[1] == "raise"


def test_guard_decays_geometrically():
    cfg = ContinuationConfig(lambda_threshold=1e-3, epsilon_decay=0.9)
    state = GuardState(0.8, 0.05)
    bound = math.ceil(math.log(0.75 / (0.01 * 0.05)) / math.log(1 / 0.9))
    for k in range(bound):
        state, action = eigenvalue_guard(1.0, cfg, state, k)
        assert action == "decay"
    assert state.epsilon <= 1.01 * 0.05


# -- full runs -------------------------------------------------------------------------------


def test_trajectory_layout(square_run):
    b = square_run.betas
    assert square_run.completed and b[0] == 0.0 and b.size == 301
    assert np.all(np.diff(b) > 0)


@pytest.mark.parametrize("run", ["square_run", "entropy_run"])
def test_smoothness(run, request):
    traj = request.getfixturevalue(run)
    assert np.max(np.abs(np.diff(traj.column("i_zy_bits")))) <= 0.05
    assert np.max(np.abs(np.diff(traj.column("i_xz_bits")))) <= 0.08


@pytest.mark.parametrize("run", ["square_run", "entropy_run"])
def test_record_invariants(run, request, bsc):
    traj = request.getfixturevalue(run)
    i_xy = info.bits(info.mutual_info_xy(bsc))
    for r in traj.records:
        assert r.i_zy_bits <= i_xy + 1e-9
        assert 1.0 <= r.effective_clusters <= 2.0


def test_convexified_relevance_nondecreasing(square_run):
    assert np.min(np.diff(square_run.column("i_zy_bits"))) >= -1e-6


def test_entropy_run_stays_below_one_bit(entropy_run):
    assert entropy_run.final.beta == 3.0
    assert entropy_run.final.i_xz_bits < 1.0


def test_unregularized_lambda_logged(entropy_run):
    lam = entropy_run.column("lambda_min_unregularized")
    assert np.all(np.isfinite(lam))
    assert np.any(lam < entropy_run.column("lambda_min"))


def test_runs_are_deterministic(bsc):
    cfg = ContinuationConfig(beta_max=1.0, delta_beta=0.05, seed=4)
    a = run_continuation(bsc, 2, SQUARE, cfg)
    b = run_continuation(bsc, 2, SQUARE, cfg)
    assert [r.csv_row() for r in a.records] == [r.csv_row() for r in b.records]


def test_failure_streak_aborts(bsc):
    cfg = ContinuationConfig(beta_max=3.0, delta_beta=0.1, corrector_max_steps=1, corrector_tol=1e-300)
    traj = run_continuation(bsc, 2, ENTROPY, cfg)
    assert traj.status == "aborted" and "consecutive" in traj.reason
    assert 1 < len(traj.records) < 31


def test_snapshots_follow_schedule(bsc):
    traj = run_continuation(bsc, 2, SQUARE, ContinuationConfig(beta_max=0.5, delta_beta=0.05, snapshot_every=4))
    snap_betas = [b for b, _ in traj.snapshots()]
    assert snap_betas[0] == 0.0 and snap_betas[-1] == 0.5
    assert 0.2 in snap_betas and 0.4 in snap_betas and 0.25 not in snap_betas


def test_full_gradient_reduces_to_objective_gradient(bsc):
    q = np.array([[0.7, 0.3], [0.2, 0.8]])
    spec = ENTROPY.with_beta(2.0)
    assert np.array_equal(info.reduce(full_gradient(q, bsc, spec)), objective_gradient(q, bsc, spec))
