import numpy as np
import pytest

from proxshuffle.optimizer import run_batch
from proxshuffle.problems import (HardInstance, hard_instance, hinge_instance, lad_instance, planted_lad,
                                  random_hinge, random_lad, reference_optimum)
from proxshuffle.prox import Ball, Indicator, SqNorm, Zero
from proxshuffle.samplers import SamplerScheme, index_streams
from proxshuffle.stepsize import StepSchedule


@pytest.mark.parametrize("T,d,coord,F", [(1, 2, -0.5, -0.25), (3, 4, -0.25, -0.125)])
def test_hard_instance_optimum(T, d, coord, F):
    p = hard_instance(1.0, 1.0, T, d=d)
    assert np.allclose(p.reference.x_star, coord, atol=1e-12)
    assert p.reference.F_star == pytest.approx(F, abs=1e-12)
    assert p.objective(p.reference.x_star) == pytest.approx(F, abs=1e-12)


def test_hard_instance_optimum_against_solver():
    cp = pytest.importorskip("cvxpy")
    G, mu, T = 1.7, 0.6, 5
    x = cp.Variable(T + 3)
    prob = cp.Problem(cp.Minimize(G * cp.max(x[: T + 1]) + mu / 2 * cp.sum_squares(x)))
    prob.solve(solver=cp.CLARABEL)
    p = hard_instance(G, mu, T, d=T + 3)
    assert p.reference.F_star == pytest.approx(prob.value, abs=1e-7)
    assert np.allclose(p.reference.x_star, x.value, atol=1e-5)


def test_hard_instance_oracle_at_origin():
    p = hard_instance(2.0, 1.0, 3)
    value, g = p.oracle(1, np.zeros(4))
    assert value == 0.0
    assert np.array_equal(g, [2.0, 0.0, 0.0, 0.0])


def test_hard_instance_validation():
    with pytest.raises(ValueError):
        hard_instance(1.0, 1.0, 3, d=3)
    with pytest.raises(ValueError):
        hard_instance(0.0, 1.0, 3)


def test_hard_instance_components_identical():
    p = hard_instance(1.0, 2.0, 4, n=3)
    x = np.random.default_rng(0).standard_normal(5)
    vals = p.component_values(x)
    assert vals.shape == (3,) and np.all(vals == vals[0])
    assert p.lipschitz.G_f1 == p.lipschitz.G_f2 == 1.0


def test_lad_examples():
    p = lad_instance([[1.0]], [0.0])
    value, g = p.oracle(1, [2.0])
    assert value == 2.0 and np.array_equal(g, [1.0])
    assert np.array_equal(p.oracle(1, [0.0])[1], [0.0])
    q = lad_instance(np.eye(2), np.zeros(2))
    assert float(q.f(np.array([1.0, -1.0]))) == 1.0


def test_lad_kink_is_zero():
    A = np.array([[1.0, 2.0], [3.0, -1.0]])
    x = np.array([0.5, 0.25])
    p = lad_instance(A, A @ x)
    assert np.array_equal(p.oracle(2, x)[1], [0.0, 0.0])


def test_lad_rejects_zero_row():
    with pytest.raises(ValueError):
        lad_instance([[1.0, 0.0], [0.0, 0.0]], [0.0, 0.0])


def test_hinge_examples():
    p = hinge_instance([[1.0, 0.0]], [1.0])
    v, g = p.oracle(1, [2.0, 0.0])
    assert v == 0.0 and np.array_equal(g, [0.0, 0.0])
    v, g = p.oracle(1, [0.0, 0.0])
    assert v == 1.0 and np.array_equal(g, [-1.0, 0.0])
    q = hinge_instance([[0.0, 1.0]], [-1.0])
    assert q.oracle(1, [0.0, -3.0])[0] == 0.0


def test_hinge_rejects_bad_labels():
    with pytest.raises(ValueError):
        hinge_instance([[1.0, 0.0]], [0.5])


def test_oracle_index_is_one_based():
    p = lad_instance(np.eye(2), np.zeros(2))
    with pytest.raises(IndexError):
        p.oracle(0, [0.0, 0.0])
    with pytest.raises(IndexError):
        p.oracle(3, [0.0, 0.0])


INSTANCES = [
    planted_lad(6, 3, seed=1, reg="ball"),
    random_lad(5, 4, seed=2, reg=Zero(), noise=0.5),
    random_hinge(7, 3, seed=3, reg=SqNorm(0.3, np.zeros(3)), flip=0.2),
    hard_instance(1.5, 1.0, 4, d=6, n=2),
]


@pytest.mark.parametrize("problem", INSTANCES, ids=["lad-ball", "lad", "hinge", "hard"])
def test_oracle_validity(problem):
    rng = np.random.default_rng(0)
    for _ in range(1000):
        i = int(rng.integers(1, problem.n + 1))
        x, y = rng.standard_normal((2, problem.d))
        if rng.random() < 0.2:
            x = np.round(x)  # hit kinks of the hard instance now and then
        fx, g = problem.oracle(i, x)
        fy, _ = problem.oracle(i, y)
        assert fy >= fx + g @ (y - x) - 1e-9
        assert np.linalg.norm(g) <= problem.G[i - 1] + 1e-9


@pytest.mark.parametrize("schedule", [
    StepSchedule.polyak(1, 1.0, 12, 3), StepSchedule.inv_sqrt_t(0.8, 12, 3),
    StepSchedule.epoch_decay(2.0, 12, 3), StepSchedule.const_over_sqrt_T(5.0, 12, 3),
])
def test_hard_instance_span_property(schedule):
    T = schedule.T
    p = hard_instance(1.0, 1.0, T, n=3)
    idx = index_streams(SamplerScheme.rr(), 3, T, 4, np.random.default_rng(1))
    X = np.zeros((4, p.d))
    for t in range(1, T + 1):
        G = p.subgradients(idx[:, t - 1] - 1, X)
        X = p.regularizer.prox(X, G, schedule.step_at(t))
        assert np.all(X[:, t:] == 0.0)
        assert np.all(p.component_values(X)[:, 0] >= 0.0)
    traces = run_batch(p, np.zeros(p.d), schedule, idx, trackers={"gaps"}, stride=1)
    assert min(g for tr in traces for _, g in tr.gaps) >= p.lower_bound - 1e-12


def test_planted_lad_reference_exact():
    for reg in ("none", "ball", "sqnorm", "sqnorm_ball"):
        p = planted_lad(8, 3, seed=5, reg=reg)
        assert abs(p.objective(p.reference.x_star)) <= 1e-12
    with pytest.raises(ValueError):
        planted_lad(8, 3, seed=5, reg="ball", radius=0.5)


def test_reference_optimum_hard_instance():
    p = hard_instance(1.0, 1.0, 3)
    est = reference_optimum(p, budget=100_000, seed=0)
    assert not est.certified
    assert abs(est.F_star - p.reference.F_star) <= 1e-6


def test_reference_optimum_abs_value():
    est = reference_optimum(lad_instance([[1.0]], [0.0]), budget=2000, seed=1, x1=[3.0])
    assert abs(est.F_star) <= 1e-4


def test_reference_optimum_monotone_in_budget():
    p = random_hinge(8, 3, seed=4, reg=SqNorm(0.5, np.zeros(3)))
    values = [reference_optimum(p, budget=b, seed=2).F_star for b in (50, 200, 800, 3200)]
    assert all(b <= a for a, b in zip(values, values[1:]))


def test_reference_optimum_rejects_bad_budget():
    with pytest.raises(ValueError):
        reference_optimum(INSTANCES[0], budget=0, seed=0)


def test_problem_feasible_objective():
    p = planted_lad(4, 2, seed=0, reg="ball", radius=1.5)
    assert p.objective(np.array([3.0, 0.0])) == np.inf
    assert isinstance(p.regularizer, Indicator) and isinstance(p.regularizer.cset, Ball)
    assert isinstance(hard_instance(1, 1, 2), HardInstance)
