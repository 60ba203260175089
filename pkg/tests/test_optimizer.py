import numpy as np
import pytest

from proxshuffle.optimizer import (DivergenceError, RunConfig, Trace, evaluate_gap, objective_batch, run,
                                   run_batch, run_seeds, suffix_average)
from proxshuffle.problems import FiniteSumProblem, hard_instance, lad_instance, planted_lad
from proxshuffle.prox import Ball, Box, Indicator, Zero
from proxshuffle.samplers import SamplerScheme, epoch_cover_holds, make_sampler
from proxshuffle.stepsize import StepSchedule


class Linear(FiniteSumProblem):
    """f_i(x) = <c_i, x>."""

    def __init__(self, C, reg):
        self.C = np.atleast_2d(np.asarray(C, dtype=float))
        self.n, self.d = self.C.shape
        self.G = np.linalg.norm(self.C, axis=1)
        self.regularizer = reg
        self.reference = None

    def component_values(self, x):
        return np.einsum("...d,nd->...n", x, self.C)

    def subgradients(self, rows, x):
        return self.C[rows].copy()


def _cfg(problem, schedule, scheme=SamplerScheme.rr(), seed=0, **kw):
    return RunConfig(np.zeros(problem.d), schedule, make_sampler(scheme, problem.n, seed), **kw)


def test_abs_value_stays_at_kink():
    p = lad_instance([[1.0]], [0.0])
    tr = run(p, _cfg(p, StepSchedule.inv_sqrt_t(1.0, 6, 1), F_ref=0.0, stride=1))
    assert tr.last[0] == 0.0
    assert all(g == 0.0 for _, g in tr.gaps)


def test_linear_step_projects_onto_interval():
    p = Linear([[1.0]], Indicator(Box([-1.0], [1.0])))
    tr = run(p, _cfg(p, StepSchedule.const_over_sqrt_T(1.0, 1, 1), trackers={"last"}))
    assert tr.last[0] == -1.0


def test_zero_oracle_keeps_start():
    p = Linear(np.zeros((3, 2)) + 0.0, Zero())
    p.G = np.ones(3)
    x1 = np.array([0.3, -0.2])
    cfg = RunConfig(x1, StepSchedule.inv_sqrt_t(1.0, 9, 3), make_sampler(SamplerScheme.rr(), 3, 0),
                    trackers={"last", "average", "suffix"})
    tr = run(p, cfg)
    assert np.array_equal(tr.last, x1) and np.allclose(tr.average, x1) and np.allclose(tr.suffix, x1)


def test_suffix_average_examples():
    tr = Trace(last=np.array([2.0, 2.0]), average=None, tail=np.array([[0.0, 0.0], [2.0, 2.0]]))
    assert np.array_equal(suffix_average(tr, 2), [1.0, 1.0])
    const = Trace(last=np.ones(3), average=None, tail=np.tile([1.5, 0.0, -2.0], (4, 1)))
    assert np.array_equal(suffix_average(const, 4), [1.5, 0.0, -2.0])
    basis = Trace(last=np.eye(5)[-1], average=None, tail=np.eye(5))
    assert np.allclose(suffix_average(basis, 5), np.full(5, 0.2))
    assert suffix_average(tr, 3) is None


def test_suffix_absent_when_horizon_short():
    p = planted_lad(5, 2, seed=0)
    tr = run(p, _cfg(p, StepSchedule.inv_sqrt_t(1.0, 3, 5)))
    assert tr.suffix is None


def test_evaluate_gap_examples():
    p = hard_instance(1.0, 1.0, 3)
    assert abs(evaluate_gap(p, p.reference.x_star, p.reference.F_star)) <= 1e-10
    q = lad_instance([[1.0, 0.0]], [0.0], Indicator(Ball(np.zeros(2), 1.0)))
    assert evaluate_gap(q, [2.0, 0.0], 0.0) == np.inf
    r = lad_instance([[1.0]], [0.0])
    assert evaluate_gap(r, [3.0], 0.0) == 3.0


def test_run_matches_hand_loop():
    p = planted_lad(4, 3, seed=2, reg="sqnorm_ball")
    sched = StepSchedule.polyak(2, 0.1, 20, 4)
    tr = run(p, _cfg(p, sched, seed=9, record_indices=True))
    x = np.zeros(3)
    iterates = []
    for t, i in enumerate(tr.index_log, start=1):
        _, g = p.oracle(int(i), x)
        x = p.regularizer.prox(x, g, sched.step_at(t))
        iterates.append(x)
    assert np.allclose(tr.last, x, atol=1e-12)
    assert np.allclose(tr.average, np.mean(iterates, axis=0), atol=1e-12)
    assert np.allclose(tr.suffix, np.mean(iterates[-4:], axis=0), atol=1e-12)
    assert epoch_cover_holds(list(tr.index_log), 4)


@pytest.mark.parametrize("T", [16, 19])
def test_feasibility_and_jensen(T):
    p = planted_lad(4, 3, seed=3, reg="ball", radius=1.2)
    sched = StepSchedule.inv_sqrt_t(2.0, T, 4)
    traces = run_seeds(p, np.zeros(3), sched, SamplerScheme.rr(), range(10), stride=1)
    for tr in traces:
        assert p.regularizer.contains(tr.last)
        assert np.all(p.regularizer.inside(tr.tail))
        assert p.objective(tr.suffix) <= np.mean(tr.tail_objectives) + 1e-9
        # the gap series at stride 1 is F(x_{t+1}) - F* for every step
        Fs = np.array([g for _, g in tr.gaps])
        assert p.objective(tr.average) <= Fs.mean() + 1e-9
        assert np.allclose(Fs[-4:], tr.tail_objectives, atol=1e-12)


def test_run_is_deterministic():
    p = planted_lad(5, 3, seed=4)
    sched = StepSchedule.inv_sqrt_t(1.0, 40, 5)
    a = run(p, _cfg(p, sched, seed=123))
    b = run(p, _cfg(p, sched, seed=123))
    assert np.array_equal(a.last, b.last) and np.array_equal(a.average, b.average)
    assert a.gaps == b.gaps


def test_batch_rows_are_independent():
    p = planted_lad(6, 3, seed=5, reg="ball")
    sched = StepSchedule.inv_sqrt_t(1.0, 36, 6)
    seeds = [3, 1, 4, 1, 5]
    together = run_seeds(p, np.zeros(3), sched, SamplerScheme.rr(), seeds)
    for s, tr in zip(seeds, together):
        alone = run_seeds(p, np.zeros(3), sched, SamplerScheme.rr(), [s])[0]
        assert np.array_equal(alone.last, tr.last)
        assert np.array_equal(alone.suffix, tr.suffix)
        assert alone.gaps == tr.gaps


def test_gap_stride():
    p = planted_lad(4, 2, seed=0)
    tr = run(p, _cfg(p, StepSchedule.inv_sqrt_t(1.0, 10, 4), stride=3))
    assert [t for t, _ in tr.gaps] == [3, 6, 9, 10]


def test_divergence_is_reported():
    p = Linear([[1.0, 1.0]], Zero())
    cfg = RunConfig(np.array([1.0, 1.0]), StepSchedule.const_over_sqrt_T(1e308, 4, 1),
                    make_sampler(SamplerScheme.rr(), 1, 0), F_ref=0.0)
    with pytest.raises(DivergenceError) as err:
        run(p, cfg)
    assert err.value.t == 4 and "t=4" in str(err.value)


def test_run_validates_inputs():
    p = planted_lad(3, 2, seed=0, reg="ball")
    with pytest.raises(ValueError):
        RunConfig(np.zeros(2), StepSchedule.inv_sqrt_t(1.0, 3, 3), make_sampler(SamplerScheme.rr(), 3, 0),
                  trackers={"median"})
    with pytest.raises(ValueError):
        run(p, RunConfig(np.full(2, 5.0), StepSchedule.inv_sqrt_t(1.0, 3, 3), make_sampler(SamplerScheme.rr(), 3, 0)))
    with pytest.raises(ValueError):
        run(p, RunConfig(np.zeros(2), StepSchedule.inv_sqrt_t(1.0, 3, 3), make_sampler(SamplerScheme.rr(), 4, 0)))


def test_objective_batch_marks_infeasible():
    p = planted_lad(3, 2, seed=0, reg="ball", radius=1.0)
    vals = objective_batch(p, np.array([[0.0, 0.0], [5.0, 0.0]]))
    assert np.isfinite(vals[0]) and vals[1] == np.inf
