import json
import math

import numpy as np
import pytest

from proxshuffle import samplers
from proxshuffle.cli import ConfigError, main, parse_config, read_results, run_experiment, verify_suite, write_results
from proxshuffle.cli.experiment import (CellResult, RepResult, ResultRow, aggregate, execute_cell, fit_slopes,
                                        plan_cells, replication_seed, run_cells)
from proxshuffle.core import lipschitz_stats
from proxshuffle.problems import planted_lad

MINIMAL = {"problem": "hard", "G": 1, "mu": 1, "scheme": "RR", "schedule": "polyak(m=2)",
           "sweep": {"n": [4], "K": [8]}}


def doc(**over):
    d = {"name": "t", "problem": {"family": "lad", "d": 3, "seed": 0, "regularizer": {"kind": "ball"}},
         "scheme": "RR", "schedule": {"kind": "inv_sqrt_t", "eta": 0.5},
         "sweep": {"n": [4], "K": [4, 16, 64]}, "replications": 16, "master_seed": 1}
    d.update(over)
    return d


def spec_of(d):
    return parse_config(json.dumps(d))


def test_minimal_document():
    spec = spec_of(MINIMAL)
    assert spec.replications == 32 and spec.stride is None and spec.stride_for(4) == 4
    assert spec.schedule.kind == "polyak" and spec.schedule.m == 2
    (plan,) = plan_cells(spec)
    assert plan.T == 32
    assert plan.schedule.mu == 1.0


def test_invalid_scheme_lists_valid_values():
    with pytest.raises(ConfigError) as err:
        spec_of({**MINIMAL, "scheme": "RS"})
    msg = str(err.value)
    assert "scheme" in msg and "RS" in msg
    assert all(v in msg for v in ("RR", "SS", "IG", "IID"))


@pytest.mark.parametrize("mutate,path", [
    (lambda d: d.update(colour=1), "colour: unknown key"),
    (lambda d: d["problem"].update(d="three"), "problem.d"),
    (lambda d: d["problem"]["regularizer"].update(kind="disc"), "problem.regularizer.kind"),
    (lambda d: d.pop("sweep"), "sweep: missing required key"),
    (lambda d: d["sweep"].update(K=[]), "sweep.K"),
    (lambda d: d.update(replications=0), "replications"),
    (lambda d: d.update(master_seed=-1), "master_seed"),
    (lambda d: d.update(outputs=["last", "median"]), "outputs"),
    (lambda d: d.update(schedule={"kind": "inv_sqrt_t"}), "schedule"),
    (lambda d: d.update(schedule="warmup(eta=1)"), "schedule.kind"),
    (lambda d: d.update(scheme={"kind": "IG", "perm": [1, 2, 3]}), "IG perm"),
])
def test_config_errors_name_the_key(mutate, path):
    d = doc()
    mutate(d)
    with pytest.raises(ConfigError) as err:
        spec_of(d)
    assert path in str(err.value)


def test_malformed_json():
    with pytest.raises(ConfigError):
        parse_config("{not json")


def test_schedule_call_strings():
    spec = spec_of(doc(schedule="epoch_decay(eta=2.5)"))
    assert spec.schedule.kind == "epoch_decay" and spec.schedule.eta == 2.5
    spec = spec_of(doc(schedule="inv_sqrt_t(auto_eta=true)"))
    assert spec.schedule.auto_eta


def test_outputs_are_ordered():
    assert spec_of(doc(outputs=["suffix", "last"])).outputs == ("last", "suffix")


def test_auto_eta_expansion():
    spec = spec_of(doc(schedule={"kind": "inv_sqrt_t", "auto_eta": True}, sweep={"n": [8], "K": [4]}))
    (plan,) = plan_cells(spec)
    p = planted_lad(8, 3, 0, "none")
    G = np.linalg.norm(p.A, axis=1)
    stats = lipschitz_stats(G)
    D = np.linalg.norm(p.reference.x_star)
    assert D == pytest.approx(1.0)
    expected = D / (8**0.25 * math.sqrt(stats.G_f1 * stats.G_f2))
    assert plan.schedule.eta == pytest.approx(expected, rel=1e-12)


def test_auto_eta_uses_estimated_optimum():
    d = doc(problem={"family": "hinge", "d": 2, "seed": 1, "regularizer": {"kind": "l1", "lam": 0.05},
                     "reference_budget": 500},
            schedule={"kind": "const_over_sqrt_T", "auto_eta": True}, scheme="SS",
            sweep={"n": [5], "K": [2, 3]})
    plans = plan_cells(spec_of(d))
    assert all(p.schedule.eta > 0 for p in plans)
    assert plans[0].F_ref == plans[1].F_ref


def test_auto_eta_rejects_ig():
    d = doc(scheme="IG", schedule={"kind": "inv_sqrt_t", "auto_eta": True})
    with pytest.raises(ConfigError) as err:
        plan_cells(spec_of(d))
    assert "auto_eta" in str(err.value)


def test_polyak_needs_modulus():
    with pytest.raises(ConfigError):
        plan_cells(spec_of(doc(schedule="polyak(m=2)")))


def test_hard_instance_without_randomness():
    d = {**MINIMAL, "sweep": {"n": [1], "K": [4]}, "replications": 5}
    rows = run_experiment(spec_of(d))
    assert [r.tracker for r in rows] == ["last", "average", "suffix"]
    assert all(r.ci_half_width == 0.0 and r.T == 4 for r in rows)
    assert rows[0].mean_gap >= 0.1 - 1e-12  # lower bound G^2 / (2 mu (T+1)) at T = 4
    assert rows == run_experiment(spec_of(d))


def test_rr_lad_gap_decreases_with_K():
    rows = run_experiment(spec_of(doc()))
    last = [r for r in rows if r.tracker == "last"]
    assert [r.K for r in last] == [4, 16, 64]
    assert last[0].mean_gap > last[1].mean_gap > last[2].mean_gap
    assert all(r.mean_gap >= -1e-9 for r in rows)


def test_csv_bytes_identical_and_round_trip(tmp_path):
    spec = spec_of(doc())
    rows = run_experiment(spec, tmp_path / "a")
    run_experiment(spec, tmp_path / "b", threads=3)
    a, b = (tmp_path / "a" / "t.csv").read_bytes(), (tmp_path / "b" / "t.csv").read_bytes()
    assert a == b
    header = a.decode("utf-8").splitlines()[0]
    assert header == "n,K,T,scheme,schedule,tracker,mean_gap,ci_half_width,replications,wall_time_ms,failed"
    assert read_results(tmp_path / "a" / "t.csv") == rows
    assert (tmp_path / "a" / "t_trajectory.csv").exists()


def test_round_trip_with_timings(tmp_path):
    rows = run_experiment(spec_of(doc(sweep={"n": [3], "K": [2]})), timings=True)
    assert all(r.wall_time_ms is not None and r.wall_time_ms > 0 for r in rows)
    write_results(tmp_path / "x.csv", rows)
    assert read_results(tmp_path / "x.csv") == rows


def test_different_seed_changes_results():
    a = run_experiment(spec_of(doc()))
    b = run_experiment(spec_of(doc(master_seed=2)))
    assert a != b


def test_replication_isolation():
    spec = spec_of(doc(sweep={"n": [4], "K": [8]}))
    (plan,) = plan_cells(spec)
    R = spec.replications
    forward = execute_cell(plan, spec.master_seed, range(R))
    backward = execute_cell(plan, spec.master_seed, list(reversed(range(R))))
    split = {**execute_cell(plan, spec.master_seed, [5, 0, 9]),
             **execute_cell(plan, spec.master_seed, [r for r in range(R) if r not in (5, 0, 9)])}
    for other in (backward, split):
        assert all(forward[r].gaps == other[r].gaps for r in range(R))
    rows = aggregate(spec, [CellResult(plan, [backward[r] for r in range(R)])])
    assert rows == aggregate(spec, run_cells(spec))


def test_replication_seeds_distinct():
    seeds = {replication_seed(0, c, r) for c in range(4) for r in range(64)}
    assert len(seeds) == 256
    assert replication_seed(3, 1, 2) == replication_seed(3, 1, 2)


def test_failed_replications_are_counted():
    spec = spec_of(doc(sweep={"n": [4], "K": [2]}, replications=3))
    (cell,) = run_cells(spec)
    cell.reps[1] = RepResult({k: math.nan for k in ("last", "average", "suffix")}, [], failed=True)
    rows = aggregate(spec, [cell])
    ok = [cell.reps[0].gaps["last"], cell.reps[2].gaps["last"]]
    assert rows[0].failed == 1 and rows[0].replications == 3
    assert rows[0].mean_gap == pytest.approx(np.mean(ok))


def test_slopes_from_rows():
    rows = [ResultRow(8, K, 8 * K, "RR", f"inv_sqrt_t(eta={K})", "last", 2.0 / math.sqrt(K), 0.0, 4)
            for K in (4, 16, 64)]
    (s,) = fit_slopes(rows)
    assert s.slope == pytest.approx(-0.5, abs=1e-12) and s.points == 3
    (short,) = fit_slopes(rows[:2])
    assert math.isnan(short.slope)


def test_other_problem_families_run():
    for problem in ({"family": "lad", "planted": False, "d": 2, "noise": 0.3, "reference_budget": 300},
                    {"family": "hinge", "d": 2, "flip": 0.1, "regularizer": {"kind": "sqnorm", "mu": 0.5},
                     "reference_budget": 300},
                    {"family": "lad", "regularizer": {"kind": "box", "halfwidth": 2.0}}):
        for scheme in ("SS", "IID", {"kind": "IG", "perm": "reverse"}):
            rows = run_experiment(spec_of(doc(problem=problem, scheme=scheme, sweep={"n": [3], "K": [2, 4]},
                                              replications=4)))
            assert len(rows) == 6 and all(np.isfinite(r.mean_gap) for r in rows)


def test_verify_fast_passes():
    report = verify_suite("fast")
    assert report.passed, report.summary()
    names = {c.name for c in report.checks}
    assert {"sampler_marginals", "swap_identity", "conditioned_expectation", "conditioned_marginal",
            "prox_contraction", "stepsize_lemma", "gamma_binomial", "lower_bound", "omega_conformance"} <= names
    assert sum(c.seconds for c in report.checks) < 60
    parsed = json.loads(report.to_json())
    assert parsed["passed"] and len(parsed["checks"]) == len(report.checks)


def test_verify_detects_corrupted_swap(monkeypatch):
    def broken(perm, a, b):
        out = list(perm)
        out[a - 1] = out[b - 1]
        return tuple(out)

    monkeypatch.setattr(samplers, "swap_transform", broken)
    report = verify_suite("fast")
    assert not report.by_name("swap_identity").passed
    assert all(c.passed for c in report.checks if c.name != "swap_identity")


def test_verify_rejects_level():
    with pytest.raises(ValueError):
        verify_suite("medium")


def test_main_run_and_sweep(tmp_path, capsys):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps(doc(replications=4)), encoding="utf-8")
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--out", str(out), "--seed", "9", "--stride", "2", "--threads", "2"]) == 0
    first = (out / "t.csv").read_bytes()
    assert main(["run", str(cfg), "--out", str(out), "--seed", "9", "--stride", "2"]) == 0
    assert (out / "t.csv").read_bytes() == first
    traj = (out / "t_trajectory.csv").read_text(encoding="utf-8").splitlines()
    assert traj[1].split(",")[5] == "2"
    assert main(["sweep-rate", str(cfg), "--out", str(out)]) == 0
    slopes = (out / "t_slopes.csv").read_text(encoding="utf-8").splitlines()
    assert slopes[0] == "n,scheme,schedule,tracker,points,slope,intercept,r2" and len(slopes) == 4
    assert "slope" in capsys.readouterr().out


def test_main_reports_config_errors(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({**MINIMAL, "scheme": "RS"}), encoding="utf-8")
    assert main(["run", str(cfg), "--out", str(tmp_path)]) == 2
    assert "scheme" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.json")]) == 2
    assert main(["run", str(cfg), "--threads", "0"]) == 2


def test_main_verify_exit_status(tmp_path, monkeypatch):
    path = tmp_path / "report.json"
    assert main(["verify", "--json", str(path)]) == 0
    assert json.loads(path.read_text())["level"] == "fast"
    monkeypatch.setattr(samplers, "swap_transform", lambda perm, a, b: tuple(sorted(perm)))
    assert main(["verify"]) == 1
