import json
import math

import numpy as np
import pytest

from uavclust import harness
from uavclust.harness import ExperimentSpec, ResultRow
from uavclust.mobility import MobilityConfig

SMALL = MobilityConfig(n_groups=3, members_per_group=9, duration=10)


def small_spec(tmp_path=None, **kw):
    d = dict(n_scenarios=2, u_max_sweep=(10, 40), mobility=SMALL,
             output_dir=str(tmp_path or "unused"))
    d.update(kw)
    return ExperimentSpec(**d)


def test_spec_validation():
    for bad in ({"u_max_sweep": ()}, {"gamma_th_sweep_db": ()}, {"algorithms": ("x",)},
                {"n_scenarios": 0}, {"u_max_sweep": (0,)}, {"time_limit_s": 0}):
        with pytest.raises(ValueError):
            ExperimentSpec(**bad)
    spec = small_spec()
    assert ExperimentSpec.from_dict(json.loads(json.dumps(spec.to_dict()))).to_dict() == spec.to_dict()


def test_single_cell():
    rows = harness.run_experiment(small_spec(n_scenarios=1, algorithms=("kmeans",), u_max_sweep=(40,)))
    assert len(rows) == 1


def test_rows_pair_up():
    spec = small_spec()
    rows = harness.run_experiment(spec)
    assert len(rows) == 2 * 2 * 2
    keys = {(r.seed, r.u_max) for r in rows}
    for seed, u in keys:
        algs = sorted(r.algorithm for r in rows if (r.seed, r.u_max) == (seed, u))
        assert algs == ["ducem", "kmeans"]
    # both algorithms saw the same users
    for seed in {r.seed for r in rows}:
        users = [r.context["users"] for r in rows if r.seed == seed]
        assert all(np.array_equal(users[0], u) for u in users)


def test_failures_become_infeasible_rows():
    spec = small_spec(n_scenarios=1, u_max_sweep=(1,),
                      ducem=harness.DucemConfig(max_drones=2, max_iterations=50))
    rows = harness.run_experiment(spec)
    d = [r for r in rows if r.algorithm == "ducem"][0]
    assert not d.feasible and "NoFeasibleSolution" in d.error


def row(alg, seed, u, ee, l_rel=None, feasible=True):
    return ResultRow(alg, seed, u, feasible, 3, ee, l_rel or {0.0: 0.5})


def test_summary_statistics():
    one = harness.summarize([row("ducem", 1, 10, 5.0)])
    assert one["ee"]["ducem|10"]["mean"] == 5.0
    same = harness.summarize([row("ducem", s, 10, 5.0) for s in range(4)])
    assert same["ee"]["ducem|10"]["std"] == 0.0
    with pytest.raises(ValueError):
        harness.summarize([])


def test_improvement_by_hand():
    rows = [row("ducem", 1, 10, 12.0, {0.0: 0.9}), row("kmeans", 1, 10, 10.0, {0.0: 0.8}),
            row("ducem", 2, 10, 9.0, {0.0: 0.5}), row("kmeans", 2, 10, 12.0, {0.0: 0.6}),
            row("ducem", 3, 10, 30.0, {0.0: 1.0}), row("kmeans", 3, 10, 20.0, {0.0: 1.0}),
            row("ducem", 4, 10, 1.0, feasible=False), row("kmeans", 4, 10, 1.0)]
    s = harness.summarize(rows)
    imp = s["ee_improvement_pct"]["10"]
    # (12-10)/10 = 20 %, (9-12)/12 = -25 %, (30-20)/20 = 50 %
    assert imp["n"] == 3
    assert imp["mean"] == pytest.approx((20 - 25 + 50) / 3)
    assert imp["min"] == pytest.approx(-25) and imp["max"] == pytest.approx(50)
    sd = np.std([20, -25, 50], ddof=1)
    half = 4.302652729911275 * sd / math.sqrt(3)  # t(0.975, 2)
    assert imp["ci_low"] == pytest.approx(imp["mean"] - half)
    assert s["l_rel_improvement_pts"]["0"]["mean"] == pytest.approx((10 - 10 + 0) / 3)
    assert s["n_pairs_dropped"] == 1


def test_outputs(tmp_path):
    spec = small_spec(tmp_path)
    rows = harness.run_experiment(spec)
    summary = harness.summarize(rows)
    paths = harness.emit_outputs(rows, summary, tmp_path, spec.gamma_th_sweep_db)
    back = harness.read_rows_csv(paths["rows.csv"])
    assert len(back) == len(rows)
    for a, b in zip(rows, back):
        assert (a.algorithm, a.seed, a.u_max, a.feasible, a.m_final, a.error) == \
               (b.algorithm, b.seed, b.u_max, b.feasible, b.m_final, b.error)
        assert (math.isnan(a.ee) and math.isnan(b.ee)) or a.ee == b.ee
        assert a.l_rel == b.l_rel
    n_plot = len(paths["ee_vs_umax.csv"].read_text().splitlines()) - 1
    assert n_plot == len(spec.u_max_sweep) * len(spec.algorithms)
    n_plot = len(paths["lrel_vs_threshold.csv"].read_text().splitlines()) - 1
    assert n_plot == len(spec.gamma_th_sweep_db) * len(spec.algorithms)
    for line in paths["solutions.jsonl"].read_text().splitlines():
        assert harness.replay_solution(json.loads(line)) == []
    assert json.loads(paths["summary.json"].read_text())["n_rows"] == len(rows)


def test_empty_rows_give_header_only(tmp_path):
    paths = harness.emit_outputs([], {}, tmp_path, (0.0, 3.0))
    assert paths["rows.csv"].read_text().splitlines() == [",".join(harness.row_header((0.0, 3.0)))]
    assert harness.read_rows_csv(paths["rows.csv"]) == []


def test_replay_detects_tampering(tmp_path):
    spec = small_spec(tmp_path, n_scenarios=1, algorithms=("kmeans",), u_max_sweep=(10,))
    rows = harness.run_experiment(spec)
    line = harness.solution_line(rows[0])
    line["solution"]["power_w"][0] *= 0.5
    assert harness.replay_solution(line)


def test_output_errors_name_the_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="file"):
        harness.emit_outputs([], {}, blocker / "sub")
