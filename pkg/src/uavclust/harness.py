"""Paired DUCEM vs. K-means experiments.

Every ensemble member is one scenario seed. For each seed both algorithms
see the same user snapshot at every ``u_max`` in the sweep, so rows pair up
on ``(seed, u_max)``. A run that raises, times out or fails constraint
replay becomes an infeasible row; the ensemble always completes.

Outputs written by :func:`emit_outputs` (file names under ``output_dir``):

``rows.csv``
    One line per run. Columns: ``algorithm, seed, u_max, feasible, m_final,
    ee_bits_per_joule`` then one ``l_rel_<x>db`` column per threshold, then
    ``error``. Floats are written with ``repr`` so they parse back exactly.
    Run time is kept out of this file so reruns are byte-identical.
``timings.csv``
    ``algorithm, seed, u_max, runtime_s``.
``summary.json``
    Output of :func:`summarize`.
``ee_vs_umax.csv``
    ``u_max, algorithm, ee_mean, ee_std, n_feasible``.
``lrel_vs_threshold.csv``
    ``threshold_db, algorithm, l_rel_mean, n_feasible``.
``solutions.jsonl``
    Every feasible deployment with the users and settings needed to replay it.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from scipy import stats

from . import metrics
from .channel import ChannelParams, db_to_linear
from .ducem import DucemConfig, SolutionRecord, run_ducem
from .kmeans_baseline import KmeansConfig, run_kmeans_baseline
from .mobility import MobilityConfig
from .scenario import Scenario, configs_from_dict, configs_to_dict, from_mobility, load, static_uniform

log = logging.getLogger(__name__)

ALGORITHMS = ("ducem", "kmeans")


@dataclass
class ExperimentSpec:
    """What to run and where to write it.

    ``source`` is ``"rpgm"`` (one mobility trace per seed, last snapshot),
    ``"uniform"`` (``n_users`` uniform users over ``area_m``) or a path to a
    stored scenario file, which is then reused for every seed.
    """

    source: str = "rpgm"
    n_scenarios: int = 30
    base_seed: int = 0
    algorithms: tuple = ALGORITHMS
    u_max_sweep: tuple = (100, 250, 500, 1000, 1500)
    gamma_th_sweep_db: tuple = (0.0, 3.0, 6.0, 9.0, 12.0)
    mobility: MobilityConfig = field(default_factory=MobilityConfig)
    n_users: int = 200
    area_m: tuple = (1200.0, 1200.0)
    channel: ChannelParams = field(default_factory=ChannelParams)
    ducem: DucemConfig = field(default_factory=DucemConfig)
    kmeans: KmeansConfig = field(default_factory=KmeansConfig)
    time_limit_s: float = 300.0
    output_dir: str = "results"

    def __post_init__(self):
        self.algorithms = tuple(self.algorithms)
        self.u_max_sweep = tuple(int(u) for u in self.u_max_sweep)
        self.gamma_th_sweep_db = tuple(float(g) for g in self.gamma_th_sweep_db)
        if not self.algorithms or not self.u_max_sweep or not self.gamma_th_sweep_db:
            raise ValueError("algorithms, u_max_sweep and gamma_th_sweep_db must be nonempty")
        bad = set(self.algorithms) - set(ALGORITHMS)
        if bad:
            raise ValueError(f"unknown algorithms {sorted(bad)}")
        if self.n_scenarios < 1:
            raise ValueError("n_scenarios must be >= 1")
        if min(self.u_max_sweep) < 1:
            raise ValueError("every u_max must be >= 1")
        if self.time_limit_s is not None and not self.time_limit_s > 0:
            raise ValueError("time_limit_s must be > 0")

    def seeds(self) -> list:
        children = np.random.SeedSequence(self.base_seed).spawn(self.n_scenarios)
        return [int(c.generate_state(1)[0]) for c in children]

    def scenario(self, seed: int) -> Scenario:
        configs = {"channel": self.channel, "ducem": self.ducem, "kmeans": self.kmeans}
        if self.source == "rpgm":
            return from_mobility(self.mobility.replace(rng_seed=seed), -1, configs)
        if self.source == "uniform":
            return static_uniform(self.n_users, self.area_m, seed, configs)
        return load(self.source)

    def to_dict(self) -> dict:
        return {
            "source": self.source, "n_scenarios": self.n_scenarios, "base_seed": self.base_seed,
            "algorithms": list(self.algorithms), "u_max_sweep": list(self.u_max_sweep),
            "gamma_th_sweep_db": list(self.gamma_th_sweep_db),
            "mobility": self.mobility.to_dict(), "n_users": self.n_users,
            "area_m": list(self.area_m), "time_limit_s": self.time_limit_s,
            "output_dir": self.output_dir,
            **configs_to_dict(self.channel, self.ducem, self.kmeans),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        d = dict(d)
        if "mobility" in d:
            d["mobility"] = MobilityConfig.from_dict(d["mobility"])
        sections = {k: d.pop(k) for k in ("channel", "ducem", "kmeans") if k in d}
        d["channel"], d["ducem"], d["kmeans"] = configs_from_dict(sections)
        for key in ("area_m", "algorithms", "u_max_sweep", "gamma_th_sweep_db"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass
class ResultRow:
    algorithm: str
    seed: int
    u_max: int
    feasible: bool
    m_final: int = 0
    ee: float = math.nan
    l_rel: dict = field(default_factory=dict)  # threshold in dB -> fraction
    runtime: float = 0.0
    error: str = ""
    solution: SolutionRecord = field(default=None, repr=False, compare=False)
    # users, channel and p_max of the run, kept so the solution can be replayed
    context: dict = field(default=None, repr=False, compare=False)


def _threshold_key(db: float) -> str:
    return f"l_rel_{db:g}db"


def run_cell(scenario: Scenario, algorithm: str, u_max: int, gamma_th_db, seed: int,
             time_limit_s: float = None) -> ResultRow:
    """Run one algorithm on one scenario at one ``u_max`` and replay the result."""
    pts = scenario.positions
    p_max = scenario.ducem.p_max if algorithm == "ducem" else scenario.kmeans.p_max
    context = {"users": pts, "channel": scenario.channel, "p_max": p_max}
    t0 = time.monotonic()
    deadline = None if time_limit_s is None else t0 + time_limit_s
    try:
        if algorithm == "ducem":
            rec = run_ducem(pts, scenario.ducem.replace(u_max=u_max, rng_seed=seed),
                            scenario.channel, deadline=deadline)
        elif algorithm == "kmeans":
            rec = run_kmeans_baseline(pts, scenario.kmeans.replace(u_max=u_max, rng_seed=seed),
                                      scenario.channel, deadline=deadline)
        else:
            raise ValueError(f"unknown algorithm {algorithm!r}")
    except Exception as exc:  # a failed run is data, not a crash
        log.info("%s seed=%d u_max=%d failed: %s", algorithm, seed, u_max, exc)
        return ResultRow(algorithm, seed, u_max, False, runtime=time.monotonic() - t0,
                         error=f"{type(exc).__name__}: {exc}".replace("\n", " "),
                         context=context)
    runtime = time.monotonic() - t0
    problems = metrics.check_constraints(rec.fleet, rec.assignment, pts, scenario.channel,
                                         u_max, p_max)
    if time_limit_s is not None and runtime > time_limit_s:
        problems.append(f"time limit {time_limit_s} s exceeded")
    thresholds = [float(db_to_linear(g)) for g in gamma_th_db]
    report = metrics.score(rec.fleet, rec.assignment, pts, scenario.channel, thresholds)
    l_rel = {float(g): report.l_rel[th] for g, th in zip(gamma_th_db, thresholds)}
    return ResultRow(algorithm, seed, u_max, not problems, rec.n_drones, report.ee, l_rel,
                     runtime, "; ".join(problems[:3]), rec, context)


def run_experiment(spec: ExperimentSpec, progress=None) -> list:
    """Execute the (seed, algorithm, u_max) product in that order.

    ``progress`` (if given) is called with each finished row.
    """
    rows = []
    for seed in spec.seeds():
        scenario = spec.scenario(seed)
        for algorithm in spec.algorithms:
            for u_max in spec.u_max_sweep:
                row = run_cell(scenario, algorithm, u_max, spec.gamma_th_sweep_db, seed,
                               spec.time_limit_s)
                rows.append(row)
                if progress is not None:
                    progress(row)
    return rows


def _mean_ci(values, level: float = 0.95) -> dict:
    x = np.asarray(values, dtype=float)
    n = x.size
    if n == 0:
        return {"n": 0, "mean": None, "std": None, "ci_low": None, "ci_high": None,
                "min": None, "max": None}
    mean = float(x.mean())
    std = float(x.std(ddof=1)) if n > 1 else 0.0
    if n > 1 and std > 0:
        half = float(stats.t.ppf(0.5 + level / 2, n - 1) * std / math.sqrt(n))
    else:
        half = 0.0
    return {"n": n, "mean": mean, "std": std, "ci_low": mean - half, "ci_high": mean + half,
            "min": float(x.min()), "max": float(x.max())}


def improvement_pct(ee_new: float, ee_ref: float) -> float:
    """Relative EE gain of ``ee_new`` over ``ee_ref`` in percent."""
    return 100.0 * (ee_new - ee_ref) / ee_ref


def summarize(rows, baseline: str = "kmeans", candidate: str = "ducem") -> dict:
    """Aggregate statistics over feasible rows.

    ``ee``: per algorithm and ``u_max``, mean and sample std of EE.
    ``l_rel``: per algorithm and threshold (dB), mean link reliability.
    ``ee_improvement_pct``: paired ``100 (EE_cand - EE_base) / EE_base`` per
    ``u_max`` and pooled, with 95 % t intervals, min and max.
    ``l_rel_improvement_pts``: paired ``100 (L_cand - L_base)`` (percentage
    points) per threshold, pooled over ``u_max``.
    Pairs where either side is infeasible are dropped and counted.
    """
    rows = list(rows)
    if not rows:
        raise ValueError("need at least one row")
    algorithms = sorted({r.algorithm for r in rows})
    u_values = sorted({r.u_max for r in rows})
    thresholds = sorted({g for r in rows for g in r.l_rel})
    ok = [r for r in rows if r.feasible]

    ee = {}
    for alg in algorithms:
        for u in u_values:
            vals = [r.ee for r in ok if r.algorithm == alg and r.u_max == u]
            ee[f"{alg}|{u}"] = {"algorithm": alg, "u_max": u, **_mean_ci(vals)}
    l_rel = {}
    for alg in algorithms:
        for g in thresholds:
            vals = [r.l_rel[g] for r in ok if r.algorithm == alg and g in r.l_rel]
            l_rel[f"{alg}|{g:g}"] = {"algorithm": alg, "threshold_db": g,
                                     "mean": float(np.mean(vals)) if vals else None,
                                     "n": len(vals)}

    by_key = {(r.algorithm, r.seed, r.u_max): r for r in rows}
    pairs = []
    unpaired = 0
    for (alg, seed, u), r in sorted(by_key.items()):
        if alg != candidate:
            continue
        base = by_key.get((baseline, seed, u))
        if base is None:
            continue
        if r.feasible and base.feasible:
            pairs.append((u, r, base))
        else:
            unpaired += 1
    ee_imp = {str(u): _mean_ci([improvement_pct(c.ee, b.ee) for uu, c, b in pairs if uu == u])
              for u in u_values}
    ee_imp["all"] = _mean_ci([improvement_pct(c.ee, b.ee) for _, c, b in pairs])
    l_imp = {f"{g:g}": _mean_ci([100.0 * (c.l_rel[g] - b.l_rel[g]) for _, c, b in pairs])
             for g in thresholds}
    return {"algorithms": algorithms, "u_max": u_values, "thresholds_db": thresholds,
            "n_rows": len(rows), "n_feasible": len(ok), "n_pairs": len(pairs),
            "n_pairs_dropped": unpaired, "ee": ee, "l_rel": l_rel,
            "ee_improvement_pct": ee_imp, "l_rel_improvement_pts": l_imp}


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def row_header(thresholds_db) -> list:
    return (["algorithm", "seed", "u_max", "feasible", "m_final", "ee_bits_per_joule"]
            + [_threshold_key(g) for g in thresholds_db] + ["error"])


def write_rows_csv(path, rows, thresholds_db) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(row_header(thresholds_db))
            for r in rows:
                w.writerow([r.algorithm, r.seed, r.u_max, _fmt(r.feasible), r.m_final, _fmt(r.ee)]
                           + [_fmt(r.l_rel.get(g, math.nan)) for g in thresholds_db] + [r.error])
    except OSError as exc:
        raise OSError(f"cannot write rows to {path}: {exc}") from exc


def read_rows_csv(path) -> list:
    """Parse a ``rows.csv`` back into :class:`ResultRow` objects (runtime = 0)."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        l_cols = [(i, float(h[len("l_rel_"):-len("db")])) for i, h in enumerate(header)
                  if h.startswith("l_rel_")]
        rows = []
        for rec in reader:
            l_rel = {g: float(rec[i]) for i, g in l_cols if not math.isnan(float(rec[i]))}
            rows.append(ResultRow(rec[0], int(rec[1]), int(rec[2]), rec[3] == "1", int(rec[4]),
                                  float(rec[5]), l_rel, 0.0, rec[-1]))
    return rows


def _write_csv(path, header, lines) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(lines)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def solution_line(row: ResultRow) -> dict:
    ctx = row.context
    return {"algorithm": row.algorithm, "seed": row.seed, "u_max": row.u_max,
            "p_max_w": ctx["p_max"], "channel": asdict(ctx["channel"]),
            "users_m": np.asarray(ctx["users"]).tolist(),
            "solution": row.solution.to_dict()}


def replay_solution(line: dict) -> list:
    """Re-check one ``solutions.jsonl`` entry; return the violations found."""
    rec = SolutionRecord.from_dict(line["solution"])
    params = ChannelParams(**line["channel"])
    users = np.array(line["users_m"], dtype=float).reshape(-1, 2)
    problems = metrics.check_constraints(rec.fleet, rec.assignment, users, params,
                                         line["u_max"], line["p_max_w"])
    ee = metrics.score(rec.fleet, rec.assignment, users, params).ee
    if not math.isclose(ee, rec.ee_score, rel_tol=1e-9):
        problems.append(f"stored EE {rec.ee_score} != recomputed {ee}")
    return problems


def emit_outputs(rows, summary: dict, output_dir, thresholds_db=None) -> dict:
    """Write every output file under ``output_dir``; return their paths by name."""
    out = Path(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    rows = list(rows)
    if thresholds_db is None:
        thresholds_db = summary.get("thresholds_db", []) if summary else []
    paths = {name: out / name for name in ("rows.csv", "timings.csv", "summary.json",
                                           "ee_vs_umax.csv", "lrel_vs_threshold.csv",
                                           "solutions.jsonl")}
    write_rows_csv(paths["rows.csv"], rows, thresholds_db)
    _write_csv(paths["timings.csv"], ["algorithm", "seed", "u_max", "runtime_s"],
               [[r.algorithm, r.seed, r.u_max, f"{r.runtime:.6f}"] for r in rows])
    summary = summary or {}
    try:
        paths["summary.json"].write_text(json.dumps(summary, sort_keys=True, indent=1) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {paths['summary.json']}: {exc}") from exc
    ee_lines = [[v["u_max"], v["algorithm"], _fmt(v["mean"]), _fmt(v["std"]), v["n"]]
                for v in sorted(summary.get("ee", {}).values(),
                                key=lambda v: (v["u_max"], v["algorithm"]))]
    _write_csv(paths["ee_vs_umax.csv"], ["u_max", "algorithm", "ee_mean", "ee_std", "n_feasible"],
               ee_lines)
    l_lines = [[_fmt(v["threshold_db"]), v["algorithm"], _fmt(v["mean"]), v["n"]]
               for v in sorted(summary.get("l_rel", {}).values(),
                               key=lambda v: (v["threshold_db"], v["algorithm"]))]
    _write_csv(paths["lrel_vs_threshold.csv"],
               ["threshold_db", "algorithm", "l_rel_mean", "n_feasible"], l_lines)
    try:
        with paths["solutions.jsonl"].open("w") as fh:
            for r in rows:
                if r.feasible and r.solution is not None and r.context is not None:
                    fh.write(json.dumps(solution_line(r), sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {paths['solutions.jsonl']}: {exc}") from exc
    return paths
