"""
Paired comparison against capacity-constrained K-means
======================================================

Both algorithms see the same users for every (seed, U_max) cell. The summary
reports paired EE improvements and link-reliability differences.
"""

# %%
import json

from uavclust import ExperimentSpec, emit_outputs, run_experiment, summarize

spec = ExperimentSpec(n_scenarios=10, u_max_sweep=(20, 50, 100), output_dir="paired_out")
rows = run_experiment(spec)
s = summarize(rows)
print(len(rows), "runs,", s["n_feasible"], "feasible,", s["n_pairs"], "pairs")

# %%
for key, v in s["ee_improvement_pct"].items():
    print(f"U_max {key:>4}: mean {v['mean']:+8.1f}%  range [{v['min']:+.0f}, {v['max']:+.0f}]  n={v['n']}")

# %% [markdown]
# Link reliability difference (DUCEM minus K-means) in percentage points.

# %%
for g, v in s["l_rel_improvement_pts"].items():
    print(f"{g:>3} dB: {v['mean']:+6.1f} pts  CI [{v['ci_low']:+.1f}, {v['ci_high']:+.1f}]")

# %%
paths = emit_outputs(rows, s, spec.output_dir, spec.gamma_th_sweep_db)
print(json.dumps({k: str(p) for k, p in paths.items()}, indent=1))
