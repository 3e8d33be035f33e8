"""
DUCEM on a group-mobility snapshot
==================================

Generate a trace of five walking groups, take the last snapshot, and watch
DUCEM grow its fleet until every drone respects the user cap.
"""

# %%
import numpy as np

from uavclust import ChannelParams, DucemConfig, run_ducem, scenario
from uavclust.mobility import MobilityConfig

mob = MobilityConfig(n_groups=5, members_per_group=39, duration=60, rng_seed=3)
sc = scenario.from_mobility(mob)
pts = sc.positions
print(pts.shape, pts.min(axis=0).round(), pts.max(axis=0).round())

# %%
params = ChannelParams()
rec = run_ducem(pts, DucemConfig(u_max=50), params, record_history=True)
print("drones", rec.n_drones, "EE", f"{rec.ee_score:.4g}", "bit/J",
      "found at iteration", rec.iteration_found, "of", rec.n_iterations)

# %% [markdown]
# Fleet size and feasibility over the iterations.

# %%
for h in rec.history[:: max(1, len(rec.history) // 15)]:
    print(f"it {h['iteration']:5d}  M={h['n_drones']:2d}  max users={h['counts'].max():3d}  "
          f"feasible={h['feasible']}  max dtheta={h['max_dtheta']:.3g}")

# %%
counts = rec.assignment.counts()
for j in np.argsort(-counts):
    print(f"drone {j:2d} at {np.round(rec.fleet.means[j], 1)}  users {counts[j]:3d}  "
          f"P={rec.fleet.power[j]:.3g} W")
