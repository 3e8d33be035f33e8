"""
Channel model and the single-user case
======================================

Path loss, SINR, energy efficiency, and the one-user deployment both
algorithms must agree on.
"""

# %%
import math

import numpy as np

from uavclust import channel, run_ducem, run_kmeans_baseline
from uavclust import ChannelParams, DucemConfig, KmeansConfig

params = ChannelParams()
print(params.to_db_dict())

# %% [markdown]
# The power a drone needs to hit the SNR target grows with the square of the
# slant distance (path-loss exponent 2). Directly above a user the slant
# distance is the altitude.

# %%
for d in (10.0, 50.0, 100.0):
    print(f"d = {d:5.0f} m  ->  P = {channel.required_power(d, params):.4g} W")

# %%
user = [[37.0, -12.0]]
d_rec = run_ducem(user, DucemConfig(), params)
k_rec = run_kmeans_baseline(user, KmeansConfig(), params)
hand = params.bandwidth * math.log2(1 + params.snr_target) / channel.required_power(params.altitude, params)
print("DUCEM  ", d_rec.fleet.means[0], d_rec.fleet.power[0], d_rec.ee_score)
print("K-means", k_rec.fleet.means[0], k_rec.fleet.power[0], k_rec.ee_score)
print("by hand", hand)

# %% [markdown]
# Two drones serving two users: interference makes SINR fall below SNR, and
# it falls faster as the drones get closer.

# %%
users = np.array([[0.0, 0.0], [1.0, 0.0]])
for gap in (20.0, 100.0, 500.0):
    users[1, 0] = gap
    fleet = channel.Fleet(users, [1.0, 1.0], [0.5, 0.5],
                          [channel.required_power(params.altitude, params)] * 2)
    a = channel.Assignment([0, 1], 2)
    sinr_db = channel.linear_to_db(channel.sinr_vector(a, fleet, users, params))
    print(f"gap {gap:4.0f} m  SINR {np.round(sinr_db, 2)} dB")
