"""Scoring shared by both algorithms and the experiment harness."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import channel
from .channel import Assignment, ChannelParams, Fleet, as_points

SNR_REL_TOL = 1e-9


@dataclass
class ScoreReport:
    rate: float
    power: float
    ee: float
    l_rel: dict = field(default_factory=dict)
    sinr: np.ndarray = None

    def check(self, rtol: float = 1e-9) -> None:
        if not abs(self.ee * self.power - self.rate) <= rtol * max(abs(self.rate), 1e-300):
            raise AssertionError(f"ee * power = {self.ee * self.power} != rate {self.rate}")
        for th, value in self.l_rel.items():
            if not 0.0 <= value <= 1.0:
                raise AssertionError(f"l_rel[{th}] = {value} outside [0, 1]")


def score(fleet: Fleet, assignment: Assignment, users, params: ChannelParams,
          thresholds=()) -> ScoreReport:
    """Rate, power, energy efficiency and link reliability of one deployment.

    ``thresholds`` are linear SINR thresholds; the report's ``l_rel`` maps each
    to the fraction of users whose link reaches it.
    """
    ee = channel.energy_efficiency(assignment, fleet, users, params)
    gamma = channel.sinr_vector(assignment, fleet, users, params)
    l_rel = {float(th): channel.link_reliability(assignment, fleet, users, params, th)
             for th in thresholds}
    return ScoreReport(rate=channel.total_rate(assignment, fleet, users, params),
                       power=channel.total_power(fleet), ee=ee, l_rel=l_rel, sinr=gamma)


def check_constraints(fleet: Fleet, assignment: Assignment, users, params: ChannelParams,
                      u_max: int, p_max: float) -> list:
    """Replay the deployment constraints link by link; return a list of violations.

    Checked: every user is served by exactly one drone, each served user's
    SNR reaches the target (relative slack ``SNR_REL_TOL``), no drone serves
    more than ``u_max`` users, no drone exceeds ``p_max``. An empty list means
    the deployment is feasible.
    """
    pts = as_points(users)
    problems = []
    w = assignment.matrix
    if w.shape != (len(fleet), pts.shape[0]):
        problems.append(f"W has shape {w.shape}, expected {(len(fleet), pts.shape[0])}")
        return problems
    col = w.sum(axis=0)
    for u in np.flatnonzero(col != 1):
        problems.append(f"user {u} served by {col[u]} drones")
    for j in range(len(fleet)):
        served = int(w[j].sum())
        if served > u_max:
            problems.append(f"drone {j} serves {served} > u_max={u_max} users")
        pj = float(fleet.power[j])
        if pj > p_max:
            problems.append(f"drone {j} power {pj} W > p_max={p_max} W")
        for u in np.flatnonzero(w[j]):
            d = float(channel.distance_3d(fleet.means[j], pts[u], params))
            value = float(channel.snr(pj, channel.channel_gain(d, params), params))
            if value < params.snr_target * (1.0 - SNR_REL_TOL):
                problems.append(f"user {u} on drone {j}: SNR {value:.6g} < target {params.snr_target:.6g}")
    return problems
