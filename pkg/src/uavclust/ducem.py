"""Drone user clustering with a constrained EM loop.

Each mixture component is a drone small cell: its mean is the drone's ground
position and its scalar (isotropic) variance acts as the cell's reach. On top
of the plain EM update the loop

* caps every variance at ``sigma_max`` and limits its growth per iteration to
  ``d_sigma_max``,
* refuses variance growth for drones already serving more than ``u_max`` users,
* assigns users by standardized distance (slant distance / variance),
* moves each drone over the centroid of the users it serves,
* sets each drone's power so its farthest user just reaches the SNR target,
* adds a drone whenever the parameters settle on an infeasible configuration,
* keeps the feasible iterate with the highest energy efficiency.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.special import logsumexp

from . import channel
from .channel import Assignment, ChannelParams, Fleet, UserField, as_points
from .em_core import COV_FLOOR

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


class NoFeasibleSolution(RuntimeError):
    """No configuration satisfying the user/power caps was found.

    ``diagnostics`` carries the last (infeasible) state for inspection.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class MaxDronesExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class DucemConfig:
    """Knobs of the constrained EM loop.

    Variance-like quantities (``sigma_max``, ``d_sigma_max``) are in m^2 and
    ``eps1``/``eps2`` apply to the largest per-iteration change of any drone
    mean (m) or variance (m^2). ``sigma_max=None`` derives the cap from the
    users' bounding box, ``max_drones=None`` allows one drone per user.

    The defaults keep ``eps2 < eps1`` and both above ``d_sigma_max``: a
    variance creeping up at the rate limit then cannot hold ``maxdθ`` above
    either threshold forever.
    """

    u_max: int = 100
    p_max: float = 1.0
    sigma_max: float = None
    d_sigma_max: float = 0.1
    eps1: float = 0.5
    eps2: float = 0.2
    max_iterations: int = 10_000
    max_drones: int = None
    rng_seed: int = 0
    init_drones: int = 1
    jitter: float = 1.0
    time_limit: float = None

    def __post_init__(self):
        if self.u_max < 1:
            raise ValueError("u_max must be >= 1")
        if not self.p_max > 0:
            raise ValueError("p_max must be > 0")
        if self.sigma_max is not None and not self.sigma_max > 0:
            raise ValueError("sigma_max must be > 0")
        if not self.d_sigma_max > 0:
            raise ValueError("d_sigma_max must be > 0")
        if not (self.eps1 > 0 and self.eps2 > 0):
            raise ValueError("eps1 and eps2 must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.max_drones is not None and self.max_drones < 1:
            raise ValueError("max_drones must be >= 1")
        if self.init_drones < 1:
            raise ValueError("init_drones must be >= 1")

    def replace(self, **changes) -> "DucemConfig":
        d = asdict(self)
        d.update(changes)
        return DucemConfig(**d)


@dataclass
class SolutionRecord:
    """A complete candidate deployment and its score."""

    fleet: Fleet
    assignment: Assignment
    ee_score: float
    iteration_found: int = 0
    feasible: bool = True
    algorithm: str = "ducem"
    n_iterations: int = 0
    history: list = field(default=None, repr=False)

    @property
    def n_drones(self) -> int:
        return len(self.fleet)

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "feasible": bool(self.feasible),
            "ee_score": float(self.ee_score),
            "iteration_found": int(self.iteration_found),
            "n_iterations": int(self.n_iterations),
            "means_m": self.fleet.means.tolist(),
            "sigma_m2": self.fleet.sigma.tolist(),
            "mixing": self.fleet.mixing.tolist(),
            "power_w": self.fleet.power.tolist(),
            "labels": self.assignment.labels.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SolutionRecord":
        fleet = Fleet(np.array(d["means_m"], dtype=float).reshape(-1, 2), d["sigma_m2"],
                      d["mixing"], d["power_w"])
        return cls(fleet=fleet, assignment=Assignment(d["labels"], len(fleet)),
                   ee_score=d["ee_score"], iteration_found=d["iteration_found"],
                   feasible=d["feasible"], algorithm=d["algorithm"],
                   n_iterations=d.get("n_iterations", 0))


def sed(drone, user_pos, h: float):
    """Standardized Euclidean distance: slant distance over the drone's variance.

    ``drone`` is a :class:`~uavclust.channel.DroneState` or a ``(mean, sigma)`` pair.
    """
    if isinstance(drone, channel.DroneState):
        mean, sigma = drone.mean, drone.sigma
    else:
        mean, sigma = drone
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise ValueError("sigma must be > 0")
    diff = np.asarray(mean, dtype=float) - np.asarray(user_pos, dtype=float)
    return np.sqrt(np.sum(diff * diff, axis=-1) + h * h) / sigma


def _sed_labels(means, sigma, points, h) -> np.ndarray:
    d = np.sqrt(((means[:, None, :] - points[None, :, :]) ** 2).sum(-1) + h * h)
    # argmin returns the first minimum: ties go to the lowest drone index
    return np.argmin(d / sigma[:, None], axis=0)


def assign_users(fleet: Fleet, users, h: float) -> Assignment:
    if len(fleet) == 0:
        raise ValueError("fleet must contain at least one drone")
    if np.any(fleet.sigma <= 0):
        raise ValueError("every sigma must be > 0")
    pts = as_points(users)
    return Assignment(_sed_labels(fleet.means, fleet.sigma, pts, h), len(fleet))


def clamp_sigma_update(sigma_old, sigma_new_raw, u_j_current, config: DucemConfig,
                       sigma_max: float = None):
    """Apply the variance growth rules; vectorizes over drones.

    Decreases are always accepted. Increases are refused for drones serving
    more than ``u_max`` users, otherwise limited to ``d_sigma_max`` per call.
    The result never exceeds ``sigma_max``.
    """
    if sigma_max is None:
        sigma_max = config.sigma_max if config.sigma_max is not None else np.inf
    sigma_old = np.asarray(sigma_old, dtype=float)
    raw = np.asarray(sigma_new_raw, dtype=float)
    over = np.asarray(u_j_current) > config.u_max
    grow = raw > sigma_old
    out = np.where(grow, np.where(over, sigma_old, np.minimum(raw, sigma_old + config.d_sigma_max)), raw)
    out = np.minimum(out, sigma_max)
    return float(out) if out.ndim == 0 else out


def recenter_drones(fleet: Fleet, assignment: Assignment, users) -> Fleet:
    """Move each drone with users over their centroid; empty drones stay put."""
    pts = as_points(users)
    out = fleet.copy()
    counts = assignment.counts()
    sums = np.zeros((len(fleet), 2))
    np.add.at(sums, assignment.labels, pts)
    busy = counts > 0
    out.means[busy] = sums[busy] / counts[busy, None]
    return out


def _cluster_powers(means, labels, points, n_drones, params: ChannelParams) -> np.ndarray:
    d = channel.distance_3d(means[labels], points, params)
    d_max = np.zeros(n_drones)
    np.maximum.at(d_max, labels, d)
    return np.where(d_max > 0, channel.required_power(np.maximum(d_max, params.altitude), params), 0.0)


def compute_powers(fleet: Fleet, assignment: Assignment, users, params: ChannelParams) -> Fleet:
    """Set each drone's power to the least value meeting the SNR target at its farthest user."""
    out = fleet.copy()
    out.power = _cluster_powers(fleet.means, assignment.labels, as_points(users), len(fleet), params)
    return out


def is_feasible(fleet: Fleet, assignment: Assignment, u_max: int, p_max: float) -> bool:
    return bool(np.all(assignment.counts() <= u_max) and np.all(fleet.power <= p_max))


def add_drone(fleet: Fleet, users, assignment: Assignment, rng: np.random.Generator,
              u_max: int = None, p_max: float = None, max_drones: int = None,
              jitter: float = 1.0) -> Fleet:
    """Grow the fleet by one drone placed near the worst-violating cluster.

    The cluster with the largest user excess (then the largest power excess)
    donates half of its mixing weight and its variance to a new drone placed at
    its users' centroid plus ``jitter`` meters of seeded noise.
    """
    if max_drones is not None and len(fleet) + 1 > max_drones:
        raise MaxDronesExceeded(f"cannot exceed {max_drones} drones")
    pts = as_points(users)
    counts = assignment.counts()
    user_excess = counts - (u_max if u_max is not None else 0)
    power_excess = fleet.power - (p_max if p_max is not None else 0.0)
    # lexsort: last key is primary
    parent = int(np.lexsort((-power_excess, -user_excess))[0])
    members = assignment.members(parent)
    centre = pts[members].mean(axis=0) if members.size else fleet.means[parent]
    new_mean = centre + jitter * rng.standard_normal(2)
    out = fleet.copy()
    half = out.mixing[parent] / 2.0
    out.mixing[parent] = half
    out.means = np.vstack([out.means, new_mean])
    out.sigma = np.append(out.sigma, out.sigma[parent])
    out.mixing = np.append(out.mixing, half)
    out.mixing /= out.mixing.sum()
    out.power = np.append(out.power, 0.0)
    return out


def default_sigma_max(points: np.ndarray, h: float) -> float:
    side = max(float(np.ptp(points[:, 0])), float(np.ptp(points[:, 1])), h)
    return (side / 2.0) ** 2


def initial_fleet(points: np.ndarray, n_drones: int, rng: np.random.Generator, h: float,
                  sigma_max: float) -> Fleet:
    lo, hi = points.min(axis=0), points.max(axis=0)
    means = lo + rng.random((n_drones, 2)) * (hi - lo)
    diag = max(float(np.hypot(*(hi - lo))), h)
    sigma = np.full(n_drones, min((diag / 4.0) ** 2, sigma_max))
    return Fleet(means, sigma, np.full(n_drones, 1.0 / n_drones))


def _em_update(points, means, sigma, mixing):
    """One isotropic EM step; components with vanishing weight keep their parameters."""
    sq = ((points[None, :, :] - means[:, None, :]) ** 2).sum(-1)
    with np.errstate(divide="ignore"):
        lw = np.log(mixing)[:, None] - np.log(2.0 * np.pi * sigma)[:, None] - sq / (2.0 * sigma[:, None])
    resp = np.exp(lw - logsumexp(lw, axis=0))
    n_hat = resp.sum(axis=1)
    alive = n_hat > 1e-12
    new_mix = n_hat / points.shape[0]
    new_mix /= new_mix.sum()
    new_means = means.copy()
    new_means[alive] = (resp[alive] @ points) / n_hat[alive, None]
    sq_new = ((points[None, :, :] - new_means[:, None, :]) ** 2).sum(-1)
    raw = sigma.copy()
    # scalar variance = mean of the diagonal of the weighted covariance
    raw[alive] = (resp[alive] * sq_new[alive]).sum(axis=1) / (2.0 * n_hat[alive])
    raw = np.maximum(raw, COV_FLOOR)
    return new_mix, new_means, raw


def run_ducem(users, config: DucemConfig, params: ChannelParams, record_history: bool = False,
              deadline: float = None) -> SolutionRecord:
    """Cluster ``users`` and deploy drones; return the best-EE feasible iterate.

    Raises :class:`NoFeasibleSolution` if the safety bounds (iterations, drone
    count, time limit) trip before any feasible iterate is seen.
    """
    if not isinstance(config, DucemConfig):
        raise TypeError("config must be a DucemConfig")
    points = as_points(users)
    n_users = points.shape[0]
    if n_users == 0:
        raise ValueError("need at least one user")
    h = params.altitude
    rng = np.random.default_rng(config.rng_seed)
    sigma_max = config.sigma_max if config.sigma_max is not None else default_sigma_max(points, h)
    max_drones = config.max_drones if config.max_drones is not None else n_users
    if config.time_limit is not None:
        t_end = time.monotonic() + config.time_limit
        deadline = t_end if deadline is None else min(deadline, t_end)

    fleet = initial_fleet(points, min(config.init_drones, max_drones), rng, h, sigma_max)
    # mixture state; drone positions (the fleet means) are the served-user centroids
    em_means = fleet.means.copy()
    best = None
    history = [] if record_history else None
    max_dtheta = np.inf
    labels = np.zeros(n_users, dtype=int)
    stop_reason = "max_iterations"
    it = 0
    for it in range(1, config.max_iterations + 1):
        prev_means, prev_sigma = em_means, fleet.sigma
        mixing, em_means, sigma_raw = _em_update(points, em_means, fleet.sigma, fleet.mixing)

        labels = _sed_labels(em_means, fleet.sigma, points, h)
        m = len(fleet)
        counts = np.bincount(labels, minlength=m)
        sums = np.zeros((m, 2))
        np.add.at(sums, labels, points)
        positions = em_means.copy()
        busy = counts > 0
        positions[busy] = sums[busy] / counts[busy, None]
        power = _cluster_powers(positions, labels, points, m, params)
        sigma = clamp_sigma_update(fleet.sigma, sigma_raw, counts, config, sigma_max)
        fleet = Fleet(positions, sigma, mixing, power)
        assignment = Assignment(labels, m)

        max_dtheta = max(float(np.max(np.hypot(*(em_means - prev_means).T))),
                         float(np.max(np.abs(sigma - prev_sigma))))
        feasible = bool(np.all(counts <= config.u_max) and np.all(power <= config.p_max))
        ee = None
        if feasible:
            ee = channel.energy_efficiency(assignment, fleet, points, params)
            if best is None or ee > best.ee_score:
                best = SolutionRecord(fleet.copy(), assignment, ee, iteration_found=it,
                                      feasible=True, algorithm="ducem")
        if history is not None:
            history.append({"iteration": it, "n_drones": m, "sigma_before": prev_sigma,
                            "sigma_raw": sigma_raw, "sigma_after": sigma,
                            "counts": counts, "feasible": feasible, "ee": ee,
                            "max_dtheta": max_dtheta})

        if feasible and max_dtheta <= config.eps1:
            stop_reason = "converged"
            break
        if not feasible and max_dtheta < config.eps2:
            if m + 1 > max_drones:
                stop_reason = "max_drones"
                break
            grown = add_drone(Fleet(em_means, sigma, mixing, power), points, assignment, rng,
                              config.u_max, config.p_max, max_drones, config.jitter)
            em_means = grown.means
            fleet = Fleet(np.vstack([positions, grown.means[-1:]]), grown.sigma, grown.mixing,
                          grown.power)
            max_dtheta = np.inf
            log.debug("iteration %d: added drone, M=%d", it, len(fleet))
        if deadline is not None and time.monotonic() > deadline:
            stop_reason = "time_limit"
            break

    if best is None:
        raise NoFeasibleSolution(
            f"no feasible deployment found ({stop_reason} after {it} iterations, M={len(fleet)})",
            {"stop_reason": stop_reason, "iterations": it, "n_drones": len(fleet),
             "counts": np.bincount(labels, minlength=len(fleet)).tolist(),
             "power_w": fleet.power.tolist(), "history": history})
    best.n_iterations = it
    best.history = history
    log.debug("ducem stopped (%s) after %d iterations, best M=%d", stop_reason, it, best.n_drones)
    return best
