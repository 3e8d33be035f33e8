"""Capacity- and power-constrained K-means baseline.

Lloyd clustering seeded with k-means++, followed by recursive two-way
splitting of every cluster that serves too many users or needs too much
power. The restart with the best energy efficiency wins.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, asdict

import numpy as np

from . import channel
from .channel import Assignment, ChannelParams, Fleet, as_points
from .ducem import NoFeasibleSolution, SolutionRecord, _cluster_powers

log = logging.getLogger(__name__)


class SplitDepthExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class KmeansConfig:
    restarts: int = 10
    u_max: int = 100
    p_max: float = 1.0
    rng_seed: int = 0
    max_split_depth: int = 32
    start_k: int = None  # None: ceil(U / u_max); 1 starts from a single drone
    max_lloyd_iterations: int = 300

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.u_max < 1:
            raise ValueError("u_max must be >= 1")
        if not self.p_max > 0:
            raise ValueError("p_max must be > 0")
        if self.start_k is not None and self.start_k < 1:
            raise ValueError("start_k must be >= 1")

    def replace(self, **changes) -> "KmeansConfig":
        d = asdict(self)
        d.update(changes)
        return KmeansConfig(**d)


def kmeanspp_init(users, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding; returns (k, 2) centers drawn from the user positions.

    The first center is uniform over users; each later one is drawn by
    inverse-CDF sampling (one ``rng.random()`` per draw) with probability
    proportional to the squared distance to the nearest chosen center.
    """
    pts = as_points(users)
    n = pts.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    chosen = [int(rng.integers(n))]
    d2 = np.sum((pts - pts[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        u = rng.random()
        if total > 0:
            idx = int(np.searchsorted(np.cumsum(d2), u * total, side="right"))
            if idx >= n:
                # u * total rounded up to the full sum
                idx = int(np.flatnonzero(d2 > 0)[-1])
        else:
            # every remaining point coincides with a center
            free = np.setdiff1d(np.arange(n), chosen)
            idx = int(free[min(int(u * free.size), free.size - 1)])
        chosen.append(idx)
        d2 = np.minimum(d2, np.sum((pts - pts[idx]) ** 2, axis=1))
    return pts[chosen].copy()


def _nearest(pts, centers):
    sq = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
    return np.argmin(sq, axis=1), sq


def lloyd_cluster(users, k: int, rng: np.random.Generator, init=None, max_iter: int = 300):
    """Lloyd iterations on 2-D ground distance until the partition is stable.

    An empty cluster is re-seeded at the point farthest from its nearest center.
    Returns ``(centers, assignment)``.
    """
    pts = as_points(users)
    n = pts.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    centers = kmeanspp_init(pts, k, rng) if init is None else np.array(init, dtype=float).reshape(k, 2)
    labels = None
    for _ in range(max_iter):
        new_labels, sq = _nearest(pts, centers)
        counts = np.bincount(new_labels, minlength=k)
        for j in np.flatnonzero(counts == 0):
            far = int(np.argmax(sq[np.arange(n), new_labels]))
            centers[j] = pts[far]
            new_labels, sq = _nearest(pts, centers)
        counts = np.bincount(new_labels, minlength=k)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        sums = np.zeros((k, 2))
        np.add.at(sums, labels, pts)
        busy = counts > 0
        centers[busy] = sums[busy] / counts[busy, None]
    return centers, Assignment(labels, k)


def _violates(pts, u_max, p_max, params) -> bool:
    if pts.shape[0] > u_max:
        return True
    centre = pts.mean(axis=0)
    d = channel.distance_3d(centre, pts, params).max()
    return bool(channel.required_power(d, params) > p_max)


def split_violating_cluster(cluster_users, rng: np.random.Generator, depth: int = 0, *,
                            u_max: int, p_max: float, params: ChannelParams,
                            max_depth: int = 32, trace: list = None) -> list:
    """Recursively bisect a violating cluster until every piece complies.

    Returns a list of index arrays into ``cluster_users``. ``trace`` (if given)
    collects the depth of every split performed.
    """
    pts = as_points(cluster_users)
    idx = np.arange(pts.shape[0])
    if not _violates(pts, u_max, p_max, params):
        return [idx]
    if depth >= max_depth:
        raise SplitDepthExceeded(f"cluster of {pts.shape[0]} users still violates at depth {depth}")
    if pts.shape[0] < 2 or np.all(pts == pts[0]):
        raise SplitDepthExceeded("cannot split a cluster of coincident users")
    if trace is not None:
        trace.append(depth)
    _, sub = lloyd_cluster(pts, 2, rng)
    out = []
    for j in range(2):
        members = sub.members(j)
        if members.size == 0:
            continue
        for piece in split_violating_cluster(pts[members], rng, depth + 1, u_max=u_max,
                                             p_max=p_max, params=params, max_depth=max_depth,
                                             trace=trace):
            out.append(members[piece])
    return out


def _restart(pts, config: KmeansConfig, params: ChannelParams, rng) -> SolutionRecord:
    n = pts.shape[0]
    k = config.start_k if config.start_k is not None else math.ceil(n / config.u_max)
    k = min(k, n)
    _, assignment = lloyd_cluster(pts, k, rng, max_iter=config.max_lloyd_iterations)
    groups = []
    for j in range(k):
        members = assignment.members(j)
        for piece in split_violating_cluster(pts[members], rng, u_max=config.u_max,
                                             p_max=config.p_max, params=params,
                                             max_depth=config.max_split_depth):
            groups.append(members[piece])
    labels = np.empty(n, dtype=int)
    for j, members in enumerate(groups):
        labels[members] = j
    m = len(groups)
    means = np.array([pts[g].mean(axis=0) for g in groups])
    power = _cluster_powers(means, labels, pts, m, params)
    counts = np.bincount(labels, minlength=m)
    fleet = Fleet(means, sigma=np.ones(m), mixing=counts / n, power=power)
    assignment = Assignment(labels, m)
    feasible = bool(np.all(counts <= config.u_max) and np.all(power <= config.p_max))
    ee = channel.energy_efficiency(assignment, fleet, pts, params)
    return SolutionRecord(fleet, assignment, ee, feasible=feasible, algorithm="kmeans")


def run_kmeans_baseline(users, config: KmeansConfig, params: ChannelParams,
                        deadline: float = None, restart_log: list = None) -> SolutionRecord:
    """Best-EE feasible deployment over ``config.restarts`` seeded restarts.

    Each restart draws from its own child of ``SeedSequence(rng_seed)``, so
    restarts are independent and the result is deterministic. ``restart_log``
    (if given) receives every restart's record in order.
    """
    pts = as_points(users)
    if pts.shape[0] == 0:
        raise ValueError("need at least one user")
    seeds = np.random.SeedSequence(config.rng_seed).spawn(config.restarts)
    best = None
    failures = []
    for i, seed in enumerate(seeds):
        rng = np.random.default_rng(seed)
        try:
            rec = _restart(pts, config, params, rng)
        except SplitDepthExceeded as exc:
            failures.append(str(exc))
            continue
        rec.iteration_found = i
        if restart_log is not None:
            restart_log.append(rec)
        if rec.feasible and (best is None or rec.ee_score > best.ee_score):
            best = rec
        if deadline is not None and time.monotonic() > deadline:
            break
    if best is None:
        raise NoFeasibleSolution("no restart produced a feasible deployment",
                                 {"failures": failures})
    best.n_iterations = config.restarts
    return best
