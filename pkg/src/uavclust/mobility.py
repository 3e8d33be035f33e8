"""Group mobility traces for ground users.

Group leaders follow the random waypoint model: travel in a straight line
at a uniformly drawn speed to a uniformly drawn destination, pause for a
uniformly drawn time, repeat. Group members copy their leader's motion
vector with a bounded random excess in speed and heading:

    |v_member| = |v_leader| + r * phi_v * dv_max
    theta_member = theta_leader + r * phi_theta * dtheta_max

with ``r ~ U[0, 1]`` redrawn every step.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class MobilityConfig:
    area: tuple = (1200.0, 1200.0)
    n_groups: int = 5
    members_per_group: int = 39
    speed_range: tuple = (0.5, 1.5)
    pause_range: tuple = (0.0, 30.0)
    phi_v: float = 0.5
    phi_theta: float = 0.5
    dv_max: float = 1.0
    dtheta_max: float = math.pi / 4
    time_step: float = 1.0
    duration: float = 60.0
    init_radius: float = 20.0
    shared_r: bool = False
    rng_seed: int = 0

    def __post_init__(self):
        w, h = self.area
        if not (w > 0 and h > 0):
            raise ValueError("area sides must be > 0")
        for name in ("speed_range", "pause_range"):
            lo, hi = getattr(self, name)
            if lo < 0 or hi < lo:
                raise ValueError(f"{name} must satisfy 0 <= low <= high, got {(lo, hi)}")
        if not (0 <= self.phi_v <= 1 and 0 <= self.phi_theta <= 1):
            raise ValueError("phi_v and phi_theta must lie in [0, 1]")
        if self.dv_max < 0 or self.dtheta_max < 0:
            raise ValueError("dv_max and dtheta_max must be >= 0")
        if not self.time_step > 0:
            raise ValueError("time_step must be > 0")
        if self.duration < 0:
            raise ValueError("duration must be >= 0")
        if self.n_groups < 0 or self.members_per_group < 0 or self.init_radius < 0:
            raise ValueError("group counts and init_radius must be >= 0")

    @property
    def n_users(self) -> int:
        return self.n_groups * (1 + self.members_per_group)

    def replace(self, **changes) -> "MobilityConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["area"] = list(self.area)
        d["speed_range"] = list(self.speed_range)
        d["pause_range"] = list(self.pause_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MobilityConfig":
        d = dict(d)
        for key in ("area", "speed_range", "pause_range"):
            if key in d:
                d[key] = tuple(float(v) for v in d[key])
        return cls(**d)


@dataclass
class LeaderState:
    position: np.ndarray
    destination: np.ndarray
    speed: float
    pause: float = 0.0
    heading: float = 0.0
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))


@dataclass
class MemberState:
    position: np.ndarray
    speed: np.ndarray = None
    heading: np.ndarray = None


@dataclass
class TraceSnapshot:
    time: float
    positions: np.ndarray
    group_ids: np.ndarray

    def to_json(self) -> str:
        return json.dumps({"time": self.time, "positions": self.positions.tolist(),
                           "group_ids": self.group_ids.tolist()})

    @classmethod
    def from_json(cls, line: str) -> "TraceSnapshot":
        d = json.loads(line)
        return cls(float(d["time"]), np.array(d["positions"], dtype=float).reshape(-1, 2),
                   np.array(d["group_ids"], dtype=int))


def _uniform_point(config: MobilityConfig, rng) -> np.ndarray:
    return rng.random(2) * np.asarray(config.area, dtype=float)


def new_leader(config: MobilityConfig, rng) -> LeaderState:
    pos = _uniform_point(config, rng)
    dest = _uniform_point(config, rng)
    speed = rng.uniform(*config.speed_range)
    heading = math.atan2(dest[1] - pos[1], dest[0] - pos[0])
    return LeaderState(pos, dest, speed, 0.0, heading)


def rwm_leader_step(state: LeaderState, config: MobilityConfig, rng, dt: float) -> LeaderState:
    """Advance one leader by ``dt`` seconds of random waypoint motion.

    The returned state's ``velocity`` is the displacement over this step
    divided by ``dt``; ``heading`` keeps its last value while paused.
    """
    pos = state.position.copy()
    dest, speed, pause, heading = state.destination, state.speed, state.pause, state.heading
    t = dt
    if pause > 0:
        used = min(pause, t)
        pause -= used
        t -= used
    while t > 0 and pause <= 0:
        gap = dest - pos
        dist = math.hypot(gap[0], gap[1])
        if dist > 0:
            heading = math.atan2(gap[1], gap[0])
        if speed <= 0:
            break
        if speed * t < dist:
            pos = pos + gap * (speed * t / dist)
            t = 0.0
        else:
            pos = dest.copy()
            t -= dist / speed
            pause = rng.uniform(*config.pause_range)
            dest = _uniform_point(config, rng)
            speed = rng.uniform(*config.speed_range)
            used = min(pause, t)
            pause -= used
            t -= used
    velocity = (pos - state.position) / dt
    return LeaderState(pos, dest, speed, pause, heading, velocity)


def rpgm_member_step(member: MemberState, leader_velocity, config: MobilityConfig, rng, dt: float,
                     leader_heading: float = None, r=None) -> MemberState:
    """Move a batch of members by their leader's motion vector plus a random excess.

    ``leader_heading`` defaults to the direction of ``leader_velocity``; pass
    it explicitly for a paused leader. ``r`` overrides the uniform draws with
    an ``(n, 2)`` array of (speed, angle) factors.
    """
    pos = np.atleast_2d(np.asarray(member.position, dtype=float))
    n = pos.shape[0]
    vx, vy = float(leader_velocity[0]), float(leader_velocity[1])
    lead_speed = math.hypot(vx, vy)
    if leader_heading is None:
        leader_heading = math.atan2(vy, vx)
    if r is None:
        if config.shared_r:
            r = np.repeat(rng.random((n, 1)), 2, axis=1)
        else:
            r = rng.random((n, 2))
    r = np.asarray(r, dtype=float).reshape(n, 2)
    speed = lead_speed + r[:, 0] * config.phi_v * config.dv_max
    heading = leader_heading + r[:, 1] * config.phi_theta * config.dtheta_max
    step = np.column_stack([np.cos(heading), np.sin(heading)]) * (speed * dt)[:, None]
    new = clamp_to_area(pos + step, config.area)
    return MemberState(new, speed, heading)


def clamp_to_area(points, area) -> np.ndarray:
    return np.clip(points, 0.0, np.asarray(area, dtype=float))


def _disc(centre, radius, n, rng) -> np.ndarray:
    rad = radius * np.sqrt(rng.random(n))
    ang = 2.0 * np.pi * rng.random(n)
    return centre + np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])


def generate_trace(config: MobilityConfig, record_motion: list = None) -> list:
    """Simulate ``duration / time_step`` steps; return one snapshot per step plus the initial one.

    Users are ordered group by group, leader first. ``record_motion`` (if
    given) receives one dict per (step, group) with the leader's speed and
    heading and the members' speeds and headings, for bound checks.
    """
    if config.n_users == 0:
        raise ValueError("configuration produces zero users")
    rng = np.random.default_rng(config.rng_seed)
    n_steps = int(round(config.duration / config.time_step))
    dt = config.time_step
    leaders = [new_leader(config, rng) for _ in range(config.n_groups)]
    members = [MemberState(clamp_to_area(_disc(l.position, config.init_radius,
                                               config.members_per_group, rng), config.area))
               for l in leaders]
    group_ids = np.repeat(np.arange(config.n_groups), 1 + config.members_per_group)

    def snapshot(step):
        rows = []
        for lead, mem in zip(leaders, members):
            rows.append(lead.position[None, :])
            rows.append(mem.position.reshape(-1, 2))
        return TraceSnapshot(step * dt, np.vstack(rows), group_ids.copy())

    trace = [snapshot(0)]
    for step in range(1, n_steps + 1):
        for g in range(config.n_groups):
            leaders[g] = rwm_leader_step(leaders[g], config, rng, dt)
            if config.members_per_group:
                members[g] = rpgm_member_step(members[g], leaders[g].velocity, config, rng, dt,
                                              leader_heading=leaders[g].heading)
                if record_motion is not None:
                    record_motion.append({
                        "step": step, "group": g,
                        "leader_speed": float(np.hypot(*leaders[g].velocity)),
                        "leader_heading": leaders[g].heading,
                        "member_speed": members[g].speed.copy(),
                        "member_heading": members[g].heading.copy(),
                    })
        trace.append(snapshot(step))
    return trace


def write_trace(path, trace) -> None:
    path = Path(path)
    with path.open("w") as fh:
        for snap in trace:
            fh.write(snap.to_json() + "\n")


def read_trace(path) -> list:
    with Path(path).open() as fh:
        return [TraceSnapshot.from_json(line) for line in fh if line.strip()]
