"""Scenario construction and JSON persistence.

A scenario bundles one snapshot of user positions with the channel, DUCEM
and K-means settings used to cluster it. Scenario files are JSON with the
unit in every key name; channel quantities are stored in dB at the
boundary and converted to linear values on load.

Schema (``format`` = ``uavclust.scenario/1``)::

    {
      "format": "uavclust.scenario/1",
      "metadata": {"name": str, "seed": int, ...creation parameters},
      "users": {"positions_m": [[x, y], ...], "group_ids": [int, ...]},
      "channel": {"pathloss_exponent", "ref_gain_db", "noise_power_dbm",
                  "bandwidth_hz", "altitude_m", "snr_target_db",
                  "sinr_threshold_db"},
      "ducem": {"u_max", "p_max_w", "sigma_max_m2", "d_sigma_max_m2", "eps1",
                "eps2", "max_iterations", "max_drones", "rng_seed",
                "init_drones", "jitter_m", "time_limit_s"},
      "kmeans": {"restarts", "u_max", "p_max_w", "rng_seed", "max_split_depth",
                 "start_k", "max_lloyd_iterations"}
    }
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import ChannelParams, UserField
from .ducem import DucemConfig
from .kmeans_baseline import KmeansConfig
from .mobility import MobilityConfig, TraceSnapshot, generate_trace

FORMAT = "uavclust.scenario/1"
DB_DECIMALS = 12

# in-memory field name -> key in the stored document
_DUCEM_KEYS = {"u_max": "u_max", "p_max": "p_max_w", "sigma_max": "sigma_max_m2",
               "d_sigma_max": "d_sigma_max_m2", "eps1": "eps1", "eps2": "eps2",
               "max_iterations": "max_iterations", "max_drones": "max_drones",
               "rng_seed": "rng_seed", "init_drones": "init_drones", "jitter": "jitter_m",
               "time_limit": "time_limit_s"}
_KMEANS_KEYS = {"restarts": "restarts", "u_max": "u_max", "p_max": "p_max_w",
                "rng_seed": "rng_seed", "max_split_depth": "max_split_depth",
                "start_k": "start_k", "max_lloyd_iterations": "max_lloyd_iterations"}


def _configs(configs):
    configs = dict(configs or {})
    unknown = set(configs) - {"channel", "ducem", "kmeans"}
    if unknown:
        raise ValueError(f"unknown config keys {sorted(unknown)}")
    return (configs.get("channel") or ChannelParams(), configs.get("ducem") or DucemConfig(),
            configs.get("kmeans") or KmeansConfig())


def configs_to_dict(channel: ChannelParams, ducem: DucemConfig, kmeans: KmeansConfig) -> dict:
    """Unit-suffixed stored form of the three configs; dB values rounded to be canonical."""
    ch = {k: (round(v, DB_DECIMALS) if k.endswith(("_db", "_dbm")) else v)
          for k, v in channel.to_db_dict().items()}
    return {"channel": ch,
            "ducem": {key: getattr(ducem, attr) for attr, key in _DUCEM_KEYS.items()},
            "kmeans": {key: getattr(kmeans, attr) for attr, key in _KMEANS_KEYS.items()}}


def configs_from_dict(d: dict):
    """Inverse of :func:`configs_to_dict`; missing sections or keys take defaults."""
    unknown = set(d.get("ducem", {})) - set(_DUCEM_KEYS.values())
    unknown |= set(d.get("kmeans", {})) - set(_KMEANS_KEYS.values())
    if unknown:
        raise ValueError(f"unknown config keys {sorted(unknown)}")
    channel = ChannelParams.from_db(**d.get("channel", {}))
    ducem = DucemConfig(**{attr: d["ducem"][key] for attr, key in _DUCEM_KEYS.items()
                           if key in d.get("ducem", {})})
    kmeans = KmeansConfig(**{attr: d["kmeans"][key] for attr, key in _KMEANS_KEYS.items()
                             if key in d.get("kmeans", {})})
    return channel, ducem, kmeans


@dataclass(frozen=True, eq=False)
class Scenario:
    """Users plus every setting needed to rerun both algorithms on them.

    Equality compares the canonical stored form, so a scenario equals its
    own store/load round trip.
    """

    users: UserField
    channel: ChannelParams = field(default_factory=ChannelParams)
    ducem: DucemConfig = field(default_factory=DucemConfig)
    kmeans: KmeansConfig = field(default_factory=KmeansConfig)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.users, UserField):
            raise TypeError("users must be a UserField")
        for name, cls in (("channel", ChannelParams), ("ducem", DucemConfig),
                          ("kmeans", KmeansConfig)):
            if not isinstance(getattr(self, name), cls):
                raise TypeError(f"{name} must be a {cls.__name__}")
        if "seed" not in self.metadata:
            raise ValueError("metadata must record the seed")

    @property
    def seed(self) -> int:
        return self.metadata["seed"]

    @property
    def positions(self) -> np.ndarray:
        return self.users.positions

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "metadata": _plain(self.metadata),
            "users": {"positions_m": self.users.positions.tolist(),
                      "group_ids": self.users.group_ids.tolist()},
            **configs_to_dict(self.channel, self.ducem, self.kmeans),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        if d.get("format") != FORMAT:
            raise ValueError(f"not a scenario document (format={d.get('format')!r})")
        users = UserField(np.array(d["users"]["positions_m"], dtype=float).reshape(-1, 2),
                          np.array(d["users"]["group_ids"], dtype=int))
        channel, ducem, kmeans = configs_from_dict(d)
        return cls(users, channel, ducem, kmeans, dict(d["metadata"]))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def loads(cls, text: str) -> "Scenario":
        return cls.from_dict(json.loads(text))

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return self.dumps() == other.dumps()

    __hash__ = None


def _plain(obj):
    """Convert numpy scalars and tuples so metadata serializes canonically."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def store(scenario: Scenario, path) -> Path:
    path = Path(path)
    try:
        path.write_text(scenario.dumps() + "\n")
    except OSError as exc:
        raise OSError(f"cannot write scenario to {path}: {exc}") from exc
    return path


def load(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read scenario from {path}: {exc}") from exc
    return Scenario.loads(text)


def from_trace(trace, snapshot_index: int, configs=None, metadata: dict = None) -> Scenario:
    """Scenario whose users sit at ``trace[snapshot_index]``.

    Negative indices count from the end, as for lists.
    """
    n = len(trace)
    if not -n <= snapshot_index < n:
        raise IndexError(f"snapshot index {snapshot_index} out of range for a trace of {n}")
    snap: TraceSnapshot = trace[snapshot_index]
    channel, ducem, kmeans = _configs(configs)
    meta = {"name": "trace", "seed": 0, "snapshot_index": snapshot_index % n,
            "time_s": float(snap.time)}
    meta.update(metadata or {})
    return Scenario(UserField(snap.positions.copy(), snap.group_ids.copy()), channel, ducem,
                    kmeans, _plain(meta))


def from_mobility(mobility: MobilityConfig, snapshot_index: int = -1, configs=None) -> Scenario:
    """Run a group-mobility trace and keep one snapshot (the last by default)."""
    trace = generate_trace(mobility)
    return from_trace(trace, snapshot_index, configs,
                      {"name": "rpgm", "seed": mobility.rng_seed, "mobility": mobility.to_dict()})


def static_uniform(n_users: int, area, seed: int, configs=None) -> Scenario:
    """``n_users`` users drawn i.i.d. uniform over the ``(width, height)`` rectangle."""
    if n_users < 1:
        raise ValueError("n_users must be >= 1")
    w, h = (float(v) for v in area)
    if not (w > 0 and h > 0):
        raise ValueError("area sides must be > 0")
    rng = np.random.default_rng(seed)
    pts = rng.random((n_users, 2)) * np.array([w, h])
    channel, ducem, kmeans = _configs(configs)
    meta = {"name": "uniform", "seed": int(seed), "n_users": int(n_users), "area_m": [w, h]}
    return Scenario(UserField(pts, np.zeros(n_users, dtype=int)), channel, ducem, kmeans, meta)
