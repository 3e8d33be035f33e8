"""Air-to-ground link model: geometry, path loss, SNR/SINR, rate, power and
energy efficiency for a fleet of drone small cells hovering at a common
altitude over a set of ground users.

All power and gain quantities are linear (watts, ratios). Decibels only
appear at configuration/reporting boundaries, see :func:`db_to_linear`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

LN2 = np.log(2.0)


class DegenerateInputError(ValueError):
    """Raised when a metric is undefined for the given input (e.g. zero total power)."""


def db_to_linear(value_db):
    return 10.0 ** (np.asarray(value_db, dtype=float) / 10.0)


def linear_to_db(value):
    return 10.0 * np.log10(value)


def dbm_to_watts(value_dbm):
    return 10.0 ** ((np.asarray(value_dbm, dtype=float) - 30.0) / 10.0)


def watts_to_dbm(value_w):
    return 10.0 * np.log10(value_w) + 30.0


@dataclass(frozen=True)
class ChannelParams:
    """Link-budget parameters.

    Attributes
    ----------
    pathloss_exponent : float
        Path loss exponent (dimensionless).
    ref_gain : float
        Linear channel power gain at the 1 m reference distance.
    noise_power : float
        Receiver AWGN power in watts.
    bandwidth : float
        Bandwidth allocated to each user channel, Hz.
    altitude : float
        Common flying altitude of every drone, meters.
    snr_target : float
        Minimum linear SNR guaranteed to every served user.
    sinr_threshold : float
        Linear SINR above which a link counts as reliable.
    """

    pathloss_exponent: float = 2.0
    ref_gain: float = 1e-3
    noise_power: float = 1e-13
    bandwidth: float = 1e7
    altitude: float = 10.0
    snr_target: float = 10.0 ** 1.2
    sinr_threshold: float = 1.0

    def __post_init__(self):
        for name in ("pathloss_exponent", "ref_gain", "noise_power", "bandwidth",
                     "altitude", "snr_target", "sinr_threshold"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")

    @property
    def h(self) -> float:
        return self.altitude

    @classmethod
    def from_db(cls, *, pathloss_exponent=2.0, ref_gain_db=-30.0, noise_power_dbm=-100.0,
                bandwidth_hz=1e7, altitude_m=10.0, snr_target_db=12.0,
                sinr_threshold_db=0.0) -> "ChannelParams":
        return cls(
            pathloss_exponent=float(pathloss_exponent),
            ref_gain=float(db_to_linear(ref_gain_db)),
            noise_power=float(dbm_to_watts(noise_power_dbm)),
            bandwidth=float(bandwidth_hz),
            altitude=float(altitude_m),
            snr_target=float(db_to_linear(snr_target_db)),
            sinr_threshold=float(db_to_linear(sinr_threshold_db)),
        )

    def to_db_dict(self) -> dict:
        return {
            "pathloss_exponent": self.pathloss_exponent,
            "ref_gain_db": float(linear_to_db(self.ref_gain)),
            "noise_power_dbm": float(watts_to_dbm(self.noise_power)),
            "bandwidth_hz": self.bandwidth,
            "altitude_m": self.altitude,
            "snr_target_db": float(linear_to_db(self.snr_target)),
            "sinr_threshold_db": float(linear_to_db(self.sinr_threshold)),
        }

    def with_threshold_db(self, sinr_threshold_db: float) -> "ChannelParams":
        d = self.__dict__.copy()
        d["sinr_threshold"] = float(db_to_linear(sinr_threshold_db))
        return ChannelParams(**d)


@dataclass
class UserField:
    """Ground user positions (meters) at one time instant."""

    positions: np.ndarray
    group_ids: np.ndarray = None

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if self.positions.ndim != 2 or self.positions.shape[1] != 2:
            raise ValueError(f"positions must have shape (U, 2), got {self.positions.shape}")
        if self.positions.shape[0] == 0:
            raise ValueError("UserField must contain at least one user")
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("user positions must be finite")
        if self.group_ids is None:
            self.group_ids = np.zeros(len(self.positions), dtype=int)
        else:
            self.group_ids = np.asarray(self.group_ids, dtype=int)
            if self.group_ids.shape != (len(self.positions),):
                raise ValueError("group_ids must have one entry per user")

    def __len__(self) -> int:
        return self.positions.shape[0]


def as_points(data) -> np.ndarray:
    """Return an (n, 2) float array from a UserField or array-like."""
    if isinstance(data, UserField):
        return data.positions
    pts = np.atleast_2d(np.asarray(data, dtype=float))
    if pts.shape[-1] != 2:
        raise ValueError(f"expected 2-D points, got shape {pts.shape}")
    return pts


@dataclass(frozen=True)
class DroneState:
    """One drone small cell / one mixture component."""

    mean: tuple
    sigma: float
    mixing: float = 1.0
    power: float = 0.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if not 0.0 <= self.mixing <= 1.0:
            raise ValueError(f"mixing must lie in [0, 1], got {self.mixing}")
        if self.power < 0:
            raise ValueError(f"power must be >= 0, got {self.power}")


@dataclass
class Fleet:
    """Column-oriented view of M drones.

    ``means`` is (M, 2), the others are (M,).
    """

    means: np.ndarray
    sigma: np.ndarray
    mixing: np.ndarray
    power: np.ndarray = None

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=float).reshape(-1, 2)
        m = self.means.shape[0]
        self.sigma = np.asarray(self.sigma, dtype=float).reshape(m)
        self.mixing = np.asarray(self.mixing, dtype=float).reshape(m)
        if self.power is None:
            self.power = np.zeros(m)
        self.power = np.asarray(self.power, dtype=float).reshape(m)

    def __len__(self) -> int:
        return self.means.shape[0]

    def __iter__(self) -> Iterator[DroneState]:
        for j in range(len(self)):
            yield self[j]

    def __getitem__(self, j: int) -> DroneState:
        return DroneState(tuple(self.means[j]), float(self.sigma[j]),
                          float(self.mixing[j]), float(self.power[j]))

    @classmethod
    def from_drones(cls, drones: Sequence[DroneState]) -> "Fleet":
        if len(drones) == 0:
            return cls.empty()
        return cls(means=[d.mean for d in drones], sigma=[d.sigma for d in drones],
                   mixing=[d.mixing for d in drones], power=[d.power for d in drones])

    @classmethod
    def empty(cls) -> "Fleet":
        return cls(means=np.zeros((0, 2)), sigma=np.zeros(0), mixing=np.zeros(0))

    def copy(self) -> "Fleet":
        return Fleet(self.means.copy(), self.sigma.copy(), self.mixing.copy(), self.power.copy())

    def check(self, tol: float = 1e-9) -> None:
        """Validate the fleet-level invariants; raise ValueError on violation."""
        if np.any(self.sigma <= 0):
            raise ValueError("every sigma must be > 0")
        if np.any(self.mixing < 0) or np.any(self.mixing > 1):
            raise ValueError("mixing proportions must lie in [0, 1]")
        if np.any(self.power < 0):
            raise ValueError("powers must be >= 0")
        if len(self) and abs(self.mixing.sum() - 1.0) > tol:
            raise ValueError(f"mixing proportions sum to {self.mixing.sum()}, expected 1")


@dataclass
class Assignment:
    """User-to-drone association, stored as one drone label per user.

    The dense M x U binary matrix is available as :attr:`matrix`; storing
    labels makes the "every column sums to one" invariant structural.
    """

    labels: np.ndarray
    n_drones: int

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=int).reshape(-1)
        self.n_drones = int(self.n_drones)
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_drones):
            raise ValueError("assignment label out of range")

    @classmethod
    def from_matrix(cls, w) -> "Assignment":
        w = np.asarray(w)
        if w.ndim != 2:
            raise ValueError("W must be a 2-D matrix")
        if not np.all((w == 0) | (w == 1)):
            raise ValueError("W entries must be 0 or 1")
        if not np.all(w.sum(axis=0) == 1):
            raise ValueError("every user must be served by exactly one drone")
        return cls(np.argmax(w, axis=0), w.shape[0])

    @property
    def matrix(self) -> np.ndarray:
        w = np.zeros((self.n_drones, self.labels.size), dtype=int)
        w[self.labels, np.arange(self.labels.size)] = 1
        return w

    def counts(self) -> np.ndarray:
        """Users served per drone, U_j."""
        return np.bincount(self.labels, minlength=self.n_drones)

    def members(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.labels == j)

    def __len__(self) -> int:
        return self.labels.size


def distance_3d(drone_pos, user_pos, params: ChannelParams):
    """Drone-to-user slant distance, broadcasting over leading axes."""
    diff = np.asarray(drone_pos, dtype=float) - np.asarray(user_pos, dtype=float)
    return np.sqrt(np.sum(diff * diff, axis=-1) + params.altitude ** 2)


def distance_matrix(means, positions, params: ChannelParams) -> np.ndarray:
    """(M, U) slant distances between every drone and every user."""
    means = np.asarray(means, dtype=float).reshape(-1, 2)
    positions = as_points(positions)
    return distance_3d(means[:, None, :], positions[None, :, :], params)


def channel_gain(d, params: ChannelParams):
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be > 0")
    return params.ref_gain * d ** (-params.pathloss_exponent)


def snr(power_w, gain, params: ChannelParams):
    return np.asarray(power_w, dtype=float) * gain / params.noise_power


def required_power(d, params: ChannelParams):
    """Smallest transmit power giving exactly ``snr_target`` at slant distance ``d``."""
    d = np.asarray(d, dtype=float)
    return params.snr_target * params.noise_power * d ** params.pathloss_exponent / params.ref_gain


def gain_matrix(fleet: Fleet, users, params: ChannelParams) -> np.ndarray:
    return channel_gain(distance_matrix(fleet.means, users, params), params)


def sinr_vector(assignment: Assignment, fleet: Fleet, users, params: ChannelParams) -> np.ndarray:
    """SINR of every user towards its serving drone, shape (U,).

    Every other drone interferes at its full transmit power (full spectrum
    reuse across cells, orthogonal channels inside a cell).
    """
    gains = gain_matrix(fleet, users, params)
    rx = fleet.power[:, None] * gains
    cols = np.arange(gains.shape[1])
    signal = rx[assignment.labels, cols].copy()
    rx[assignment.labels, cols] = 0.0
    interference = rx.sum(axis=0)
    return signal / (params.noise_power + interference)


def sinr(user_index: int, serving_index: int, fleet: Fleet, users, params: ChannelParams) -> float:
    pts = as_points(users)
    gains = channel_gain(distance_3d(fleet.means, pts[user_index], params), params)
    rx = fleet.power * gains
    interference = sum(rx[i] for i in range(len(fleet)) if i != serving_index)
    return float(rx[serving_index] / (params.noise_power + interference))


def spectral_efficiency(gamma):
    """log2(1 + gamma), accurate for tiny gamma."""
    return np.log1p(gamma) / LN2


def total_rate(assignment: Assignment, fleet: Fleet, users, params: ChannelParams) -> float:
    if len(assignment) == 0:
        return 0.0
    gamma = sinr_vector(assignment, fleet, users, params)
    return float(params.bandwidth * np.sum(spectral_efficiency(gamma)))


def total_power(fleet) -> float:
    if isinstance(fleet, Fleet):
        return float(np.sum(fleet.power))
    return float(sum(d.power for d in fleet))


def energy_efficiency(assignment: Assignment, fleet: Fleet, users, params: ChannelParams) -> float:
    p = total_power(fleet)
    if p <= 0:
        raise DegenerateInputError("energy efficiency is undefined when total power is 0")
    return total_rate(assignment, fleet, users, params) / p


def link_reliability(assignment: Assignment, fleet: Fleet, users, params: ChannelParams,
                     threshold: float = None) -> float:
    """Fraction of served links whose SINR reaches ``threshold`` (linear).

    Defaults to ``params.sinr_threshold``.
    """
    if threshold is None:
        threshold = params.sinr_threshold
    if len(assignment) == 0:
        return 0.0
    gamma = sinr_vector(assignment, fleet, users, params)
    return float(np.count_nonzero(gamma >= threshold)) / gamma.size
