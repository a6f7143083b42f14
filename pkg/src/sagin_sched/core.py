"""Domain types and pure formula layer: geometry, mobility, task/profit
model, and the wireless link / delay model.

All quantities are SI internally (seconds, bits, Hz, meters, watts).
Every function here is pure; randomness enters only through an explicitly
passed numpy Generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

LIGHT_SPEED = 299792458.0  # m/s


# ---------------------------------------------------------------------------
# types

@dataclass(frozen=True)
class Position:
    x: float
    y: float
    z: float = 0.0

    def distance_to(self, other: "Position") -> float:
        return math.dist((self.x, self.y, self.z), (other.x, other.y, other.z))


@dataclass(frozen=True)
class MobilityState:
    position: Position
    heading: float  # radians in [0, 2*pi)
    speed: float    # m/s, constant within a slot

    def __post_init__(self):
        if self.speed < 0:
            raise ValueError(f"speed must be >= 0, got {self.speed}")


@dataclass(frozen=True)
class Task:
    id: int
    origin_uav: int
    data_bits: float        # phi
    cycles_per_bit: float   # rho
    deadline: float         # delta, seconds
    arrival_slot: int

    def __post_init__(self):
        if self.data_bits <= 0:
            raise ValueError("data_bits must be positive")
        if self.cycles_per_bit <= 0:
            raise ValueError("cycles_per_bit must be positive")
        if self.deadline < 0:
            raise ValueError("deadline must be >= 0")

    @property
    def workload_cycles(self) -> float:
        return self.data_bits * self.cycles_per_bit


@dataclass(frozen=True)
class ProfitParams:
    delay_sensitivity: float = 5.0  # 1/s, discounts profit with tolerable delay

    def __post_init__(self):
        if self.delay_sensitivity < 0:
            raise ValueError("delay_sensitivity must be >= 0")


@dataclass(frozen=True)
class ChannelParams:
    bandwidth: float            # B, Hz
    tx_power: float             # P_T, W
    tx_gain: float              # G_T
    rx_gain: float              # G_R
    noise_power: float          # P_N, W
    path_loss_exponent: float   # n
    reference_distance: float   # d0, m
    carrier_frequency: float    # f, Hz
    shadowing_sigma_db: float = 0.0
    light_speed: float = LIGHT_SPEED

    def __post_init__(self):
        for name in ("bandwidth", "tx_power", "tx_gain", "rx_gain", "noise_power",
                     "path_loss_exponent", "reference_distance", "carrier_frequency"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.shadowing_sigma_db < 0:
            raise ValueError("shadowing_sigma_db must be >= 0")

    @property
    def wavelength(self) -> float:
        return self.light_speed / self.carrier_frequency


# device identity: local execution on the origin UAV, a base station, or the
# LEO satellite
LOCAL = "local"
BASE_STATION = "bs"
SATELLITE = "sat"


@dataclass(frozen=True)
class DeviceId:
    kind: str          # LOCAL | BASE_STATION | SATELLITE
    index: int = 0     # BS index 1..n_bs; UAV id for LOCAL; 0 for SATELLITE

    def __post_init__(self):
        if self.kind not in (LOCAL, BASE_STATION, SATELLITE):
            raise ValueError(f"unknown device kind {self.kind!r}")
        if self.kind == BASE_STATION and self.index < 1:
            raise ValueError("base-station index starts at 1")

    @property
    def is_satellite(self) -> bool:
        return self.kind == SATELLITE

    @property
    def is_local(self) -> bool:
        return self.kind == LOCAL


@dataclass(frozen=True)
class ComputeDevice:
    id: DeviceId
    position: Position
    capacity_hz: float  # f_j, cycles/s

    def __post_init__(self):
        if self.capacity_hz <= 0:
            raise ValueError("capacity_hz must be positive")


@dataclass(frozen=True)
class AreaBounds:
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def contains(self, pos: Position) -> bool:
        return self.x_min <= pos.x <= self.x_max and self.y_min <= pos.y <= self.y_max


# ---------------------------------------------------------------------------
# operations

def task_profit(task: Task, params: ProfitParams) -> float:
    """Profit for completing a task on time: phi * rho * exp(-lambda * delta)."""
    return task.data_bits * task.cycles_per_bit * math.exp(
        -params.delay_sensitivity * task.deadline)


def _reflect(value: float, lo: float, hi: float) -> tuple[float, bool]:
    """Reflect a coordinate into [lo, hi]; returns (coord, was_reflected)."""
    reflected = False
    span = hi - lo
    while value < lo or value > hi:
        reflected = True
        if value < lo:
            value = 2 * lo - value
        else:
            value = 2 * hi - value
        if span <= 0:
            return lo, True
    return value, reflected


def advance_mobility(state: MobilityState, slot_seconds: float,
                     rng: np.random.Generator, area: AreaBounds,
                     max_turn_angle: float = math.pi / 4) -> MobilityState:
    """One slot of the random-direction mobility model.

    Moves along the current heading at constant speed, then perturbs the
    heading by a uniform draw in [-max_turn_angle, +max_turn_angle].
    Positions are reflected at the area boundary (heading mirrored too).
    """
    if slot_seconds <= 0:
        raise ValueError("slot_seconds must be positive")
    dx = state.speed * slot_seconds * math.cos(state.heading)
    dy = state.speed * slot_seconds * math.sin(state.heading)
    x, rx = _reflect(state.position.x + dx, area.x_min, area.x_max)
    y, ry = _reflect(state.position.y + dy, area.y_min, area.y_max)
    heading = state.heading
    if rx:
        heading = math.pi - heading
    if ry:
        heading = -heading
    heading = heading + rng.uniform(-max_turn_angle, max_turn_angle)
    heading = heading % (2 * math.pi)
    return MobilityState(Position(x, y, state.position.z), heading, state.speed)


def path_loss_db(distance: float, params: ChannelParams,
                 shadowing_draw: float = 0.0) -> float:
    """Two-ray log-distance path loss in dB.

    PL = 20 log10(4*pi*d0 / wavelength) + 10 n log10(d/d0) + X_sigma.
    Distances below the reference distance clamp to it.
    """
    if distance <= 0:
        raise ValueError("distance must be positive")
    d = max(distance, params.reference_distance)
    ref_term = 20.0 * math.log10(4.0 * math.pi * params.reference_distance
                                 / params.wavelength)
    return (ref_term
            + 10.0 * params.path_loss_exponent
            * math.log10(d / params.reference_distance)
            + shadowing_draw)


def data_rate(pl_db: float, params: ChannelParams) -> float:
    """Shannon rate in bits/s; path loss converted from dB to linear first."""
    if not math.isfinite(pl_db):
        raise ValueError("path loss must be finite")
    pl_linear = 10.0 ** (pl_db / 10.0)
    snr = (params.tx_power * params.tx_gain * params.rx_gain
           / (params.noise_power * pl_linear))
    return params.bandwidth * math.log2(1.0 + snr)


def propagation_delay(device: DeviceId, distance: float,
                      params: ChannelParams) -> float:
    """distance/c for the satellite link, 0 for any other device."""
    if distance < 0:
        raise ValueError("distance must be >= 0")
    if device.is_satellite:
        return distance / params.light_speed
    return 0.0


def transmission_delay(task: Task, rate: float, device: DeviceId,
                       distance: float, params: ChannelParams) -> float:
    """Upload time plus propagation; zero for local execution (no radio hop)."""
    if device.is_local:
        return 0.0
    if rate <= 0:
        raise ValueError(f"unreachable link: rate {rate} <= 0")
    return task.data_bits / rate + propagation_delay(device, distance, params)


def computing_delay(task: Task, device: ComputeDevice) -> float:
    """Total cycle demand phi*rho divided by the device's cycles/s."""
    return task.workload_cycles / device.capacity_hz


def total_delay(queueing: float, transmission: float, computing: float) -> float:
    """Queuing + transmission + computing delay for one task."""
    if queueing < 0 or transmission < 0 or computing < 0:
        raise ValueError("delay components must be >= 0")
    return queueing + transmission + computing


__all__ = [
    "LIGHT_SPEED", "LOCAL", "BASE_STATION", "SATELLITE",
    "Position", "MobilityState", "Task", "ProfitParams", "ChannelParams",
    "DeviceId", "ComputeDevice", "AreaBounds",
    "task_profit", "advance_mobility", "path_loss_db", "data_rate",
    "propagation_delay", "transmission_delay", "computing_delay", "total_delay",
    "replace",
]
