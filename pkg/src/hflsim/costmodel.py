"""Delay and energy bookkeeping for one global round.

Covers the whole cost chain: per-device compute/upload costs, per-round UAV
hover + broadcast energy, the battery feasibility check that decides whether
an edge network stops early, relocation costs, the global-broadcast nested
max/sum terms, and the final round totals.  All functions are pure; the
orchestrator owns the mutable state and calls down here for every number it
logs.  Accumulations run in float64 with fixed index order so a rerun
reproduces every byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .netmodel import ChannelParams, link_rate

__all__ = [
    "DeviceProfile",
    "UavProfile",
    "CostBreakdown",
    "EnergyCheck",
    "t_unit",
    "e_cmp",
    "DeviceRoundCost",
    "device_round_costs",
    "uav_round_energy",
    "energy_check",
    "edge_iterations",
    "edge_totals",
    "relocation_costs",
    "broadcast_costs",
    "global_totals",
    "weighted_objective",
]


@dataclass(frozen=True)
class DeviceProfile:
    """Static per-device parameters feeding the compute/upload cost chain."""

    f: float  # CPU frequency [Hz]
    c: float  # processing density [cycles/sample]
    phi: float  # minibatch fraction in (0, 1]
    theta: float  # chipset capacitance coefficient
    t_fix: float  # fixed per-iteration overhead [s]
    p_d2u: float  # uplink transmit power [W]
    dataset_size: int
    i_d2u: float  # model upload size [bits]

    def __post_init__(self) -> None:
        ok = (
            self.f > 0
            and self.c > 0
            and 0.0 < self.phi <= 1.0
            and self.theta > 0
            and self.t_fix >= 0
            and self.p_d2u > 0
            and self.dataset_size >= 1
            and self.i_d2u > 0
        )
        if not ok:
            raise ValueError("invalid device profile")


@dataclass(frozen=True)
class UavProfile:
    """Static per-UAV parameters: powers, speed, battery, bandwidth budgets."""

    p_hover: float  # [W]
    p_move: float  # [W]
    speed: float  # [m/s]
    p_u2d: float  # [W]
    p_u2u: float  # [W]
    battery: float  # [J]
    b_d2u_total: float  # uplink bandwidth budget [Hz]
    b_u2d_total: float  # downlink bandwidth budget [Hz]
    b_u2u: float  # inter-UAV bandwidth [Hz]
    i_u2d: float  # intermediate-model broadcast size [bits]
    i_u2u: float  # inter-UAV payload size [bits]

    def __post_init__(self) -> None:
        vals = (
            self.p_hover,
            self.p_move,
            self.speed,
            self.p_u2d,
            self.p_u2u,
            self.battery,
            self.b_d2u_total,
            self.b_u2d_total,
            self.b_u2u,
            self.i_u2d,
            self.i_u2u,
        )
        if any(v <= 0 for v in vals):
            raise ValueError("invalid UAV profile")


@dataclass
class CostBreakdown:
    """Audit record of one global round.

    Device maps key on device id and hold the *accumulated* per-round values;
    UAV maps key on UAV id.  t_hover/e_uav keep the per-intermediate-round
    lists so the edge totals can be recomputed independently.
    """

    t_cmp: dict[int, float] = field(default_factory=dict)
    e_cmp: dict[int, float] = field(default_factory=dict)
    t_com: dict[int, float] = field(default_factory=dict)
    e_com: dict[int, float] = field(default_factory=dict)
    t_dev: dict[int, float] = field(default_factory=dict)
    e_dev: dict[int, float] = field(default_factory=dict)
    t_hover: dict[int, list[float]] = field(default_factory=dict)
    e_uav: dict[int, list[float]] = field(default_factory=dict)
    t_edge: dict[int, float] = field(default_factory=dict)
    e_edge: dict[int, float] = field(default_factory=dict)
    t_delay: dict[int, float] = field(default_factory=dict)
    e_delay: dict[int, float] = field(default_factory=dict)
    t_broad: float = 0.0
    e_broad: float = 0.0
    e_bwait: float = 0.0
    t_total: float = 0.0
    e_total: float = 0.0


@dataclass(frozen=True)
class EnergyCheck:
    """Battery feasibility verdict after an intermediate round."""

    used: float
    projected_next: float
    remaining: float
    disconnect_flag: bool


def t_unit(profile: DeviceProfile) -> float:
    """Wall time of one local training iteration on a device."""
    return profile.t_fix + profile.phi * profile.c * profile.dataset_size / profile.f


def e_cmp(profile: DeviceProfile, h: int) -> float:
    """Computation energy of h local iterations (dynamic CPU power model)."""
    if h < 1:
        raise ValueError("local iteration count must be >= 1")
    return h * profile.f**2 * profile.phi * profile.c * profile.dataset_size * profile.theta / 2.0


@dataclass(frozen=True)
class DeviceRoundCost:
    """Per-device costs of one intermediate round, split for auditing."""

    t_cmp: float
    e_cmp: float
    t_com: float
    e_com: float
    t_dev: float
    e_dev: float


def device_round_costs(
    profile: DeviceProfile,
    h: int,
    b_d2u: float,
    b_u2d: float,
    dist: float,
    channel: ChannelParams,
    uav: UavProfile,
) -> DeviceRoundCost:
    """Delay and energy of one device during one intermediate round.

    t_dev = h * t_unit + upload time + download time; the device pays
    transmit energy only while uploading (the broadcast reception is free).
    `b_d2u`/`b_u2d` are this device's shares of the UAV's bandwidth budgets.
    """
    r_d2u = link_rate(b_d2u, profile.p_d2u, dist, channel.alpha_d2u, channel.n0)
    r_u2d = link_rate(b_u2d, uav.p_u2d, dist, channel.alpha_u2d, channel.n0)
    if r_d2u <= 0 or r_u2d <= 0:
        raise ValueError("zero link rate: device would never finish its round")
    t_up = profile.i_d2u / r_d2u
    t_down = uav.i_u2d / r_u2d
    t_compute = h * t_unit(profile)
    e_compute = e_cmp(profile, h)
    e_upload = t_up * profile.p_d2u
    return DeviceRoundCost(
        t_cmp=t_compute,
        e_cmp=e_compute,
        t_com=t_up + t_down,
        e_com=e_upload,
        t_dev=t_compute + t_up + t_down,
        e_dev=e_compute + e_upload,
    )


def uav_round_energy(hover_time: float, t_u2d: float, uav: UavProfile) -> float:
    """UAV energy of one intermediate round: hovering plus model broadcast.

    `hover_time` is the slowest selected device's round time; `t_u2d` the
    slowest per-device broadcast time of the intermediate model.
    """
    if hover_time < 0 or t_u2d < 0:
        raise ValueError("times must be non-negative")
    return hover_time * uav.p_hover + t_u2d * uav.p_u2d


def energy_check(used: float, history_max: float, remaining: float) -> EnergyCheck:
    """Decide whether the battery will run out during the *next* round.

    The flag trips when the energy already used this global round plus the
    worst prior per-round draw brackets the remaining charge:
    used <= remaining <= used + history_max.
    """
    if min(used, history_max, remaining) < 0:
        raise ValueError("energies must be non-negative")
    flag = used <= remaining <= used + history_max
    return EnergyCheck(used=used, projected_next=history_max, remaining=remaining, disconnect_flag=flag)


def edge_iterations(phi_flag: bool, k_bar: int, k_max: int) -> int:
    """Number of intermediate rounds this global round actually runs."""
    if not 1 <= k_bar <= k_max:
        raise ValueError("need 1 <= k_bar <= k_max")
    return k_bar if phi_flag else k_max


def edge_totals(
    per_round_hover: Sequence[float],
    per_round_uav_e: Sequence[float],
    device_e: Sequence[Sequence[float]],
) -> tuple[float, float]:
    """Aggregate one UAV's edge network over its intermediate rounds.

    device_e[k][n] is device n's energy in round k; rows may be empty.
    """
    if not (len(per_round_hover) == len(per_round_uav_e) == len(device_e)):
        raise ValueError("per-round lists must have equal length")
    t_edge = float(np.sum(np.asarray(per_round_hover, dtype=float))) if per_round_hover else 0.0
    e_edge = 0.0
    for k in range(len(per_round_uav_e)):
        e_edge += float(per_round_uav_e[k]) + float(np.sum(np.asarray(device_e[k], dtype=float)))
    return t_edge, e_edge


def relocation_costs(
    old_xy,
    new_xy,
    uav: UavProfile,
    t_e2g: float,
) -> tuple[float, float]:
    """Delay and energy of hovering for the edge-to-global exchange plus the
    straight-line move from old_xy to new_xy at the UAV's cruise speed."""
    if t_e2g < 0:
        raise ValueError("exchange time must be non-negative")
    delta = np.asarray(new_xy, dtype=float) - np.asarray(old_xy, dtype=float)
    d = float(np.hypot(delta[0], delta[1]))
    t_move = d / uav.speed
    return t_e2g + t_move, t_e2g * uav.p_hover + uav.p_move * t_move


def broadcast_costs(
    aggregator: int,
    active: Sequence[int],
    rates_u2u: Mapping[int, float],
    rates_u2d: Mapping[int, Sequence[float]],
    i_g: float,
    uavs: Mapping[int, UavProfile],
) -> tuple[float, float, float]:
    """Costs of spreading the new global model through the fleet.

    The broadcast completes when the slowest relay chain finishes: for every
    peer, the aggregator-to-peer hop plus that peer's slowest device hop.
    Energy charges the aggregator for the longest inter-UAV transmission and
    every UAV for its own slowest device broadcast; each active UAV also
    hovers for the full broadcast window (the waiting energy term).  A fleet
    of one degenerates to the aggregator serving its own devices.  Empty
    maxima count as 0.
    """
    if aggregator not in active:
        raise ValueError("aggregator must be an active UAV")
    if i_g <= 0:
        raise ValueError("global model size must be positive")
    peers = [m for m in active if m != aggregator]

    def own_u2d_time(m: int) -> float:
        rates = rates_u2d.get(m, ())
        times = []
        for r in rates:
            if r <= 0:
                raise ValueError("zero link rate in broadcast")
            times.append(i_g / r)
        return max(times, default=0.0)

    def u2u_time(m: int) -> float:
        r = rates_u2u.get(m, 0.0)
        if r <= 0:
            raise ValueError("zero inter-UAV rate in broadcast")
        return i_g / r

    if peers:
        t_broad = max(u2u_time(m) + own_u2d_time(m) for m in peers)
        t_u2u_max = max(u2u_time(m) for m in peers)
    else:
        t_broad = own_u2d_time(aggregator)
        t_u2u_max = 0.0
    e_broad = t_u2u_max * uavs[aggregator].p_u2u
    for m in active:
        e_broad += own_u2d_time(m) * uavs[m].p_u2d
    e_bwait = sum(t_broad * uavs[m].p_hover for m in active)
    return t_broad, e_broad, e_bwait


def global_totals(parts: CostBreakdown) -> tuple[float, float]:
    """Fold a populated breakdown into the round's (time, energy) pair.

    Time: broadcast window plus the slowest UAV's edge + relocation span.
    Energy: broadcast + waiting energy plus every UAV's edge + relocation
    draw.  Also stores the totals back on the breakdown.
    """
    uav_ids = sorted(set(parts.t_edge) | set(parts.t_delay))
    spans = [parts.t_edge.get(m, 0.0) + parts.t_delay.get(m, 0.0) for m in uav_ids]
    t_total = parts.t_broad + (max(spans) if spans else 0.0)
    e_total = parts.e_broad + parts.e_bwait
    for m in sorted(set(parts.e_edge) | set(parts.e_delay)):
        e_total += parts.e_edge.get(m, 0.0) + parts.e_delay.get(m, 0.0)
    parts.t_total = t_total
    parts.e_total = e_total
    return t_total, e_total


def weighted_objective(t_total: float, e_total: float, lambda_e: float, lambda_t: float) -> float:
    """Scalar round cost traded off between energy and time."""
    return lambda_e * e_total + lambda_t * t_total
