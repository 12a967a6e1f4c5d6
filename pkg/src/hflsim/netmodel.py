"""Geometry, coverage, wireless link rates and device mobility.

Distances between a UAV and a ground device are 3-D slant ranges (the UAV
fleet hovers at a common fixed altitude), while coverage membership is a
purely horizontal test against each UAV's service disc.  Link throughput
follows the usual log2(1 + SNR) form with distance-power path loss and a
flat noise density over the allocated bandwidth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng as rngmod

__all__ = [
    "ChannelParams",
    "distance",
    "link_rate",
    "coverage_set",
    "move_devices",
    "grid_positions",
    "scatter_in_discs",
]


@dataclass(frozen=True)
class ChannelParams:
    """Path-loss exponents of the three link phases plus noise density [W/Hz]."""

    alpha_d2u: float = 2.0
    alpha_u2d: float = 2.0
    alpha_u2u: float = 2.0
    n0: float = 10.0**-20.4  # thermal floor, -174 dBm/Hz

    def __post_init__(self) -> None:
        if min(self.alpha_d2u, self.alpha_u2d, self.alpha_u2u) <= 0:
            raise ValueError("path-loss exponents must be positive")
        if self.n0 <= 0:
            raise ValueError("noise power density must be positive")


def distance(a_xy, b_xy, height_diff: float = 0.0):
    """Slant distance between two points given their altitude difference.

    Works elementwise on arrays of 2-D coordinates; the horizontal parts
    broadcast, the vertical offset is a scalar.
    """
    a = np.asarray(a_xy, dtype=float)
    b = np.asarray(b_xy, dtype=float)
    dxy = a - b
    return np.sqrt(np.sum(dxy * dxy, axis=-1) + float(height_diff) ** 2)


def link_rate(bandwidth, tx_power: float, dist, alpha: float, n0: float):
    """Achievable rate [bit/s]: B * log2(1 + p * d^-alpha / (N0 * B)).

    Zero bandwidth or zero transmit power yield a zero rate (the B->0 limit
    of the Shannon form is 0).  Vectorised over `bandwidth` and `dist`.
    """
    if n0 <= 0:
        raise ValueError("noise power density must be positive")
    b = np.asarray(bandwidth, dtype=float)
    d = np.asarray(dist, dtype=float)
    if np.any(b < 0):
        raise ValueError("bandwidth must be non-negative")
    if tx_power < 0:
        raise ValueError("transmit power must be non-negative")
    if np.any(d <= 0):
        raise ValueError("link distance must be positive")
    with np.errstate(divide="ignore"):
        snr = np.where(b > 0, tx_power * d ** (-alpha) / (n0 * np.where(b > 0, b, 1.0)), 0.0)
        out = np.where(b > 0, b * np.log2(1.0 + snr), 0.0)
    return float(out) if out.ndim == 0 else out


def coverage_set(uav_xy, device_xy, radius: float) -> np.ndarray:
    """Indices of devices whose horizontal distance to the UAV is <= radius.

    Coverage is a 2-D disc test: altitude does not enter, and a device
    sitting exactly on the boundary counts as covered.
    """
    if radius <= 0:
        raise ValueError("coverage radius must be positive")
    dev = np.asarray(device_xy, dtype=float)
    if dev.size == 0:
        return np.empty(0, dtype=int)
    d = distance(dev, np.asarray(uav_xy, dtype=float))
    return np.flatnonzero(d <= radius)


def _uniform_in_disc(center, radius: float, u: np.ndarray, field_size: float):
    r = radius * np.sqrt(u[0])
    theta = 2.0 * np.pi * u[1]
    x = center[0] + r * np.cos(theta)
    y = center[1] + r * np.sin(theta)
    # service discs may stick out of the field near its edges; positions stay inside
    return np.clip(np.array([x, y]), 0.0, field_size)


def move_devices(
    device_xy: np.ndarray,
    uav_xy: np.ndarray,
    active: np.ndarray,
    xi: float,
    radius: float,
    field_size: float,
    seed: int,
    round_idx: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Relocate each device with probability `xi` into another UAV's disc.

    A moving device picks uniformly among the active UAVs other than the one
    currently serving it (its nearest covering UAV); devices outside every
    disc may pick any active UAV, and a lone active UAV receives the move
    within its own disc.  Draws come from a per-device substream keyed on
    (seed, round, device id), so results do not depend on the order devices
    are processed.  Returns (new positions, moved mask).
    """
    if not 0.0 <= xi <= 1.0:
        raise ValueError("mobility probability must lie in [0, 1]")
    dev = np.array(device_xy, dtype=float, copy=True)
    active = np.asarray(active, dtype=int)
    moved = np.zeros(len(dev), dtype=bool)
    if len(active) == 0:
        return dev, moved
    act_xy = np.asarray(uav_xy, dtype=float)[active]
    for i in range(len(dev)):
        u = rngmod.stream(seed, "mobility", round_idx, i).random(4)
        if u[0] >= xi:
            continue
        d = distance(act_xy, dev[i])
        covering = np.flatnonzero(d <= radius)
        choices = np.arange(len(active))
        if covering.size:
            home = covering[np.argmin(d[covering])]
            choices = choices[choices != home]
        if choices.size == 0:  # single active UAV: re-draw inside its own disc
            choices = np.arange(len(active))
        target = choices[int(u[1] * choices.size) % choices.size]
        dev[i] = _uniform_in_disc(act_xy[target], radius, u[2:], field_size)
        moved[i] = True
    return dev, moved


def grid_positions(field_size: float, n: int) -> np.ndarray:
    """Deterministic near-square grid of n points centred in the field."""
    if n <= 0:
        raise ValueError("need at least one point")
    cols = int(np.ceil(np.sqrt(n)))
    rows = int(np.ceil(n / cols))
    xs = (np.arange(cols) + 0.5) * field_size / cols
    ys = (np.arange(rows) + 0.5) * field_size / rows
    pts = [(xs[i % cols], ys[i // cols]) for i in range(n)]
    return np.array(pts, dtype=float)


def scatter_in_discs(
    uav_xy: np.ndarray,
    n_devices: int,
    radius: float,
    field_size: float,
    gen: np.random.Generator,
) -> np.ndarray:
    """Scatter devices uniformly over the fleet's service discs (round robin)."""
    uav_xy = np.asarray(uav_xy, dtype=float)
    out = np.empty((n_devices, 2))
    for i in range(n_devices):
        center = uav_xy[i % len(uav_xy)]
        out[i] = _uniform_in_disc(center, radius, gen.random(2), field_size)
    return out
