"""Two-stage greedy UAV repositioning and aggregator election.

After dropouts, each surviving UAV probes a compass of candidate positions
(coarse ring first, then a finer ring) and commits a step whenever the best
candidate's benefit — relative gain in its own covered-device count minus a
weight on the cumulative movement energy — clears the stage threshold.
Probes are virtual: only accepted steps move the UAV and burn energy.  The
global aggregator is then the UAV minimizing the sum of distances to the
rest of the fleet.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .costmodel import UavProfile, relocation_costs
from .netmodel import coverage_set

__all__ = [
    "SearchConfig",
    "MoveBenefit",
    "MoveRecord",
    "AggregatorChoice",
    "move_benefit",
    "rough_search",
    "precise_search",
    "elect_aggregator",
    "redeploy_and_select",
]

_LOOP_CAP = 1000  # defensive bound; the benefit structure terminates long before


@dataclass(frozen=True)
class SearchConfig:
    d_set: float = 250.0
    d_set_fine: float = 80.0
    n_rough: int = 10
    n_fine: int = 16
    xi1: float = 0.01
    xi2: float = 0.01
    chi1: int = 8
    chi2: int = 6
    lambda8: float = 1.0
    lambda9: float = 1e-6

    def __post_init__(self) -> None:
        if self.d_set <= 0 or self.d_set_fine < 0 or self.d_set_fine >= self.d_set:
            raise ValueError("need 0 <= fine step < rough step, rough step > 0")
        if self.n_rough < 2 or self.n_fine < 2:
            raise ValueError("need at least 2 probe directions")
        if not (0 <= self.lambda8 <= 1 and 0 <= self.lambda9 <= 1):
            raise ValueError("benefit weights must lie in [0, 1]")


@dataclass(frozen=True)
class MoveBenefit:
    coverage_gain: float
    energy_term: float
    value: float


@dataclass(frozen=True)
class MoveRecord:
    uav_id: int
    stage: str  # "rough" | "precise"
    origin: tuple[float, float]
    target: tuple[float, float]
    value: float
    threshold: float
    step_len: float


@dataclass(frozen=True)
class AggregatorChoice:
    uav_id: int
    distance_sum: float


def move_benefit(
    cov_before: int,
    cov_after: int,
    attempt_b: int,
    cfg: SearchConfig,
    uav: UavProfile,
    step: float | None = None,
) -> MoveBenefit:
    """Benefit of committing the attempt_b-th accepted step of this stage.

    The energy term charges the b accepted steps walked so far (probes are
    free).  A UAV that currently covers nothing scores any recovered device
    as pure gain.
    """
    if attempt_b < 0:
        raise ValueError("accepted-move count cannot be negative")
    step = cfg.d_set if step is None else step
    if cov_before == 0:
        gain = float(cov_after)
    else:
        gain = cov_after / cov_before - 1.0
    energy = attempt_b * step / uav.speed * uav.p_move
    return MoveBenefit(
        coverage_gain=gain,
        energy_term=energy,
        value=cfg.lambda8 * gain - cfg.lambda9 * energy,
    )


def _ring(pos: np.ndarray, n_dirs: int, step: float) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(n_dirs) / n_dirs
    return pos + step * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def _stage_search(
    uav_id: int,
    pos: np.ndarray,
    device_xy: np.ndarray,
    cfg: SearchConfig,
    radius: float,
    field_size: float,
    stage: str,
    uav: UavProfile,
) -> tuple[np.ndarray, list[MoveRecord]]:
    if stage == "rough":
        n_dirs, step, xi, chi = cfg.n_rough, cfg.d_set, cfg.xi1, cfg.chi1
    else:
        n_dirs, step, xi, chi = cfg.n_fine, cfg.d_set_fine, cfg.xi2, cfg.chi2
    pos = np.array(pos, dtype=float)
    moves: list[MoveRecord] = []
    if chi <= 0 or step <= 0:
        return pos, moves
    low_streak = 0
    accepted = 0
    for _ in range(_LOOP_CAP):
        cov_now = len(coverage_set(pos, device_xy, radius))
        candidates = _ring(pos, n_dirs, step)
        in_field = np.all((candidates >= 0.0) & (candidates <= field_size), axis=1)
        best_val = -np.inf
        best_pos = None
        for cand, ok in zip(candidates, in_field):
            if not ok:  # field-boundary candidates are skipped
                continue
            cov_after = len(coverage_set(cand, device_xy, radius))
            b = move_benefit(cov_now, cov_after, accepted + 1, cfg, uav, step)
            if b.value > best_val:
                best_val = b.value
                best_pos = cand
        if best_pos is not None and best_val > xi:
            moves.append(
                MoveRecord(
                    uav_id=uav_id,
                    stage=stage,
                    origin=(pos[0], pos[1]),
                    target=(best_pos[0], best_pos[1]),
                    value=best_val,
                    threshold=xi,
                    step_len=step,
                )
            )
            pos = np.array(best_pos)
            accepted += 1
            low_streak = 0
        else:
            low_streak += 1
            if low_streak >= chi:
                break
    return pos, moves


def rough_search(
    uav_xy,
    device_xy,
    cfg: SearchConfig,
    radius: float,
    field_size: float,
    uav: UavProfile,
    uav_id: int = 0,
) -> tuple[np.ndarray, list[MoveRecord]]:
    """Coarse ring search: n_rough directions at d_set until chi1 consecutive
    sub-threshold rounds."""
    return _stage_search(uav_id, uav_xy, np.asarray(device_xy, float), cfg, radius, field_size, "rough", uav)


def precise_search(
    uav_xy,
    device_xy,
    cfg: SearchConfig,
    radius: float,
    field_size: float,
    uav: UavProfile,
    uav_id: int = 0,
) -> tuple[np.ndarray, list[MoveRecord]]:
    """Fine ring search: n_fine directions at d_set_fine until chi2 misses."""
    return _stage_search(uav_id, uav_xy, np.asarray(device_xy, float), cfg, radius, field_size, "precise", uav)


def elect_aggregator(uav_xy: np.ndarray, active: Sequence[int]) -> AggregatorChoice:
    """UAV with the smallest sum of distances to the other active UAVs; ties
    go to the lowest id."""
    active = sorted(int(m) for m in active)
    if not active:
        raise ValueError("cannot elect an aggregator from an empty fleet")
    xy = np.asarray(uav_xy, dtype=float)
    best_id = active[0]
    best_sum = np.inf
    for m in active:
        total = float(sum(np.hypot(*(xy[m] - xy[o])) for o in active if o != m))
        if total < best_sum:
            best_sum = total
            best_id = m
    return AggregatorChoice(uav_id=best_id, distance_sum=best_sum)


def redeploy_and_select(
    uav_xy: np.ndarray,
    active: Sequence[int],
    device_xy: np.ndarray,
    profiles: dict[int, UavProfile],
    cfg: SearchConfig,
    radius: float,
    field_size: float,
) -> tuple[np.ndarray, AggregatorChoice, dict[int, float], list[MoveRecord]]:
    """Run both search stages per surviving UAV (in id order), then elect.

    Returns (new positions, choice, movement energy per UAV, accepted-move
    log).  Energy follows the relocation cost model per accepted step.
    """
    xy = np.array(uav_xy, dtype=float, copy=True)
    dev = np.asarray(device_xy, dtype=float)
    energy: dict[int, float] = {}
    log: list[MoveRecord] = []
    for m in sorted(int(i) for i in active):
        pos = xy[m]
        pos, moves_r = rough_search(pos, dev, cfg, radius, field_size, profiles[m], m)
        pos, moves_p = precise_search(pos, dev, cfg, radius, field_size, profiles[m], m)
        spent = 0.0
        for rec in moves_r + moves_p:
            _, e_move = relocation_costs(rec.origin, rec.target, profiles[m], t_e2g=0.0)
            spent += e_move
        energy[m] = spent
        log.extend(moves_r + moves_p)
        xy[m] = pos
    choice = elect_aggregator(xy, active)
    return xy, choice, energy, log
