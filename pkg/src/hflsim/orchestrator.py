"""The global-round engine.

One round walks the full pipeline: coverage and fitness scoring, threshold
selection (strategy-dependent, TD3-driven in the adaptive arm), the
selection/resource fixed point, the intermediate train/aggregate loop with
per-round battery checks, global aggregation and broadcast accounting,
dropout handling with greedy repositioning and aggregator election, and
the device mobility step.  Everything below is deterministic in the run
seed: all randomness flows through named substreams.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import learner, netmodel, p1_alm, p2_td3
from . import rng as rngmod
from .config import SimConfig
from .costmodel import (
    CostBreakdown,
    DeviceProfile,
    UavProfile,
    broadcast_costs,
    device_round_costs,
    edge_iterations,
    edge_totals,
    energy_check,
    global_totals,
    uav_round_energy,
)
from .learner import Dataset, ModelParams, TrainConfig
from .netmodel import coverage_set, distance, link_rate
from .p2_td3 import FitnessWeights, Td3Agent, fitness, resolve_overlaps, select_by_threshold, shaped_reward
from .p3_greedy import MoveRecord, elect_aggregator, redeploy_and_select

__all__ = [
    "NetworkState",
    "RoundLog",
    "RunSummary",
    "Simulation",
    "run",
    "run_global_round",
    "p1_p2_fixed_point",
    "handle_dropout",
    "periodic_global_aggregation",
]


@dataclass
class NetworkState:
    """Mutable network snapshot between global rounds."""

    g: int
    active: tuple[int, ...]
    uav_xy: np.ndarray
    batteries: dict[int, float]
    coverage: dict[int, tuple[int, ...]]
    selected: dict[int, tuple[int, ...]]
    device_xy: np.ndarray
    device_models: list[ModelParams]
    uav_models: dict[int, ModelParams]
    phi_flag: bool
    aggregator: int
    k_g: int
    w_g: ModelParams
    w_prev: ModelParams | None
    t_stay: float  # dwell bound applied to next round's selection


@dataclass(frozen=True)
class RoundLog:
    g: int
    k_g: int
    phi: bool
    aggregator: int
    next_aggregator: int
    betas: dict[int, float]
    selection_sizes: dict[int, int]
    n_selected: int
    dropouts: tuple[int, ...]
    loss: float
    accuracy: float
    t_g: float
    e_g: float
    costs: CostBreakdown
    moves: tuple[MoveRecord, ...]
    uav_positions: tuple[tuple[int, float, float], ...]  # end-of-round survivors
    device_positions: tuple[tuple[int, float, float], ...]


@dataclass(frozen=True)
class RunSummary:
    run_id: str
    config_hash: str
    seed: int
    strategy: str
    redeploy: str
    scenario: str
    status: str  # converged | max-rounds | fleet-exhausted | not-run
    rounds: tuple[RoundLog, ...]
    final_loss: float
    final_accuracy: float
    total_time: float
    total_energy: float
    dropout_timeline: tuple[tuple[int, int], ...]
    wall_clock: float = 0.0  # informational only; never serialized


def periodic_global_aggregation(g: int, k: int, period: int) -> bool:
    """Whether the periodic rule alone forces global aggregation at step k."""
    if period < 1:
        raise ValueError("period must be at least one edge iteration")
    return k >= period


def handle_dropout(state: NetworkState, flagged: Sequence[int]) -> NetworkState:
    """Remove flagged UAVs from the active set (after their last aggregation).

    Their devices simply stop being covered until some survivor's disc picks
    them up again; positions and models of survivors are untouched.
    """
    flagged_set = {int(m) for m in flagged}
    survivors = tuple(m for m in state.active if m not in flagged_set)
    state.active = survivors
    for m in flagged_set:
        state.uav_models.pop(m, None)
    return state


class _ThresholdEnv:
    """Cheap candidate-threshold evaluation for the TD3 agent.

    A candidate selection is scored by re-averaging the cached device models
    (no extra SGD), measuring probe loss/accuracy deltas, and charging the
    deadline penalty on a nominal-resource cost estimate.
    """

    def __init__(self, sim: "Simulation", st: NetworkState, m: int, alpha_map: dict[int, float]):
        self.sim = sim
        self.st = st
        self.m = m
        self.alpha_map = alpha_map
        self.ids = sorted(alpha_map)
        self.alphas = np.array([alpha_map[n] for n in self.ids])
        base = learner.eval_metrics(st.uav_models[m], sim.probe_set)
        self.base = base
        self._state = np.array([base.loss, base.accuracy])
        self.agent: Td3Agent | None = None  # set right after construction

    def state(self) -> np.ndarray:
        return self._state

    def evaluate(self, action: float) -> tuple[float, np.ndarray]:
        sim, st, m = self.sim, self.st, self.m
        picked = select_by_threshold(self.alphas, float(action))
        ids = [self.ids[i] for i in picked]
        if not ids:  # dead-round guard: keep the single best-scoring device
            ids = [self.ids[int(np.argmax(self.alphas))]]
        models = [st.device_models[n] for n in ids]
        weights = [len(sim.datasets[n]) for n in ids]
        mt = learner.eval_metrics(learner.fedavg(models, weights), sim.probe_set)
        w1 = self.base.loss - mt.loss
        w2 = mt.accuracy - self.base.accuracy
        worst = max(sim.nominal_t_dev(st, m, n, len(ids)) for n in ids)
        pen = self.agent.alpha_pen if self.agent is not None else sim.cfg.p2.alpha_pen0
        r = shaped_reward(
            w1, w2, sim.cfg.p2.lambda6, sim.cfg.p2.lambda7, pen, worst, st.t_stay
        )
        return r, np.array([mt.loss, mt.accuracy])


class Simulation:
    """All immutable run context plus the round loop."""

    def __init__(self, cfg: SimConfig, run_id: str = "run", config_hash: str = ""):
        self.cfg = cfg
        self.run_id = run_id
        self.config_hash = config_hash
        seed = cfg.seed
        self.dims = (learner.FEATURE_DIM, cfg.learner.hidden, learner.N_CLASSES)
        payload = cfg.fleet.payload_bits or 32.0 * learner.param_count(self.dims)
        self.payload = payload

        self.device_profiles: list[DeviceProfile] = []
        for i in range(cfg.fleet.n_devices):
            gen = rngmod.stream(seed, "profiles", "device", i)
            self.device_profiles.append(
                DeviceProfile(
                    f=float(gen.uniform(cfg.device.f_min, cfg.device.f_max)),
                    c=float(gen.uniform(cfg.device.c_min, cfg.device.c_max)),
                    phi=cfg.device.phi,
                    theta=cfg.device.theta,
                    t_fix=cfg.device.t_fix,
                    p_d2u=float(gen.uniform(cfg.device.p_d2u_min, cfg.device.p_d2u_max)),
                    dataset_size=cfg.device.samples,
                    i_d2u=payload,
                )
            )
        self.uav_profiles: dict[int, UavProfile] = {}
        for m in range(cfg.fleet.n_uavs):
            gen = rngmod.stream(seed, "profiles", "uav", m)
            battery = cfg.fleet.low_battery if m < cfg.fleet.low_battery_uavs else cfg.fleet.battery
            self.uav_profiles[m] = UavProfile(
                p_hover=cfg.fleet.p_hover,
                p_move=cfg.fleet.p_move,
                speed=cfg.fleet.speed,
                p_u2d=float(gen.uniform(cfg.fleet.p_u2d_min, cfg.fleet.p_u2d_max)),
                p_u2u=float(gen.uniform(cfg.fleet.p_u2u_min, cfg.fleet.p_u2u_max)),
                battery=battery,
                b_d2u_total=float(gen.uniform(cfg.fleet.b_d2u_min, cfg.fleet.b_d2u_max)),
                b_u2d_total=float(gen.uniform(cfg.fleet.b_u2d_min, cfg.fleet.b_u2d_max)),
                b_u2u=cfg.fleet.b_u2u,
                i_u2d=payload,
                i_u2u=payload,
            )

        self.datasets: list[Dataset] = learner.synth_noniid(
            cfg.fleet.n_devices, cfg.learner.scheme, cfg.device.samples, seed, cfg.learner.sigma
        )
        self.probes = [learner.probe_subset(d) for d in self.datasets]
        self.test_set = learner.balanced_dataset(cfg.learner.test_samples, seed, owner=-1, sigma=cfg.learner.sigma)
        self.probe_set = learner.balanced_dataset(cfg.learner.probe_samples, seed, owner=-2, sigma=cfg.learner.sigma)
        self.agents: dict[int, Td3Agent] = {}

    # -- setup ------------------------------------------------------------------

    def initial_state(self) -> NetworkState:
        cfg = self.cfg
        uav_xy = netmodel.grid_positions(cfg.fleet.field_size, cfg.fleet.n_uavs)
        device_xy = netmodel.scatter_in_discs(
            uav_xy,
            cfg.fleet.n_devices,
            cfg.fleet.coverage_radius,
            cfg.fleet.field_size,
            rngmod.stream(cfg.seed, "placement"),
        )
        w0 = learner.init_model(self.dims, cfg.seed)
        active = tuple(range(cfg.fleet.n_uavs))
        return NetworkState(
            g=1,
            active=active,
            uav_xy=uav_xy,
            batteries={m: self.uav_profiles[m].battery for m in active},
            coverage={},
            selected={},
            device_xy=device_xy,
            device_models=[w0] * cfg.fleet.n_devices,
            uav_models={m: w0 for m in active},
            phi_flag=False,
            aggregator=min(active),  # deterministic stand-in for the initial draw
            k_g=0,
            w_g=w0,
            w_prev=None,
            t_stay=math.inf,
        )

    # -- helpers ----------------------------------------------------------------

    def slant(self, st: NetworkState, m: int, n: int) -> float:
        return float(
            distance(st.device_xy[n], st.uav_xy[m], height_diff=self.cfg.fleet.altitude)
        )

    def nominal_t_dev(self, st: NetworkState, m: int, n: int, n_sharing: int) -> float:
        """Deadline estimate under default resources: h0 iterations and an
        even bandwidth split among n_sharing devices."""
        prof = self.device_profiles[n]
        uav = self.uav_profiles[m]
        h = max(1, int(round(self.cfg.p1.h0)))
        dc = device_round_costs(
            prof,
            h,
            uav.b_d2u_total / n_sharing,
            uav.b_u2d_total / n_sharing,
            self.slant(st, m, n),
            self.cfg.channel,
            uav,
        )
        return dc.t_dev

    def strategy_weights(self) -> FitnessWeights:
        st = self.cfg.strategy
        if st.selection == "distance-only":
            return FitnessWeights(0.0, 1.0, 0.0)
        if st.selection == "similarity-only":
            return FitnessWeights(1.0, 0.0, 0.0)
        return FitnessWeights(st.lambda1, st.lambda2, st.lambda3)

    def _fitness_scores(self, st: NetworkState) -> dict[int, dict[int, float]]:
        weights = self.strategy_weights()
        alphas: dict[int, dict[int, float]] = {}
        st.coverage = {}
        for m in sorted(st.active):
            idx = coverage_set(st.uav_xy[m], st.device_xy, self.cfg.fleet.coverage_radius)
            st.coverage[m] = tuple(int(n) for n in idx)
            if idx.size == 0:
                alphas[m] = {}
                continue
            klds = [
                max(0.0, learner.kld_score(st.uav_models[m], st.device_models[n], self.probes[n]))
                for n in idx
            ]
            dists = [self.slant(st, m, int(n)) for n in idx]
            freqs = [self.device_profiles[int(n)].f for n in idx]
            scores = fitness(klds, dists, freqs, weights)
            alphas[m] = {int(n): float(a) for n, a in zip(idx, scores)}
        return alphas

    def _agent(self, m: int) -> Td3Agent:
        if m not in self.agents:
            self.agents[m] = Td3Agent(
                self.cfg.p2.td3(), rngmod.stream(self.cfg.seed, "td3", m)
            )
        return self.agents[m]

    def _pick_betas(self, st: NetworkState, alphas: dict[int, dict[int, float]]) -> dict[int, float]:
        cfg = self.cfg
        betas: dict[int, float] = {}
        for m in sorted(st.active):
            if cfg.strategy.selection == "adaptive-TD3" and alphas[m]:
                agent = self._agent(m)
                env = _ThresholdEnv(self, st, m, alphas[m])
                env.agent = agent
                while agent.warmup_left > 0:  # offline pretraining on first use
                    a = agent.act(env.state())
                    r, s2 = env.evaluate(a)
                    agent.store(env.state(), a, r, s2)
                    agent.train_step()
                beta, _tried = p2_td3.episode_step(agent, env, cfg.p2.t_step)
                betas[m] = float(beta)
            elif cfg.strategy.selection == "random":
                betas[m] = float(rngmod.stream(cfg.seed, "noise", st.g, m).random())
            else:
                betas[m] = cfg.strategy.fixed_beta
        return betas

    # -- P1/P2 fixed point --------------------------------------------------------

    def _select_once(
        self,
        st: NetworkState,
        alphas: dict[int, dict[int, float]],
        betas: dict[int, float],
        est: dict[int, tuple[int, dict[int, tuple[float, float]]]] | None,
    ) -> dict[int, tuple[int, ...]]:
        """Threshold selection + overlap resolution + dwell filter + fallback."""
        candidates: dict[int, dict[int, float]] = {}
        for m in sorted(st.active):
            amap = alphas[m]
            if not amap:
                candidates[m] = {}
                continue
            ids = sorted(amap)
            arr = np.array([amap[n] for n in ids])
            picked = select_by_threshold(arr, betas[m])
            candidates[m] = {ids[i]: float(arr[i]) for i in picked}
        resolved = resolve_overlaps(candidates)

        # devices held by any resolved selection are off-limits to fallbacks
        taken: set[int] = set()
        for ids in resolved.values():
            taken.update(ids)
        selection: dict[int, tuple[int, ...]] = {}
        for m in sorted(st.active):
            chosen = sorted(resolved.get(m, ()))
            if math.isfinite(st.t_stay) and chosen:
                chosen = [
                    n
                    for n in chosen
                    if self._estimate_t_dev(st, m, n, est, len(chosen)) <= st.t_stay
                ]
            if not chosen and alphas[m]:
                # dead-round guard: force the best unclaimed device even if
                # it misses the threshold or the dwell filter (devices this
                # UAV won but then filtered stay reclaimable by itself)
                blocked = taken - resolved.get(m, set())
                free = [n for n in sorted(alphas[m]) if n not in blocked]
                if free:
                    best = max(free, key=lambda n: (alphas[m][n], -n))
                    chosen = [best]
                    taken.add(best)
            selection[m] = tuple(chosen)
        return selection

    def _estimate_t_dev(
        self,
        st: NetworkState,
        m: int,
        n: int,
        est: dict[int, tuple[int, dict[int, tuple[float, float]]]] | None,
        n_sharing: int,
    ) -> float:
        if est is not None and m in est and n in est[m][1]:
            h, splits = est[m]
            b_up, b_dn = splits[n]
            dc = device_round_costs(
                self.device_profiles[n],
                h,
                b_up,
                b_dn,
                self.slant(st, m, n),
                self.cfg.channel,
                self.uav_profiles[m],
            )
            return dc.t_dev
        return self.nominal_t_dev(st, m, n, max(1, n_sharing))

    def _solve_p1(
        self, st: NetworkState, selection: dict[int, tuple[int, ...]]
    ) -> dict[int, p1_alm.P1Solution]:
        sols: dict[int, p1_alm.P1Solution] = {}
        for m in sorted(st.active):
            ids = selection.get(m, ())
            if not ids:
                continue
            inst = p1_alm.build_instance(
                [self.device_profiles[n] for n in ids],
                [self.slant(st, m, n) for n in ids],
                self.uav_profiles[m],
                self.cfg.channel.alpha_d2u,
                self.cfg.channel.alpha_u2d,
                self.cfg.channel.n0,
                self.cfg.strategy.lambda4,
                self.cfg.strategy.lambda5,
            )
            sols[m] = p1_alm.solve(inst, self.cfg.p1)
        return sols

    @staticmethod
    def _estimates_from(
        selection: dict[int, tuple[int, ...]], sols: dict[int, p1_alm.P1Solution]
    ) -> dict[int, tuple[int, dict[int, tuple[float, float]]]]:
        est = {}
        for m, sol in sols.items():
            splits = {
                n: (float(sol.b_d2u[i]), float(sol.b_u2d[i]))
                for i, n in enumerate(selection[m])
            }
            est[m] = (sol.h_star, splits)
        return est


def p1_p2_fixed_point(
    sim: Simulation,
    st: NetworkState,
    alphas: dict[int, dict[int, float]],
    betas: dict[int, float],
    max_iters: int = 5,
) -> tuple[dict[int, tuple[int, ...]], dict[int, p1_alm.P1Solution]]:
    """Alternate selection and resource allocation until the selection set
    stops changing (or the iteration cap bites)."""
    selection = sim._select_once(st, alphas, betas, est=None)
    sols = sim._solve_p1(st, selection)
    for _ in range(max_iters):
        est = sim._estimates_from(selection, sols)
        nxt = sim._select_once(st, alphas, betas, est=est)
        if nxt == selection:
            break
        selection = nxt
        sols = sim._solve_p1(st, selection)
    return selection, sols


def run_global_round(st: NetworkState, sim: Simulation) -> tuple[NetworkState, RoundLog]:
    """Execute one full global round and return the mutated state + log."""
    cfg = sim.cfg
    g = st.g
    cb = CostBreakdown()
    active = tuple(sorted(st.active))

    # 1-2: coverage, fitness, thresholds
    alphas = sim._fitness_scores(st)
    betas = sim._pick_betas(st, alphas)

    # 3: joint selection / resource fixed point
    selection, sols = p1_p2_fixed_point(sim, st, alphas, betas)
    st.selected = selection

    # static per-device round costs under the solved allocation
    dev_cost: dict[int, dict[int, object]] = {}
    t_down: dict[int, dict[int, float]] = {}
    rates_dn: dict[int, list[float]] = {}
    for m in active:
        ids = selection.get(m, ())
        dev_cost[m] = {}
        t_down[m] = {}
        rates_dn[m] = []
        if not ids:
            continue
        sol = sols[m]
        uav = sim.uav_profiles[m]
        for i, n in enumerate(ids):
            d = sim.slant(st, m, n)
            dc = device_round_costs(
                sim.device_profiles[n], sol.h_star, float(sol.b_d2u[i]), float(sol.b_u2d[i]),
                d, cfg.channel, uav,
            )
            dev_cost[m][n] = dc
            r_dn = link_rate(float(sol.b_u2d[i]), uav.p_u2d, d, cfg.channel.alpha_u2d, cfg.channel.n0)
            t_down[m][n] = uav.i_u2d / r_dn
            rates_dn[m].append(r_dn)

    # 4: intermediate rounds with the battery check after each one
    hover = {m: max((dc.t_dev for dc in dev_cost[m].values()), default=0.0) for m in active}
    t_u2d = {m: max(t_down[m].values(), default=0.0) for m in active}
    e_uav_round = {
        m: uav_round_energy(hover[m], t_u2d[m], sim.uav_profiles[m]) for m in active
    }
    used = {m: 0.0 for m in active}
    flagged: list[int] = []
    phi = False
    k_ran = 0
    for k in itertools.count(1):
        k_ran = k
        train_seed = rngmod.label_key(cfg.seed, "train", g, k)
        for m in active:
            ids = selection.get(m, ())
            if not ids:
                continue
            locals_ = []
            for n in ids:
                model = learner.local_sgd(
                    st.uav_models[m],
                    sim.datasets[n],
                    TrainConfig(
                        eta=cfg.learner.eta,
                        h=sols[m].h_star,
                        batch_fraction=sim.device_profiles[n].phi,
                        seed=train_seed,
                    ),
                )
                st.device_models[n] = model
                locals_.append(model)
            st.uav_models[m] = learner.fedavg(locals_, [len(sim.datasets[n]) for n in ids])
        for m in active:
            used[m] += e_uav_round[m]
            check = energy_check(used[m], e_uav_round[m], st.batteries[m])
            # remaining < used means the budget is already blown (the check
            # window can never bracket it): treat as an immediate disconnect
            if (check.disconnect_flag or check.remaining < check.used) and m not in flagged:
                flagged.append(m)
        if flagged:
            phi = True
            break
        if periodic_global_aggregation(g, k, cfg.strategy.k_max):
            break
    k_g = edge_iterations(phi, k_ran, cfg.strategy.k_max)
    st.phi_flag = phi
    st.k_g = k_g

    for m in active:
        per_hover = [hover[m]] * k_g
        per_uav_e = [e_uav_round[m]] * k_g
        dev_e = [[dev_cost[m][n].e_dev for n in selection.get(m, ())]] * k_g
        cb.t_hover[m] = per_hover
        cb.e_uav[m] = per_uav_e
        cb.t_edge[m], cb.e_edge[m] = edge_totals(per_hover, per_uav_e, dev_e)
        for n in selection.get(m, ()):
            dc = dev_cost[m][n]
            cb.t_cmp[n] = k_g * dc.t_cmp
            cb.e_cmp[n] = k_g * dc.e_cmp
            cb.t_com[n] = k_g * dc.t_com
            cb.e_com[n] = k_g * dc.e_com
            cb.t_dev[n] = k_g * dc.t_dev
            cb.e_dev[n] = k_g * dc.e_dev

    # 5-6: edge-to-global exchange and global aggregation
    agg = st.aggregator
    uav_pos = st.uav_xy
    t_e2g: dict[int, float] = {agg: 0.0}
    rates_u2u: dict[int, float] = {}
    for m in active:
        if m == agg:
            continue
        d = float(distance(uav_pos[m], uav_pos[agg]))
        r = link_rate(
            sim.uav_profiles[agg].b_u2u,
            sim.uav_profiles[agg].p_u2u,
            d,
            cfg.channel.alpha_u2u,
            cfg.channel.n0,
        )
        rates_u2u[m] = r
        t_e2g[m] = sim.payload / link_rate(
            sim.uav_profiles[m].b_u2u,
            sim.uav_profiles[m].p_u2u,
            d,
            cfg.channel.alpha_u2u,
            cfg.channel.n0,
        )

    contributors = [m for m in active if selection.get(m, ())]
    if contributors:
        w_new = learner.fedavg(
            [st.uav_models[m] for m in contributors],
            [sum(len(sim.datasets[n]) for n in selection[m]) for m in contributors],
        )
    else:  # nothing trained anywhere; carry the old model forward
        w_new = st.w_g

    cb.t_broad, cb.e_broad, cb.e_bwait = broadcast_costs(
        agg, active, rates_u2u, rates_dn, sim.payload, sim.uav_profiles
    )
    t_u2u_max = max((sim.payload / r for r in rates_u2u.values()), default=0.0)
    bshare = {}
    for m in active:
        own_dn = max((sim.payload / r for r in rates_dn[m]), default=0.0)
        bshare[m] = own_dn * sim.uav_profiles[m].p_u2d + cb.t_broad * sim.uav_profiles[m].p_hover
        if m == agg:
            bshare[m] += t_u2u_max * sim.uav_profiles[m].p_u2u

    # 7: dropout handling, repositioning, election
    dropouts = tuple(sorted(flagged))
    survivors = tuple(m for m in active if m not in dropouts)
    moves: tuple[MoveRecord, ...] = ()
    move_energy = {m: 0.0 for m in active}
    new_xy = np.array(st.uav_xy, dtype=float, copy=True)
    if survivors:
        if cfg.strategy.redeploy == "two-stage-greedy":
            new_xy, choice, move_energy_s, move_list = redeploy_and_select(
                st.uav_xy,
                survivors,
                st.device_xy,
                sim.uav_profiles,
                cfg.p3,
                cfg.fleet.coverage_radius,
                cfg.fleet.field_size,
            )
            moves = tuple(move_list)
            move_energy.update(move_energy_s)
        else:  # direct-drop: no mitigation beyond the mandatory election
            choice = elect_aggregator(st.uav_xy, survivors)
        next_agg = choice.uav_id
    else:
        next_agg = agg

    for m in active:
        path = sum(
            float(np.hypot(rec.target[0] - rec.origin[0], rec.target[1] - rec.origin[1]))
            for rec in moves
            if rec.uav_id == m
        )
        cb.t_delay[m] = t_e2g[m] + path / sim.uav_profiles[m].speed
        cb.e_delay[m] = t_e2g[m] * sim.uav_profiles[m].p_hover + move_energy[m]

    # 8: mobility + battery settlement + bookkeeping
    t_g, e_g = global_totals(cb)
    for m in active:
        spend = used[m] + cb.e_delay[m] + bshare[m]
        st.batteries[m] = max(0.0, st.batteries[m] - spend)
    new_dev_xy, _moved = netmodel.move_devices(
        st.device_xy,
        new_xy,
        np.asarray(survivors, dtype=int),
        cfg.fleet.xi,
        cfg.fleet.coverage_radius,
        cfg.fleet.field_size,
        cfg.seed,
        g,
    )
    metrics = learner.eval_metrics(w_new, sim.test_set)

    uav_snapshot = tuple(
        (m, float(new_xy[m][0]), float(new_xy[m][1])) for m in survivors
    )
    device_snapshot = tuple(
        (n, float(new_dev_xy[n][0]), float(new_dev_xy[n][1]))
        for n in range(len(new_dev_xy))
    )
    log = RoundLog(
        g=g,
        k_g=k_g,
        phi=phi,
        aggregator=agg,
        next_aggregator=next_agg,
        betas=betas,
        selection_sizes={m: len(selection.get(m, ())) for m in active},
        n_selected=sum(len(selection.get(m, ())) for m in active),
        dropouts=dropouts,
        loss=metrics.loss,
        accuracy=metrics.accuracy,
        t_g=t_g,
        e_g=e_g,
        costs=cb,
        moves=moves,
        uav_positions=uav_snapshot,
        device_positions=device_snapshot,
    )

    st.w_prev = st.w_g
    st.w_g = w_new
    handle_dropout(st, dropouts)
    st.uav_xy = new_xy
    st.device_xy = new_dev_xy
    for m in st.active:
        st.uav_models[m] = w_new
    st.aggregator = next_agg
    st.t_stay = t_g
    st.g = g + 1
    return st, log


def run(cfg: SimConfig, run_id: str = "run", config_hash: str = "", scenario: str = "") -> RunSummary:
    """Round loop until convergence, round cap, or fleet exhaustion."""
    sim = Simulation(cfg, run_id=run_id, config_hash=config_hash)
    st = sim.initial_state()
    logs: list[RoundLog] = []
    status = "max-rounds"
    if cfg.strategy.max_rounds == 0:
        m0 = learner.eval_metrics(st.w_g, sim.test_set)
        return RunSummary(
            run_id=run_id,
            config_hash=config_hash,
            seed=cfg.seed,
            strategy=cfg.strategy.selection,
            redeploy=cfg.strategy.redeploy,
            scenario=scenario,
            status="not-run",
            rounds=(),
            final_loss=m0.loss,
            final_accuracy=m0.accuracy,
            total_time=0.0,
            total_energy=0.0,
            dropout_timeline=(),
        )
    for _ in range(cfg.strategy.max_rounds):
        st, log = run_global_round(st, sim)
        logs.append(log)
        if not st.active:
            status = "fleet-exhausted"
            break
        if st.w_prev is not None and learner.converged(st.w_g, st.w_prev, cfg.strategy.delta):
            status = "converged"
            break
    timeline = tuple((lg.g, m) for lg in logs for m in lg.dropouts)
    last = logs[-1]
    return RunSummary(
        run_id=run_id,
        config_hash=config_hash,
        seed=cfg.seed,
        strategy=cfg.strategy.selection,
        redeploy=cfg.strategy.redeploy,
        scenario=scenario,
        status=status,
        rounds=tuple(logs),
        final_loss=last.loss,
        final_accuracy=last.accuracy,
        total_time=float(sum(lg.t_g for lg in logs)),
        total_energy=float(sum(lg.e_g for lg in logs)),
        dropout_timeline=timeline,
    )
