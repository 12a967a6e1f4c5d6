"""Per-UAV resource solver: local-iteration count and bandwidth splits.

The round-cost objective has a smooth sum part plus a max over selected
devices (the hover window follows the slowest device).  The max is removed
by a slack variable whose optimum has a closed form, leaving an augmented
Lagrangian in the decision variables only; blocks (iteration count, uplink
split, downlink split) are then minimized alternately by projected gradient
descent, with multiplier/penalty/tolerance schedules driven by the measured
constraint violation.

Solver engineering on top of the textbook loop (each choice is cheap and
changes no formula):

* instances are rescaled so the start objective is ``OBJ_SCALE`` — the
  descent step and tolerance defaults assume a common magnitude, while the
  minimizer location is unaffected (the objective is linear in the instance
  constants);
* each descent step backtracks (halves) from the nominal step until the
  Lagrangian does not increase, so ill-scaled blocks cannot diverge;
* the inner loop exits early when progress stalls, and the outer loop exits
  when neither the iterate nor the multiplier state can change any more;
* the best iterate by *true* objective is tracked and returned, so late
  multiplier growth can never degrade the reported solution.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .costmodel import DeviceProfile, UavProfile

__all__ = [
    "P1Instance",
    "AlmState",
    "P1Config",
    "P1Solution",
    "build_instance",
    "objective",
    "slack_closed_form",
    "inner_minimize",
    "violation_psi",
    "outer_update",
    "solve",
    "brute_force_oracle",
    "project_capped_simplex",
]

LN2 = float(np.log(2.0))
ETA_HAT = 0.002  # nominal descent step
OBJ_SCALE = 100.0  # start-objective magnitude after preconditioning


@dataclass(frozen=True)
class P1Instance:
    """Positive per-device constants of the reduced round-cost objective.

    Arrays are aligned with the selected-device order.  `a_*` weight the sum
    (energy) communication terms, `u_*` the max (hover) terms, `cal_*` are
    the SNR numerators p·d^-alpha/N0, `z` the per-iteration hover cost slope
    and `c_coef` the per-iteration compute energy slope.
    """

    a_d2u: np.ndarray
    cal_a_d2u: np.ndarray
    a_u2d: np.ndarray
    cal_a_u2d: np.ndarray
    u_d2u: np.ndarray
    u_u2d: np.ndarray
    z: np.ndarray
    c_coef: np.ndarray
    b_d2u_total: float
    b_u2d_total: float
    lambda4: float
    lambda5: float

    def __post_init__(self) -> None:
        n = len(self.z)
        for name in ("a_d2u", "cal_a_d2u", "a_u2d", "cal_a_u2d", "u_d2u", "u_u2d", "c_coef"):
            if len(getattr(self, name)) != n:
                raise ValueError("instance arrays must be aligned")
        if n == 0:
            raise ValueError("instance needs at least one device")
        if self.b_d2u_total <= 0 or self.b_u2d_total <= 0:
            raise ValueError("bandwidth budgets must be positive")
        if np.any(self.cal_a_d2u <= 0) or np.any(self.cal_a_u2d <= 0) or np.any(self.z <= 0):
            raise ValueError("SNR constants and hover slopes must be positive")

    @property
    def n(self) -> int:
        return len(self.z)

    @property
    def n_star(self) -> int:
        """Device index with the largest hover-cost slope."""
        return int(np.argmax(self.z))


@dataclass(frozen=True)
class AlmState:
    """Multiplier/penalty state of the outer loop."""

    upsilon: float
    sigma: float
    kappa: float
    epsilon: float
    j: int = 0
    zeta1: float = 0.1
    zeta2: float = 0.9
    rho: float = 4.0

    def __post_init__(self) -> None:
        if self.sigma <= 0:
            raise ValueError("penalty factor must be positive")
        if self.upsilon < 0:
            raise ValueError("multiplier must be non-negative")
        if not 0.0 < self.zeta1 <= self.zeta2 <= 1.0:
            raise ValueError("need 0 < zeta1 <= zeta2 <= 1")


@dataclass(frozen=True)
class P1Config:
    sigma0: float = 1.0
    upsilon0: float = 0.0
    zeta1: float = 0.1
    zeta2: float = 0.9
    rho: float = 4.0
    h0: float = 5.0
    h_max: float = 50.0
    eta_hat: float = ETA_HAT
    inner_cap: int = 10_000
    outer_cap: int = 50
    sweeps: int = 3
    frac_floor: float = 1e-6  # minimum bandwidth fraction per device


@dataclass(frozen=True)
class P1Solution:
    h_star: int
    b_d2u: np.ndarray
    b_u2d: np.ndarray
    objective_value: float
    warn: bool = False


def fresh_state(cfg: P1Config) -> AlmState:
    return AlmState(
        upsilon=cfg.upsilon0,
        sigma=cfg.sigma0,
        kappa=1.0 / cfg.sigma0,
        epsilon=cfg.sigma0**cfg.zeta1,
        zeta1=cfg.zeta1,
        zeta2=cfg.zeta2,
        rho=cfg.rho,
    )


def build_instance(
    profiles: Sequence[DeviceProfile],
    dists: Sequence[float],
    uav: UavProfile,
    alpha_d2u: float,
    alpha_u2d: float,
    n0: float,
    lambda4: float,
    lambda5: float,
) -> P1Instance:
    """Evaluate the objective constants for one UAV's selected devices."""
    if len(profiles) == 0:
        raise ValueError("cannot build an instance for an empty selection")
    if len(profiles) != len(dists):
        raise ValueError("one distance per selected device required")
    d = np.asarray(dists, dtype=float)
    p_up = np.array([p.p_d2u for p in profiles])
    i_up = np.array([p.i_d2u for p in profiles])
    unit = np.array([p.phi * p.c * p.dataset_size / p.f + p.t_fix for p in profiles])
    cmp_slope = np.array(
        [p.f**2 * p.phi * p.c * p.dataset_size * p.theta / 2.0 for p in profiles]
    )
    hover_w = lambda4 * uav.p_hover + lambda5
    return P1Instance(
        a_d2u=lambda4 * i_up * p_up,
        cal_a_d2u=p_up * d ** (-alpha_d2u) / n0,
        a_u2d=np.full(len(profiles), lambda4 * uav.i_u2d * uav.p_u2d),
        cal_a_u2d=uav.p_u2d * d ** (-alpha_u2d) / n0,
        u_d2u=hover_w * i_up * p_up,
        u_u2d=np.full(len(profiles), hover_w * uav.i_u2d * uav.p_u2d),
        z=hover_w * unit,
        c_coef=lambda4 * cmp_slope,
        b_d2u_total=uav.b_d2u_total,
        b_u2d_total=uav.b_u2d_total,
        lambda4=lambda4,
        lambda5=lambda5,
    )


# ---------------------------------------------------------------------------
# objective evaluation


def _rate_eff(b: np.ndarray, cal_a: np.ndarray) -> np.ndarray:
    """b * log2(1 + cal_a / b): rate under allocated bandwidth b."""
    return b * np.log2(1.0 + cal_a / b)


def _drate_db(b: np.ndarray, cal_a: np.ndarray) -> np.ndarray:
    return np.log2(1.0 + cal_a / b) - cal_a / ((b + cal_a) * LN2)


def _hover_terms(inst: P1Instance, h: float, b_up: np.ndarray, b_dn: np.ndarray) -> np.ndarray:
    return (
        inst.u_d2u / _rate_eff(b_up, inst.cal_a_d2u)
        + inst.u_u2d / _rate_eff(b_dn, inst.cal_a_u2d)
        + h * inst.z
    )


def objective(inst: P1Instance, h: float, b_d2u, b_u2d) -> float:
    """Weighted round cost at iteration count h and bandwidth vectors [Hz]."""
    b_up = np.asarray(b_d2u, dtype=float)
    b_dn = np.asarray(b_u2d, dtype=float)
    if np.any(b_up <= 0) or np.any(b_dn <= 0):
        raise ValueError("bandwidths must be positive")
    if h < 1:
        raise ValueError("iteration count must be >= 1")
    smooth = (
        float(np.sum(inst.a_d2u / _rate_eff(b_up, inst.cal_a_d2u)))
        + float(np.sum(inst.a_u2d / _rate_eff(b_dn, inst.cal_a_u2d)))
        + h * float(np.sum(inst.c_coef))
    )
    return smooth + float(np.max(_hover_terms(inst, h, b_up, b_dn)))


def slack_closed_form(upsilon: float, sigma: float, g_val: float) -> float:
    """Closed-form optimal slack of the penalized subproblem."""
    if sigma <= 0:
        raise ValueError("penalty factor must be positive")
    return max(-upsilon / sigma - g_val, 0.0)


def violation_psi(state: AlmState, g_val: float) -> float:
    """Constraint-violation degree at the current multiplier state."""
    return abs(max(g_val, -state.upsilon / state.sigma))


def outer_update(state: AlmState, g_val: float, violation_ok: bool) -> AlmState:
    """One multiplier/penalty step.

    violation_ok (psi <= epsilon): keep the penalty, move the multiplier and
    tighten the inner tolerance; otherwise grow the penalty and reset the
    tolerances from it.
    """
    if violation_ok:
        return replace(
            state,
            upsilon=max(state.upsilon + state.sigma * g_val, 0.0),
            kappa=state.kappa / state.sigma,
            epsilon=state.epsilon / state.sigma ** (-state.zeta2),
            j=state.j + 1,
        )
    sigma = state.rho * state.sigma
    return replace(
        state,
        sigma=sigma,
        kappa=1.0 / sigma,
        epsilon=1.0 / sigma ** (-state.zeta1),
        j=state.j + 1,
    )


# ---------------------------------------------------------------------------
# inner minimization


def inner_minimize(
    fun_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    state: AlmState,
    start: np.ndarray,
    *,
    step: float = ETA_HAT,
    cap: int = 10_000,
    project: Callable[[np.ndarray], np.ndarray] | None = None,
) -> tuple[np.ndarray, bool]:
    """Projected gradient descent until the (projected-)gradient residual
    falls below state.kappa or the iteration cap bites.

    Each iteration backtracks from the nominal step until the value stops
    increasing; a stall (no measurable progress over a window) also ends the
    loop.  Returns (point, warn) with warn=True when the cap was hit before
    reaching the tolerance.
    """
    x = np.array(start, dtype=float)
    if project is not None:
        x = project(x)
    val, grad = fun_grad(x)
    window_best = val
    since_progress = 0
    for it in range(cap):
        if project is None:
            residual = float(np.linalg.norm(grad))
        else:
            residual = float(np.linalg.norm(x - project(x - step * grad)) / step)
        if residual <= state.kappa:
            return x, False
        trial_step = step
        for _ in range(40):
            x_new = x - trial_step * grad
            if project is not None:
                x_new = project(x_new)
            val_new, grad_new = fun_grad(x_new)
            if val_new <= val:
                break
            trial_step *= 0.5
        else:
            return x, True  # cannot descend: numerically stuck
        x, val, grad = x_new, val_new, grad_new
        if val < window_best - 1e-12 * max(1.0, abs(window_best)):
            window_best = val
            since_progress = 0
        else:
            since_progress += 1
            if since_progress >= 25:
                return x, True
    return x, True


# ---------------------------------------------------------------------------
# full solver


def _scaled(inst: P1Instance, s: float) -> P1Instance:
    """Multiply all cost constants by s (the objective is linear in them)."""
    return replace(
        inst,
        a_d2u=inst.a_d2u * s,
        a_u2d=inst.a_u2d * s,
        u_d2u=inst.u_d2u * s,
        u_u2d=inst.u_u2d * s,
        z=inst.z * s,
        c_coef=inst.c_coef * s,
    )


def project_capped_simplex(x: np.ndarray, floor: float) -> np.ndarray:
    """Euclidean projection onto {x >= floor, sum(x) <= 1}."""
    x = np.maximum(np.asarray(x, dtype=float), floor)
    if x.sum() <= 1.0:
        return x
    # project x - floor onto the simplex of mass 1 - n*floor
    v = x - floor
    s = 1.0 - len(x) * floor
    if s <= 0:
        raise ValueError("infeasible floor: too many devices for the budget")
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    j = np.arange(1, len(v) + 1)
    rho = np.max(j[u - (css - s) / j > 0])
    tau = (css[rho - 1] - s) / rho
    return np.maximum(v - tau, 0.0) + floor


def _reduced_lagrangian(
    inst: P1Instance,
    state: AlmState,
    block: str,
    h: float,
    x_up: np.ndarray,
    x_dn: np.ndarray,
) -> Callable[[np.ndarray], tuple[float, np.ndarray]]:
    """Value/gradient closure of the slack-eliminated Lagrangian in one block.

    Bandwidth blocks work in fractions of the budget; `h` in its own units.
    """
    bud_up, bud_dn = inst.b_d2u_total, inst.b_u2d_total

    def fun_grad(xv: np.ndarray) -> tuple[float, np.ndarray]:
        hh = float(xv[0]) if block == "h" else h
        fu = xv if block == "d2u" else x_up
        fd = xv if block == "u2d" else x_dn
        b_up = fu * bud_up
        b_dn = fd * bud_dn
        r_up = _rate_eff(b_up, inst.cal_a_d2u)
        r_dn = _rate_eff(b_dn, inst.cal_a_u2d)
        hover = inst.u_d2u / r_up + inst.u_u2d / r_dn + hh * inst.z
        n_act = int(np.argmax(hover))
        g_val = float(hover[n_act])
        f_val = (
            float(np.sum(inst.a_d2u / r_up))
            + float(np.sum(inst.a_u2d / r_dn))
            + hh * float(np.sum(inst.c_coef))
            + g_val
        )
        u_hat = state.upsilon / state.sigma + g_val
        val = f_val + 0.5 * state.sigma * g_val**2
        if u_hat > 0:
            val -= 0.5 * state.sigma * (u_hat**2 - (state.upsilon / state.sigma) ** 2)
            pen_coeff = state.sigma * (g_val - u_hat)
        else:
            pen_coeff = state.sigma * g_val
        if block == "h":
            grad_f = float(np.sum(inst.c_coef)) + float(inst.z[n_act])
            grad_g = float(inst.z[n_act])
            return val, np.array([grad_f + pen_coeff * grad_g])
        if block == "d2u":
            d_term = -inst.a_d2u * _drate_db(b_up, inst.cal_a_d2u) * bud_up / r_up**2
            dg = -inst.u_d2u[n_act] * _drate_db(b_up[n_act : n_act + 1], inst.cal_a_d2u[n_act : n_act + 1])[0]
            dg *= bud_up / r_up[n_act] ** 2
        else:
            d_term = -inst.a_u2d * _drate_db(b_dn, inst.cal_a_u2d) * bud_dn / r_dn**2
            dg = -inst.u_u2d[n_act] * _drate_db(b_dn[n_act : n_act + 1], inst.cal_a_u2d[n_act : n_act + 1])[0]
            dg *= bud_dn / r_dn[n_act] ** 2
        grad = d_term.copy()
        grad[n_act] += dg + pen_coeff * dg
        return val, grad

    return fun_grad


def _gmax(inst: P1Instance, h: float, x_up: np.ndarray, x_dn: np.ndarray) -> float:
    return float(
        np.max(_hover_terms(inst, h, x_up * inst.b_d2u_total, x_dn * inst.b_u2d_total))
    )


def solve(inst: P1Instance, cfg: P1Config = P1Config()) -> P1Solution:
    """Alternating block descent with the multiplier loop per block.

    Blocks run in the order (iteration count, uplink split, downlink split)
    for up to cfg.sweeps sweeps.  The relaxed iteration count is rounded
    both ways at the end and the cheaper neighbour kept.
    """
    n = inst.n
    if cfg.frac_floor * n >= 1.0:
        raise ValueError("budget cannot accommodate the per-device floor")
    work = _scaled(inst, OBJ_SCALE / objective(inst, cfg.h0,
                                               np.full(n, inst.b_d2u_total / n),
                                               np.full(n, inst.b_u2d_total / n)))

    h = float(cfg.h0)
    x_up = np.full(n, 1.0 / n)
    x_dn = np.full(n, 1.0 / n)
    warn = False

    def true_obj(hh: float, fu: np.ndarray, fd: np.ndarray) -> float:
        return objective(inst, hh, fu * inst.b_d2u_total, fd * inst.b_u2d_total)

    best = (true_obj(h, x_up, x_dn), h, x_up.copy(), x_dn.copy())

    def track(hh: float, fu: np.ndarray, fd: np.ndarray) -> None:
        nonlocal best
        val = true_obj(hh, fu, fd)
        if val < best[0]:
            best = (val, hh, fu.copy(), fd.copy())

    proj_h = lambda v: np.clip(v, 1.0, cfg.h_max)
    proj_band = lambda v: project_capped_simplex(v, cfg.frac_floor)

    prev_sweep_obj = best[0]
    for _ in range(cfg.sweeps):
        for block in ("h", "d2u", "u2d"):
            state = fresh_state(cfg)
            eps0 = state.epsilon
            start = {"h": np.array([h]), "d2u": x_up, "u2d": x_dn}[block]
            project = proj_h if block == "h" else proj_band
            x_prev = None
            for _outer in range(cfg.outer_cap):
                fun_grad = _reduced_lagrangian(work, state, block, h, x_up, x_dn)
                x, w = inner_minimize(
                    fun_grad, state, start, step=cfg.eta_hat, cap=cfg.inner_cap, project=project
                )
                warn = warn or w
                if block == "h":
                    h = float(x[0])
                elif block == "d2u":
                    x_up = x
                else:
                    x_dn = x
                track(h, x_up, x_dn)
                # constraint value of the epigraph inequality G - u_hat <= 0
                # at the closed-form bound u_hat, not the raw hover max: the
                # multiplier loop watches the transformed constraint
                g_raw = _gmax(work, h, x_up, x_dn)
                g_val = g_raw - max(state.upsilon / state.sigma + g_raw, 0.0)
                psi = violation_psi(state, g_val)
                if psi <= eps0:
                    break
                new_state = outer_update(state, g_val, psi <= state.epsilon)
                if x_prev is not None and np.array_equal(x, x_prev) and new_state.upsilon == state.upsilon:
                    # iterate pinned and multiplier frozen: further outer
                    # iterations only reshuffle tolerances, so stop here
                    break
                state = new_state
                start = x
                x_prev = x.copy()
        cur = best[0]
        if abs(prev_sweep_obj - cur) <= 1e-9 * max(1.0, abs(cur)):
            break
        prev_sweep_obj = cur

    _, h_rel, x_up, x_dn = best
    candidates = sorted({max(1, int(np.floor(h_rel))), max(1, int(np.ceil(h_rel)))})
    vals = [true_obj(float(hc), x_up, x_dn) for hc in candidates]
    k = int(np.argmin(vals))
    return P1Solution(
        h_star=candidates[k],
        b_d2u=x_up * inst.b_d2u_total,
        b_u2d=x_dn * inst.b_u2d_total,
        objective_value=float(vals[k]),
        warn=warn,
    )


# ---------------------------------------------------------------------------
# oracle


def _simplex_grid(n: int, points: int) -> np.ndarray:
    """All splits k/points with k >= 1 per device, summing to 1."""
    if n == 1:
        return np.array([[1.0]])
    combos: list[list[int]] = []

    def rec(prefix: list[int], remaining: int, slots: int) -> None:
        if slots == 1:
            if remaining >= 1:
                combos.append(prefix + [remaining])
            return
        for k in range(1, remaining - (slots - 1) + 1):
            rec(prefix + [k], remaining - k, slots - 1)

    rec([], points, n)
    return np.asarray(combos, dtype=float) / points


def brute_force_oracle(
    inst: P1Instance, h_range: Sequence[int], grid_points: int
) -> P1Solution:
    """Exhaustive search over integer h and proportional full-budget splits."""
    if inst.n > 5:
        raise ValueError("oracle is for small instances only")
    splits = _simplex_grid(inst.n, grid_points)
    b_up = splits * inst.b_d2u_total  # (S, n)
    b_dn = splits * inst.b_u2d_total
    r_up = _rate_eff(b_up, inst.cal_a_d2u)
    r_dn = _rate_eff(b_dn, inst.cal_a_u2d)
    sum_up = (inst.a_d2u / r_up).sum(axis=1)  # (S,)
    sum_dn = (inst.a_u2d / r_dn).sum(axis=1)
    hov_up = inst.u_d2u / r_up  # (S, n)
    hov_dn = inst.u_u2d / r_dn
    c_sum = float(np.sum(inst.c_coef))
    best_val = np.inf
    best = None
    for h in h_range:
        # hover term couples the two split choices; evaluate the full cross
        # product lazily per h, vectorised over uplink rows
        for i_up in range(len(splits)):
            hover = hov_up[i_up][None, :] + hov_dn + h * inst.z[None, :]  # (S, n)
            total = sum_up[i_up] + sum_dn + h * c_sum + hover.max(axis=1)
            j = int(np.argmin(total))
            if total[j] < best_val:
                best_val = float(total[j])
                best = (int(h), i_up, j)
    h_star, i_up, i_dn = best
    return P1Solution(
        h_star=h_star,
        b_d2u=b_up[i_up],
        b_u2d=b_dn[i_dn],
        objective_value=best_val,
    )
