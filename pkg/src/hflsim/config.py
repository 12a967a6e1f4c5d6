"""Typed run configuration: a flat dotted-key text format over defaults.

A config file is lines of ``section.key = value`` (``#`` starts a comment).
Every key has a registered type and default; unknown keys and malformed
values are rejected with the offending key path.  ``canonical_dump`` emits
the full sorted key set with repr-formatted floats, so parse -> dump ->
parse is a fixed point and the SHA-256 of the dump is a stable config hash.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable, Mapping

from .netmodel import ChannelParams
from .p1_alm import P1Config
from .p2_td3 import Td3Config
from .p3_greedy import SearchConfig

__all__ = [
    "ConfigError",
    "FleetCfg",
    "DeviceCfg",
    "LearnerCfg",
    "P2Cfg",
    "StrategyCfg",
    "SimConfig",
    "SELECTION_STRATEGIES",
    "REDEPLOY_STRATEGIES",
    "parse_file",
    "parse_text",
    "build",
    "canonical_dump",
    "config_hash",
    "as_dict",
]

SELECTION_STRATEGIES = (
    "adaptive-TD3",
    "random",
    "distance-only",
    "similarity-only",
    "fixed-threshold",
)
REDEPLOY_STRATEGIES = ("two-stage-greedy", "direct-drop")


class ConfigError(ValueError):
    """Invalid configuration; `key` is the offending dotted path."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class FleetCfg:
    n_uavs: int = 5
    n_devices: int = 150
    field_size: float = 20_000.0
    coverage_radius: float = 5_000.0
    altitude: float = 150.0
    xi: float = 0.3
    battery: float = 5e5
    low_battery: float = 0.0  # scripted budget for the first few UAVs
    low_battery_uavs: int = 0
    p_hover: float = 100.0
    p_move: float = 160.0
    speed: float = 16.0
    b_u2u: float = 2e6
    p_u2d_min: float = 0.3
    p_u2d_max: float = 1.2
    p_u2u_min: float = 0.5
    p_u2u_max: float = 1.0
    b_d2u_min: float = 2e7
    b_d2u_max: float = 1e8
    b_u2d_min: float = 2e7
    b_u2d_max: float = 1e8
    payload_bits: float = 0.0  # 0 = derive from the model size


@dataclass(frozen=True)
class DeviceCfg:
    f_min: float = 1e9
    f_max: float = 1e10
    c_min: float = 30.0
    c_max: float = 100.0
    p_d2u_min: float = 0.2
    p_d2u_max: float = 0.8
    phi: float = 1.0
    theta: float = 1e-28
    t_fix: float = 0.01
    samples: int = 64


@dataclass(frozen=True)
class LearnerCfg:
    scheme: str = "A"
    sigma: float = 0.25
    eta: float = 0.001
    hidden: int = 0
    test_samples: int = 1000
    probe_samples: int = 256


@dataclass(frozen=True)
class P2Cfg:
    gamma: float = 0.99
    tau: float = 0.005
    policy_delay: int = 2
    noise_sigma: float = 0.1
    noise_clip: float = 0.25
    buffer_cap: int = 10_000
    batch_size: int = 64
    alpha_pen0: float = 1.0
    d_alpha_pen: float = 0.5
    lr_actor: float = 0.01
    lr_critic: float = 0.02
    warmup: int = 200
    t_step: int = 4
    hidden: int = 64
    lambda6: float = 0.5
    lambda7: float = 0.5

    def td3(self) -> Td3Config:
        return Td3Config(
            state_dim=2,
            hidden=self.hidden,
            gamma=self.gamma,
            tau=self.tau,
            policy_delay=self.policy_delay,
            noise_sigma=self.noise_sigma,
            noise_clip=self.noise_clip,
            buffer_cap=self.buffer_cap,
            batch_size=self.batch_size,
            alpha_pen0=self.alpha_pen0,
            d_alpha_pen=self.d_alpha_pen,
            lr_actor=self.lr_actor,
            lr_critic=self.lr_critic,
            warmup=self.warmup,
            t_step=self.t_step,
        )


@dataclass(frozen=True)
class StrategyCfg:
    selection: str = "adaptive-TD3"
    redeploy: str = "two-stage-greedy"
    fixed_beta: float = 0.5
    lambda1: float = 0.6
    lambda2: float = 0.2
    lambda3: float = 0.2
    lambda4: float = 0.5
    lambda5: float = 0.5
    delta: float = 1e-3
    max_rounds: int = 50
    k_max: int = 10


@dataclass(frozen=True)
class SimConfig:
    seed: int
    fleet: FleetCfg
    device: DeviceCfg
    channel: ChannelParams
    learner: LearnerCfg
    p1: P1Config
    p2: P2Cfg
    p3: SearchConfig
    strategy: StrategyCfg


def _cast_int(raw: str) -> int:
    return int(raw, 0)


def _cast_float(raw: str) -> float:
    return float(raw)


def _cast_str(raw: str) -> str:
    return raw


_SECTION_TYPES: dict[str, type] = {
    "fleet": FleetCfg,
    "device": DeviceCfg,
    "channel": ChannelParams,
    "learner": LearnerCfg,
    "p1": P1Config,
    "p2": P2Cfg,
    "p3": SearchConfig,
    "strategy": StrategyCfg,
}

_CASTERS: dict[type, Callable[[str], object]] = {
    int: _cast_int,
    float: _cast_float,
    str: _cast_str,
}


def _registry() -> dict[str, tuple[str, str, Callable[[str], object], object]]:
    """dotted key -> (section, field, caster, default)."""
    reg: dict[str, tuple[str, str, Callable[[str], object], object]] = {
        "seed": ("", "seed", _cast_int, 0)
    }
    for section, cls in _SECTION_TYPES.items():
        inst = cls()  # all sections are fully defaulted
        for name, field_type in cls.__annotations__.items():
            py_type = {"int": int, "float": float, "str": str}[str(field_type)]
            reg[f"{section}.{name}"] = (section, name, _CASTERS[py_type], getattr(inst, name))
    return reg


_REGISTRY = _registry()


def parse_text(text: str) -> dict[str, object]:
    """Typed overrides from config text; raises ConfigError on bad input."""
    out: dict[str, object] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw_line!r}")
        key, _, raw_val = line.partition("=")
        key = key.strip()
        raw_val = raw_val.strip()
        if key not in _REGISTRY:
            raise ConfigError(key, "unknown configuration key")
        if key in out:
            raise ConfigError(key, "duplicate key")
        caster = _REGISTRY[key][2]
        try:
            out[key] = caster(raw_val)
        except ValueError as exc:
            raise ConfigError(key, f"cannot parse value {raw_val!r}: {exc}") from None
    return out


def parse_file(path) -> dict[str, object]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_text(fh.read())


def build(overrides: Mapping[str, object] | None = None) -> SimConfig:
    """Defaults merged with typed overrides, constructed and validated."""
    overrides = dict(overrides or {})
    values: dict[str, object] = {k: spec[3] for k, spec in _REGISTRY.items()}
    for key, val in overrides.items():
        if key not in _REGISTRY:
            raise ConfigError(key, "unknown configuration key")
        expected = type(_REGISTRY[key][3])
        if expected is float and isinstance(val, int) and not isinstance(val, bool):
            val = float(val)
        if not isinstance(val, expected) or isinstance(val, bool):
            raise ConfigError(key, f"expected {expected.__name__}, got {type(val).__name__}")
        values[key] = val

    sections: dict[str, object] = {}
    for section, cls in _SECTION_TYPES.items():
        kwargs = {
            spec[1]: values[key]
            for key, spec in _REGISTRY.items()
            if spec[0] == section
        }
        try:
            sections[section] = cls(**kwargs)
        except ValueError as exc:
            raise ConfigError(section, str(exc)) from None
    cfg = SimConfig(seed=int(values["seed"]), **sections)  # type: ignore[arg-type]
    _validate(cfg)
    return cfg


def _validate(cfg: SimConfig) -> None:
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed", "seed must be an unsigned 64-bit integer")
    st = cfg.strategy
    lam_sum = st.lambda1 + st.lambda2 + st.lambda3
    if abs(lam_sum - 1.0) > 1e-9:
        raise ConfigError(
            "strategy.lambda1", f"fitness weights sum to {lam_sum!r}, expected 1"
        )
    if st.selection not in SELECTION_STRATEGIES:
        raise ConfigError("strategy.selection", f"unknown strategy {st.selection!r}")
    if st.redeploy not in REDEPLOY_STRATEGIES:
        raise ConfigError("strategy.redeploy", f"unknown strategy {st.redeploy!r}")
    if not 0.0 <= st.fixed_beta <= 1.0:
        raise ConfigError("strategy.fixed_beta", "threshold must lie in [0, 1]")
    if min(st.lambda4, st.lambda5) < 0:
        raise ConfigError("strategy.lambda4", "cost weights must be non-negative")
    if st.max_rounds < 0:
        raise ConfigError("strategy.max_rounds", "round cap must be non-negative")
    if st.k_max < 1:
        raise ConfigError("strategy.k_max", "need at least one edge iteration")
    if st.delta <= 0:
        raise ConfigError("strategy.delta", "convergence tolerance must be positive")

    fl = cfg.fleet
    if fl.n_uavs < 1:
        raise ConfigError("fleet.n_uavs", "need at least one UAV")
    if fl.n_devices < 1:
        raise ConfigError("fleet.n_devices", "need at least one device")
    if not 0.0 <= fl.xi <= 1.0:
        raise ConfigError("fleet.xi", "mobility probability must lie in [0, 1]")
    if fl.field_size <= 0 or fl.coverage_radius <= 0 or fl.altitude <= 0:
        raise ConfigError("fleet.field_size", "geometry values must be positive")
    if fl.battery <= 0:
        raise ConfigError("fleet.battery", "battery budget must be positive")
    if fl.low_battery < 0 or fl.low_battery_uavs < 0:
        raise ConfigError("fleet.low_battery", "scripted budgets must be non-negative")
    if fl.low_battery_uavs > fl.n_uavs:
        raise ConfigError("fleet.low_battery_uavs", "more scripted UAVs than the fleet has")
    if fl.low_battery_uavs > 0 and fl.low_battery <= 0:
        raise ConfigError("fleet.low_battery", "scripted budget must be positive when used")
    if fl.payload_bits < 0:
        raise ConfigError("fleet.payload_bits", "payload size must be non-negative")
    for lo, hi, key in (
        (fl.p_u2d_min, fl.p_u2d_max, "fleet.p_u2d_min"),
        (fl.p_u2u_min, fl.p_u2u_max, "fleet.p_u2u_min"),
        (fl.b_d2u_min, fl.b_d2u_max, "fleet.b_d2u_min"),
        (fl.b_u2d_min, fl.b_u2d_max, "fleet.b_u2d_min"),
        (cfg.device.f_min, cfg.device.f_max, "device.f_min"),
        (cfg.device.c_min, cfg.device.c_max, "device.c_min"),
        (cfg.device.p_d2u_min, cfg.device.p_d2u_max, "device.p_d2u_min"),
    ):
        if not 0 < lo <= hi:
            raise ConfigError(key, "need 0 < min <= max")
    if min(fl.p_hover, fl.p_move, fl.speed, fl.b_u2u) <= 0:
        raise ConfigError("fleet.p_hover", "fleet physics values must be positive")

    dv = cfg.device
    if not 0.0 < dv.phi <= 1.0:
        raise ConfigError("device.phi", "minibatch fraction must lie in (0, 1]")
    if dv.theta <= 0 or dv.t_fix < 0 or dv.samples < 1:
        raise ConfigError("device.theta", "invalid device compute parameters")

    ln = cfg.learner
    if ln.scheme not in ("A", "B"):
        raise ConfigError("learner.scheme", f"unknown scheme {ln.scheme!r}")
    if ln.sigma <= 0 or ln.eta < 0:
        raise ConfigError("learner.sigma", "invalid learner parameters")
    if ln.hidden < 0 or ln.test_samples < 1 or ln.probe_samples < 1:
        raise ConfigError("learner.hidden", "invalid learner sizes")
    if min(cfg.p2.lambda6, cfg.p2.lambda7) < 0:
        raise ConfigError("p2.lambda6", "reward weights must be non-negative")
    cfg.p2.td3()  # surfaces Td3Config invariant violations with the p2 prefix


def as_dict(cfg: SimConfig) -> dict[str, object]:
    """The full dotted-key view of a config (sorted by key)."""
    out: dict[str, object] = {}
    for key in sorted(_REGISTRY):
        section, field = _REGISTRY[key][0], _REGISTRY[key][1]
        obj = cfg if section == "" else getattr(cfg, section)
        out[key] = getattr(obj, field)
    return out


def _fmt(value: object) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def canonical_dump(cfg: SimConfig) -> str:
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in as_dict(cfg).items())


def config_hash(cfg: SimConfig) -> str:
    return hashlib.sha256(canonical_dump(cfg).encode("utf-8")).hexdigest()
