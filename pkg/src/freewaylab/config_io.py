"""Experiment configuration: dataclass composition plus a flat key=value file.

File format: one ``section.key = value`` per line, ``#`` comments, blank
lines ignored.  Unknown keys are rejected by name.  The full schema (keys,
types, defaults) is printed by ``freeway-lab print-schema`` and documented in
the README.
"""

from dataclasses import dataclass, field, replace

from .agent import Hyperparams
from .reward import RewardConfig
from .shield import SafetyConfig
from .simulation import (DEFAULT_KIND_MIX, MIXED_KIND_MIX, KindSpec, SimConfig,
                         SimMode, VehicleKind)


class ConfigError(Exception):
    pass


SLOW_ONLY_KIND_MIX = {VehicleKind.MANUAL_SLOW: KindSpec(1.0, 5.0, 16.0)}

KIND_MIX_PRESETS = {
    "default": DEFAULT_KIND_MIX,
    "mixed": MIXED_KIND_MIX,
    "slow_only": SLOW_ONLY_KIND_MIX,
}


@dataclass
class ExperimentConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    hyper: Hyperparams = field(default_factory=Hyperparams)
    safety: SafetyConfig = field(default_factory=SafetyConfig)
    n_scenarios: int = 100
    shield: bool = False
    densities: tuple = (8.0, 4.0, 2.0, 1.0)
    penetrations: tuple = (0.0, 0.05, 0.10, 0.20)
    flow_episode_len: int = 120
    desired_speed_tol: float = 0.5   # |v - v_d| band for "moves at desired speed"
    caused_gap: float = 2.0          # contact-level gap for "ego-caused"
    master_seed: int = 0


def _parse_bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_mode(raw: str) -> SimMode:
    try:
        return SimMode(raw.lower())
    except ValueError:
        names = ", ".join(m.value for m in SimMode)
        raise ValueError(f"mode must be one of {names}")


def _parse_floats(raw: str) -> tuple:
    return tuple(float(tok) for tok in raw.replace(",", " ").split())


def _parse_kind_mix(raw: str) -> dict:
    preset = raw.lower()
    if preset not in KIND_MIX_PRESETS:
        raise ValueError(f"kind_mix must be one of {sorted(KIND_MIX_PRESETS)}")
    return dict(KIND_MIX_PRESETS[preset])


# key -> (target object name, attribute, parser, doc)
SCHEMA = {
    "sim.entry_period_s": ("sim", "entry_period_s", float, "seconds between entries (8/4/2/1)"),
    "sim.episode_len": ("sim", "episode_len", int, "ego decision steps per scenario"),
    "sim.ego_entry_index": ("sim", "ego_entry_index", int, "the N-th entrant is the ego"),
    "sim.ego_desired_v": ("sim", "ego_desired_v", float, "ego desired speed (m/s)"),
    "sim.entry_speed_min": ("sim", "_entry_lo", float, "entry speed range low (m/s)"),
    "sim.entry_speed_max": ("sim", "_entry_hi", float, "entry speed range high (m/s)"),
    "sim.sigma": ("sim", "sigma", float, "driver imperfection in [0,1]"),
    "sim.noise_pct": ("sim", "noise_pct", float, "proportional sensing noise (0/0.05/0.10)"),
    "sim.mode": ("sim", "mode", _parse_mode, "constant_speed | car_following"),
    "sim.weather_speed_factor": ("sim", "_weather_speed", float, "non-ego desired-speed factor"),
    "sim.weather_accel_factor": ("sim", "_weather_accel", float, "manual accel/decel factor"),
    "sim.kind_mix": ("sim", "kind_mix", _parse_kind_mix, "default | mixed | slow_only"),
    "sim.entry_min_gap": ("sim", "entry_min_gap", float, "spawn guard gap (m)"),
    "reward.w1": ("reward", "w1", float, "obstacle weight"),
    "reward.w2": ("reward", "w2", float, "speed weight"),
    "reward.w3": ("reward", "w3", float, "collision weight"),
    "reward.w4": ("reward", "w4", float, "acceleration weight"),
    "reward.w5": ("reward", "w5", float, "lane-change weight"),
    "reward.delta_0": ("reward", "delta_0", float, "minimum safe distance (m)"),
    "reward.v_d": ("reward", "v_d", float, "desired speed in the reward (m/s)"),
    "train.gamma": ("hyper", "gamma", float, "discount factor"),
    "train.batch_size": ("hyper", "batch_size", int, "replay minibatch"),
    "train.target_sync": ("hyper", "target_sync", int, "gradient steps between target copies"),
    "train.lambda": ("hyper", "lam", float, "epsilon annealing rate"),
    "train.eps_min": ("hyper", "eps_min", float, "final exploration"),
    "train.eps_max": ("hyper", "eps_max", float, "initial exploration"),
    "train.max_steps": ("hyper", "max_steps", int, "gradient-step budget"),
    "train.horizon": ("hyper", "horizon", int, "episode horizon (steps)"),
    "train.lr": ("hyper", "lr", float, "Adam learning rate"),
    "train.memory_capacity": ("hyper", "memory_capacity", int, "replay capacity"),
    "train.per_alpha": ("hyper", "per_alpha", float, "priority exponent"),
    "train.per_eps": ("hyper", "per_eps", float, "priority offset"),
    "shield.d_max": ("safety", "d_max", float, "max feasible deceleration (m/s^2)"),
    "eval.n_scenarios": ("top", "n_scenarios", int, "scenarios per evaluation"),
    "eval.shield": ("top", "shield", _parse_bool, "apply the safety rules at evaluation"),
    "eval.densities": ("top", "densities", _parse_floats, "entry periods for dp-compare"),
    "eval.penetrations": ("top", "penetrations", _parse_floats, "fractions for traffic-flow"),
    "eval.flow_episode_len": ("top", "flow_episode_len", int, "traffic-flow scenario length (s)"),
    "eval.desired_speed_tol": ("top", "desired_speed_tol", float, "desired-speed band (m/s)"),
    "eval.caused_gap": ("top", "caused_gap", float, "contact gap for ego-caused accounting (m)"),
    "seed": ("top", "master_seed", int, "master seed"),
}


def parse_config_text(text: str, base: ExperimentConfig = None) -> ExperimentConfig:
    cfg = base or ExperimentConfig()
    sim_kw = {}
    reward_kw = {}
    hyper_kw = {}
    safety_kw = {}
    top_kw = {}
    entry_range = list(cfg.sim.entry_speed_range)
    weather = list(cfg.sim.weather_scale)

    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw_line!r}")
        key, _, raw_val = line.partition("=")
        key = key.strip()
        raw_val = raw_val.strip()
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        target, attr, parser, _doc = SCHEMA[key]
        try:
            val = parser(raw_val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}")
        if attr == "_entry_lo":
            entry_range[0] = val
        elif attr == "_entry_hi":
            entry_range[1] = val
        elif attr == "_weather_speed":
            weather[0] = val
        elif attr == "_weather_accel":
            weather[1] = val
        elif target == "sim":
            sim_kw[attr] = val
        elif target == "reward":
            reward_kw[attr] = val
        elif target == "hyper":
            hyper_kw[attr] = val
        elif target == "safety":
            safety_kw[attr] = val
        else:
            top_kw[attr] = val

    sim_kw["entry_speed_range"] = tuple(entry_range)
    sim_kw["weather_scale"] = tuple(weather)
    try:
        cfg = replace(
            cfg,
            sim=replace(cfg.sim, **sim_kw),
            reward=replace(cfg.reward, **reward_kw),
            hyper=replace(cfg.hyper, **hyper_kw),
            safety=replace(cfg.safety, **safety_kw),
            **top_kw,
        )
    except ValueError as exc:
        raise ConfigError(str(exc))
    return cfg


def load_config(path, base: ExperimentConfig = None) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config_text(fh.read(), base)


def schema_doc() -> str:
    lines = ["# freeway-lab config schema: 'key = value' per line, '#' comments.",
             "# Keys, in section order:"]
    for key, (_t, _a, parser, doc) in SCHEMA.items():
        type_name = getattr(parser, "__name__", str(parser))
        lines.append(f"#   {key:28s} ({type_name}) {doc}")
    return "\n".join(lines)
