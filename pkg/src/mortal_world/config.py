"""Experiment configuration files (TOML) and their translation into objects."""

from __future__ import annotations

import copy
from dataclasses import dataclass, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .agents import POLICY_KINDS, TIE_MODES, AffectState, QParams
from .embodiment import ActuatorSpec, EmbodiedEnv, MdpWorld, SensorSpec
from .errors import ConfigError, UsageError
from .envs import (
    GridForageConfig,
    JarChainConfig,
    WearWorldConfig,
    build_grid_forage,
    build_jar_chain,
    build_wear_world,
    exact_energy_levels,
)
from .mdp import FiniteMdp

ENV_KINDS = ("grid_forage", "jar_chain", "wear_world")

DEFAULTS = {
    "env": {
        "kind": "grid_forage",
        "width": 7,
        "height": 7,
        "walls": [],
        "food_cells": [],
        "food_energy": 1.0,
        "food_respawn_period": 1,
        "bump_semantics": "stay",
        "start": None,
        "repair_cell": [0, 0],
        "repair_amount": 1,
        "chain_length": 7,
        "irreversible_edge": 3,
        "terminal_end": False,
        "damage_prob": None,
    },
    "embodiment": {
        "energy_max": 1.0,
        "leak": 0.05,
        "action_cost": 0.0,
        "initial_energy": None,
        "energy_levels": None,
        "damage_prob": 0.0,
        "max_damage": 4,
        "sensor": {"modality": "mask", "mask_fraction": 0.0, "noise_std": 0.0},
        "actuator": {"dropout_prob": 0.0, "gain_decay": 0.0},
    },
    "agent": {
        "kind": "random",
        "horizon_n": None,
        "alpha": 0.1,
        "gamma": 0.9,
        "epsilon": 0.1,
        "setpoint": 0.8,
        "beta": 0.0,
        "lambda": 0.9,
        "kappa": 0.5,
        "tie_mode": "lowest_index",
        "death_penalty": 0.0,
    },
    "run": {
        "num_seeds": 10,
        "max_steps": 200,
        "horizon_n": 2,
        "health_horizon": 20,
        "health_rollouts": 50,
        "health_every": 5,
        "track_empowerment": False,
        "train_episodes": 0,
        "base_seed": 0,
        "tol": 1e-6,
    },
    "output": {"directory": "out", "formats": ["csv", "json"]},
}


def _merge(base: dict, override: dict, path: str, problems: list) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            problems.append(f"unknown key {where!r}")
        elif isinstance(base[key], dict):
            if not isinstance(value, dict):
                problems.append(f"{where!r} must be a table")
            else:
                out[key] = _merge(base[key], value, where, problems)
        else:
            out[key] = value
    return out


def flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    env: dict
    agent: dict
    embodiment: dict
    run: dict
    output: dict

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        problems: list = []
        merged = _merge(DEFAULTS, raw, "", problems)
        cfg = cls(**merged)
        problems += cfg._problems()
        if problems:
            raise ConfigError(problems)
        return cfg

    def as_dict(self) -> dict:
        return {
            "env": copy.deepcopy(self.env),
            "agent": copy.deepcopy(self.agent),
            "embodiment": copy.deepcopy(self.embodiment),
            "run": copy.deepcopy(self.run),
            "output": copy.deepcopy(self.output),
        }

    def with_value(self, dotted: str, value) -> "ExperimentConfig":
        if dotted not in flatten(DEFAULTS):
            raise ConfigError(f"unknown config path {dotted!r}")
        d = self.as_dict()
        node = d
        parts = dotted.split(".")
        for p in parts[:-1]:
            node = node[p]
        node[parts[-1]] = value
        return ExperimentConfig.from_dict(d)

    @property
    def agent_kinds(self) -> list:
        kind = self.agent["kind"]
        return [kind] if isinstance(kind, str) else list(kind)

    @property
    def horizon_n(self) -> int:
        return int(self.agent["horizon_n"] or self.run["horizon_n"])

    def _problems(self) -> list:
        p = []
        run = self.run
        for key in ("num_seeds", "max_steps", "horizon_n", "health_horizon", "health_rollouts"):
            if not isinstance(run[key], int) or run[key] < 1:
                p.append(f"run.{key} must be an integer >= 1")
        for key in ("health_every", "train_episodes", "base_seed"):
            if not isinstance(run[key], int) or run[key] < 0:
                p.append(f"run.{key} must be an integer >= 0")
        if self.env["kind"] not in ENV_KINDS:
            p.append(f"env.kind {self.env['kind']!r} not one of {ENV_KINDS}")
        kinds = self.agent["kind"]
        kinds = [kinds] if isinstance(kinds, str) else kinds
        if not kinds:
            p.append("agent.kind is empty")
        for k in kinds:
            if k not in POLICY_KINDS:
                p.append(f"agent.kind {k!r} not one of {POLICY_KINDS}")
        if self.agent["tie_mode"] not in TIE_MODES:
            p.append(f"agent.tie_mode must be one of {TIE_MODES}")
        fmts = self.output["formats"]
        if not set(fmts) <= {"csv", "json"}:
            p.append("output.formats may only contain 'csv' and 'json'")
        if not p:
            try:
                self.build_env()
                self.q_params()
                self.affect()
            except (UsageError, TypeError, ValueError) as exc:
                p.append(f"invalid value: {exc}")
        return p

    def sensor(self) -> SensorSpec:
        s = self.embodiment["sensor"]
        return SensorSpec(s["modality"], float(s["mask_fraction"]), float(s["noise_std"]))

    def actuator(self) -> ActuatorSpec:
        a = self.embodiment["actuator"]
        return ActuatorSpec(float(a["dropout_prob"]), float(a["gain_decay"]), float(self.embodiment["action_cost"]))

    def q_params(self) -> QParams:
        a = self.agent
        return QParams(
            learning_rate=float(a["alpha"]),
            discount=float(a["gamma"]),
            epsilon_base=float(a["epsilon"]),
            setpoint=float(a["setpoint"]),
            intrinsic_weight=float(a["beta"]),
            death_penalty=float(a["death_penalty"]),
        )

    def affect(self) -> AffectState:
        return AffectState(decay=float(self.agent["lambda"]), gain=float(self.agent["kappa"]))

    def base_mdp(self) -> FiniteMdp | None:
        """The bare MDP for jar_chain environments, else None."""
        if self.env["kind"] != "jar_chain":
            return None
        e = self.env
        return build_jar_chain(JarChainConfig(int(e["chain_length"]), int(e["irreversible_edge"]), bool(e["terminal_end"])))

    def build_env(self) -> EmbodiedEnv:
        e, b = self.env, self.embodiment
        levels = b["energy_levels"]
        levels = int(levels) if levels is not None else None
        common = dict(
            width=int(e["width"]),
            height=int(e["height"]),
            walls=tuple(tuple(c) for c in e["walls"]),
            food_cells=tuple(tuple(c) for c in e["food_cells"]),
            food_energy=float(e["food_energy"]),
            food_respawn_period=int(e["food_respawn_period"]),
            energy_max=float(b["energy_max"]),
            leak=float(b["leak"]),
            move_cost=float(b["action_cost"]),
            bump_semantics=e["bump_semantics"],
            start=tuple(e["start"]) if e["start"] is not None else None,
            initial_energy=b["initial_energy"],
        )
        if e["kind"] == "grid_forage":
            env = build_grid_forage(GridForageConfig(**common), self.sensor(), self.actuator(), levels)
            if float(b["damage_prob"]) > 0:
                env = replace(env, damage_prob=float(b["damage_prob"]), max_damage=int(b["max_damage"]))
            return env
        if e["kind"] == "wear_world":
            dp = e["damage_prob"] if e["damage_prob"] is not None else b["damage_prob"]
            cfg = WearWorldConfig(
                damage_prob=float(dp),
                repair_cell=tuple(e["repair_cell"]),
                repair_amount=int(e["repair_amount"]),
                max_damage=int(b["max_damage"]),
                gain_decay=float(b["actuator"]["gain_decay"]),
                **common,
            )
            return build_wear_world(cfg, self.sensor(), self.actuator(), levels)
        mdp = self.base_mdp()
        return EmbodiedEnv(
            world=MdpWorld(mdp, 0),
            energy_max=float(b["energy_max"]),
            leak=float(b["leak"]),
            sensor=self.sensor(),
            actuator=self.actuator(),
            damage_prob=float(b["damage_prob"]),
            max_damage=int(b["max_damage"]) if float(b["damage_prob"]) > 0 else 0,
            initial_energy=b["initial_energy"],
            energy_levels=levels or exact_energy_levels(float(b["energy_max"]), [float(b["leak"]), float(b["action_cost"])]),
            name="jar_chain",
        )

    def analysis_mdp(self) -> FiniteMdp:
        """Model used by the empowerment-map and viability commands."""
        return self.base_mdp() or self.build_env().compiled


def load_config(path) -> ExperimentConfig:
    try:
        raw = tomllib.loads(Path(path).read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return ExperimentConfig.from_dict(raw)


def load_grid(path) -> dict:
    """Parameter grid file: dotted config paths mapped to lists of values.

    Either top-level keys or a ``[grid]`` table are accepted, e.g.
    ``"embodiment.leak" = [0.0, 0.5]``.
    """
    try:
        raw = tomllib.loads(Path(path).read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    grid = raw.get("grid", raw)
    known = flatten(DEFAULTS)
    problems = []
    out = {}
    for key, values in flatten(grid).items():
        if key not in known:
            problems.append(f"grid key {key!r} is not a config path")
        elif not isinstance(values, list) or not values:
            problems.append(f"grid key {key!r} must map to a nonempty list")
        else:
            out[key] = values
    if not out and not problems:
        problems.append("grid is empty")
    if problems:
        raise ConfigError(problems)
    return out
