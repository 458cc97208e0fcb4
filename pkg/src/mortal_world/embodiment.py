"""Bodies inside worlds: energy, damage, and degraded sensors and actuators.

An :class:`EmbodiedEnv` couples a finite *world* (anything implementing the
:class:`World` protocol) with a body whose energy drains by a per-step leak and
per-action cost. The body is part of the state, so it can be compiled together
with the world into an explicit :class:`~mortal_world.mdp.FiniteMdp`.

Random draws inside :func:`embodied_step` happen in a fixed order: actuator
dropout (only when its probability is positive), the world transition (always
exactly one uniform), damage (only when it can occur), then sensor draws (only
for non-identity sensors). Identity wrappers therefore consume exactly the
random numbers the bare world would.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, NamedTuple, Protocol

import numpy as np
from scipy import sparse

from .errors import CapacityBudgetError, UsageError
from .mdp import FiniteMdp
from .rng import sample_index

NOOP = -1
MASK_SENTINEL = -1.0
DEFAULT_STATE_CAP = 200_000
_ENERGY_SNAP = 1e-9


class Outcome(NamedTuple):
    prob: float
    world: int
    energy_gain: float = 0.0
    damage_change: int = 0
    acted: bool = True


class World(Protocol):
    num_states: int
    num_actions: int
    initial_state: int

    def outcomes(self, w: int, action: int) -> list[Outcome]:
        """Successor distribution; ``action`` may be :data:`NOOP`."""

    def is_terminal(self, w: int) -> bool: ...

    def features(self, w: int) -> np.ndarray: ...

    def perceive(self, features: np.ndarray, valid: np.ndarray, true_world: int) -> int: ...

    def label(self, w: int) -> str: ...


@dataclass(frozen=True)
class BodyState:
    energy: float
    energy_max: float
    sensor_damage: int = 0
    actuator_damage: int = 0

    @property
    def fraction(self) -> float:
        return self.energy / self.energy_max


def default_fidelity(fraction: float) -> float:
    """Observation precision in (0, 1]: full at full energy, a quarter when empty."""
    return 0.25 + 0.75 * min(max(fraction, 0.0), 1.0)


@dataclass(frozen=True)
class SensorSpec:
    modality: str = "mask"
    mask_fraction: float = 0.0
    noise_std: float = 0.0
    fidelity_curve: Callable[[float], float] = default_fidelity

    def __post_init__(self):
        if self.modality not in ("mask", "noise", "energy_fidelity"):
            raise UsageError(f"unknown sensor modality {self.modality!r}")
        if not 0.0 <= self.mask_fraction <= 1.0:
            raise UsageError("sensor mask_fraction must be in [0, 1]")
        if self.noise_std < 0:
            raise UsageError("sensor noise_std must be nonnegative")

    @property
    def is_identity(self) -> bool:
        if self.modality == "mask":
            return self.mask_fraction == 0.0
        return self.noise_std == 0.0


@dataclass(frozen=True)
class ActuatorSpec:
    dropout_prob: float = 0.0
    gain_decay_per_damage: float = 0.0
    energy_cost_per_action: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise UsageError("actuator dropout_prob must be in [0, 1]")
        if not 0.0 <= self.gain_decay_per_damage < 1.0:
            raise UsageError("actuator gain_decay_per_damage must be in [0, 1)")
        if self.energy_cost_per_action < 0:
            raise UsageError("actuator energy_cost_per_action must be nonnegative")

    def gain(self, damage: int) -> float:
        return (1.0 - self.gain_decay_per_damage) ** damage

    def drop_probability(self, damage: int) -> float:
        """Chance an intention is lost: base dropout, plus the damaged share of the rest."""
        return 1.0 - (1.0 - self.dropout_prob) * self.gain(damage)


@dataclass(frozen=True, eq=False)
class Observation:
    features: np.ndarray
    validity_mask: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        v = np.asarray(self.validity_mask, dtype=bool)
        if f.shape != v.shape:
            raise UsageError("features and validity_mask lengths differ")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "validity_mask", v)

    def __eq__(self, other):
        return (
            isinstance(other, Observation)
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.validity_mask, other.validity_mask)
        )


@dataclass(frozen=True)
class EmbodiedState:
    world: int
    body: BodyState


def _settle(energy: float, energy_max: float) -> float:
    # Snap float residue (e.g. 1.0 - 20 * 0.05) so exact starvation is detected.
    if energy <= _ENERGY_SNAP * energy_max:
        return 0.0
    return min(energy, energy_max)


def apply_sensor(
    spec: SensorSpec, body: BodyState, true_obs: Observation, rng: np.random.Generator
) -> Observation:
    feats = true_obs.features.copy()
    valid = true_obs.validity_mask.copy()
    if spec.is_identity:
        return Observation(feats, valid)
    if spec.modality == "mask":
        k = int(round(spec.mask_fraction * len(feats)))
        if k:
            hide = rng.choice(len(feats), size=k, replace=False)
            valid[hide] = False
    else:
        std = spec.noise_std
        if spec.modality == "energy_fidelity":
            std = std / spec.fidelity_curve(body.fraction)
        feats = feats + np.where(valid, rng.normal(0.0, std, size=len(feats)), 0.0)
    feats[~valid] = MASK_SENTINEL
    return Observation(feats, valid)


def apply_actuator(
    spec: ActuatorSpec, body: BodyState, intention: int, rng: np.random.Generator
) -> int:
    """Return the realized action, or :data:`NOOP` when the intention is dropped."""
    p = spec.drop_probability(body.actuator_damage)
    if p <= 0.0:
        return int(intention)
    return NOOP if rng.random() < p else int(intention)


def tick_energy(body: BodyState, action_cost: float, leak: float) -> BodyState:
    if action_cost < 0 or leak < 0:
        raise UsageError("action_cost and leak must be nonnegative")
    return replace(body, energy=_settle(body.energy - action_cost - leak, body.energy_max))


@dataclass(frozen=True, eq=False)
class EmbodiedEnv:
    """A world plus body dynamics. Immutable; simulate with :func:`embodied_step`."""

    world: World
    energy_max: float
    leak: float = 0.0
    sensor: SensorSpec = field(default_factory=SensorSpec)
    actuator: ActuatorSpec = field(default_factory=ActuatorSpec)
    damage_prob: float = 0.0
    max_damage: int = 0
    initial_energy: float | None = None
    energy_levels: int = 2
    name: str = "embodied"

    def __post_init__(self):
        if self.energy_max <= 0:
            raise UsageError("energy_max must be positive")
        if self.leak < 0:
            raise UsageError("leak must be nonnegative")
        if not 0.0 <= self.damage_prob <= 1.0:
            raise UsageError("damage_prob must be in [0, 1]")
        if self.max_damage < 0:
            raise UsageError("max_damage must be nonnegative")

    @property
    def num_actions(self) -> int:
        return self.world.num_actions

    @property
    def has_energy_gains(self) -> bool:
        return bool(getattr(self.world, "has_energy_gains", True))

    def initial_state(self) -> EmbodiedState:
        e = self.energy_max if self.initial_energy is None else self.initial_energy
        return EmbodiedState(self.world.initial_state, BodyState(float(e), float(self.energy_max)))

    def is_terminal(self, s: EmbodiedState) -> bool:
        return s.body.energy <= 0.0 or self.world.is_terminal(s.world)

    def true_observation(self, s: EmbodiedState) -> Observation:
        feats = np.append(self.world.features(s.world), s.body.fraction)
        return Observation(feats, np.ones(len(feats), dtype=bool))

    def observe(self, s: EmbodiedState, rng: np.random.Generator) -> Observation:
        return apply_sensor(self.sensor, s.body, self.true_observation(s), rng)

    def perceive(self, obs: Observation, s: EmbodiedState) -> EmbodiedState:
        """Agent's estimate of its state from an observation.

        World components absent from the observation (e.g. food timers) and
        damage counters are taken as known. A masked energy feature is read as
        half full; a perceived empty reservoir is read as one level, since the
        agent knows it is alive.
        """
        feats, valid = obs.features, obs.validity_mask
        w = self.world.perceive(feats[:-1], valid[:-1], s.world)
        frac = float(np.clip(feats[-1], 0.0, 1.0)) if valid[-1] else 0.5
        width = self.energy_max / (self.energy_levels - 1)
        energy = max(frac * self.energy_max, width) if s.body.energy > 0 else 0.0
        return EmbodiedState(w, replace(s.body, energy=energy))

    @cached_property
    def compiled(self) -> "CompiledEmbodiedMdp":
        return compile_explicit(self, self.energy_levels)


def embodied_step(
    env: EmbodiedEnv, s: EmbodiedState, intention: int, rng: np.random.Generator
) -> tuple[EmbodiedState, Observation]:
    if env.is_terminal(s):
        raise UsageError("cannot step from a terminal embodied state")
    if not 0 <= int(intention) < env.num_actions:
        raise UsageError(f"action {intention} out of range")
    realized = apply_actuator(env.actuator, s.body, intention, rng)
    outs = env.world.outcomes(s.world, realized)
    out = outs[sample_index(np.array([o.prob for o in outs]), rng)]
    moved = realized != NOOP and out.acted
    cost = env.actuator.energy_cost_per_action if moved else 0.0
    damage = s.body.actuator_damage
    if moved and env.damage_prob > 0.0 and rng.random() < env.damage_prob:
        damage = min(damage + 1, env.max_damage)
    damage = min(max(damage + out.damage_change, 0), env.max_damage)
    body = s.body
    if out.energy_gain:
        energy = _settle(body.energy - cost - env.leak + out.energy_gain, body.energy_max)
        body = replace(body, energy=energy)
    else:
        body = tick_energy(body, cost, env.leak)
    body = replace(body, actuator_damage=damage)
    nxt = EmbodiedState(out.world, body)
    return nxt, env.observe(nxt, rng)


@dataclass(frozen=True, eq=False)
class CompiledEmbodiedMdp(FiniteMdp):
    """Product MDP over (world, energy level, damage) plus one absorbing ``dead`` state."""

    energy_levels: int = 2
    energy_max: float = 1.0
    max_damage: int = 0
    world_of: np.ndarray | None = None
    level_of: np.ndarray | None = None
    damage_of: np.ndarray | None = None
    index_table: np.ndarray | None = None
    dead_state: int = -1

    @property
    def level_width(self) -> float:
        return self.energy_max / (self.energy_levels - 1)

    @property
    def energy_fraction(self) -> np.ndarray:
        return self.level_of / (self.energy_levels - 1)

    def quantize(self, energy: float) -> int:
        k = int(math.floor(energy / self.level_width + 0.5))
        return min(max(k, 0), self.energy_levels - 1)

    def index_of(self, s: EmbodiedState) -> int:
        k = self.quantize(s.body.energy) if s.body.energy > 0 else 0
        if k == 0:
            return self.dead_state
        idx = int(self.index_table[s.world, k, min(s.body.actuator_damage, self.max_damage)])
        return self.dead_state if idx < 0 else idx

    def body_of(self, idx: int) -> BodyState:
        return BodyState(
            float(self.level_of[idx] * self.level_width),
            self.energy_max,
            actuator_damage=max(int(self.damage_of[idx]), 0),
        )

    def representative(self, idx: int) -> EmbodiedState:
        """An embodied state that compiles to ``idx``."""
        return EmbodiedState(max(int(self.world_of[idx]), 0), self.body_of(idx))


def compile_explicit(
    env: EmbodiedEnv, energy_levels: int, state_cap: int = DEFAULT_STATE_CAP
) -> CompiledEmbodiedMdp:
    """Enumerate the embodied dynamics as an explicit MDP.

    Energy is quantized into ``energy_levels`` evenly spaced levels from 0 to
    ``energy_max`` with nearest-level rounding; level 0 and world-terminal
    states all collapse into a single absorbing ``dead`` state (the last index).
    """
    if energy_levels < 2:
        raise UsageError("energy_levels must be >= 2")
    world = env.world
    D = env.max_damage + 1
    alive_worlds = [w for w in range(world.num_states) if not world.is_terminal(w)]
    n_alive = len(alive_worlds) * (energy_levels - 1) * D
    if n_alive + 1 > state_cap:
        raise CapacityBudgetError(f"compiled model would have {n_alive + 1} states (cap {state_cap})")
    table = np.full((world.num_states, energy_levels, D), -1, dtype=np.int64)
    world_of = np.full(n_alive + 1, -1, dtype=np.int64)
    level_of = np.zeros(n_alive + 1, dtype=np.int64)
    damage_of = np.full(n_alive + 1, -1, dtype=np.int64)
    labels = []
    idx = 0
    for w in alive_worlds:
        for k in range(1, energy_levels):
            for d in range(D):
                table[w, k, d] = idx
                world_of[idx], level_of[idx], damage_of[idx] = w, k, d
                labels.append(f"{world.label(w)}|e={k}/{energy_levels - 1}" + (f"|d={d}" if D > 1 else ""))
                idx += 1
    dead = n_alive
    labels.append("dead")
    width = env.energy_max / (energy_levels - 1)
    A = world.num_actions
    rows, cols, vals = [], [], []
    cache: dict = {}
    for i in range(n_alive):
        w, k, d = int(world_of[i]), int(level_of[i]), int(damage_of[i])
        energy = k * width
        p_drop = env.actuator.drop_probability(d)
        for a in range(A):
            branches = [(a, 1.0 - p_drop), (NOOP, p_drop)]
            for realized, pr in branches:
                if pr <= 0.0:
                    continue
                key = (w, realized)
                if key not in cache:
                    cache[key] = world.outcomes(w, realized)
                for out in cache[key]:
                    moved = realized != NOOP and out.acted
                    cost = env.actuator.energy_cost_per_action if moved else 0.0
                    e2 = _settle(energy - cost - env.leak + out.energy_gain, env.energy_max)
                    k2 = min(int(math.floor(e2 / width + 0.5)), energy_levels - 1)
                    if moved and env.damage_prob > 0.0:
                        dmg = [(min(d + 1, env.max_damage), env.damage_prob), (d, 1.0 - env.damage_prob)]
                    else:
                        dmg = [(d, 1.0)]
                    for d1, pd in dmg:
                        if pd <= 0.0:
                            continue
                        d2 = min(max(d1 + out.damage_change, 0), env.max_damage)
                        if k2 == 0 or world.is_terminal(out.world):
                            j = dead
                        else:
                            j = int(table[out.world, k2, d2])
                        rows.append(i * A + a)
                        cols.append(j)
                        vals.append(pr * out.prob * pd)
    for a in range(A):
        rows.append(dead * A + a)
        cols.append(dead)
        vals.append(1.0)
    S = n_alive + 1
    P = sparse.csr_matrix((vals, (rows, cols)), shape=(S * A, S))
    P.sum_duplicates()
    return CompiledEmbodiedMdp(
        num_states=S,
        num_actions=A,
        transition=P,
        terminal=frozenset([dead]),
        labels=tuple(labels),
        energy_levels=energy_levels,
        energy_max=float(env.energy_max),
        max_damage=env.max_damage,
        world_of=world_of,
        level_of=level_of,
        damage_of=damage_of,
        index_table=table,
        dead_state=dead,
    )


class MdpWorld:
    """Adapter exposing a :class:`FiniteMdp` as a world; the no-op is a self-loop."""

    has_energy_gains = False

    def __init__(self, mdp: FiniteMdp, initial_state: int = 0):
        self.mdp = mdp
        self.num_states = mdp.num_states
        self.num_actions = mdp.num_actions
        self.initial_state = int(initial_state)

    def outcomes(self, w, action):
        if action == NOOP:
            return [Outcome(1.0, int(w), acted=False)]
        nxt, p = self.mdp.row(w, action)
        return [Outcome(float(pi), int(j)) for j, pi in zip(nxt, p)]

    def is_terminal(self, w):
        return int(w) in self.mdp.terminal

    def features(self, w):
        f = np.zeros(self.num_states)
        f[w] = 1.0
        return f

    def perceive(self, features, valid, true_world):
        scores = np.where(valid, features, -np.inf)
        return int(np.argmax(scores)) if valid.any() else 0

    def label(self, w):
        return self.mdp.label(w)
