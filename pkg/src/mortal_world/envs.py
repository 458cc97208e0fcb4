"""Environment catalog: GridForage, JarChain, WearWorld, and plain open grids."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .embodiment import NOOP, ActuatorSpec, EmbodiedEnv, Outcome, SensorSpec
from .errors import UsageError
from .mdp import FiniteMdp

# Row offset, column offset for N, S, E, W.
MOVES = ((-1, 0), (1, 0), (0, 1), (0, -1))
ACTION_NAMES = ("N", "S", "E", "W")


def _cells(value) -> tuple:
    return tuple(sorted({(int(r), int(c)) for r, c in value}))


@dataclass(frozen=True)
class GridForageConfig:
    width: int = 7
    height: int = 7
    walls: tuple = ()
    food_cells: tuple = ()
    food_energy: float = 1.0
    food_respawn_period: int = 1
    energy_max: float = 1.0
    leak: float = 0.05
    move_cost: float = 0.0
    bump_semantics: str = "stay"
    start: tuple | None = None
    initial_energy: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "walls", _cells(self.walls))
        object.__setattr__(self, "food_cells", _cells(self.food_cells))
        if self.start is not None:
            object.__setattr__(self, "start", (int(self.start[0]), int(self.start[1])))
        _check_grid(self)


@dataclass(frozen=True)
class WearWorldConfig:
    width: int = 5
    height: int = 5
    damage_prob: float = 0.1
    repair_cell: tuple = (0, 0)
    repair_amount: int = 1
    max_damage: int = 4
    gain_decay: float = 0.25
    walls: tuple = ()
    food_cells: tuple = ()
    food_energy: float = 1.0
    food_respawn_period: int = 1
    energy_max: float = 1.0
    leak: float = 0.05
    move_cost: float = 0.0
    bump_semantics: str = "stay"
    start: tuple | None = None
    initial_energy: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "walls", _cells(self.walls))
        object.__setattr__(self, "food_cells", _cells(self.food_cells))
        object.__setattr__(self, "repair_cell", (int(self.repair_cell[0]), int(self.repair_cell[1])))
        if self.start is not None:
            object.__setattr__(self, "start", (int(self.start[0]), int(self.start[1])))
        _check_grid(self)
        if not 0.0 <= self.damage_prob <= 1.0:
            raise UsageError("damage_prob: must be in [0, 1]")
        if not _in_bounds(self.repair_cell, self):
            raise UsageError("repair_cell: out of bounds")
        if self.repair_cell in self.walls:
            raise UsageError("repair_cell: is a wall")
        if self.repair_amount < 1:
            raise UsageError("repair_amount: must be a positive integer")
        if self.max_damage < 0:
            raise UsageError("max_damage: must be nonnegative")


@dataclass(frozen=True)
class JarChainConfig:
    chain_length: int = 7
    irreversible_edge: int = 3
    terminal_end: bool = False


def _in_bounds(cell, cfg) -> bool:
    return 0 <= cell[0] < cfg.height and 0 <= cell[1] < cfg.width


def _check_grid(cfg) -> None:
    if cfg.width < 1:
        raise UsageError("width: must be a positive integer")
    if cfg.height < 1:
        raise UsageError("height: must be a positive integer")
    for name in ("walls", "food_cells"):
        for cell in getattr(cfg, name):
            if not _in_bounds(cell, cfg):
                raise UsageError(f"{name}: cell {cell} out of bounds")
    if set(cfg.walls) & set(cfg.food_cells):
        raise UsageError("food_cells: overlap walls")
    if len(cfg.walls) >= cfg.width * cfg.height:
        raise UsageError("walls: no open cell left")
    if cfg.food_energy <= 0:
        raise UsageError("food_energy: must be positive")
    if cfg.food_respawn_period < 1:
        raise UsageError("food_respawn_period: must be a positive integer")
    if cfg.energy_max <= 0:
        raise UsageError("energy_max: must be positive")
    if cfg.leak < 0:
        raise UsageError("leak: must be nonnegative")
    if cfg.move_cost < 0:
        raise UsageError("move_cost: must be nonnegative")
    if cfg.bump_semantics not in ("stay", "blocked_noop"):
        raise UsageError("bump_semantics: must be 'stay' or 'blocked_noop'")
    if cfg.start is not None and (not _in_bounds(cfg.start, cfg) or cfg.start in cfg.walls):
        raise UsageError("start: must be an open in-bounds cell")


class GridWorld:
    """4-action grid with periodic food and an optional repair cell.

    World state = (open cell, one countdown per food cell). A countdown of 0
    means the food is available; ending a step on available food consumes it
    and sets the countdown to the respawn period, so the food is unavailable
    for exactly that many following steps.
    """

    num_actions = 4

    def __init__(
        self,
        width,
        height,
        walls=(),
        food_cells=(),
        food_energy=1.0,
        respawn=1,
        bump_semantics="stay",
        start=None,
        repair_cell=None,
        repair_amount=0,
    ):
        self.width, self.height = int(width), int(height)
        self.walls = frozenset(walls)
        self.food_cells = tuple(food_cells)
        self.food_energy = float(food_energy)
        self.respawn = int(respawn)
        self.bump_semantics = bump_semantics
        self.repair_cell = repair_cell
        self.repair_amount = int(repair_amount)
        self.open_cells = [
            (r, c) for r in range(self.height) for c in range(self.width) if (r, c) not in self.walls
        ]
        self.cell_pos = {cell: i for i, cell in enumerate(self.open_cells)}
        self.timer_space = list(itertools.product(range(self.respawn + 1), repeat=len(self.food_cells)))
        self.timer_pos = {t: i for i, t in enumerate(self.timer_space)}
        self.num_states = len(self.open_cells) * len(self.timer_space)
        if start is None:
            start = self.open_cells[len(self.open_cells) // 2]
        self.initial_state = self.encode(tuple(start), (0,) * len(self.food_cells))
        self._cache: dict = {}

    @property
    def has_energy_gains(self) -> bool:
        return bool(self.food_cells)

    def encode(self, cell, timers) -> int:
        return self.cell_pos[tuple(cell)] * len(self.timer_space) + self.timer_pos[tuple(timers)]

    def decode(self, w: int):
        ci, ti = divmod(int(w), len(self.timer_space))
        return self.open_cells[ci], self.timer_space[ti]

    def move(self, cell, action):
        dr, dc = MOVES[action]
        target = (cell[0] + dr, cell[1] + dc)
        if not (0 <= target[0] < self.height and 0 <= target[1] < self.width) or target in self.walls:
            return cell, False
        return target, True

    def outcomes(self, w, action):
        key = (int(w), int(action))
        if key not in self._cache:
            self._cache[key] = [self._outcome(int(w), int(action))]
        return self._cache[key]

    def _outcome(self, w, action):
        cell, timers = self.decode(w)
        if action == NOOP:
            nxt, acted = cell, False
        else:
            nxt, free = self.move(cell, action)
            acted = free or self.bump_semantics == "stay"
        gain = 0.0
        new_timers = []
        for food, t in zip(self.food_cells, timers):
            if food == nxt and t == 0:
                gain += self.food_energy
                new_timers.append(self.respawn)
            else:
                new_timers.append(max(t - 1, 0))
        repair = -self.repair_amount if self.repair_cell is not None and nxt == tuple(self.repair_cell) else 0
        return Outcome(1.0, self.encode(nxt, tuple(new_timers)), gain, repair, acted)

    def is_terminal(self, w):
        return False

    def features(self, w):
        cell, _ = self.decode(w)
        f = np.zeros(len(self.open_cells))
        f[self.cell_pos[cell]] = 1.0
        return f

    def perceive(self, features, valid, true_world):
        """Cell is the arg-max of unmasked one-hot entries; countdowns are known."""
        _, timers = self.decode(true_world)
        if not valid.any():
            return self.encode(self.open_cells[0], timers)
        scores = np.where(valid, features, -np.inf)
        return self.encode(self.open_cells[int(np.argmax(scores))], timers)

    def label(self, w):
        cell, timers = self.decode(w)
        text = f"({cell[0]},{cell[1]})"
        if timers:
            text += "t" + ",".join(str(t) for t in timers)
        return text


def build_grid_forage(
    config: GridForageConfig,
    sensor: SensorSpec | None = None,
    actuator: ActuatorSpec | None = None,
    energy_levels: int | None = None,
) -> EmbodiedEnv:
    """Energy-survival grid. The actuator's per-action cost is set to ``config.move_cost``."""
    world = GridWorld(
        config.width,
        config.height,
        config.walls,
        config.food_cells,
        config.food_energy,
        config.food_respawn_period,
        config.bump_semantics,
        config.start,
    )
    actuator = actuator or ActuatorSpec()
    actuator = ActuatorSpec(actuator.dropout_prob, actuator.gain_decay_per_damage, config.move_cost)
    return EmbodiedEnv(
        world=world,
        energy_max=config.energy_max,
        leak=config.leak,
        sensor=sensor or SensorSpec(),
        actuator=actuator,
        initial_energy=config.initial_energy,
        energy_levels=energy_levels or default_energy_levels(config),
        name="grid_forage",
    )


def build_wear_world(
    config: WearWorldConfig,
    sensor: SensorSpec | None = None,
    actuator: ActuatorSpec | None = None,
    energy_levels: int | None = None,
) -> EmbodiedEnv:
    """Grid where moving wears the actuator and the repair cell restores it."""
    world = GridWorld(
        config.width,
        config.height,
        config.walls,
        config.food_cells,
        config.food_energy,
        config.food_respawn_period,
        config.bump_semantics,
        config.start,
        repair_cell=config.repair_cell,
        repair_amount=config.repair_amount,
    )
    actuator = actuator or ActuatorSpec()
    actuator = ActuatorSpec(actuator.dropout_prob, config.gain_decay, config.move_cost)
    return EmbodiedEnv(
        world=world,
        energy_max=config.energy_max,
        leak=config.leak,
        sensor=sensor or SensorSpec(),
        actuator=actuator,
        damage_prob=config.damage_prob,
        max_damage=config.max_damage,
        initial_energy=config.initial_energy,
        energy_levels=energy_levels or default_energy_levels(config),
        name="wear_world",
    )


def exact_energy_levels(energy_max: float, amounts) -> int:
    """Coarsest level count whose width divides every positive amount exactly."""
    amounts = [x for x in amounts if x > 0]
    for levels in range(2, 202):
        width = energy_max / (levels - 1)
        if all(abs(x / width - round(x / width)) < 1e-9 for x in amounts):
            return levels
    return 101


def default_energy_levels(config) -> int:
    return exact_energy_levels(config.energy_max, (config.leak, config.move_cost, config.food_energy))


def build_jar_chain(config: JarChainConfig) -> FiniteMdp:
    """Chain 0..L-1 with forward (0) and backward (1) actions.

    Backward across ``irreversible_edge`` (from edge+1 to edge) is blocked and
    leaves the state unchanged; ends of the chain also self-loop.
    """
    L, e = config.chain_length, config.irreversible_edge
    if L < 3:
        raise UsageError("chain_length: must be >= 3")
    if not 0 <= e < L - 1:
        raise UsageError("irreversible_edge: must satisfy 0 <= edge < chain_length - 1")
    T = np.zeros((L, 2, L))
    for s in range(L):
        T[s, 0, min(s + 1, L - 1)] = 1.0
        back = s - 1 if s > 0 and s != e + 1 else s
        T[s, 1, back] = 1.0
    terminal = []
    if config.terminal_end:
        terminal = [L - 1]
        T[L - 1] = 0.0
        T[L - 1, :, L - 1] = 1.0
    labels = [f"jar{s}" for s in range(L)]
    return FiniteMdp.from_dense(T, terminal, labels)


def open_grid_mdp(width: int, height: int, walls=(), terminal_cells=()) -> FiniteMdp:
    """Deterministic 4-action grid (no body); bumping a wall or edge stays put."""
    world = GridWorld(width, height, walls)
    S = world.num_states
    T = np.zeros((S, 4, S))
    for w in range(S):
        for a in range(4):
            T[w, a, world.outcomes(w, a)[0].world] = 1.0
    terminal = [world.encode(cell, ()) for cell in terminal_cells]
    for t in terminal:
        T[t] = 0.0
        T[t, :, t] = 1.0
    return FiniteMdp.from_dense(T, terminal, [world.label(w) for w in range(S)])


def grid_state(mdp_width: int, row: int, col: int) -> int:
    """State index of a cell in a wall-free :func:`open_grid_mdp`."""
    return row * mdp_width + col
