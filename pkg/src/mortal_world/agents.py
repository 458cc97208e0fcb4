"""Policies and affect signals.

Policies act on state indices of a :class:`~mortal_world.mdp.FiniteMdp` (for
embodied environments, the compiled model) through ``act(s, rng)``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .embodiment import BodyState
from .empowerment import EmpowermentMap, expected_successor_empowerment
from .errors import UsageError
from .mdp import FiniteMdp

POLICY_KINDS = ("random", "greedy_empowerment", "homeostatic_q", "hybrid")
TIE_MODES = ("lowest_index", "seeded_uniform")


@dataclass(frozen=True)
class QParams:
    learning_rate: float = 0.1
    discount: float = 0.9
    epsilon_base: float = 0.1
    setpoint: float = 0.8
    intrinsic_weight: float = 0.0
    # Added to the reward of a transition into a terminal state.
    death_penalty: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.learning_rate <= 1.0:
            raise UsageError("learning_rate must be in [0, 1]")
        if not 0.0 <= self.discount < 1.0:
            raise UsageError("discount must be in [0, 1)")
        if not 0.0 <= self.epsilon_base <= 1.0:
            raise UsageError("epsilon_base must be in [0, 1]")
        if not 0.0 <= self.setpoint <= 1.0:
            raise UsageError("setpoint must be in [0, 1]")
        if self.intrinsic_weight < 0:
            raise UsageError("intrinsic_weight must be nonnegative")


@dataclass(frozen=True)
class AffectState:
    last_health: float = 1.0
    valence: float = 0.0
    stress: float = 0.0
    decay: float = 0.9
    gain: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.decay < 1.0:
            raise UsageError("affect decay must be in [0, 1)")
        if self.gain < 0:
            raise UsageError("affect gain must be nonnegative")


def act_random(num_actions: int, rng: np.random.Generator) -> int:
    if num_actions < 1:
        raise UsageError("num_actions must be >= 1")
    return int(rng.integers(num_actions))


def _break_tie(scores: np.ndarray, tie_mode: str, rng) -> int:
    best = scores.max()
    tied = np.flatnonzero(scores >= best - 1e-9 * abs(best)) if best != 0 else np.flatnonzero(scores == 0)
    if tie_mode == "lowest_index" or len(tied) == 1:
        return int(tied[0])
    if tie_mode == "seeded_uniform":
        return int(tied[rng.integers(len(tied))])
    raise UsageError(f"unknown tie_mode {tie_mode!r}")


def act_greedy_empowerment(
    mdp: FiniteMdp,
    s: int,
    n: int,
    emap: EmpowermentMap,
    rng: np.random.Generator,
    tie_mode: str = "lowest_index",
) -> int:
    """Pick the action whose successor has the highest expected n-step empowerment."""
    if int(s) in mdp.terminal:
        raise UsageError("greedy empowerment is undefined at a terminal state")
    scores = np.array(
        [expected_successor_empowerment(mdp, s, a, n, emap) for a in range(mdp.num_actions)]
    )
    return _break_tie(scores, tie_mode, rng)


def homeostatic_reward(body: BodyState, setpoint: float) -> float:
    return -abs(body.energy / body.energy_max - setpoint)


def update_affect(affect: AffectState, new_health: float) -> AffectState:
    if not 0.0 <= new_health <= 1.0:
        raise UsageError(f"health {new_health} outside [0, 1]")
    valence = new_health - affect.last_health
    stress = max(0.0, affect.decay * affect.stress + max(0.0, -valence))
    return replace(affect, last_health=new_health, valence=valence, stress=stress)


def stress_modulated_epsilon(params: QParams, affect: AffectState) -> float:
    return min(max(params.epsilon_base + affect.gain * affect.stress, 0.0), 1.0)


class RandomPolicy:
    kind = "random"

    def __init__(self, num_actions: int):
        self.num_actions = int(num_actions)

    def act(self, s, rng):
        return act_random(self.num_actions, rng)


class GreedyEmpowermentPolicy:
    kind = "greedy_empowerment"

    def __init__(self, mdp: FiniteMdp, emap: EmpowermentMap, tie_mode: str = "lowest_index"):
        if tie_mode not in TIE_MODES:
            raise UsageError(f"unknown tie_mode {tie_mode!r}")
        self.mdp, self.emap, self.tie_mode = mdp, emap, tie_mode
        # Row s*A + a of the transition matrix times the bits vector is the expected successor value.
        self._scores = (mdp.transition @ emap.bits).reshape(mdp.num_states, mdp.num_actions)

    def act(self, s, rng):
        if int(s) in self.mdp.terminal:
            raise UsageError("greedy empowerment is undefined at a terminal state")
        return _break_tie(self._scores[int(s)], self.tie_mode, rng)


class QPolicy:
    """Tabular epsilon-greedy Q-learner; ``hybrid`` adds an empowerment bonus to the reward.

    The exploration rate is :func:`stress_modulated_epsilon` of the current
    affect, so stress raises exploration when the affect gain is positive.
    """

    def __init__(
        self,
        mdp: FiniteMdp,
        params: QParams | None = None,
        affect: AffectState | None = None,
        emap: EmpowermentMap | None = None,
        kind: str = "homeostatic_q",
    ):
        if kind not in ("homeostatic_q", "hybrid"):
            raise UsageError(f"QPolicy kind must be homeostatic_q or hybrid, not {kind!r}")
        self.params = params or QParams()
        if kind == "hybrid" and emap is None:
            raise UsageError("hybrid policy requires an empowerment map")
        self.mdp, self.kind, self.emap = mdp, kind, emap
        self.affect = affect or AffectState()
        self.q = np.zeros((mdp.num_states, mdp.num_actions))

    @property
    def epsilon(self) -> float:
        return stress_modulated_epsilon(self.params, self.affect)

    def act(self, s, rng):
        if rng.random() < self.epsilon:
            return int(rng.integers(self.mdp.num_actions))
        return int(np.argmax(self.q[int(s)]))

    def reward(self, body_next: BodyState, s_next: int) -> float:
        """Homeostatic reward plus, for hybrids, the weighted empowerment of the successor."""
        r = homeostatic_reward(body_next, self.params.setpoint)
        if self.kind == "hybrid":
            r += self.params.intrinsic_weight * self.emap.values[int(s_next)].bits
        if int(s_next) in self.mdp.terminal:
            r -= self.params.death_penalty
        return r


def q_update(policy, s: int, a: int, r: float, s_next: int, params: QParams | None = None):
    """One-step TD update in place; terminal successors bootstrap with 0."""
    if not isinstance(policy, QPolicy):
        raise UsageError(f"q_update needs a learning policy, got {getattr(policy, 'kind', policy)!r}")
    params = params or policy.params
    target = r
    if int(s_next) not in policy.mdp.terminal:
        target += params.discount * policy.q[int(s_next)].max()
    policy.q[s, a] += params.learning_rate * (target - policy.q[s, a])
    return policy


def act_hybrid(
    policy: QPolicy,
    s: int,
    body: BodyState,
    emap: EmpowermentMap | None,
    params: QParams,
    affect: AffectState,
    rng: np.random.Generator,
) -> int:
    """Epsilon-greedy action of a hybrid learner with stress-modulated epsilon."""
    if emap is None:
        raise UsageError("act_hybrid requires an empowerment map")
    if rng.random() < stress_modulated_epsilon(params, affect):
        return int(rng.integers(policy.mdp.num_actions))
    return int(np.argmax(policy.q[int(s)]))


def make_policy(
    kind: str,
    mdp: FiniteMdp,
    emap: EmpowermentMap | None = None,
    params: QParams | None = None,
    affect: AffectState | None = None,
    tie_mode: str = "lowest_index",
):
    if kind == "random":
        return RandomPolicy(mdp.num_actions)
    if kind == "greedy_empowerment":
        if emap is None:
            raise UsageError("greedy_empowerment requires an empowerment map")
        return GreedyEmpowermentPolicy(mdp, emap, tie_mode)
    if kind in ("homeostatic_q", "hybrid"):
        return QPolicy(mdp, params, affect, emap, kind)
    raise UsageError(f"unknown policy kind {kind!r}")
