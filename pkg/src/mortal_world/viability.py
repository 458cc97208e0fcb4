"""Integrity, health and vulnerability.

Integrity is membership in the viability kernel: the greatest set of
non-terminal states from which some action keeps every possible successor in
the set. Health is the Monte Carlo probability of staying out of terminal
states over a stated horizon under a given policy. Vulnerability is the worst
health loss over a list of perturbations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .embodiment import EmbodiedEnv, EmbodiedState, embodied_step
from .errors import UsageError
from .mdp import FiniteMdp, step
from .rng import make_rng

PERTURBATION_KINDS = ("policy_noise", "sensor_mask", "actuator_dropout", "energy_leak_increase")
Z95 = 1.959963984540054


@dataclass(frozen=True)
class ViabilityKernel:
    members: frozenset
    iterations_to_fixpoint: int
    safe_actions: dict = field(default_factory=dict, compare=False)

    def stay_inside(self, s: int) -> int:
        """Lowest-index action whose whole support stays in the kernel."""
        acts = self.safe_actions.get(int(s))
        if not acts:
            raise UsageError(f"state {s} is not in the viability kernel")
        return acts[0]


@dataclass(frozen=True)
class HealthEstimate:
    probability: float
    horizon: int
    num_rollouts: int
    confidence_halfwidth: float


@dataclass(frozen=True)
class PerturbationSpec:
    kind: str
    magnitude: float
    target: str = ""

    def __post_init__(self):
        if self.kind not in PERTURBATION_KINDS:
            raise UsageError(f"unknown perturbation kind {self.kind!r}")
        if self.kind == "energy_leak_increase":
            if self.magnitude < 0:
                raise UsageError(f"{self}: leak increase must be nonnegative")
        elif not 0.0 <= self.magnitude <= 1.0:
            raise UsageError(f"{self}: magnitude must be a probability in [0, 1]")


# Standard perturbation set shipped with the harness.
STANDARD_PERTURBATIONS = (
    PerturbationSpec("actuator_dropout", 0.25, "actuator"),
    PerturbationSpec("sensor_mask", 0.25, "sensor"),
    PerturbationSpec("energy_leak_increase", 1.0, "system"),
    PerturbationSpec("policy_noise", 0.25, "policy"),
)


def viability_kernel(mdp: FiniteMdp) -> ViabilityKernel:
    S, A = mdp.num_states, mdp.num_actions
    inside = np.ones(S, dtype=bool)
    inside[list(mdp.terminal)] = False
    support = mdp.support_rows
    passes = 0
    while inside.any():
        leaks = (support @ (~inside).astype(np.float64)).reshape(S, A) > 0
        keep = inside & (~leaks).any(axis=1)
        passes += 1
        if np.array_equal(keep, inside):
            break
        inside = keep
    if inside.any():
        leaks = (support @ (~inside).astype(np.float64)).reshape(S, A) > 0
    members = frozenset(int(s) for s in np.flatnonzero(inside))
    safe = {s: tuple(int(a) for a in np.flatnonzero(~leaks[s])) for s in members}
    return ViabilityKernel(members, passes, safe)


def integrity(mdp: FiniteMdp, s: int, kernel: ViabilityKernel | None = None) -> bool:
    mdp.check_state(s)
    kernel = kernel or viability_kernel(mdp)
    return int(s) in kernel.members


def _halfwidth(p: float, n: int) -> float:
    return Z95 * math.sqrt(p * (1.0 - p) / n)


def _act(policy):
    return policy.act if hasattr(policy, "act") else policy


def health(
    model,
    policy,
    s,
    horizon: int,
    num_rollouts: int,
    seed: int,
) -> HealthEstimate:
    """Fraction of seeded rollouts that avoid terminal states for ``horizon`` steps.

    ``model`` is a :class:`FiniteMdp` (``s`` a state index) or an
    :class:`EmbodiedEnv` (``s`` an :class:`EmbodiedState` or a compiled index),
    in which case rollouts run in the lazy simulator with sensor noise and the
    policy acts on the perceived compiled state. Rollout ``i`` uses stream
    ``(seed, i, "health")``, so estimates for different horizons share paths.
    """
    if horizon < 1 or num_rollouts < 1:
        raise UsageError("horizon and num_rollouts must be >= 1")
    act = _act(policy)
    if isinstance(model, EmbodiedEnv):
        survive = _embodied_survival(model, act, s, horizon, num_rollouts, seed)
    else:
        survive = _mdp_survival(model, act, int(s), horizon, num_rollouts, seed)
    p = survive / num_rollouts
    return HealthEstimate(p, horizon, num_rollouts, _halfwidth(p, num_rollouts))


def _mdp_survival(mdp, act, s, horizon, num_rollouts, seed) -> int:
    mdp.check_state(s)
    if s in mdp.terminal:
        return 0
    alive = 0
    for i in range(num_rollouts):
        rng = make_rng(seed, i, "health")
        state = s
        for _ in range(horizon):
            state = step(mdp, state, act(state, rng), rng)
            if state in mdp.terminal:
                break
        else:
            alive += 1
    return alive


def _embodied_survival(env, act, s, horizon, num_rollouts, seed) -> int:
    compiled = env.compiled
    if not isinstance(s, EmbodiedState):
        s = compiled.representative(int(s)) if int(s) != compiled.dead_state else None
    if s is None or env.is_terminal(s):
        return 0
    alive = 0
    for i in range(num_rollouts):
        rng = make_rng(seed, i, "health")
        state = s
        obs = env.observe(state, rng)
        for _ in range(horizon):
            idx = compiled.index_of(env.perceive(obs, state))
            state, obs = embodied_step(env, state, act(idx, rng), rng)
            if env.is_terminal(state):
                break
        else:
            alive += 1
    return alive


class NoisyPolicy:
    """With probability ``epsilon`` replace the wrapped policy's action by a uniform one."""

    def __init__(self, policy, num_actions: int, epsilon: float):
        self.policy, self.num_actions, self.epsilon = policy, num_actions, epsilon
        self.kind = getattr(policy, "kind", "custom")

    def act(self, s, rng):
        a = _act(self.policy)(s, rng)
        if self.epsilon > 0 and rng.random() < self.epsilon:
            return int(rng.integers(self.num_actions))
        return a


def perturb(model, policy, spec: PerturbationSpec):
    """Return ``(model, policy)`` with exactly one perturbation applied."""
    if spec.kind == "policy_noise":
        return model, NoisyPolicy(policy, model.num_actions, spec.magnitude)
    if not isinstance(model, EmbodiedEnv):
        raise UsageError(f"perturbation {spec} is not applicable to a bare MDP (no body)")
    if spec.kind == "actuator_dropout":
        return replace(model, actuator=replace(model.actuator, dropout_prob=spec.magnitude)), policy
    if spec.kind == "sensor_mask":
        return replace(model, sensor=replace(model.sensor, modality="mask", mask_fraction=spec.magnitude)), policy
    if model.leak <= 0:
        raise UsageError(f"perturbation {spec} needs a positive leak to scale")
    return replace(model, leak=model.leak * (1.0 + spec.magnitude)), policy


def vulnerability(
    model,
    policy,
    s,
    perturbations,
    horizon: int,
    num_rollouts: int,
    seed: int,
) -> float:
    """Nominal health minus the worst perturbed health, clamped at 0.

    All runs share the seed, so the comparison is paired rollout by rollout.
    """
    perturbations = list(perturbations)
    if not perturbations:
        raise UsageError("vulnerability needs at least one perturbation")
    perturbed = [perturb(model, policy, spec) for spec in perturbations]
    nominal = health(model, policy, s, horizon, num_rollouts, seed).probability
    worst = min(health(m, p, s, horizon, num_rollouts, seed).probability for m, p in perturbed)
    return max(0.0, nominal - worst)
