"""Finite-MDP toolkit for mortal, embodied agents: empowerment, viability, health."""

from .agents import (
    AffectState,
    GreedyEmpowermentPolicy,
    QParams,
    QPolicy,
    RandomPolicy,
    act_greedy_empowerment,
    act_hybrid,
    act_random,
    homeostatic_reward,
    make_policy,
    q_update,
    stress_modulated_epsilon,
    update_affect,
)
from .config import ExperimentConfig, load_config, load_grid
from .embodiment import (
    NOOP,
    ActuatorSpec,
    BodyState,
    EmbodiedEnv,
    EmbodiedState,
    Observation,
    SensorSpec,
    apply_actuator,
    apply_sensor,
    compile_explicit,
    embodied_step,
    tick_energy,
)
from .empowerment import (
    ChannelMatrix,
    EmpowermentMap,
    EmpowermentValue,
    channel_capacity_ba,
    channel_capacity_bruteforce,
    empowerment,
    empowerment_map,
    expected_successor_empowerment,
    mutual_information,
    nstep_channel,
)
from .envs import (
    GridForageConfig,
    JarChainConfig,
    WearWorldConfig,
    build_grid_forage,
    build_jar_chain,
    build_wear_world,
    open_grid_mdp,
)
from .errors import CapacityBudgetError, ConfigError, UsageError
from .harness import run_experiment, summarize, sweep
from .mdp import (
    FiniteMdp,
    irreversibility,
    is_terminal,
    reachable_states,
    rollout,
    step,
    successor_support,
    validate,
)
from .rng import make_rng, stream_key
from .viability import (
    STANDARD_PERTURBATIONS,
    HealthEstimate,
    PerturbationSpec,
    ViabilityKernel,
    health,
    integrity,
    perturb,
    viability_kernel,
    vulnerability,
)

__version__ = "0.1.0"
