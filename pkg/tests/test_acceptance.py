"""Acceptance criteria 1-10.

Each test records one PASS/FAIL line; the lines are printed at the end of the
pytest run (see conftest.py) or directly when this file is run as a script.
"""

import functools
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import binomtest

from conftest import random_mdp
from mortal_world import (
    ActuatorSpec,
    ChannelMatrix,
    EmbodiedEnv,
    FiniteMdp,
    GridForageConfig,
    JarChainConfig,
    RandomPolicy,
    SensorSpec,
    WearWorldConfig,
    build_grid_forage,
    build_jar_chain,
    build_wear_world,
    channel_capacity_ba,
    channel_capacity_bruteforce,
    embodied_step,
    empowerment,
    empowerment_map,
    health,
    nstep_channel,
    step,
    update_affect,
    viability_kernel,
)
from mortal_world.agents import AffectState, GreedyEmpowermentPolicy
from mortal_world.cli import main as cli_main
from mortal_world.config import load_config
from mortal_world.embodiment import MdpWorld
from mortal_world.envs import grid_state, open_grid_mdp
from mortal_world.harness import run_experiment
from mortal_world.rng import make_rng

ROOT = Path(__file__).resolve().parent.parent
RESULTS = {}


def criterion(number, title):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            t0 = time.perf_counter()
            try:
                detail = fn(*args, **kwargs)
            except BaseException as exc:
                RESULTS[number] = f"FAIL  {number:>2}. {title}: {type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
                raise
            secs = time.perf_counter() - t0
            RESULTS[number] = f"PASS  {number:>2}. {title} ({detail}; {secs:.1f}s)"

        return run

    return wrap


def channel(rows):
    rows = np.asarray(rows, dtype=float)
    return ChannelMatrix(rows, tuple(range(rows.shape[0])), tuple(range(rows.shape[1])))


@criterion(1, "zero empowerment at terminal states")
def test_01_terminal_zero():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    checked = 0
    for _ in range(50):
        mdp = random_mdp(rng, max_states=20, max_actions=4, min_terminal=1)
        assert mdp.terminal
        for s in mdp.terminal:
            for n in (1, 2, 3):
                assert empowerment(mdp, s, n).bits == 0.0
                # the general channel path, not just the terminal shortcut
                assert channel_capacity_ba(nstep_channel(mdp, s, n)).bits == 0.0
                checked += 1
    secs = time.perf_counter() - t0
    assert secs < 10, f"took {secs:.1f}s"
    return f"{checked} (state, n) pairs exactly 0"


@criterion(2, "Blahut-Arimoto agrees with brute force")
def test_02_oracle_agreement():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = 0.0
    for i in range(200):
        m = int(rng.integers(1, 4))
        k = int(rng.integers(2, 6))
        W = rng.dirichlet(np.full(k, 0.5), size=m)
        if i % 10 == 0:
            W[rng.random(W.shape) < 0.3] = 0.0  # sparse rows
            W[W.sum(axis=1) == 0, 0] = 1.0
            W /= W.sum(axis=1, keepdims=True)
        ch = channel(W)
        ba = channel_capacity_ba(ch).bits
        bf = channel_capacity_bruteforce(ch, 0.005).bits
        worst = max(worst, abs(ba - bf))
    secs = time.perf_counter() - t0
    assert worst <= 1e-3, f"max disagreement {worst:.3g} bits"
    assert secs < 60, f"took {secs:.1f}s"
    return f"max |ba - bf| = {worst:.2e} bits"


@criterion(3, "closed-form capacities")
def test_03_closed_forms():
    err = 0.0
    for k in (2, 4, 8):
        err = max(err, abs(channel_capacity_ba(channel(np.eye(k))).bits - math.log2(k)))
    assert err <= 1e-6
    bsc = channel_capacity_ba(channel([[0.9, 0.1], [0.1, 0.9]])).bits
    assert abs(bsc - 0.5310) <= 1e-4, bsc
    return f"identity err {err:.1e}, BSC(0.1) = {bsc:.6f}"


@criterion(4, "deterministic grid empowerment")
def test_04_grid():
    grid = open_grid_mdp(5, 5)
    c = grid_state(5, 2, 2)
    e1, e2 = empowerment(grid, c, 1).bits, empowerment(grid, c, 2).bits
    assert abs(e1 - 2.0) <= 1e-6
    assert abs(e2 - math.log2(9)) <= 1e-6
    return f"n=1 {e1:.9f}, n=2 {e2:.9f}"


def _lifetime(env, policy, seed, limit):
    rng = make_rng(seed, 0, "death-bound")
    s = env.initial_state()
    m = env.compiled
    for t in range(limit + 1):
        if env.is_terminal(s):
            return t
        a = policy(s, m, rng)
        s, _ = embodied_step(env, s, a, rng)
    return None


def test_05_death_bound():
    _death_bound()


@criterion(5, "being-towards-death bound")
def _death_bound():
    jar = build_jar_chain(JarChainConfig(7, 3))
    envs = [
        build_grid_forage(GridForageConfig(width=5, height=5, leak=0.05)),
        build_grid_forage(GridForageConfig(width=4, height=4, leak=0.3, move_cost=0.2), SensorSpec("mask", 0.5)),
        build_wear_world(WearWorldConfig(width=4, height=3, leak=0.15, damage_prob=0.5, gain_decay=0.4), actuator=ActuatorSpec(0.3)),
        EmbodiedEnv(MdpWorld(jar, 0), energy_max=2.0, leak=0.7, energy_levels=21),
    ]
    lazy = lambda s, m, rng: 0  # noqa: E731
    rand = lambda s, m, rng: int(rng.integers(m.num_actions))  # noqa: E731
    runs = violations = 0
    for env in envs:
        assert env.leak > 0 and not env.has_energy_gains
        bound = math.ceil(env.energy_max / env.leak)
        emap = empowerment_map(env.compiled, 2)
        greedy = GreedyEmpowermentPolicy(env.compiled, emap)
        smart = lambda s, m, rng: greedy.act(m.index_of(s), rng)  # noqa: E731
        for policy in (lazy, rand, smart):
            for seed in range(100):
                t = _lifetime(env, policy, seed, bound)
                runs += 1
                if t is None or t > bound:
                    violations += 1
    assert violations == 0, f"{violations} violations"
    return f"{runs} lifetimes, 0 violations"


def _policy_reach(mdp):
    """For every deterministic stationary policy, which states can reach a terminal."""
    S, A = mdp.num_states, mdp.num_actions
    support = mdp.dense() > 0
    policies = np.array(np.meshgrid(*[np.arange(A)] * S, indexing="ij")).reshape(S, -1).T
    G = support[np.arange(S)[None, :], policies, :]  # (P, S, S)
    R = G | np.eye(S, dtype=bool)[None]
    for _ in range(int(math.ceil(math.log2(S))) + 1):
        R = (R.astype(np.int32) @ R.astype(np.int32)) > 0
    term = np.zeros(S, dtype=bool)
    term[list(mdp.terminal)] = True
    return (R & term[None, None, :]).any(axis=2)  # (P, S): some terminal reachable


@criterion(6, "viability kernel soundness and maximality")
def test_06_viability():
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    kernel_states = outside = 0
    for i in range(100):
        while True:
            mdp = random_mdp(rng, max_states=8, max_actions=3, min_terminal=1, sparsity=0.75)
            if mdp.num_actions ** mdp.num_states <= 6561:
                break
        k = viability_kernel(mdp)
        S = mdp.num_states
        for s in k.members:
            kernel_states += 1
            for seed in range(20):
                r = make_rng(i, s, f"stay/{seed}")
                x = s
                for _ in range(10 * S):
                    x = step(mdp, x, k.stay_inside(x), r)
                    assert x not in mdp.terminal
        hits = _policy_reach(mdp)
        for s in range(S):
            safe_policy_exists = bool((~hits[:, s]).any())
            assert safe_policy_exists == (s in k.members), (i, s)
            if s not in k.members and s not in mdp.terminal:
                outside += 1
    secs = time.perf_counter() - t0
    assert secs < 120, f"took {secs:.1f}s"
    return f"{kernel_states} kernel states sound, {outside} outside states have no safe policy"


@criterion(7, "health of the life/death state")
def test_07_health(life_death):
    h = health(life_death, RandomPolicy(2), 0, 3, 100_000, 0)
    assert abs(h.probability - 0.125) <= 0.005, h
    return f"{h.probability:.5f} +/- {h.confidence_halfwidth:.5f}"


@criterion(8, "greedy empowerment outlives random on GridForage")
def test_08_sign_test():
    cfg = load_config(ROOT / "configs" / "grid_forage_7x7.toml")
    assert cfg.env["width"] == 7 and cfg.embodiment["leak"] == 0.05 and cfg.env["food_energy"] == 1.0
    assert cfg.horizon_n == 3 and cfg.run["num_seeds"] == 200
    res = run_experiment(cfg, write=False)
    greedy = res.summary["greedy_empowerment"]["survival_steps"]
    rand = res.summary["random"]["survival_steps"]
    wins = sum(g > r for g, r in zip(greedy, rand))
    losses = sum(g < r for g, r in zip(greedy, rand))
    p = binomtest(wins, wins + losses, 0.5, alternative="greater").pvalue
    mg, mr = np.median(greedy), np.median(rand)
    assert mg > mr, (mg, mr)
    assert p < 0.01, p
    return f"median {mg:g} vs {mr:g}, {wins}-{losses} paired, p = {p:.1e}"


@criterion(9, "simulate is byte-identical across runs and thread counts")
def test_09_reproducible(tmp_path, monkeypatch):
    cfg = tmp_path / "repro.toml"
    cfg.write_text(
        "[env]\nwidth = 4\nheight = 4\nfood_cells = [[2, 2]]\nfood_energy = 0.5\nfood_respawn_period = 3\n"
        "[embodiment]\nleak = 0.1\n[embodiment.sensor]\nmodality = \"noise\"\nnoise_std = 0.2\n"
        "[embodiment.actuator]\ndropout_prob = 0.1\n"
        '[agent]\nkind = ["random", "greedy_empowerment", "homeostatic_q", "hybrid"]\nbeta = 0.1\n'
        "[run]\nnum_seeds = 12\nmax_steps = 60\nhealth_every = 5\nhealth_rollouts = 20\ntrain_episodes = 2\n"
    )
    outs = []
    for i, threads in enumerate(("1", "1", "8", "8")):
        monkeypatch.setenv("MORTAL_WORLD_THREADS", threads)
        out = tmp_path / f"out{i}"
        assert cli_main(["simulate", str(cfg), "--out", str(out)]) == 0
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert len(outs[0]) == 6
    assert all(o == outs[0] for o in outs[1:])
    return f"{len(outs[0])} files identical over threads 1,1,8,8"


@criterion(10, "affect identities")
def test_10_affect():
    rng = np.random.default_rng(5)
    for trace in range(20):
        # health estimates are k / num_rollouts; 64 rollouts keeps every value dyadic
        hs = rng.integers(0, 65, size=1000) / 64
        a = AffectState(last_health=1.0, decay=0.9)
        total = 0.0
        for h in hs:
            a = update_affect(a, float(h))
            total += a.valence
            assert a.stress >= 0.0
        assert total == hs[-1] - 1.0
    for lam in (0.0, 0.5, 0.9, 0.99):
        a = AffectState(last_health=0.6, stress=2.0, decay=lam)
        for t in range(1, 1001):
            a = update_affect(a, 0.6)
            assert a.valence == 0.0
            assert a.stress == pytest.approx(2.0 * lam**t, rel=1e-9, abs=1e-300)
    return "telescoping exact over 20 x 1000 steps; stress = lambda^t * stress_0"


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
