"""Seeded experiment runs, sweeps, and batch analysis products.

Stream tags (see :mod:`mortal_world.rng`): for seed index ``i`` the world uses
``(base_seed, i, "world")`` and the policy ``(base_seed, i, "policy/<kind>")``,
so different agent kinds see paired world randomness. Health estimates at step
``t`` use seed ``stream_key(base_seed, i, "health/<kind>/<t>")``.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agents import QPolicy, make_policy, q_update, update_affect
from .config import ExperimentConfig
from .embodiment import embodied_step
from .empowerment import EmpowermentMap, empowerment_map
from .errors import ConfigError
from .mdp import FiniteMdp
from .rng import make_rng, stream_key
from .viability import health, viability_kernel

RECORD_FIELDS = (
    "seed",
    "step",
    "world_state",
    "energy",
    "action",
    "empowerment_bits",
    "health",
    "valence",
    "stress",
    "alive",
)
KINDS_NEEDING_MAP = ("greedy_empowerment", "hybrid")


def fmt(x) -> str:
    """Serialize a value for CSV: floats with 17 significant digits, None as empty."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def thread_count() -> int:
    raw = os.environ.get("MORTAL_WORLD_THREADS", "")
    try:
        return max(1, int(raw)) if raw else 1
    except ValueError:
        raise ConfigError(f"MORTAL_WORLD_THREADS={raw!r} is not an integer") from None


@dataclass
class RunResult:
    """Summary plus in-memory records, keyed by agent kind."""

    summary: dict
    records: dict = field(default_factory=dict)
    output_dir: Path | None = None


class Experiment:
    """One configuration, built once and rolled out per seed and agent kind."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.env = config.build_env()
        self.mdp = self.env.compiled
        self.n = config.horizon_n
        self._emap = None

    @property
    def emap(self) -> EmpowermentMap:
        if self._emap is None:
            self._emap = empowerment_map(self.mdp, self.n, tol=float(self.config.run["tol"]), threads=thread_count())
        return self._emap

    def needs_map(self, kind: str) -> bool:
        return kind in KINDS_NEEDING_MAP or bool(self.config.run["track_empowerment"])

    def policy(self, kind: str):
        emap = self.emap if kind in KINDS_NEEDING_MAP else None
        return make_policy(
            kind,
            self.mdp,
            emap,
            self.config.q_params(),
            self.config.affect(),
            self.config.agent["tie_mode"],
        )

    def rollout(self, kind: str, index: int, record: bool = True, policy=None, tag: str = "") -> list:
        """Run one lifetime; returns ExperimentRecord rows as dicts."""
        cfg = self.config
        run = cfg.run
        base = int(run["base_seed"])
        seed = base + index
        env, mdp = self.env, self.mdp
        policy = policy if policy is not None else self.policy(kind)
        # Affect is monitored for every agent; learners also read it for exploration.
        affect = cfg.affect()
        if isinstance(policy, QPolicy):
            policy.affect = affect
        world_rng = make_rng(base, index, f"{tag}world")
        policy_rng = make_rng(base, index, f"{tag}policy/{kind}")
        every = int(run["health_every"])
        emap = self.emap if record and self.needs_map(kind) else None
        state = env.initial_state()
        obs = env.observe(state, world_rng)
        rows = []
        h = None
        for t in range(int(run["max_steps"])):
            alive = not env.is_terminal(state)
            idx = mdp.index_of(env.perceive(obs, state)) if alive else mdp.dead_state
            if record and every and t % every == 0:
                if alive:
                    h = health(
                        mdp,
                        policy,
                        idx,
                        int(run["health_horizon"]),
                        int(run["health_rollouts"]),
                        stream_key(base, index, f"health/{kind}/{t}"),
                    ).probability
                else:
                    h = 0.0
                affect = update_affect(affect, h)
                if isinstance(policy, QPolicy):
                    policy.affect = affect
            row = None
            if record:
                bits = None
                # Every step when tracking is on, else aligned with health recomputation.
                if emap is not None and (run["track_empowerment"] or (every and t % every == 0)):
                    bits = emap.values[idx].bits
                row = {
                    "seed": seed,
                    "step": t,
                    "world_state": env.world.label(state.world),
                    "energy": state.body.energy,
                    "action": None,
                    "empowerment_bits": bits,
                    "health": h,
                    "valence": affect.valence,
                    "stress": affect.stress,
                    "alive": alive,
                }
                rows.append(row)
            if not alive:
                break
            a = policy.act(idx, policy_rng)
            if row is not None:
                row["action"] = a
            nxt, obs = embodied_step(env, state, a, world_rng)
            if isinstance(policy, QPolicy):
                idx_next = mdp.index_of(env.perceive(obs, nxt)) if not env.is_terminal(nxt) else mdp.dead_state
                q_update(policy, idx, a, policy.reward(nxt.body, idx_next), idx_next)
            state = nxt
        return rows

    def run_kind(self, kind: str, index: int) -> list:
        policy = self.policy(kind)
        if isinstance(policy, QPolicy):
            for ep in range(int(self.config.run["train_episodes"])):
                self.rollout(kind, index, record=False, policy=policy, tag=f"train{ep}/")
        return self.rollout(kind, index, policy=policy)


def survival_steps(rows: list) -> int:
    return sum(1 for r in rows if r["alive"] in (True, "true"))


def _num(x):
    if x in (None, ""):
        return None
    return float(x)


def summarize(records: dict) -> dict:
    """SummaryStats per agent kind from per-step records.

    ``records`` maps kind to a list of rows (dicts as produced by a run or read
    back from CSV). Survival time is the number of alive rows of a rollout.
    """
    out = {}
    for kind, rows in records.items():
        by_seed: dict = {}
        for r in rows:
            by_seed.setdefault(int(r["seed"]), []).append(r)
        seeds = sorted(by_seed)
        surv = np.array([survival_steps(by_seed[s]) for s in seeds], dtype=np.float64)
        emp = [_num(r["empowerment_bits"]) for r in rows]
        emp = [e for e in emp if e is not None]
        all_h = [_num(r["health"]) for r in rows]
        all_h = [h for h in all_h if h is not None]
        final_h = []
        for s in seeds:
            hs = [_num(r["health"]) for r in by_seed[s]]
            hs = [h for h in hs if h is not None]
            if hs:
                final_h.append(hs[-1])
        died = sum(1 for s in seeds if by_seed[s][-1]["alive"] in (False, "false"))
        out[kind] = {
            "num_seeds": len(seeds),
            "deaths": died,
            "survival_median": float(np.median(surv)) if len(surv) else None,
            "survival_mean": float(np.mean(surv)) if len(surv) else None,
            "survival_q25": float(np.percentile(surv, 25)) if len(surv) else None,
            "survival_q75": float(np.percentile(surv, 75)) if len(surv) else None,
            "survival_iqr": float(np.percentile(surv, 75) - np.percentile(surv, 25)) if len(surv) else None,
            "mean_empowerment": float(np.mean(emp)) if emp else None,
            "mean_health": float(np.mean(all_h)) if all_h else None,
            "final_health_mean": float(np.mean(final_h)) if final_h else None,
            "final_health_median": float(np.median(final_h)) if final_h else None,
            "final_health_min": float(np.min(final_h)) if final_h else None,
            "final_health_max": float(np.max(final_h)) if final_h else None,
            "survival_steps": [int(x) for x in surv],
        }
    return out


SUMMARY_COLUMNS = (
    "num_seeds",
    "deaths",
    "survival_median",
    "survival_mean",
    "survival_q25",
    "survival_q75",
    "survival_iqr",
    "mean_empowerment",
    "mean_health",
    "final_health_mean",
    "final_health_median",
    "final_health_min",
    "final_health_max",
)


def records_csv(rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(RECORD_FIELDS)
    for r in rows:
        w.writerow([fmt(r[k]) for k in RECORD_FIELDS])
    return buf.getvalue()


def read_records_csv(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def summary_csv(summary: dict, extra: dict | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    keys = list(extra or {})
    w.writerow(keys + ["agent_kind", *SUMMARY_COLUMNS])
    for kind in sorted(summary):
        w.writerow([fmt(v) for v in (extra or {}).values()] + [kind] + [fmt(summary[kind][c]) for c in SUMMARY_COLUMNS])
    return buf.getvalue()


def summary_json(summary: dict) -> str:
    return json.dumps(summary, sort_keys=True, indent=2) + "\n"


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def run_experiment(config: ExperimentConfig, output_dir=None, write: bool = True) -> RunResult:
    """Roll out every agent kind for every seed and write records and summary.

    Seeds run on up to ``MORTAL_WORLD_THREADS`` threads; each owns its policy
    and random streams, and files are written afterwards in seed order, so
    outputs are byte-identical for any thread count.
    """
    exp = Experiment(config)
    kinds = config.agent_kinds
    for kind in kinds:
        if exp.needs_map(kind):
            exp.emap  # computed once, shared read-only
    jobs = [(kind, i) for kind in kinds for i in range(int(config.run["num_seeds"]))]
    workers = thread_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda job: exp.run_kind(*job), jobs))
    else:
        results = [exp.run_kind(*job) for job in jobs]
    records = {kind: [] for kind in kinds}
    for (kind, _), rows in zip(jobs, results):
        records[kind].extend(rows)
    summary = summarize(records)
    out = None
    if write:
        out = Path(output_dir if output_dir is not None else config.output["directory"])
        fmts = config.output["formats"]
        if "csv" in fmts:
            for kind in kinds:
                _write(out / f"records_{kind}.csv", records_csv(records[kind]))
            _write(out / "summary.csv", summary_csv(summary))
        if "json" in fmts:
            _write(out / "summary.json", summary_json(summary))
    return RunResult(summary, records, out)


def sweep(template: ExperimentConfig, grid: dict, output_dir=None) -> list:
    """Run one experiment per grid cell; returns the combined table rows.

    Cells reuse the template's seeds, so runs are paired. The ``vulnerability``
    column is the template's mean recorded health minus the cell's, clamped at 0.
    """
    keys = sorted(grid)
    cells = []
    for values in itertools.product(*(grid[k] for k in keys)):
        cfg = template
        for k, v in zip(keys, values):
            cfg = cfg.with_value(k, v)
        cells.append((values, cfg))  # all cells validated before anything runs
    out = Path(output_dir if output_dir is not None else template.output["directory"])
    base = run_experiment(template, write=False).summary
    table = []
    for ci, (values, cfg) in enumerate(cells):
        res = run_experiment(cfg, out / f"cell_{ci:03d}")
        for kind in cfg.agent_kinds:
            row = {"cell": ci, **dict(zip(keys, values)), "agent_kind": kind}
            row.update({c: res.summary[kind][c] for c in SUMMARY_COLUMNS})
            h0, h = base[kind]["mean_health"], res.summary[kind]["mean_health"]
            row["vulnerability"] = None if h0 is None or h is None else max(0.0, h0 - h)
            table.append(row)
    cols = ["cell", *keys, "agent_kind", *SUMMARY_COLUMNS, "vulnerability"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(cols)
    for row in table:
        w.writerow([fmt(row[c]) for c in cols])
    _write(out / "sweep.csv", buf.getvalue())
    return table


def empowerment_map_csv(mdp: FiniteMdp, emap: EmpowermentMap) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["state_id", "label", "bits", "gap"])
    for s, v in enumerate(emap.values):
        w.writerow([s, mdp.label(s), fmt(v.bits), fmt(v.gap)])
    return buf.getvalue()


def viability_report(mdp: FiniteMdp) -> dict:
    kernel = viability_kernel(mdp)
    return {
        "num_states": mdp.num_states,
        "members": sorted(kernel.members),
        "member_labels": [mdp.label(s) for s in sorted(kernel.members)],
        "iterations_to_fixpoint": kernel.iterations_to_fixpoint,
        "integrity": [
            {"state_id": s, "label": mdp.label(s), "integrity": s in kernel.members}
            for s in range(mdp.num_states)
        ],
    }
