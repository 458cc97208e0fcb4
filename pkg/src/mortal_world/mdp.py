"""Explicit finite MDPs with absorbing terminal states.

Transitions are stored as a CSR matrix of shape ``(num_states * num_actions,
num_states)`` where row ``s * num_actions + a`` is the next-state distribution
for taking action ``a`` in state ``s``. Dense ``[s][a][s']`` tensors are
accepted by :meth:`FiniteMdp.from_dense` and emitted by :meth:`FiniteMdp.dense`.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import sparse

from .errors import UsageError
from .rng import sample_index

ROW_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class FiniteMdp:
    num_states: int
    num_actions: int
    transition: sparse.csr_matrix
    terminal: frozenset = frozenset()
    labels: tuple | None = None

    def __post_init__(self):
        if self.num_states < 1 or self.num_actions < 1:
            raise UsageError("num_states and num_actions must be positive")
        mat = sparse.csr_matrix(self.transition, dtype=np.float64)
        expected = (self.num_states * self.num_actions, self.num_states)
        if mat.shape != expected:
            raise UsageError(f"transition has shape {mat.shape}, expected {expected}")
        mat.eliminate_zeros()
        mat.sort_indices()
        object.__setattr__(self, "transition", mat)
        object.__setattr__(self, "terminal", frozenset(int(s) for s in self.terminal))
        if self.labels is not None:
            labels = tuple(str(x) for x in self.labels)
            if len(labels) != self.num_states:
                raise UsageError("labels must have one entry per state")
            object.__setattr__(self, "labels", labels)

    @classmethod
    def from_dense(
        cls,
        tensor,
        terminal: Iterable[int] = (),
        labels: Sequence[str] | None = None,
        renormalize: bool = False,
    ) -> "FiniteMdp":
        """Build from a ``[s][a][s']`` array.

        ``renormalize`` rescales every row with positive mass to sum to one;
        it is never applied implicitly.
        """
        arr = np.array(tensor, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[0] != arr.shape[2]:
            raise UsageError(f"transition tensor must be [S][A][S], got shape {arr.shape}")
        if renormalize:
            sums = arr.sum(axis=2, keepdims=True)
            arr = np.divide(arr, sums, out=arr.copy(), where=sums > 0)
        s, a, _ = arr.shape
        return cls(s, a, sparse.csr_matrix(arr.reshape(s * a, s)), frozenset(terminal), labels)

    def dense(self) -> np.ndarray:
        return self.transition.toarray().reshape(self.num_states, self.num_actions, self.num_states)

    def row(self, s: int, a: int) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(next_states, probabilities)`` for the nonzero entries of row (s, a)."""
        self.check_state(s)
        self.check_action(a)
        r = int(s) * self.num_actions + int(a)
        lo, hi = self.transition.indptr[r], self.transition.indptr[r + 1]
        return self.transition.indices[lo:hi], self.transition.data[lo:hi]

    def label(self, s: int) -> str:
        return self.labels[s] if self.labels is not None else str(s)

    def check_state(self, s) -> None:
        if not 0 <= int(s) < self.num_states:
            raise UsageError(f"state {s} out of range [0, {self.num_states})")

    def check_action(self, a) -> None:
        if not 0 <= int(a) < self.num_actions:
            raise UsageError(f"action {a} out of range [0, {self.num_actions})")

    @cached_property
    def support_rows(self) -> sparse.csr_matrix:
        """0/1 matrix marking strictly positive transition entries."""
        mat = self.transition.copy()
        mat.data = (mat.data > 0).astype(np.float64)
        mat.eliminate_zeros()
        return mat

    @cached_property
    def successor_graph(self) -> sparse.csr_matrix:
        """State-to-state adjacency: s -> s' if some action reaches s' with p > 0."""
        coo = self.support_rows.tocoo()
        graph = sparse.csr_matrix(
            (np.ones_like(coo.data), (coo.row // self.num_actions, coo.col)),
            shape=(self.num_states, self.num_states),
        )
        graph.sum_duplicates()
        graph.sort_indices()
        return graph

    def successors(self, s: int) -> np.ndarray:
        g = self.successor_graph
        return g.indices[g.indptr[s] : g.indptr[s + 1]]


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str


@dataclass
class Rollout:
    states: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    terminated_at: int | None = None


def validate(mdp: FiniteMdp) -> list[Violation]:
    """List every invariant violation; an empty list means the model is valid."""
    out: list[Violation] = []
    for s in sorted(mdp.terminal):
        if not 0 <= s < mdp.num_states:
            out.append(Violation("index out of range", f"terminal state {s} not in [0, {mdp.num_states})"))
    mat = mdp.transition
    if mat.nnz and mat.data.min() < 0:
        rows = np.unique(np.repeat(np.arange(mat.shape[0]), np.diff(mat.indptr))[mat.data < 0])
        for r in rows:
            s, a = divmod(int(r), mdp.num_actions)
            out.append(Violation("negative probability", f"row (s={s}, a={a}) has a negative entry"))
    sums = np.asarray(mat.sum(axis=1)).ravel()
    for r in np.flatnonzero(np.abs(sums - 1.0) > ROW_TOLERANCE):
        s, a = divmod(int(r), mdp.num_actions)
        out.append(Violation("non-stochastic row", f"row (s={s}, a={a}) sums to {sums[r]:.12g}"))
    for s in sorted(mdp.terminal):
        if not 0 <= s < mdp.num_states:
            continue
        for a in range(mdp.num_actions):
            nxt, p = mdp.row(s, a)
            if not (len(nxt) == 1 and nxt[0] == s and abs(p[0] - 1.0) <= ROW_TOLERANCE):
                out.append(Violation("non-absorbing terminal", f"terminal state {s} action {a} leaves the state"))
    return out


def is_terminal(mdp: FiniteMdp, s: int) -> bool:
    mdp.check_state(s)
    return int(s) in mdp.terminal


def step(mdp: FiniteMdp, s: int, a: int, rng: np.random.Generator) -> int:
    """Sample the next state. Terminal states return themselves without drawing."""
    nxt, p = mdp.row(s, a)
    if int(s) in mdp.terminal:
        return int(s)
    return int(nxt[sample_index(p, rng)])


def successor_support(mdp: FiniteMdp, s: int, a: int) -> frozenset:
    nxt, p = mdp.row(s, a)
    return frozenset(int(x) for x in nxt[p > 0])


def reachable_states(mdp: FiniteMdp, s: int, n: int) -> frozenset:
    """States reachable with positive probability in at most ``n`` steps."""
    mdp.check_state(s)
    if n < 0:
        raise UsageError("horizon must be nonnegative")
    seen = {int(s)}
    frontier = [int(s)]
    for _ in range(n):
        nxt = []
        for u in frontier:
            for v in mdp.successors(u):
                v = int(v)
                if v not in seen:
                    seen.add(v)
                    nxt.append(v)
        if not nxt:
            break
        frontier = nxt
    return frozenset(seen)


def irreversibility(mdp: FiniteMdp, s_from: int, s_to: int) -> float:
    """Shortest support-graph path length from ``s_to`` back to ``s_from``.

    Returns ``math.inf`` when no path exists, which is always the case for a
    terminal ``s_to`` distinct from ``s_from``.
    """
    mdp.check_state(s_from)
    mdp.check_state(s_to)
    if s_from == s_to:
        return 0
    dist = {int(s_to): 0}
    queue = deque([int(s_to)])
    while queue:
        u = queue.popleft()
        for v in mdp.successors(u):
            v = int(v)
            if v in dist:
                continue
            dist[v] = dist[u] + 1
            if v == s_from:
                return dist[v]
            queue.append(v)
    return math.inf


def rollout(
    mdp: FiniteMdp,
    policy: Callable[[int, np.random.Generator], int],
    s0: int,
    steps: int,
    rng: np.random.Generator,
) -> Rollout:
    """Run ``policy`` for ``steps`` steps, padding with the terminal state after absorption."""
    out = Rollout(states=[int(s0)])
    s = int(s0)
    if s in mdp.terminal:
        out.terminated_at = 0
    for t in range(steps):
        if out.terminated_at is not None:
            a = 0
        else:
            a = int(policy(s, rng))
            s = step(mdp, s, a, rng)
        out.actions.append(a)
        out.states.append(s)
        if out.terminated_at is None and s in mdp.terminal:
            out.terminated_at = t + 1
    return out


def mdp_to_json(mdp: FiniteMdp) -> dict:
    doc = {
        "num_states": mdp.num_states,
        "num_actions": mdp.num_actions,
        "terminal": sorted(mdp.terminal),
        "transition": mdp.dense().tolist(),
    }
    if mdp.labels is not None:
        doc["labels"] = list(mdp.labels)
    return doc


def mdp_from_json(doc: dict) -> FiniteMdp:
    """Parse the interchange document; raises UsageError if validation fails."""
    try:
        S, A = int(doc["num_states"]), int(doc["num_actions"])
        tensor = np.asarray(doc["transition"], dtype=np.float64)
        terminal = [int(x) for x in doc.get("terminal", [])]
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"malformed MDP document: {exc}") from exc
    if tensor.shape != (S, A, S):
        raise UsageError(f"transition shape {tensor.shape} does not match ({S}, {A}, {S})")
    mdp = FiniteMdp.from_dense(tensor, terminal, doc.get("labels"))
    problems = validate(mdp)
    if problems:
        raise UsageError("invalid MDP: " + "; ".join(f"{v.kind}: {v.message}" for v in problems))
    return mdp


def load_mdp(path) -> FiniteMdp:
    return mdp_from_json(json.loads(Path(path).read_text()))


def save_mdp(mdp: FiniteMdp, path) -> None:
    Path(path).write_text(json.dumps(mdp_to_json(mdp), sort_keys=True))
