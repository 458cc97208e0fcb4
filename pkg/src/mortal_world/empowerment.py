"""n-step empowerment: capacity of the channel from action sequences to final states.

Unit is bits throughout. The channel for state ``s`` and horizon ``n`` has one
row per open-loop action sequence (lexicographic, first action most
significant) and one column per state in ``reachable_states(s, n)``.
"""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityBudgetError, UsageError
from .mdp import FiniteMdp, reachable_states

DEFAULT_SEQUENCE_CAP = 4**10
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 10_000
LN2 = math.log(2.0)


@dataclass(frozen=True, eq=False)
class ChannelMatrix:
    probs: np.ndarray
    input_labels: tuple = ()
    output_labels: tuple = ()
    horizon: int = 1

    def __post_init__(self):
        probs = np.atleast_2d(np.asarray(self.probs, dtype=np.float64))
        object.__setattr__(self, "probs", probs)
        if not self.input_labels:
            object.__setattr__(self, "input_labels", tuple((i,) for i in range(probs.shape[0])))
        if not self.output_labels:
            object.__setattr__(self, "output_labels", tuple(range(probs.shape[1])))

    @property
    def num_inputs(self) -> int:
        return self.probs.shape[0]

    @property
    def num_outputs(self) -> int:
        return self.probs.shape[1]


@dataclass(frozen=True)
class EmpowermentValue:
    bits: float
    horizon: int
    method: str = "blahut_arimoto"
    gap: float = 0.0
    converged: bool = True
    iterations: int = 0


@dataclass(frozen=True, eq=False)
class EmpowermentMap:
    """Per-state empowerment values for one horizon."""

    horizon: int
    values: tuple = field(default_factory=tuple)

    @property
    def bits(self) -> np.ndarray:
        return np.array([v.bits for v in self.values])

    def __getitem__(self, s: int) -> EmpowermentValue:
        return self.values[s]

    def __len__(self) -> int:
        return len(self.values)


def nstep_channel(
    mdp: FiniteMdp, s: int, n: int, cap: int = DEFAULT_SEQUENCE_CAP
) -> ChannelMatrix:
    if n < 1:
        raise UsageError("horizon n must be >= 1")
    mdp.check_state(s)
    A = mdp.num_actions
    if A**n > cap:
        raise CapacityBudgetError(
            f"{A}^{n} = {A**n} action sequences exceeds the enumeration cap {cap}; "
            "reduce n or use a sampling estimator"
        )
    cols = np.array(sorted(reachable_states(mdp, s, n)))
    pos = {int(c): i for i, c in enumerate(cols)}
    R = len(cols)
    # Transition tensor restricted to the reachable set; closed under n steps from s.
    T = np.zeros((A, R, R))
    P = mdp.transition
    for i, u in enumerate(cols):
        for a in range(A):
            r = int(u) * A + a
            lo, hi = P.indptr[r], P.indptr[r + 1]
            for v, p in zip(P.indices[lo:hi], P.data[lo:hi]):
                j = pos.get(int(v))
                if j is not None:
                    T[a, i, j] += p
    dist = np.zeros((1, R))
    dist[0, pos[int(s)]] = 1.0
    for _ in range(n):
        dist = np.einsum("ir,arq->iaq", dist, T).reshape(-1, R)
    inputs = tuple(itertools.product(range(A), repeat=n))
    return ChannelMatrix(dist, inputs, tuple(int(c) for c in cols), n)


def _check_channel(probs: np.ndarray) -> None:
    if probs.size == 0:
        raise UsageError("empty channel")
    if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-9):
        raise UsageError("channel rows must be nonnegative and sum to 1 (degenerate channel)")


def _row_divergence(W: np.ndarray, q: np.ndarray) -> np.ndarray:
    """KL(W[x] || q) in nats for every row, with 0 log 0 = 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(W > 0, W * (np.log(W) - np.log(q)[None, :]), 0.0)
    return terms.sum(axis=1)


def _bounds(W: np.ndarray, p: np.ndarray):
    """(upper, lower) capacity bounds in bits for input ``p``, plus the divergences in nats."""
    D = _row_divergence(W, p @ W)
    shift = float(D.max())
    if not math.isfinite(shift):
        return math.inf, 0.0, D
    lower = (shift + math.log(float(np.dot(p, np.exp(D - shift))))) / LN2
    return shift / LN2, lower, D


def _newton_polish(W: np.ndarray, p: np.ndarray, D: np.ndarray, width: float):
    """Solve D_x(p) = C on the inputs whose divergence is within ``width`` nats of the max.

    Returns a full input distribution or None. Nothing here is trusted: the
    caller accepts the result only if it closes the capacity bounds.
    """
    S = np.flatnonzero(D >= D.max() - width)
    ps = np.maximum(p[S] / p[S].sum(), 1e-300)
    Ws = W[S]
    Ws = Ws[:, Ws.sum(axis=0) > 0]
    n = len(S)
    J = np.zeros((n + 1, n + 1))
    J[:n, n] = -1.0
    J[n, :n] = 1.0
    for _ in range(30):
        q = ps @ Ws
        Ds = _row_divergence(Ws, q)
        C = float(ps @ Ds)
        F = np.append(Ds - C, ps.sum() - 1.0)
        if np.abs(F).max() < 1e-15:
            break
        J[:n, :n] = -(Ws / q) @ Ws.T
        try:
            delta = np.linalg.lstsq(J, -F, rcond=None)[0][:n]
        except np.linalg.LinAlgError:
            return None
        t = 1.0
        while np.any(ps + t * delta <= 0) and t > 1e-4:
            t *= 0.5
        ps = ps + t * delta
        if not np.all(np.isfinite(ps)):
            return None
        if t <= 1e-4:
            break
    out = np.zeros(len(W))
    out[S] = np.maximum(ps, 0.0)
    return out / out.sum()


POLISH_EVERY = 50


def channel_capacity_ba(
    channel: ChannelMatrix, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER
) -> EmpowermentValue:
    """Blahut-Arimoto capacity with the standard upper/lower stopping bounds.

    With ``D(x) = KL(W(.|x) || q)`` for the output marginal ``q`` of input
    ``p``, ``log sum_x p(x) 2^D(x) <= C <= max_x D(x)`` holds for every ``p``.
    Iteration stops once the difference is within ``tol`` bits; the lower
    bound is reported.

    Plain iterations crawl when the optimal input puts tiny mass on some rows,
    so every ``POLISH_EVERY`` iterations a Newton solve of the KKT conditions
    on the apparent support is tried, and kept only if its bounds close.
    """
    if tol <= 0:
        raise UsageError("tol must be positive")
    W = channel.probs
    _check_channel(W)
    W = W[:, W.sum(axis=0) > 0]
    W = np.unique(W, axis=0)  # duplicate rows never change capacity
    p = np.full(W.shape[0], 1.0 / W.shape[0])
    upper = lower = 0.0
    it = 0
    for it in range(1, max_iter + 1):
        upper, lower, D = _bounds(W, p)
        if upper - lower <= tol:
            break
        if it % POLISH_EVERY == 0:
            cand = _newton_polish(W, p, D, max(2.0 * (upper - lower) * LN2, 1e-9))
            if cand is not None:
                cu, cl, _ = _bounds(W, cand)
                if cu - cl <= tol:
                    upper, lower = cu, cl
                    break
        p = p * np.exp(D - D.max())
        p /= p.sum()
    gap = max(upper - lower, 0.0)
    return EmpowermentValue(
        bits=float(max(lower, 0.0)),
        horizon=channel.horizon,
        method="blahut_arimoto",
        gap=float(gap),
        converged=bool(gap <= tol),
        iterations=it,
    )


def _simplex_grid(m: int, steps: int) -> np.ndarray:
    """All points of the simplex with coordinates in multiples of 1/steps."""
    pts = []
    for bars in itertools.combinations(range(steps + m - 1), m - 1):
        edges = (-1,) + bars + (steps + m - 1,)
        pts.append([edges[i + 1] - edges[i] - 1 for i in range(m)])
    return np.array(pts, dtype=np.float64) / steps


def mutual_information(W: np.ndarray, q: np.ndarray) -> np.ndarray:
    """I(X;Y) in bits for channel ``W`` and one or many input distributions ``q``."""
    q = np.atleast_2d(q)
    with np.errstate(divide="ignore", invalid="ignore"):
        h_rows = -np.where(W > 0, W * np.log2(W), 0.0).sum(axis=1)
        out = q @ W
        h_out = -np.where(out > 0, out * np.log2(out), 0.0).sum(axis=1)
    return h_out - q @ h_rows


def channel_capacity_bruteforce(channel: ChannelMatrix, resolution: float = 0.01) -> EmpowermentValue:
    """Maximise mutual information over a regular grid on the input simplex."""
    W = channel.probs
    _check_channel(W)
    if channel.num_inputs > 4:
        raise UsageError("brute-force capacity supports at most 4 inputs")
    steps = int(round(1.0 / resolution))
    if steps < 1 or abs(steps * resolution - 1.0) > 1e-9:
        raise UsageError("resolution must divide 1 evenly")
    grid = _simplex_grid(channel.num_inputs, steps)
    best = 0.0
    for chunk in np.array_split(grid, max(1, len(grid) // 50_000)):
        best = max(best, float(mutual_information(W, chunk).max()))
    return EmpowermentValue(bits=max(best, 0.0), horizon=channel.horizon, method="brute_force")


def empowerment(
    mdp: FiniteMdp,
    s: int,
    n: int,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    cap: int = DEFAULT_SEQUENCE_CAP,
) -> EmpowermentValue:
    mdp.check_state(s)
    if n < 1:
        raise UsageError("horizon n must be >= 1")
    if int(s) in mdp.terminal:
        if mdp.num_actions**n > cap:
            raise CapacityBudgetError(f"{mdp.num_actions}^{n} action sequences exceeds cap {cap}")
        return EmpowermentValue(bits=0.0, horizon=n, method="blahut_arimoto", gap=0.0)
    return channel_capacity_ba(nstep_channel(mdp, s, n, cap), tol, max_iter)


def _thread_count(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("MORTAL_WORLD_THREADS", "1") or 1)
    return max(1, threads)


def empowerment_map(
    mdp: FiniteMdp,
    n: int,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    cap: int = DEFAULT_SEQUENCE_CAP,
    threads: int | None = None,
) -> EmpowermentMap:
    """Empowerment of every state; entries are independent so threading is bit-identical."""
    if mdp.num_actions**n > cap:
        raise CapacityBudgetError(f"{mdp.num_actions}^{n} action sequences exceeds cap {cap}")

    def one(s):
        return empowerment(mdp, s, n, tol, max_iter, cap)

    workers = _thread_count(threads)
    if workers == 1:
        values = [one(s) for s in range(mdp.num_states)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(one, range(mdp.num_states)))
    return EmpowermentMap(n, tuple(values))


def expected_successor_empowerment(
    mdp: FiniteMdp, s: int, a: int, n: int, emap: EmpowermentMap
) -> float:
    if emap.horizon != n:
        raise UsageError(f"empowerment map has horizon {emap.horizon}, requested {n}")
    nxt, p = mdp.row(s, a)
    return float(sum(pi * emap.values[int(j)].bits for j, pi in zip(nxt, p)))
