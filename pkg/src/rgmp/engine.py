"""Gaussian message passing with synchronous, serial, randomized and blockwise schedules.

Every schedule is reduced to a per-iteration *rank* per user: users are
processed in batches of increasing rank, a batch's check-to-variable
messages all read the state left by earlier batches, and then the batch's
variable-to-check messages are refreshed. Synchronous GMP is the single
batch, serial GMP has one user per batch, and B-RGMP draws ranks from
``{0, ..., M-1}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import SparseChannel
from .graph import FactorGraph, MessageState, init_messages, leave_one_out

SCHEDULE_KINDS = ("synchronous", "fixed_serial", "random_serial", "blockwise")
VERDICTS = ("converged", "diverged", "max_iters")


class CorruptStateError(RuntimeError):
    """A message variance became non-positive."""


@dataclass(frozen=True)
class Schedule:
    kind: str = "synchronous"
    order: tuple[int, ...] | None = None
    blocks: int = 1
    seed: int = 0
    # width of the U(0, B) draws in RGMP; only the induced permutation matters
    interval: float = 1.0

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "fixed_serial" and self.order is None:
            raise ValueError("fixed_serial needs an order")
        if self.kind == "blockwise" and self.blocks < 1:
            raise ValueError("blockwise needs at least one timeslot")

    @classmethod
    def synchronous(cls) -> "Schedule":
        return cls("synchronous")

    @classmethod
    def fixed(cls, order: Sequence[int]) -> "Schedule":
        """Serial schedule processing users in ``order`` (0-based) every iteration."""
        return cls("fixed_serial", order=tuple(int(k) for k in order))

    @classmethod
    def from_times(cls, times: Sequence[float]) -> "Schedule":
        """Fixed serial schedule from per-user update times, earliest first."""
        return cls.fixed(np.argsort(np.asarray(times), kind="stable"))

    @classmethod
    def randomized(cls, seed: int = 0) -> "Schedule":
        return cls("random_serial", seed=seed)

    @classmethod
    def blockwise(cls, blocks: int, seed: int = 0) -> "Schedule":
        return cls("blockwise", blocks=blocks, seed=seed)

    @property
    def label(self) -> str:
        if self.kind == "fixed_serial":
            return "fixed_serial(" + ",".join(str(k + 1) for k in self.order) + ")"
        if self.kind == "blockwise":
            return f"blockwise({self.blocks})"
        return self.kind

    def validate(self, num_users: int) -> None:
        if self.kind == "fixed_serial" and sorted(self.order) != list(range(num_users)):
            raise ValueError(f"order {self.order} is not a permutation of {num_users} users")

    def draw_ranks(self, rng: np.random.Generator, num_users: int) -> np.ndarray:
        if self.kind == "synchronous":
            return np.zeros(num_users, dtype=np.intp)
        if self.kind == "fixed_serial":
            ranks = np.empty(num_users, dtype=np.intp)
            ranks[list(self.order)] = np.arange(num_users)
            return ranks
        if self.kind == "random_serial":
            return rng.permutation(num_users)
        return rng.integers(self.blocks, size=num_users)


def batches_from_ranks(ranks: np.ndarray) -> list[np.ndarray]:
    """Users grouped by rank, groups in increasing rank order."""
    ranks = np.asarray(ranks)
    order = np.argsort(ranks, kind="stable")
    cuts = np.flatnonzero(np.diff(ranks[order])) + 1
    return np.split(order, cuts)


@dataclass(frozen=True)
class EngineParams:
    max_iterations: int = 1000
    tolerance: float = 1e-5
    divergence_ceiling: float = 1e6
    damping: float = 1.0
    residual_matrix: str = "sparsified"

    def __post_init__(self):
        if not 0 < self.tolerance < self.divergence_ceiling:
            raise ValueError("need 0 < tolerance < divergence_ceiling")
        if not 0 < self.damping <= 1:
            raise ValueError("damping factor must lie in (0, 1]")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.residual_matrix not in ("sparsified", "full"):
            raise ValueError("residual_matrix must be 'sparsified' or 'full'")


@dataclass
class RunTrace:
    deltas: list[float]
    verdict: str
    iterations: int
    estimates: np.ndarray
    variances: np.ndarray
    message_updates: list[int] = field(default_factory=list)
    state: MessageState | None = field(default=None, repr=False)


def check_to_variable(
    state: MessageState,
    graph: FactorGraph,
    sparse: SparseChannel,
    y: np.ndarray,
    edges: np.ndarray,
    damping: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """New RRH-to-user (mean, variance) on ``edges`` from the current user-to-RRH messages."""
    edges = np.asarray(edges, dtype=np.intp)
    power, noise = sparse.power, sparse.effective_noise
    h = graph.coeffs
    table = graph.rrh_table[graph.rows[edges]]
    valid, (v_in, m_in, h_in) = leave_one_out(table, edges, graph.E, state.v2c_var, state.v2c_mean, h)
    if np.any(v_in[valid] <= 0):
        raise CorruptStateError("non-positive variable-to-check variance")
    h_e = h[edges]
    gain = np.abs(h_e) ** 2
    var = (noise + power * np.sum(np.abs(h_in) ** 2 * v_in, axis=1)) / (power * gain)
    root = math.sqrt(power)
    mean = (y[graph.rows[edges]] - root * np.sum(h_in * m_in, axis=1)) / (root * h_e)
    if damping != 1.0:
        old = state.c2v_mean[edges]
        fresh = np.isnan(old)
        mean = np.where(fresh, mean, damping * mean + (1.0 - damping) * np.where(fresh, 0, old))
    return mean, var


def variable_to_check(
    state: MessageState, graph: FactorGraph, edges: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """New user-to-RRH (mean, variance): unit prior combined with the other RRHs' messages."""
    edges = np.asarray(edges, dtype=np.intp)
    table = graph.user_table[graph.cols[edges]]
    valid, (v_in, m_in) = leave_one_out(table, edges, graph.E, state.c2v_var, state.c2v_mean)
    if np.any(~(v_in[valid] > 0)):
        raise CorruptStateError("non-positive check-to-variable variance")
    with np.errstate(divide="ignore", invalid="ignore"):
        prec = np.where(valid, 1.0 / np.where(valid, v_in, 1.0), 0.0)
    var = 1.0 / (prec.sum(axis=1) + 1.0)
    mean = var * np.sum(m_in * prec, axis=1)
    return mean, var


def combine_estimates(state: MessageState, graph: FactorGraph) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance per user; isolated users keep the prior (0, 1)."""
    prec = 1.0 / state.c2v_var
    weighted = state.c2v_mean * prec
    k = graph.K
    total_prec = np.bincount(graph.cols, weights=prec, minlength=k)
    total_mean = np.bincount(graph.cols, weights=weighted.real, minlength=k) + 1j * np.bincount(
        graph.cols, weights=weighted.imag, minlength=k
    )
    v = 1.0 / (total_prec + 1.0)
    return v * total_mean, v


def iterate(
    state: MessageState,
    graph: FactorGraph,
    sparse: SparseChannel,
    y: np.ndarray,
    ranks: np.ndarray,
    damping: float = 1.0,
) -> int:
    """One in-place iteration under the given per-user ranks; returns the message-update count."""
    updates = 0
    for users in batches_from_ranks(ranks):
        if len(users) == graph.K:
            edges = np.arange(graph.E)
        else:
            edges = np.concatenate([graph.user_adjacency[u] for u in users])
        if edges.size == 0:
            continue
        mean, var = check_to_variable(state, graph, sparse, y, edges, damping)
        state.c2v_mean[edges] = mean
        state.c2v_var[edges] = var
        mean, var = variable_to_check(state, graph, edges)
        state.v2c_mean[edges] = mean
        state.v2c_var[edges] = var
        updates += 4 * edges.size
    return updates


class Residual:
    """Relative residual of the regularized normal equations for an estimate x.

    ``||(P A^H A + nu I) x - sqrt(P) A^H y|| / ||sqrt(P) A^H y||`` with A the
    sparsified channel (nu = effective noise) or the full one (nu = N0).
    """

    def __init__(self, sparse: SparseChannel, y: np.ndarray, full_channel: np.ndarray | None = None,
                 which: str = "sparsified"):
        self.power = sparse.power
        if which == "full":
            if full_channel is None:
                raise ValueError("residual_matrix='full' needs the full channel matrix")
            self.a = np.asarray(full_channel, dtype=complex)
            self.nu = sparse.noise
        else:
            self.a = sparse.csr()
            self.nu = sparse.effective_noise
        self.ah = self.a.conj().T
        self.rhs = math.sqrt(self.power) * (self.ah @ y)
        self.scale = float(np.linalg.norm(self.rhs))

    def __call__(self, x: np.ndarray) -> float:
        r = self.power * (self.ah @ (self.a @ x)) + self.nu * x - self.rhs
        if self.scale == 0.0:
            return float(np.linalg.norm(r))
        return float(np.linalg.norm(r)) / self.scale


def run(
    graph: FactorGraph,
    sparse: SparseChannel,
    y: np.ndarray,
    schedule: Schedule,
    params: EngineParams = EngineParams(),
    full_channel: np.ndarray | None = None,
) -> RunTrace:
    y = np.asarray(y, dtype=complex)
    if y.shape != (graph.N,):
        raise ValueError(f"y has shape {y.shape}, expected ({graph.N},)")
    if sparse.shape != (graph.N, graph.K):
        raise ValueError("sparse channel does not match the graph")
    schedule.validate(graph.K)

    residual = Residual(sparse, y, full_channel, params.residual_matrix)
    rng = np.random.default_rng(schedule.seed)
    state = init_messages(graph)
    deltas: list[float] = []
    counts: list[int] = []
    verdict = "max_iters"
    x = np.zeros(graph.K, dtype=complex)
    v = np.ones(graph.K)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(params.max_iterations):
            ranks = schedule.draw_ranks(rng, graph.K)
            counts.append(iterate(state, graph, sparse, y, ranks, params.damping))
            x, v = combine_estimates(state, graph)
            delta = residual(x)
            deltas.append(delta)
            if not math.isfinite(delta) or delta > params.divergence_ceiling:
                verdict = "diverged"
                break
            if delta < params.tolerance:
                verdict = "converged"
                break
    return RunTrace(deltas, verdict, len(deltas), x, v, counts, state)
