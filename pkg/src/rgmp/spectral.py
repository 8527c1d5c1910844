"""Convergence analysis of GMP and its randomized variants.

At the variance fixed point the check-to-variable means evolve linearly,
``m <- Omega m + z``. A schedule assigning ranks to users splits
``Omega = R - L + I`` into a block unit-lower-triangular ``L`` (couplings to
users updated earlier in the same iteration) and the remainder ``R``. All
matrices are indexed by the retained edges in graph order.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse as sp

from .engine import batches_from_ranks
from .geometry import SparseChannel
from .graph import FactorGraph, leave_one_out

log = logging.getLogger(__name__)

DENSE_EIG_CAP = 4000
SERIAL_ENUMERATION_CAP = 7
BLOCKWISE_ENUMERATION_CAP = 100_000


class VarianceIterationError(RuntimeError):
    pass


# -- variances ---------------------------------------------------------------

def _to_user_variances(graph: FactorGraph, c2v_var: np.ndarray) -> np.ndarray:
    edges = np.arange(graph.E)
    table = graph.user_table[graph.cols]
    valid, (v,) = leave_one_out(table, edges, graph.E, c2v_var)
    with np.errstate(divide="ignore"):
        prec = np.where(valid, 1.0 / np.where(valid, v, 1.0), 0.0)
    return 1.0 / (prec.sum(axis=1) + 1.0)


def variance_map(graph: FactorGraph, sparse: SparseChannel, c2v_var: np.ndarray) -> np.ndarray:
    """The synchronous variance update ``f``: check-to-variable variances at t from those at t-1.

    Defined for nonnegative input; a zero variance is an infinite precision.
    """
    v2c = _to_user_variances(graph, np.asarray(c2v_var, dtype=float))
    edges = np.arange(graph.E)
    table = graph.rrh_table[graph.rows]
    gain = np.abs(graph.coeffs) ** 2
    _, (g_in, v_in) = leave_one_out(table, edges, graph.E, gain, v2c)
    p = sparse.power
    return (sparse.effective_noise + p * np.sum(g_in * v_in, axis=1)) / (p * gain)


@dataclass(frozen=True)
class VarianceFixedPoint:
    c2v_var: np.ndarray
    v2c_var: np.ndarray
    iterations: int
    residual: float


def variance_fixed_point(
    graph: FactorGraph,
    sparse: SparseChannel,
    init: float | np.ndarray = 1.0,
    tol: float = 1e-12,
    max_iterations: int = 100_000,
) -> VarianceFixedPoint:
    v = np.broadcast_to(np.asarray(init, dtype=float), (graph.E,)).copy()
    if np.any(v <= 0):
        raise ValueError("initial variances must be positive")
    for it in range(1, max_iterations + 1):
        new = variance_map(graph, sparse, v)
        residual = float(np.max(np.abs(new - v) / new))
        v = new
        if residual < tol:
            return VarianceFixedPoint(v, _to_user_variances(graph, v), it, residual)
    raise VarianceIterationError(f"variance iteration did not settle in {max_iterations} steps")


# -- mean evolution ----------------------------------------------------------

@dataclass(frozen=True)
class EvolutionOperators:
    omega: np.ndarray
    z: np.ndarray
    fixed_point: np.ndarray | None
    graph: FactorGraph
    variances: VarianceFixedPoint

    @property
    def singular(self) -> bool:
        return self.fixed_point is None


def _sibling_pairs(table: np.ndarray, group_of_edge: np.ndarray, sentinel: int):
    edges = np.arange(len(group_of_edge))
    rows = table[group_of_edge]
    valid = (rows != sentinel) & (rows != edges[:, None])
    src = np.broadcast_to(edges[:, None], rows.shape)[valid]
    return src, rows[valid]


def omega_matrix(graph: FactorGraph, vfp: VarianceFixedPoint) -> np.ndarray:
    """Dense Omega with entry ((n,k),(m,j)) = -H[n,j] v*_{x_j->y_n} / (H[n,k] v*_{y_m->x_j}).

    Nonzero only when j != k, m != n and edges (n,k), (n,j), (m,j) all exist;
    built as the product of a same-RRH coupling and a same-user coupling.
    """
    e = graph.E
    h = graph.coeffs
    r, e1 = _sibling_pairs(graph.rrh_table, graph.rows, e)
    rrh_side = sp.csr_matrix((-h[e1] * vfp.v2c_var[e1] / h[r], (r, e1)), shape=(e, e))
    a, c = _sibling_pairs(graph.user_table, graph.cols, e)
    user_side = sp.csr_matrix((1.0 / vfp.c2v_var[c], (a, c)), shape=(e, e))
    return (rrh_side @ user_side).toarray()


def build_omega(
    graph: FactorGraph, sparse: SparseChannel, vfp: VarianceFixedPoint, y: np.ndarray
) -> EvolutionOperators:
    omega = omega_matrix(graph, vfp)
    z = np.asarray(y)[graph.rows] / (math.sqrt(sparse.power) * graph.coeffs)
    system = np.eye(graph.E) - omega
    try:
        m_star = np.linalg.solve(system, z)
        scale = np.linalg.norm(z) + np.linalg.norm(m_star)
        if not np.all(np.isfinite(m_star)) or np.linalg.norm(system @ m_star - z) > 1e-8 * scale:
            raise np.linalg.LinAlgError("I - Omega is numerically singular")
    except np.linalg.LinAlgError as err:
        log.warning("no mean fixed point: %s", err)
        m_star = None
    return EvolutionOperators(omega, z, m_star, graph, vfp)


def analyze(graph: FactorGraph, sparse: SparseChannel, y: np.ndarray) -> EvolutionOperators:
    """Variance fixed point followed by the mean-evolution operators."""
    return build_omega(graph, sparse, variance_fixed_point(graph, sparse), y)


# -- schedule splitting ------------------------------------------------------

@dataclass(frozen=True)
class ScheduleOperators:
    lower: np.ndarray
    upper: np.ndarray
    ranks: np.ndarray
    edge_ranks: np.ndarray
    omega: np.ndarray

    def inverse_lower_apply(self, rhs: np.ndarray) -> np.ndarray:
        """Solve ``L X = rhs`` by forward substitution over increasing rank."""
        rhs = np.asarray(rhs)
        out = np.zeros_like(rhs, dtype=complex)
        done = np.empty(0, dtype=np.intp)
        for group in batches_from_ranks(self.edge_ranks):
            out[group] = rhs[group]
            if done.size:
                out[group] += self.omega[np.ix_(group, done)] @ out[done]
            done = np.concatenate([done, group])
        return out

    def propagator(self) -> np.ndarray:
        """``L^-1 R``, the one-iteration mean map under this schedule."""
        return self.inverse_lower_apply(self.upper)


def build_schedule_operators(operators: EvolutionOperators, ranks) -> ScheduleOperators:
    """``L(r,c) = -Omega(r,c)`` if user(r) ranks after user(c); ``R(r,c) = Omega(r,c)`` otherwise."""
    ranks = np.asarray(ranks)
    graph = operators.graph
    if ranks.shape != (graph.K,):
        raise ValueError(f"need one rank per user ({graph.K}), got shape {ranks.shape}")
    edge_ranks = ranks[graph.cols]
    earlier = edge_ranks[:, None] > edge_ranks[None, :]
    omega = operators.omega
    lower = np.eye(graph.E) - np.where(earlier, omega, 0)
    upper = np.where(earlier, 0, omega)
    return ScheduleOperators(lower, upper, ranks, edge_ranks, omega)


# -- expectation over schedules ----------------------------------------------

@dataclass(frozen=True)
class ExpectedOperator:
    lam: np.ndarray
    estimator: str
    inverse_mean: np.ndarray | None = None
    standard_error: float | None = None
    samples: int | None = None


def _enumerate_ranks(kind: str, num_users: int, blocks: int):
    if kind == "serial":
        if num_users > SERIAL_ENUMERATION_CAP:
            raise ValueError(f"exact serial enumeration capped at K <= {SERIAL_ENUMERATION_CAP}")
        return itertools.permutations(range(num_users))
    if blocks**num_users > BLOCKWISE_ENUMERATION_CAP:
        raise ValueError(f"exact blockwise enumeration capped at M^K <= {BLOCKWISE_ENUMERATION_CAP}")
    return itertools.product(range(blocks), repeat=num_users)


def _propagator_and_inverse(operators: EvolutionOperators, ranks, inverse: bool = True):
    sched = build_schedule_operators(operators, np.asarray(ranks))
    e = operators.graph.E
    if not inverse:
        return sched.propagator(), None
    both = sched.inverse_lower_apply(np.hstack([sched.upper, np.eye(e)]))
    return both[:, :e], both[:, e:]


def expected_operator(
    operators: EvolutionOperators,
    kind: str = "serial",
    estimator: str = "exact",
    blocks: int = 2,
    samples: int = 10_000,
    seed: int = 0,
    inverse: bool = True,
) -> ExpectedOperator:
    """Lambda = E[L^-1 R] over random serial permutations or blockwise slot draws.

    With ``inverse`` the mean of ``L^-1`` is accumulated alongside (exact and
    Monte-Carlo estimators only).
    """
    if kind not in ("serial", "blockwise"):
        raise ValueError(f"unknown schedule family {kind!r}")
    k = operators.graph.K
    omega = operators.omega

    if estimator == "closed_form":
        if kind != "blockwise" or blocks != 2:
            raise ValueError("closed form exists only for blockwise schedules with M=2")
        return ExpectedOperator(0.75 * omega + 0.25 * omega @ omega, "closed_form_M2")

    if estimator == "exact":
        lam = np.zeros_like(omega)
        inv = np.zeros_like(omega)
        count = 0
        for ranks in _enumerate_ranks(kind, k, blocks):
            p, li = _propagator_and_inverse(operators, ranks, inverse)
            lam += p
            if inverse:
                inv += li
            count += 1
        return ExpectedOperator(
            lam / count, "exact_enumeration", inv / count if inverse else None, 0.0, count
        )

    if estimator == "monte_carlo":
        rng = np.random.default_rng(seed)
        total = np.zeros_like(omega)
        total_sq = np.zeros(omega.shape)
        inv = np.zeros_like(omega)
        cache: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}
        for _ in range(samples):
            ranks = rng.permutation(k) if kind == "serial" else rng.integers(blocks, size=k)
            key = tuple(ranks.tolist())
            if key not in cache:
                result = _propagator_and_inverse(operators, ranks, inverse)
                if len(cache) < 256:
                    cache[key] = result
            else:
                result = cache[key]
            p, li = result
            total += p
            total_sq += np.abs(p) ** 2
            if inverse:
                inv += li
        mean = total / samples
        var = np.maximum(total_sq - samples * np.abs(mean) ** 2, 0.0) / max(samples - 1, 1)
        se = math.sqrt(float(var.sum()) / samples)
        return ExpectedOperator(
            mean, f"monte_carlo({samples})", inv / samples if inverse else None, se, samples
        )

    raise ValueError(f"unknown estimator {estimator!r}")


# -- spectra ------------------------------------------------------------------

@dataclass(frozen=True)
class PowerEstimate:
    value: float
    certified: bool
    iterations: int


def power_iteration(matrix, max_iterations: int = 5000, tol: float = 1e-10, seed: int = 0) -> PowerEstimate:
    """Dominant-eigenvalue magnitude; certified when the Rayleigh residual falls below ``tol``."""
    n = matrix.shape[0]
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for it in range(1, max_iterations + 1):
        w = matrix @ v
        lam = np.vdot(v, w)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return PowerEstimate(0.0, True, it)
        if np.linalg.norm(w - lam * v) <= tol * max(abs(lam), 1e-300):
            return PowerEstimate(float(abs(lam)), True, it)
        v = w / norm
    return PowerEstimate(float(abs(lam)), False, max_iterations)


def spectral_radius(matrix, dense_cap: int = DENSE_EIG_CAP) -> float:
    matrix = np.asarray(matrix) if not sp.issparse(matrix) else matrix
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError("spectral radius needs a square matrix")
    data = matrix.data if sp.issparse(matrix) else matrix
    if not np.all(np.isfinite(data)):
        raise ValueError("matrix has non-finite entries")
    if matrix.shape[0] == 0:
        return 0.0
    if matrix.shape[0] <= dense_cap:
        dense = matrix.toarray() if sp.issparse(matrix) else matrix
        return float(np.max(np.abs(np.linalg.eigvals(dense))))
    est = power_iteration(matrix)
    if not est.certified:
        log.warning("power iteration not certified; %.6g is only an estimate", est.value)
    return est.value


def damping_predictor(operators: EvolutionOperators, eta: float) -> float:
    """rho(eta Omega + (1 - eta) I): the mean-convergence indicator of damped GMP."""
    if not 0 < eta <= 1:
        raise ValueError("damping factor must lie in (0, 1]")
    e = operators.graph.E
    return spectral_radius(eta * operators.omega + (1.0 - eta) * np.eye(e))


@dataclass(frozen=True)
class SpectralSummary:
    rho_omega: float
    rho_lambda_m2: float
    damping: dict[float, float]


def summarize(operators: EvolutionOperators, etas=()) -> SpectralSummary:
    omega = operators.omega
    return SpectralSummary(
        rho_omega=spectral_radius(omega),
        rho_lambda_m2=spectral_radius(0.75 * omega + 0.25 * omega @ omega),
        damping={float(eta): damping_predictor(operators, eta) for eta in etas},
    )
