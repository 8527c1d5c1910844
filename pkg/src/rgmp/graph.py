"""Edge-indexed bipartite factor graph for the C-RAN detection problem."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import EmptyGraphError, SparseChannel


def _padded_table(groups: list[np.ndarray], sentinel: int) -> np.ndarray:
    width = max((len(g) for g in groups), default=0)
    table = np.full((len(groups), max(width, 1)), sentinel, dtype=np.intp)
    for i, g in enumerate(groups):
        table[i, : len(g)] = g
    return table


def leave_one_out(table_rows: np.ndarray, own: np.ndarray, sentinel: int, *arrays):
    """Gather each array over the siblings of ``own`` (zeros elsewhere).

    ``table_rows[i]`` is the padded adjacency row that contains edge ``own[i]``.
    Summing the result along axis 1 gives exact leave-one-out sums without
    subtracting the own term from a total.
    """
    valid = (table_rows != sentinel) & (table_rows != own[:, None])
    idx = np.where(valid, table_rows, 0)
    return valid, [np.where(valid, a[idx], 0) for a in arrays]


@dataclass(frozen=True, eq=False)
class FactorGraph:
    """Immutable graph; edges are ordered by (k, n).

    ``rrh_table`` / ``user_table`` are the adjacency lists padded with the
    sentinel index ``E`` so that leave-one-out sums can be gathered in one
    vectorized step.
    """

    rows: np.ndarray
    cols: np.ndarray
    coeffs: np.ndarray
    N: int
    K: int
    user_adjacency: tuple[np.ndarray, ...]
    rrh_adjacency: tuple[np.ndarray, ...]
    rrh_table: np.ndarray
    user_table: np.ndarray

    @property
    def E(self) -> int:
        return len(self.rows)

    @property
    def edge_list(self) -> list[tuple[int, int]]:
        return list(zip(self.rows.tolist(), self.cols.tolist()))

    @property
    def edge_lookup(self) -> dict[tuple[int, int], int]:
        return {e: i for i, e in enumerate(self.edge_list)}

    def user_degrees(self) -> np.ndarray:
        return np.bincount(self.cols, minlength=self.K)

    def rrh_degrees(self) -> np.ndarray:
        return np.bincount(self.rows, minlength=self.N)


def build_graph(sparse: SparseChannel) -> FactorGraph:
    return graph_from_edges(sparse.rows, sparse.cols, sparse.coeffs, *sparse.shape)


def graph_from_edges(rows, cols, coeffs, n_rrh: int, n_users: int) -> FactorGraph:
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    coeffs = np.asarray(coeffs, dtype=complex)
    if rows.size == 0:
        raise EmptyGraphError("factor graph needs at least one edge")
    if np.any(coeffs == 0):
        raise ValueError("edge coefficients must be nonzero")
    order = np.lexsort((rows, cols))
    rows, cols, coeffs = rows[order], cols[order], coeffs[order]
    keys = cols * n_rrh + rows
    if np.any(np.diff(keys) == 0):
        raise ValueError("duplicate (n, k) edge")
    if rows.min() < 0 or rows.max() >= n_rrh or cols.min() < 0 or cols.max() >= n_users:
        raise ValueError("edge index out of range")
    for a in (rows, cols, coeffs):
        a.setflags(write=False)
    edges = np.arange(len(rows))
    users = tuple(edges[cols == k] for k in range(n_users))
    rrhs = tuple(edges[rows == n] for n in range(n_rrh))
    sentinel = len(rows)
    return FactorGraph(
        rows=rows,
        cols=cols,
        coeffs=coeffs,
        N=n_rrh,
        K=n_users,
        user_adjacency=users,
        rrh_adjacency=rrhs,
        rrh_table=_padded_table(list(rrhs), sentinel),
        user_table=_padded_table(list(users), sentinel),
    )


@dataclass
class MessageState:
    """Gaussian messages on every edge, in both directions.

    ``c2v`` means check (RRH) to variable (user), ``v2c`` the reverse.
    Check-to-variable slots hold NaN until first computed.
    """

    c2v_mean: np.ndarray
    c2v_var: np.ndarray
    v2c_mean: np.ndarray
    v2c_var: np.ndarray

    @property
    def num_slots(self) -> int:
        return sum(a.size for a in (self.c2v_mean, self.c2v_var, self.v2c_mean, self.v2c_var))

    def copy(self) -> "MessageState":
        return MessageState(
            self.c2v_mean.copy(), self.c2v_var.copy(), self.v2c_mean.copy(), self.v2c_var.copy()
        )


def init_messages(graph: FactorGraph) -> MessageState:
    e = graph.E
    return MessageState(
        c2v_mean=np.full(e, np.nan, dtype=complex),
        c2v_var=np.full(e, np.nan),
        v2c_mean=np.zeros(e, dtype=complex),
        v2c_var=np.ones(e),
    )
