"""Reference linear detectors: dense MMSE, conjugate gradient and disjoint clustering."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .geometry import ChannelMatrix, Placement, SparseChannel


class CGConvergenceError(RuntimeError):
    pass


@dataclass
class DetectionResult:
    estimates: np.ndarray
    method: str
    solve_iterations: int = 0
    mse: float | None = None
    history: list[np.ndarray] | None = None


def mse(x: np.ndarray, x_hat: np.ndarray) -> float:
    return float(np.mean(np.abs(np.asarray(x) - np.asarray(x_hat)) ** 2))


def _finish(x_hat, method, iterations=0, x_true=None, history=None) -> DetectionResult:
    err = None if x_true is None else mse(x_true, x_hat)
    return DetectionResult(x_hat, method, iterations, err, history)


def mmse_direct(h: np.ndarray, y: np.ndarray, power: float, noise: float, x_true=None) -> DetectionResult:
    """x = sqrt(P) H^H (P H H^H + noise I)^-1 y via a Cholesky solve."""
    h = np.asarray(h, dtype=complex)
    if h.size == 0:
        raise ValueError("empty channel matrix")
    assert noise > 0, "the regularized system is positive definite only for noise > 0"
    gram = power * (h @ h.conj().T) + noise * np.eye(h.shape[0])
    u = linalg.cho_solve(linalg.cho_factor(gram, lower=True), np.asarray(y, dtype=complex))
    return _finish(math.sqrt(power) * (h.conj().T @ u), "mmse_direct", x_true=x_true)


def mmse_sparsified(sparse: SparseChannel, y: np.ndarray, x_true=None) -> DetectionResult:
    res = mmse_direct(sparse.dense(), y, sparse.power, sparse.effective_noise, x_true)
    res.method = "mmse_sparsified"
    return res


def conjugate_gradient(apply_a, b: np.ndarray, tol: float, max_iterations: int, callback=None):
    """Plain CG for a Hermitian positive-definite operator; stops at ||r|| <= tol ||b||."""
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = np.vdot(r, r).real
    target = tol * math.sqrt(np.vdot(b, b).real)
    if math.sqrt(rr) <= target:
        return x, 0
    for it in range(1, max_iterations + 1):
        ap = apply_a(p)
        alpha = rr / np.vdot(p, ap).real
        x = x + alpha * p
        r = r - alpha * ap
        rr_new = np.vdot(r, r).real
        if callback is not None:
            callback(x)
        if math.sqrt(rr_new) <= target:
            return x, it
        p = r + (rr_new / rr) * p
        rr = rr_new
    raise CGConvergenceError(f"CG did not reach tol={tol} in {max_iterations} iterations")


def cg_detect(
    sparse: SparseChannel,
    y: np.ndarray,
    tol: float = 1e-10,
    max_iterations: int | None = None,
    x_true=None,
    keep_history: bool = False,
) -> DetectionResult:
    """Solve (P H H^H + N0_hat I) u = y by CG on the sparsified channel, then x = sqrt(P) H^H u."""
    a = sparse.csr()
    ah = a.conj().T.tocsr()
    power, nu = sparse.power, sparse.effective_noise
    y = np.asarray(y, dtype=complex)
    if max_iterations is None:
        max_iterations = 10 * sparse.shape[0]
    history: list[np.ndarray] = []
    callback = (lambda u: history.append(math.sqrt(power) * (ah @ u))) if keep_history else None
    u, iterations = conjugate_gradient(
        lambda v: power * (a @ (ah @ v)) + nu * v, y, tol, max_iterations, callback
    )
    return _finish(math.sqrt(power) * (ah @ u), "cg", iterations, x_true, history if keep_history else None)


def tile_index(points: np.ndarray, origin: float, side: float) -> np.ndarray:
    """Integer (col, row) of the axis-aligned square containing each point."""
    return np.floor((points - origin) / side).astype(np.int64)


def disjoint_cluster_detect(
    placement: Placement,
    channel: ChannelMatrix,
    y: np.ndarray,
    cluster_area_km2: float,
    threshold_m: float,
    power: float,
    noise: float,
    x_true=None,
) -> DetectionResult:
    """MMSE run independently inside each square of a tiling anchored at the disc's bounding-box corner.

    Each user is detected from the RRHs of its own square only, using the
    channel entries with d < d0; users whose square holds no RRH get 0.
    """
    if not cluster_area_km2 > 0:
        raise ValueError("cluster area must be positive")
    side = 1000.0 * math.sqrt(cluster_area_km2)
    origin = -placement.radius_m
    rrh_tiles = tile_index(placement.rrh_positions, origin, side)
    user_tiles = tile_index(placement.user_positions, origin, side)
    h = np.where(channel.distances < threshold_m, channel.entries, 0)
    y = np.asarray(y, dtype=complex)
    x_hat = np.zeros(placement.K, dtype=complex)
    for tile in {tuple(t) for t in user_tiles.tolist()}:
        users = np.flatnonzero(np.all(user_tiles == tile, axis=1))
        rrhs = np.flatnonzero(np.all(rrh_tiles == tile, axis=1))
        if rrhs.size == 0:
            continue
        sub = h[np.ix_(rrhs, users)]
        x_hat[users] = mmse_direct(sub, y[rrhs], power, noise).estimates
    return _finish(x_hat, f"disjoint_cluster({cluster_area_km2:g}km2)", x_true=x_true)
