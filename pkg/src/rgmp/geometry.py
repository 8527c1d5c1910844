"""Network geometry, Rayleigh/pathloss channels and distance-based sparsification.

Distances are in meters internally; areas and densities are given in km and
km^-2. The receiver noise power is fixed to 1 so that ``P = 10**(snr_db/10)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse as sp

NOISE_POWER = 1.0

# independent RNG streams derived from one seed
_PLACEMENT_STREAM = 0
_FADING_STREAM = 1
_SIGNAL_STREAM = 2


class EmptyGraphError(ValueError):
    """Raised when sparsification leaves no RRH-user edge."""


@dataclass(frozen=True)
class NetworkConfig:
    area_radius_km: float = 1.0
    rrh_density_per_km2: float = 10.0
    user_density_per_km2: float = 8.0
    pathloss_exponent: float = 3.7
    snr_db: float = 95.0
    distance_threshold_m: float = 1000.0
    seed: int = 0
    # explicit counts override the density-derived ones (e.g. N=20, K=15)
    n_rrh: int | None = None
    n_users: int | None = None

    def __post_init__(self):
        if not self.area_radius_km > 0:
            raise ValueError(f"area_radius_km must be positive, got {self.area_radius_km}")
        if not (self.rrh_density_per_km2 > 0 and self.user_density_per_km2 > 0):
            raise ValueError("densities must be positive")
        if not self.pathloss_exponent > 2:
            raise ValueError(f"pathloss_exponent must exceed 2, got {self.pathloss_exponent}")
        if not self.distance_threshold_m > 0:
            raise ValueError("distance_threshold_m must be positive or inf")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        for name in ("n_rrh", "n_users"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ValueError(f"{name} must be >= 1")

    @classmethod
    def for_rrh_count(cls, n_rrh: int, **kwargs) -> "NetworkConfig":
        """Config whose disc area holds ``n_rrh`` RRHs at the RRH density."""
        density = kwargs.get("rrh_density_per_km2", cls.rrh_density_per_km2)
        radius = math.sqrt(n_rrh / (density * math.pi))
        return cls(area_radius_km=radius, **kwargs)

    @property
    def radius_m(self) -> float:
        return 1000.0 * self.area_radius_km

    @property
    def area_km2(self) -> float:
        return math.pi * self.area_radius_km**2

    @property
    def power(self) -> float:
        return 10.0 ** (self.snr_db / 10.0)

    @property
    def noise(self) -> float:
        return NOISE_POWER

    @property
    def num_rrh(self) -> int:
        if self.n_rrh is not None:
            return int(self.n_rrh)
        return int(round(self.rrh_density_per_km2 * self.area_km2))

    @property
    def num_users(self) -> int:
        if self.n_users is not None:
            return int(self.n_users)
        return int(round(self.user_density_per_km2 * self.area_km2))

    def rng(self, stream: int) -> np.random.Generator:
        return np.random.default_rng([int(self.seed), stream])


@dataclass(frozen=True)
class Placement:
    rrh_positions: np.ndarray
    user_positions: np.ndarray
    radius_m: float

    @property
    def N(self) -> int:
        return len(self.rrh_positions)

    @property
    def K(self) -> int:
        return len(self.user_positions)


@dataclass(frozen=True)
class ChannelMatrix:
    entries: np.ndarray
    distances: np.ndarray
    fading: np.ndarray
    pathloss_exponent: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape


@dataclass(frozen=True)
class SparseChannel:
    """Retained edges, sorted user-major: by (k, n)."""

    rows: np.ndarray
    cols: np.ndarray
    coeffs: np.ndarray
    shape: tuple[int, int]
    power: float
    noise: float
    effective_noise: float
    discarded_power_per_rrh: np.ndarray = field(repr=False)

    @property
    def num_edges(self) -> int:
        return len(self.coeffs)

    def dense(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=complex)
        out[self.rows, self.cols] = self.coeffs
        return out

    def csr(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.coeffs, (self.rows, self.cols)), shape=self.shape)


def _uniform_disc(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    r = radius * np.sqrt(rng.random(n))
    theta = 2.0 * np.pi * rng.random(n)
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def generate_placement(config: NetworkConfig) -> Placement:
    """Drop RRHs and users i.i.d. uniformly on the disc."""
    n, k = config.num_rrh, config.num_users
    if n < 1 or k < 1:
        raise ValueError(f"config yields N={n}, K={k}; both must be >= 1")
    rng = config.rng(_PLACEMENT_STREAM)
    rrhs = _uniform_disc(rng, n, config.radius_m)
    users = _uniform_disc(rng, k, config.radius_m)
    # coincident points have probability zero; redraw them so d > 0 always
    while True:
        clash = np.any(_pairwise_distances(rrhs, users) == 0.0, axis=0)
        if not clash.any():
            break
        users[clash] = _uniform_disc(rng, int(clash.sum()), config.radius_m)
    return Placement(rrhs, users, config.radius_m)


def _pairwise_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.hypot(a[:, None, 0] - b[None, :, 0], a[:, None, 1] - b[None, :, 1])


def complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    """Circular CN(0, 1) samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def build_channel(placement: Placement, config: NetworkConfig) -> ChannelMatrix:
    d = _pairwise_distances(placement.rrh_positions, placement.user_positions)
    if np.any(d == 0.0):
        raise ValueError("coincident RRH/user positions")
    gamma = complex_gaussian(config.rng(_FADING_STREAM), d.shape)
    h = gamma * d ** (-config.pathloss_exponent / 2.0)
    return ChannelMatrix(h, d, gamma, config.pathloss_exponent)


def sparsify(channel: ChannelMatrix, config: NetworkConfig) -> SparseChannel:
    return sparsify_threshold(channel, config.distance_threshold_m, config.power, config.noise)


def sparsify_threshold(
    channel: ChannelMatrix, threshold_m: float, power: float, noise: float = NOISE_POWER
) -> SparseChannel:
    d = channel.distances
    keep = d < threshold_m
    if not keep.any():
        raise EmptyGraphError(f"no RRH-user pair closer than d0={threshold_m} m")
    isolated = np.flatnonzero(~keep.any(axis=0))
    if isolated.size:
        warnings.warn(f"{isolated.size} user(s) have no retained edge: {isolated.tolist()}")
    # E|gamma|^2 = 1, so a dropped link contributes its pathloss d^-alpha
    discarded = np.where(keep, 0.0, d ** (-channel.pathloss_exponent)).sum(axis=1)
    effective_noise = noise + power * float(discarded.mean())
    cols, rows = np.nonzero(keep.T)
    return SparseChannel(
        rows=rows,
        cols=cols,
        coeffs=channel.entries[rows, cols],
        shape=channel.shape,
        power=power,
        noise=noise,
        effective_noise=effective_noise,
        discarded_power_per_rrh=discarded,
    )


def sparse_from_matrix(h: np.ndarray, snr_db: float, noise: float = NOISE_POWER) -> SparseChannel:
    """Wrap a given channel matrix without truncation (d0 = inf)."""
    h = np.asarray(h, dtype=complex)
    mask = h != 0
    if not mask.any():
        raise EmptyGraphError("all-zero channel matrix")
    cols, rows = np.nonzero(mask.T)
    return SparseChannel(
        rows=rows,
        cols=cols,
        coeffs=h[rows, cols],
        shape=h.shape,
        power=10.0 ** (snr_db / 10.0),
        noise=noise,
        effective_noise=noise,
        discarded_power_per_rrh=np.zeros(h.shape[0]),
    )


def transmit(channel: ChannelMatrix, config: NetworkConfig) -> tuple[np.ndarray, np.ndarray]:
    """Draw unit-variance Gaussian symbols and the received vector through the full channel."""
    rng = config.rng(_SIGNAL_STREAM)
    n, k = channel.shape
    x = complex_gaussian(rng, k)
    y = math.sqrt(config.power) * channel.entries @ x + math.sqrt(config.noise) * complex_gaussian(rng, n)
    return x, y


@dataclass(frozen=True)
class Instance:
    config: NetworkConfig
    placement: Placement
    channel: ChannelMatrix
    sparse: SparseChannel
    x: np.ndarray
    y: np.ndarray


def make_instance(config: NetworkConfig) -> Instance:
    placement = generate_placement(config)
    channel = build_channel(placement, config)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sparse = sparsify(channel, config)
    x, y = transmit(channel, config)
    return Instance(config, placement, channel, sparse, x, y)
