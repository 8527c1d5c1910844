import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rgmp.geometry import (
    EmptyGraphError,
    NetworkConfig,
    build_channel,
    generate_placement,
    make_instance,
    sparse_from_matrix,
    sparsify_threshold,
)


def test_counts_follow_densities():
    cfg = NetworkConfig(area_radius_km=2.0)
    assert cfg.num_rrh == round(10 * math.pi * 4)
    assert cfg.num_users == round(8 * math.pi * 4)
    assert NetworkConfig(n_rrh=20, n_users=15).num_users == 15


def test_for_rrh_count_sizes_disc():
    for n in (10, 20, 40, 80):
        assert NetworkConfig.for_rrh_count(n).num_rrh == n


@pytest.mark.parametrize("kw", [
    {"area_radius_km": 0.0},
    {"pathloss_exponent": 2.0},
    {"distance_threshold_m": 0.0},
    {"rrh_density_per_km2": -1.0},
    {"n_users": 0},
])
def test_invalid_config_rejected(kw):
    with pytest.raises(ValueError):
        NetworkConfig(**kw)


@given(seed=st.integers(0, 2**32), radius=st.floats(0.2, 3.0))
@settings(max_examples=30, deadline=None)
def test_placement_inside_disc(seed, radius):
    pl = generate_placement(NetworkConfig(area_radius_km=radius, seed=seed))
    for pts in (pl.rrh_positions, pl.user_positions):
        assert np.all(np.hypot(pts[:, 0], pts[:, 1]) <= 1000 * radius + 1e-9)


def test_placement_is_deterministic_and_seed_sensitive():
    a = generate_placement(NetworkConfig(seed=5))
    b = generate_placement(NetworkConfig(seed=5))
    c = generate_placement(NetworkConfig(seed=6))
    assert np.array_equal(a.user_positions, b.user_positions)
    assert not np.array_equal(a.user_positions, c.user_positions)


def test_uniform_area_density():
    # the fraction of points within r/2 of the centre should be 1/4
    pl = generate_placement(NetworkConfig(area_radius_km=10.0, seed=1))
    pts = np.vstack([pl.rrh_positions, pl.user_positions])
    inner = np.mean(np.hypot(pts[:, 0], pts[:, 1]) < 5000.0)
    assert abs(inner - 0.25) < 0.02


def test_channel_entries_match_pathloss_model():
    cfg = NetworkConfig(seed=2)
    pl = generate_placement(cfg)
    ch = build_channel(pl, cfg)
    d = np.linalg.norm(pl.rrh_positions[:, None, :] - pl.user_positions[None, :, :], axis=2)
    np.testing.assert_allclose(ch.distances, d, rtol=1e-14)
    np.testing.assert_allclose(ch.entries, ch.fading * d ** (-cfg.pathloss_exponent / 2), rtol=1e-13)


def test_sparsify_keeps_exactly_short_links_and_folds_the_rest_into_noise():
    cfg = NetworkConfig(area_radius_km=1.5, seed=4)
    inst = make_instance(cfg)
    ch = inst.channel
    kept = set(zip(inst.sparse.rows.tolist(), inst.sparse.cols.tolist()))
    expect = {(n, k) for n in range(ch.shape[0]) for k in range(ch.shape[1]) if ch.distances[n, k] < 1000.0}
    assert kept == expect
    # plain-loop version of the discarded-power average
    total = 0.0
    for n in range(ch.shape[0]):
        total += sum(ch.distances[n, k] ** -3.7 for k in range(ch.shape[1]) if ch.distances[n, k] >= 1000.0)
    nhat = 1.0 + cfg.power * total / ch.shape[0]
    assert inst.sparse.effective_noise == pytest.approx(nhat, rel=1e-12)


def test_infinite_threshold_keeps_every_link():
    inst = make_instance(NetworkConfig(seed=0, distance_threshold_m=math.inf))
    assert inst.sparse.num_edges == inst.channel.shape[0] * inst.channel.shape[1]
    assert inst.sparse.effective_noise == 1.0


def test_edges_sorted_by_user_then_rrh():
    inst = make_instance(NetworkConfig(seed=9))
    keys = list(zip(inst.sparse.cols.tolist(), inst.sparse.rows.tolist()))
    assert keys == sorted(keys)


def test_empty_graph_raises():
    inst = make_instance(NetworkConfig(seed=0))
    with pytest.raises(EmptyGraphError):
        sparsify_threshold(inst.channel, 1e-3, 1.0)


def test_isolated_user_warns():
    inst = make_instance(NetworkConfig(seed=0, area_radius_km=3.0))
    with pytest.warns(UserWarning, match="no retained edge"):
        sparsify_threshold(inst.channel, 150.0, 1.0)


def test_dense_roundtrip():
    inst = make_instance(NetworkConfig(seed=1))
    dense = inst.sparse.dense()
    masked = np.where(inst.channel.distances < 1000.0, inst.channel.entries, 0)
    assert np.array_equal(dense, masked)
    assert np.array_equal(inst.sparse.csr().toarray(), dense)


def test_received_signal_uses_full_channel():
    cfg = NetworkConfig(seed=7, area_radius_km=1.5)
    inst = make_instance(cfg)
    noise = inst.y - math.sqrt(cfg.power) * inst.channel.entries @ inst.x
    # the residual is unit-variance noise, tiny next to the signal
    assert np.mean(np.abs(noise) ** 2) < 5.0


def test_sparse_from_matrix_drops_only_zeros():
    h = np.array([[1.0, 0.0], [2j, 3.0]])
    sp_ = sparse_from_matrix(h, 10.0)
    assert sp_.num_edges == 3
    assert sp_.power == pytest.approx(10.0)
    assert np.array_equal(sp_.dense(), h)
    with pytest.raises(EmptyGraphError):
        sparse_from_matrix(np.zeros((2, 2)), 10.0)


def test_make_instance_silences_isolation_warning():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        make_instance(NetworkConfig(seed=0, area_radius_km=3.0, distance_threshold_m=150.0))
