"""Bilinear feature interaction and the probe-weighted global route."""

import numpy as np
import pytest

from catgcn.interaction import (
    InteractionConfig,
    InteractionParams,
    artificial_propagate,
    embed,
    fuse,
    global_interaction,
    local_biinteraction,
)
from catgcn.oracle import biinteraction_pairwise, probe_matrix


def make_params(rng, d_emb, d_hidden, c):
    return InteractionParams(
        w_conv=rng.normal(size=(d_emb, d_hidden)),
        w_g=rng.normal(size=(d_hidden, c)),
        b_g=rng.normal(size=c),
        w_l=rng.normal(size=(d_emb, c)),
        b_l=rng.normal(size=c),
    )


def test_embed_gathers_and_scales():
    table = np.arange(12.0).reshape(4, 3)
    ids = np.array([[0, 2], [3, 3]])
    weights = np.array([[1.0, 2.0], [0.5, 1.0]])
    e = embed(table, ids, weights)
    assert np.array_equal(e[0, 1], table[2] * 2.0)
    assert np.array_equal(e[1, 0], table[3] * 0.5)


def test_biinteraction_frozen_pair():
    e = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.allclose(local_biinteraction(e), [3.0, 8.0])


def test_biinteraction_single_row_is_zero():
    e = np.array([[5.0, -2.0, 7.0]])
    assert np.array_equal(local_biinteraction(e), np.zeros(3))


def test_biinteraction_matches_pairwise_oracle():
    rng = np.random.default_rng(17)
    for _ in range(50):
        n = int(rng.integers(1, 20))
        d = int(rng.integers(1, 30))
        e = rng.normal(size=(n, d))
        fast = local_biinteraction(e)
        ref = biinteraction_pairwise(e)
        scale = max(np.abs(fast).max(), np.abs(ref).max(), 1e-300)
        assert np.abs(fast - ref).max() / scale < 1e-12


def test_biinteraction_batched():
    rng = np.random.default_rng(3)
    e = rng.normal(size=(6, 4, 5))
    batched = local_biinteraction(e)
    for i in range(6):
        assert np.array_equal(batched[i], local_biinteraction(e[i]))


def test_artificial_propagate_frozen():
    # rho=2, rows (1,0) and (3,2): row i = (col sums + 2 e_i) / 4
    e = np.array([[1.0, 0.0], [3.0, 2.0]])
    out = artificial_propagate(e, 2.0)
    assert np.allclose(out, [[1.5, 0.5], [2.5, 1.5]])


def test_artificial_propagate_rho_zero_is_column_mean():
    rng = np.random.default_rng(0)
    e = rng.normal(size=(7, 4))
    out = artificial_propagate(e, 0.0)
    assert np.abs(out - e.mean(axis=0)).max() < 1e-15


def test_artificial_propagate_matches_dense_operator():
    rng = np.random.default_rng(23)
    for _ in range(30):
        n = int(rng.integers(1, 15))
        d = int(rng.integers(1, 10))
        rho = float(rng.uniform(0.0, 30.0))
        e = rng.normal(size=(n, d))
        assert np.abs(artificial_propagate(e, rho) - probe_matrix(n, rho) @ e).max() < 1e-12


def test_artificial_propagate_rejects_negative_rho():
    with pytest.raises(ValueError):
        artificial_propagate(np.ones((2, 2)), -0.5)


def test_global_interaction_is_mean_of_relu():
    rng = np.random.default_rng(5)
    e = rng.normal(size=(6, 8))
    w = rng.normal(size=(8, 4))
    ref = np.maximum(probe_matrix(6, 1.5) @ e @ w, 0.0).mean(axis=0)
    assert np.abs(global_interaction(e, w, 1.5) - ref).max() < 1e-12


def test_fuse_alpha_endpoints_skip_dead_route():
    rng = np.random.default_rng(7)
    params = make_params(rng, 8, 6, 3)
    h_l = rng.normal(size=(5, 8))
    h_g = rng.normal(size=(5, 6))
    cfg0 = InteractionConfig(rho=1.0, alpha=0.0, n_f=4, d_hidden=6)
    cfg1 = InteractionConfig(rho=1.0, alpha=1.0, n_f=4, d_hidden=6)
    # alpha=0 must not read h_g at all; alpha=1 must not read h_l
    assert np.array_equal(fuse(h_l, None, params, cfg0), h_l @ params.w_l + params.b_l)
    assert np.array_equal(fuse(None, h_g, params, cfg1), h_g @ params.w_g + params.b_g)


def test_fuse_interior_is_convex_combination():
    rng = np.random.default_rng(9)
    params = make_params(rng, 8, 6, 3)
    h_l = rng.normal(size=(5, 8))
    h_g = rng.normal(size=(5, 6))
    cfg = InteractionConfig(rho=1.0, alpha=0.3, n_f=4, d_hidden=6)
    expected = 0.3 * (h_g @ params.w_g + params.b_g) + 0.7 * (h_l @ params.w_l + params.b_l)
    assert np.abs(fuse(h_l, h_g, params, cfg) - expected).max() < 1e-14


def test_fuse_relu_final_activation():
    rng = np.random.default_rng(13)
    params = make_params(rng, 4, 4, 2)
    h_l = rng.normal(size=(3, 4))
    cfg = InteractionConfig(rho=0.0, alpha=0.0, n_f=4, d_hidden=4, final_activation="relu")
    out = fuse(h_l, None, params, cfg)
    assert np.array_equal(out, np.maximum(h_l @ params.w_l + params.b_l, 0.0))


def test_config_validation():
    with pytest.raises(ValueError):
        InteractionConfig(rho=-1.0, alpha=0.5, n_f=4, d_hidden=4)
    with pytest.raises(ValueError):
        InteractionConfig(rho=0.0, alpha=1.5, n_f=4, d_hidden=4)
    with pytest.raises(ValueError):
        InteractionConfig(rho=0.0, alpha=0.5, n_f=0, d_hidden=4)
    with pytest.raises(ValueError):
        InteractionConfig(rho=0.0, alpha=0.5, n_f=4, d_hidden=4, final_activation="tanh")
    with pytest.raises(ValueError):
        InteractionConfig(rho=0.0, alpha=0.5, n_f=4, d_hidden=4, variant="gcn")
