"""Initial node representations from categorical features.

Two routes over a node's embedded feature rows E (n_f x d_emb): a local
bilinear pooling of all feature pairs, and a global route that mixes every row
with the set mean through a probe-weighted operator before a shared projection.
Late fusion combines the two per-route projections. All functions are pure
numpy, broadcast over leading batch axes, and treat axis -2 as the feature-row
axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class InteractionConfig:
    rho: float  # probe coefficient: self-row weight in the artificial propagation
    alpha: float  # fusion weight on the global route, in [0, 1]
    n_f: int  # feature sample size per node
    d_hidden: int
    final_activation: str = "identity"  # activation on both fused projections
    variant: str = "catgcn"  # "catgcn" | "meanpool" (linear mean-of-embeddings baseline)
    deep_projection: bool = False  # optional hidden layer inside each projection

    def __post_init__(self):
        if self.rho < 0:
            raise ValueError(f"rho must be >= 0, got {self.rho}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.n_f < 1:
            raise ValueError(f"n_f must be >= 1, got {self.n_f}")
        if self.d_hidden < 1:
            raise ValueError(f"d_hidden must be >= 1, got {self.d_hidden}")
        if self.final_activation not in ("identity", "relu"):
            raise ValueError(f"unknown final_activation {self.final_activation!r}")
        if self.variant not in ("catgcn", "meanpool"):
            raise ValueError(f"unknown variant {self.variant!r}")


@dataclass
class InteractionParams:
    """Projection parameters; hidden pairs are present only with deep_projection."""

    w_conv: np.ndarray  # (d_emb, d_hidden) shared projection inside the global route
    w_g: np.ndarray  # (d_hidden, C)
    b_g: np.ndarray  # (C,)
    w_l: np.ndarray  # (d_emb, C)
    b_l: np.ndarray  # (C,)
    w_g_hidden: np.ndarray | None = None  # (d_hidden, d_hidden)
    b_g_hidden: np.ndarray | None = None
    w_l_hidden: np.ndarray | None = None  # (d_emb, d_hidden)
    b_l_hidden: np.ndarray | None = None


def embed(table: np.ndarray, ids: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Gather embedding rows for sampled feature ids and scale each by its weight."""
    return table[ids] * weights[..., None]


def local_biinteraction(e: np.ndarray) -> np.ndarray:
    """Sum of elementwise products over all distinct row pairs, in linear time.

    Equals 0.5 * ((sum_i e_i)^2 - sum_i e_i^2); a single row yields zero.
    """
    s = e.sum(axis=-2)
    sq = (e * e).sum(axis=-2)
    return 0.5 * (s * s - sq)


def artificial_propagate(e: np.ndarray, rho: float) -> np.ndarray:
    """Row i becomes (sum_j e_j + rho * e_i) / (n_f + rho): the probe-weighted mixing
    operator applied without materializing its (n_f x n_f) matrix."""
    if rho < 0:
        raise ValueError(f"rho must be >= 0, got {rho}")
    n = e.shape[-2]
    return (e.sum(axis=-2, keepdims=True) + rho * e) / (n + rho)


def global_interaction(e: np.ndarray, w_conv: np.ndarray, rho: float) -> np.ndarray:
    """Mean pooling of relu(artificial_propagate(e, rho) @ w_conv) over feature rows."""
    z = artificial_propagate(e, rho) @ w_conv
    return np.maximum(z, 0.0).mean(axis=-2)


def _activate(x: np.ndarray, kind: str) -> np.ndarray:
    return np.maximum(x, 0.0) if kind == "relu" else x


def _project(h, w, b, w_hidden, b_hidden, activation):
    if w_hidden is not None:
        h = np.maximum(h @ w_hidden + b_hidden, 0.0)
    return _activate(h @ w + b, activation)


def fuse(
    h_l: np.ndarray, h_g: np.ndarray | None, params: InteractionParams, config: InteractionConfig
) -> np.ndarray:
    """Late fusion: alpha * proj_g(h_g) + (1 - alpha) * proj_l(h_l).

    At the endpoints the dead route is skipped entirely, so alpha=0 equals the
    local projection exactly and alpha=1 the global one.
    """
    a = config.alpha
    if a > 0.0:
        hg = _project(h_g, params.w_g, params.b_g, params.w_g_hidden, params.b_g_hidden,
                      config.final_activation)
        if a == 1.0:
            return hg
    hl = _project(h_l, params.w_l, params.b_l, params.w_l_hidden, params.b_l_hidden,
                  config.final_activation)
    if a == 0.0:
        return hl
    return a * hg + (1.0 - a) * hl


def forward_all_nodes(
    table: np.ndarray, params: InteractionParams, config: InteractionConfig, sample
) -> np.ndarray:
    """Initial representations H (N x C) for every node from its feature sample."""
    e = embed(table, sample.ids, sample.weights)
    if config.variant == "meanpool":
        return _project(
            e.mean(axis=-2), params.w_l, params.b_l, params.w_l_hidden, params.b_l_hidden,
            config.final_activation,
        )
    h_l = local_biinteraction(e)
    h_g = global_interaction(e, params.w_conv, config.rho) if config.alpha > 0.0 else None
    return fuse(h_l, h_g, params, config)
