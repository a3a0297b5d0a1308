"""Message passing over time-augmented graphs.

Layers follow the initial-residual / identity-mapping scheme: the
aggregated signal is mixed with the layer-0 embedding (weight ``alpha``)
and the weight matrix is mixed with the identity (weight ``beta_l = lam / l``,
decreasing with depth). A variant form applies separate weight matrices to
the aggregated and residual terms. The disentangled realization runs two
stacks: a structural stack whose output seeds the temporal stack.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attention import AttentionParams, TransitionMatrix, attention_forward
from .augment import Realization, TimeAugmentedGraph
from .data import FeatureMatrix


@dataclass
class PropagationConfig:
    n_layers: int
    hidden_dim: int
    alpha: float = 0.1
    lam: float = 1.0
    variant: bool = False
    skip_connection: bool = False
    dropout: float = 0.0

    def __post_init__(self):
        if self.n_layers < 1:
            raise ValueError("need at least one layer")
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError("alpha must lie in [0, 1]")
        if self.lam <= 0.0:
            raise ValueError("lam must be positive")
        if not (0.0 <= self.dropout < 1.0):
            raise ValueError("dropout must lie in [0, 1)")

    def beta(self, layer: int) -> float:
        """Identity-mixing weight for 1-based ``layer``, clamped to 1."""
        return min(self.lam / layer, 1.0)


@dataclass
class PropagationParams:
    """Per-layer weights: ``weights[l]`` is W^l; ``weights2`` holds the
    second matrices of the variant form (None for the standard form)."""

    weights: list[np.ndarray]
    weights2: list[np.ndarray] | None = None

    def validate(self, n_layers: int, dim: int, variant: bool) -> None:
        if len(self.weights) != n_layers:
            raise ValueError(f"expected {n_layers} weight matrices, got {len(self.weights)}")
        stacks = [self.weights] + ([self.weights2] if variant else [])
        if variant and (self.weights2 is None or len(self.weights2) != n_layers):
            raise ValueError("variant form needs a second weight stack of the same depth")
        for stack in stacks:
            for w in stack:
                if w.shape != (dim, dim):
                    raise ValueError(f"layer weights must be ({dim}, {dim}), got {w.shape}")


def initial_embedding(features: FeatureMatrix, theta_r: np.ndarray) -> np.ndarray:
    """Layer-0 embedding: row (v, t) = theta_r x_v^t, shape (T*N, F)."""
    return features.project(theta_r)


@dataclass
class LayerCache:
    h_in: np.ndarray                   # layer input (dropout already applied)
    aggregated: np.ndarray             # transition @ h_in
    mixed: np.ndarray | None           # (1-a) aggregated + a h0 (standard form only)
    pre_activation: np.ndarray
    drop_mask: np.ndarray | None = None


def _layer_apply(
    h: np.ndarray,
    h0: np.ndarray,
    trans: TransitionMatrix,
    w,
    alpha_l: float,
    beta_l: float,
    skip: bool,
    variant: bool,
) -> tuple[np.ndarray, LayerCache]:
    g = trans.apply(h)
    if variant:
        w1, w2 = w
        pre = (1.0 - alpha_l) * ((1.0 - beta_l) * g + beta_l * (g @ w1)) \
            + alpha_l * ((1.0 - beta_l) * h0 + beta_l * (h0 @ w2))
        mixed = None
    else:
        mixed = (1.0 - alpha_l) * g + alpha_l * h0
        pre = (1.0 - beta_l) * mixed + beta_l * (mixed @ w)
    if skip:
        pre = pre + h
    return np.maximum(pre, 0.0), LayerCache(h, g, mixed, pre)


def layer_forward(
    h_l: np.ndarray,
    h_0: np.ndarray,
    a_hat: TransitionMatrix,
    w_l: np.ndarray,
    alpha_l: float,
    beta_l: float,
    skip: bool = False,
) -> np.ndarray:
    """One standard layer: ReLU(((1-a) A h + a h0)((1-b) I + b W)) [+ h]."""
    _check_shapes(h_l, h_0, w_l)
    out, _ = _layer_apply(h_l, h_0, a_hat, w_l, alpha_l, beta_l, skip, variant=False)
    return out


def layer_forward_variant(
    h_l: np.ndarray,
    h_0: np.ndarray,
    a_hat: TransitionMatrix,
    w1_l: np.ndarray,
    w2_l: np.ndarray,
    alpha_l: float,
    beta_l: float,
    skip: bool = False,
) -> np.ndarray:
    """Variant layer with separate weights for aggregated and residual terms."""
    _check_shapes(h_l, h_0, w1_l)
    _check_shapes(h_l, h_0, w2_l)
    out, _ = _layer_apply(h_l, h_0, a_hat, (w1_l, w2_l), alpha_l, beta_l, skip, variant=True)
    return out


def _check_shapes(h, h0, w):
    if h.shape != h0.shape:
        raise ValueError(f"embedding shape mismatch: {h.shape} vs {h0.shape}")
    if w.shape != (h.shape[1], h.shape[1]):
        raise ValueError(f"weight shape {w.shape} incompatible with embeddings {h.shape}")


@dataclass
class StageCache:
    trans: TransitionMatrix
    att_cache: object | None
    h0: np.ndarray
    layers: list[LayerCache] = field(default_factory=list)
    h_out: np.ndarray | None = None


def run_stage(
    h0: np.ndarray,
    trans: TransitionMatrix,
    params: PropagationParams,
    config: PropagationConfig,
    rng: np.random.Generator | None = None,
    att_cache=None,
) -> StageCache:
    """Apply the full layer stack; records caches for the backward pass."""
    params.validate(config.n_layers, config.hidden_dim, config.variant)
    stage = StageCache(trans, att_cache, h0)
    h = h0
    for l in range(1, config.n_layers + 1):
        mask = None
        if rng is not None and config.dropout > 0.0:
            mask = (rng.random(h.shape) >= config.dropout) / (1.0 - config.dropout)
            h = h * mask
        w = params.weights[l - 1] if not config.variant else (
            params.weights[l - 1], params.weights2[l - 1])
        h, cache = _layer_apply(h, h0, trans, w, config.alpha, config.beta(l),
                                config.skip_connection, config.variant)
        cache.drop_mask = mask
        stage.layers.append(cache)
    stage.h_out = h
    return stage


def stage_backward(
    stage: StageCache,
    params: PropagationParams,
    config: PropagationConfig,
    d_out: np.ndarray,
):
    """Reverse the layer stack.

    Returns (d_h0_total, per-layer weight grads, d_alpha_total). d_h0_total
    includes both the residual contributions and the layer-1 input path.
    """
    trans = stage.trans
    s = trans.structure
    d_h0 = np.zeros_like(stage.h0)
    d_alpha = np.zeros(s.n_edges)
    grads_w = [None] * config.n_layers
    grads_w2 = [None] * config.n_layers if config.variant else None

    dh = d_out
    for l in range(config.n_layers, 0, -1):
        cache = stage.layers[l - 1]
        beta_l = config.beta(l)
        alpha_l = config.alpha
        dp = dh * (cache.pre_activation > 0)
        d_in = dp.copy() if config.skip_connection else np.zeros_like(dp)

        if config.variant:
            w1 = params.weights[l - 1]
            w2 = params.weights2[l - 1]
            dg = (1.0 - alpha_l) * ((1.0 - beta_l) * dp + beta_l * (dp @ w1.T))
            grads_w[l - 1] = beta_l * (1.0 - alpha_l) * (cache.aggregated.T @ dp)
            d_h0 += alpha_l * ((1.0 - beta_l) * dp + beta_l * (dp @ w2.T))
            grads_w2[l - 1] = beta_l * alpha_l * (stage.h0.T @ dp)
        else:
            w = params.weights[l - 1]
            du = (1.0 - beta_l) * dp + beta_l * (dp @ w.T)
            dg = (1.0 - alpha_l) * du
            d_h0 += alpha_l * du
            grads_w[l - 1] = beta_l * (cache.mixed.T @ dp)

        d_alpha += np.einsum("ef,ef->e", dg[s.dst], cache.h_in[s.src])
        d_in += trans.apply_transpose(dg)
        if cache.drop_mask is not None:
            d_in = d_in * cache.drop_mask
        dh = d_in

    d_h0 += dh
    return d_h0, grads_w, grads_w2, d_alpha


def forward(
    graph: TimeAugmentedGraph,
    features: FeatureMatrix,
    attention_params: AttentionParams,
    prop_params: PropagationParams,
    config: PropagationConfig,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Full single-graph forward: transition built once, then L layers."""
    if graph.realization is Realization.DISENTANGLED:
        raise ValueError("use forward_disentangled for the disentangled realization")
    trans, _ = attention_forward(graph.part, features, attention_params)
    h0 = initial_embedding(features, attention_params.theta_r)
    stage = run_stage(h0, trans, prop_params, config, rng=rng)
    return stage.h_out


def forward_disentangled(
    graph: TimeAugmentedGraph,
    features: FeatureMatrix,
    attn_s: AttentionParams,
    attn_t: AttentionParams,
    prop_s: PropagationParams,
    prop_t: PropagationParams,
    config: PropagationConfig,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Two-stage forward: structural stack output seeds the temporal stack."""
    if graph.realization is not Realization.DISENTANGLED:
        raise ValueError("graph is not disentangled")
    trans_s, _ = attention_forward(graph.structural_part, features, attn_s)
    trans_t, _ = attention_forward(graph.temporal_part, features, attn_t)
    h0 = initial_embedding(features, attn_s.theta_r)
    structural = run_stage(h0, trans_s, prop_s, config, rng=rng)
    temporal = run_stage(structural.h_out, trans_t, prop_t, config, rng=rng)
    return temporal.h_out
