"""End-to-end network: projection, transition, propagation stacks, decoder.

Parameters live in a flat name -> float64 array dict so the optimizer and
the finite-difference checker can treat them uniformly; the update step
mutates arrays in place. Gradients are computed by hand-rolled reverse-mode
differentiation through the decoder, the layer stacks and the edge-softmax
attention (including the tied initial-projection path).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import (
    AttentionParams,
    attention_backward,
    attention_forward,
    uniform_transition,
)
from .augment import GraphPart, Realization, build_augmented
from .data import FeatureMatrix, SnapshotSequence
from .propagation import (
    PropagationConfig,
    PropagationParams,
    StageCache,
    initial_embedding,
    run_stage,
    stage_backward,
)

LEAKY_SLOPE = 0.2


@dataclass
class ModelSpec:
    """Static architecture description (sizes and switches)."""

    realization: Realization
    n_classes: int
    feature_dim: int
    prop: PropagationConfig
    adaptive_transition: bool = True
    time_augmentation: bool = True
    tie_attention_projection: bool = True
    decoder_dropout: float = 0.3

    @property
    def two_stage(self) -> bool:
        return self.time_augmentation and self.realization is Realization.DISENTANGLED


@dataclass
class Pipeline:
    """Graph parts the model propagates over (structure fixed across epochs)."""

    spec: ModelSpec
    part: GraphPart | None = None
    part_s: GraphPart | None = None
    part_t: GraphPart | None = None

    @property
    def parts(self) -> list[GraphPart]:
        return [self.part_s, self.part_t] if self.spec.two_stage else [self.part]


def assemble_pipeline(seq: SnapshotSequence, spec: ModelSpec) -> Pipeline:
    if not spec.time_augmentation:
        # static ablation: per-snapshot diagonal blocks only
        static = build_augmented(seq, Realization.DISENTANGLED).structural_part
        return Pipeline(spec, part=static)
    graph = build_augmented(seq, spec.realization)
    if spec.two_stage:
        return Pipeline(spec, part_s=graph.structural_part, part_t=graph.temporal_part)
    return Pipeline(spec, part=graph.part)


def _glorot(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    fan_out, fan_in = (shape[0], shape[1]) if len(shape) == 2 else (shape[0], 1)
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _attention_names(prefix: str) -> list[str]:
    return [f"{prefix}.theta_l", f"{prefix}.theta_r", f"{prefix}.a"]


def init_params(spec: ModelSpec, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Fresh parameter dict; insertion (and rng draw) order is fixed."""
    f, d, c = spec.prop.hidden_dim, spec.feature_dim, spec.n_classes
    params: dict[str, np.ndarray] = {}

    def add(name: str, shape: tuple[int, ...]) -> None:
        params[name] = _glorot(rng, shape)

    att_prefixes = []
    if spec.adaptive_transition:
        att_prefixes = ["att_s", "att_t"] if spec.two_stage else ["att"]
        for prefix in att_prefixes:
            add(f"{prefix}.theta_l", (f, d))
            add(f"{prefix}.theta_r", (f, d))
            add(f"{prefix}.a", (f,))
    if not spec.adaptive_transition or not spec.tie_attention_projection:
        add("emb.theta_r", (f, d))

    stacks = ["prop_s", "prop_t"] if spec.two_stage else ["prop"]
    for stack in stacks:
        for l in range(spec.prop.n_layers):
            if spec.prop.variant:
                add(f"{stack}.w1.{l}", (f, f))
                add(f"{stack}.w2.{l}", (f, f))
            else:
                add(f"{stack}.w.{l}", (f, f))

    add("dec.w1", (f, f))
    params["dec.b1"] = np.zeros(f)
    add("dec.w2", (c, f))
    params["dec.b2"] = np.zeros(c)
    return params


def is_bias(name: str) -> bool:
    return name.rsplit(".", 1)[-1].startswith("b")


def zero_grads(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.items()}


def projection_name(spec: ModelSpec) -> str:
    """Which parameter provides the layer-0 embedding projection."""
    if spec.adaptive_transition and spec.tie_attention_projection:
        return "att_s.theta_r" if spec.two_stage else "att.theta_r"
    return "emb.theta_r"


def _attention_view(params: dict[str, np.ndarray], prefix: str) -> AttentionParams:
    return AttentionParams(
        params[f"{prefix}.theta_l"], params[f"{prefix}.theta_r"], params[f"{prefix}.a"],
        leaky_slope=LEAKY_SLOPE,
    )


def _prop_view(params: dict[str, np.ndarray], stack: str, cfg: PropagationConfig) -> PropagationParams:
    if cfg.variant:
        return PropagationParams(
            [params[f"{stack}.w1.{l}"] for l in range(cfg.n_layers)],
            [params[f"{stack}.w2.{l}"] for l in range(cfg.n_layers)],
        )
    return PropagationParams([params[f"{stack}.w.{l}"] for l in range(cfg.n_layers)])


@dataclass
class DecoderCache:
    h_rows: np.ndarray
    pre_hidden: np.ndarray
    hidden: np.ndarray          # post-ReLU, post-dropout
    drop_mask: np.ndarray | None


def decoder_forward(
    h_rows: np.ndarray,
    params: dict[str, np.ndarray],
    rng: np.random.Generator | None = None,
    dropout: float = 0.0,
) -> tuple[np.ndarray, DecoderCache]:
    """Two-layer MLP head: Linear -> ReLU -> dropout -> Linear."""
    q = h_rows @ params["dec.w1"].T + params["dec.b1"]
    r = np.maximum(q, 0.0)
    mask = None
    if rng is not None and dropout > 0.0:
        mask = (rng.random(r.shape) >= dropout) / (1.0 - dropout)
        r = r * mask
    logits = r @ params["dec.w2"].T + params["dec.b2"]
    return logits, DecoderCache(h_rows, q, r, mask)


def decoder_backward(
    cache: DecoderCache, d_logits: np.ndarray, params: dict[str, np.ndarray]
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    grads = {
        "dec.w2": d_logits.T @ cache.hidden,
        "dec.b2": d_logits.sum(axis=0),
    }
    dr = d_logits @ params["dec.w2"]
    if cache.drop_mask is not None:
        dr = dr * cache.drop_mask
    dq = dr * (cache.pre_hidden > 0)
    grads["dec.w1"] = dq.T @ cache.h_rows
    grads["dec.b1"] = dq.sum(axis=0)
    d_h_rows = dq @ params["dec.w1"]
    return d_h_rows, grads


@dataclass
class ForwardCache:
    stages: list[StageCache]
    rows: np.ndarray
    logits: np.ndarray
    dec: DecoderCache
    h_final: np.ndarray


def forward_pass(
    pipeline: Pipeline,
    features: FeatureMatrix,
    params: dict[str, np.ndarray],
    rows: np.ndarray,
    rng: np.random.Generator | None = None,
) -> ForwardCache:
    """Recorded forward producing logits on ``rows``.

    Pass ``rng`` to enable dropout (training mode); without it the pass is
    deterministic evaluation.
    """
    spec = pipeline.spec
    cfg = spec.prop
    h0 = initial_embedding(features, params[projection_name(spec)])

    stages: list[StageCache] = []
    if spec.two_stage:
        plan = [("att_s", "prop_s", pipeline.part_s, h0), ("att_t", "prop_t", pipeline.part_t, None)]
    else:
        plan = [("att", "prop", pipeline.part, h0)]

    h_in = h0
    for att_name, stack_name, part, stage_h0 in plan:
        seed_h0 = stage_h0 if stage_h0 is not None else h_in
        if spec.adaptive_transition:
            trans, att_cache = attention_forward(part, features, _attention_view(params, att_name))
        else:
            trans, att_cache = uniform_transition(part), None
        stage = run_stage(seed_h0, trans, _prop_view(params, stack_name, cfg), cfg,
                          rng=rng, att_cache=att_cache)
        stages.append(stage)
        h_in = stage.h_out

    h_final = stages[-1].h_out
    logits, dec = decoder_forward(h_final[rows], params, rng=rng, dropout=spec.decoder_dropout)
    return ForwardCache(stages, rows, logits, dec, h_final)


def backward_pass(
    pipeline: Pipeline,
    features: FeatureMatrix,
    params: dict[str, np.ndarray],
    cache: ForwardCache,
    d_logits: np.ndarray,
) -> dict[str, np.ndarray]:
    """Exact gradients of the recorded forward for every parameter."""
    spec = pipeline.spec
    cfg = spec.prop
    grads = zero_grads(params)

    d_rows, dec_grads = decoder_backward(cache.dec, d_logits, params)
    grads.update(dec_grads)

    dh = np.zeros_like(cache.h_final)
    dh[cache.rows] = d_rows

    if spec.two_stage:
        plan = [("att_t", "prop_t"), ("att_s", "prop_s")]
        stage_order = [cache.stages[1], cache.stages[0]]
    else:
        plan = [("att", "prop")]
        stage_order = [cache.stages[0]]

    for (att_name, stack_name), stage in zip(plan, stage_order):
        d_h0, gw, gw2, d_alpha = stage_backward(stage, _prop_view(params, stack_name, cfg), cfg, dh)
        for l in range(cfg.n_layers):
            if cfg.variant:
                grads[f"{stack_name}.w1.{l}"] = gw[l]
                grads[f"{stack_name}.w2.{l}"] = gw2[l]
            else:
                grads[f"{stack_name}.w.{l}"] = gw[l]
        if spec.adaptive_transition:
            att = attention_backward(stage.att_cache, d_alpha)
            grads[f"{att_name}.theta_l"] += att["theta_l"]
            grads[f"{att_name}.theta_r"] += att["theta_r"]
            grads[f"{att_name}.a"] += att["att_vec"]
        dh = d_h0

    # dh now carries the gradient w.r.t. the layer-0 projection output
    grads[projection_name(spec)] += features.project_transpose(dh)
    return grads


def predict_proba(
    pipeline: Pipeline,
    features: FeatureMatrix,
    params: dict[str, np.ndarray],
    rows: np.ndarray,
) -> np.ndarray:
    """Evaluation-mode class probabilities for the requested node-times."""
    cache = forward_pass(pipeline, features, params, rows, rng=None)
    logits = cache.logits
    shifted = logits - logits.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=1, keepdims=True)
