"""Optimization: weighted cross-entropy, Adam, the fit loop, checkpoints,
and a finite-difference oracle for the hand-rolled gradients."""
from __future__ import annotations

import base64
import copy
import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .augment import Realization
from .data import LabelTensor, SnapshotSequence, SplitSpec, build_split, synth_dsbm
from .evaluation import macro_auc
from .model import (
    ForwardCache,
    ModelSpec,
    Pipeline,
    assemble_pipeline,
    backward_pass,
    decoder_forward,
    forward_pass,
    init_params,
    is_bias,
    predict_proba,
)
from .propagation import PropagationConfig


@dataclass
class TrainConfig:
    realization: Realization = Realization.SELF_EVOLUTION
    n_layers: int = 4
    hidden_dim: int = 128
    alpha: float = 0.1
    lam: float = 1.0
    variant: bool = False
    skip_connection: bool = False
    dropout: float = 0.1
    decoder_dropout: float = 0.3
    lr: float = 0.01
    weight_decay: float = 0.0005
    epochs: int = 200
    seed: int = 0
    time_augmentation: bool = True
    adaptive_transition: bool = True
    tie_attention_projection: bool = True
    plateau_factor: float = 0.5
    plateau_patience: int = 10
    min_lr: float = 1e-4

    def __post_init__(self):
        if isinstance(self.realization, str):
            self.realization = Realization(self.realization)
        for name in ("lr", "epochs", "hidden_dim", "n_layers"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    def model_spec(self, n_classes: int, feature_dim: int) -> ModelSpec:
        prop = PropagationConfig(
            n_layers=self.n_layers,
            hidden_dim=self.hidden_dim,
            alpha=self.alpha,
            lam=self.lam,
            variant=self.variant,
            skip_connection=self.skip_connection,
            dropout=self.dropout,
        )
        return ModelSpec(
            realization=self.realization,
            n_classes=n_classes,
            feature_dim=feature_dim,
            prop=prop,
            adaptive_transition=self.adaptive_transition,
            time_augmentation=self.time_augmentation,
            tie_attention_projection=self.tie_attention_projection,
            decoder_dropout=self.decoder_dropout,
        )


def config_to_dict(config: TrainConfig) -> dict:
    out = {}
    for name in TrainConfig.__dataclass_fields__:
        value = getattr(config, name)
        out[name] = value.value if isinstance(value, Realization) else value
    return out


def config_from_dict(data: dict) -> TrainConfig:
    known = set(TrainConfig.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return TrainConfig(**data)


@dataclass
class ClassWeights:
    w: np.ndarray  # (C,), positive

    def for_labels(self, y: np.ndarray) -> np.ndarray:
        return self.w[y]


def class_weights(labels: LabelTensor, train_set: np.ndarray) -> ClassWeights:
    """Inverse-frequency weights from the training partition only.

    w_c = n_train / (C * n_c); classes absent from the train partition get
    the maximum weight seen elsewhere (with a warning).
    """
    if train_set.size == 0:
        raise ValueError("empty train set")
    y = labels.flat()[train_set]
    c = labels.n_classes
    counts = np.bincount(y, minlength=c).astype(float)
    w = np.zeros(c)
    present = counts > 0
    w[present] = y.size / (c * counts[present])
    if not present.all():
        missing = np.nonzero(~present)[0]
        warnings.warn(f"classes {missing.tolist()} absent from train partition; using max weight")
        w[~present] = w[present].max() if present.any() else 1.0
    return ClassWeights(w)


def weighted_cross_entropy(
    logits: np.ndarray, y: np.ndarray, example_weights: np.ndarray
) -> tuple[float, np.ndarray]:
    """Summed weighted CE and its gradient w.r.t. the logits (log-sum-exp
    stabilized)."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    denom = ex.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(denom)
    rows = np.arange(y.shape[0])
    total = float(-(example_weights * log_probs[rows, y]).sum())
    d_logits = ex / denom
    d_logits[rows, y] -= 1.0
    d_logits *= example_weights[:, None]
    return total, d_logits


def _check_finite_logits(logits: np.ndarray, params: dict[str, np.ndarray]) -> None:
    if np.isfinite(logits).all():
        return
    for name, value in params.items():
        if not np.isfinite(value).all():
            raise FloatingPointError(f"non-finite logits; parameter {name!r} is non-finite")
    raise FloatingPointError("non-finite logits with finite parameters")


def loss(
    h_final: np.ndarray,
    decoder: dict[str, np.ndarray],
    labels: LabelTensor,
    train_set: np.ndarray,
    weights: ClassWeights,
) -> float:
    """Decode the given embeddings (evaluation mode) and sum the weighted CE
    over the train node-times."""
    logits, _ = decoder_forward(h_final[train_set], decoder)
    _check_finite_logits(logits, decoder)
    y = labels.flat()[train_set]
    value, _ = weighted_cross_entropy(logits, y, weights.for_labels(y))
    return value


def loss_and_gradients(
    pipeline: Pipeline,
    seq: SnapshotSequence,
    params: dict[str, np.ndarray],
    train_rows: np.ndarray,
    weights: ClassWeights,
    rng: np.random.Generator | None = None,
) -> tuple[float, dict[str, np.ndarray], ForwardCache]:
    """One recorded forward plus full reverse-mode gradients."""
    cache = forward_pass(pipeline, seq.features, params, train_rows, rng=rng)
    _check_finite_logits(cache.logits, params)
    y = seq.labels.flat()[train_rows]
    value, d_logits = weighted_cross_entropy(cache.logits, y, weights.for_labels(y))
    grads = backward_pass(pipeline, seq.features, params, cache, d_logits)
    return value, grads, cache


@dataclass
class AdamState:
    lr: float
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_init(params: dict[str, np.ndarray], lr: float, weight_decay: float = 0.0) -> AdamState:
    state = AdamState(lr=lr, weight_decay=weight_decay)
    state.m = {k: np.zeros_like(p) for k, p in params.items()}
    state.v = {k: np.zeros_like(p) for k, p in params.items()}
    return state


def adam_step(
    state: AdamState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]
) -> dict[str, np.ndarray]:
    """Classic Adam with bias correction; decay enters as an L2 gradient term
    on non-bias parameters. Updates arrays in place."""
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads[name]
        if state.weight_decay and not is_bias(name):
            g = g + state.weight_decay * p
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_macro_auc: float
    lr: float


@dataclass
class FitResult:
    best_params: dict[str, np.ndarray]
    history: list[EpochRecord]
    best_epoch: int
    best_val_auc: float
    config: TrainConfig
    pipeline: Pipeline


def fit(seq: SnapshotSequence, split: SplitSpec, config: TrainConfig) -> FitResult:
    """Full-batch training with best-validation checkpointing.

    One optimizer step per epoch; validation macro-AUC drives a
    reduce-on-plateau schedule. Bit-identical given (data, config, seed).
    """
    rng = np.random.default_rng(config.seed)
    train_rows, val_rows, _ = build_split(seq, split)
    spec = config.model_spec(seq.n_classes, seq.features.dim)
    pipeline = assemble_pipeline(seq, spec)
    params = init_params(spec, rng)
    weights = class_weights(seq.labels, train_rows)
    state = adam_init(params, config.lr, config.weight_decay)
    labels_flat = seq.labels.flat()

    history: list[EpochRecord] = []
    best_params = {k: p.copy() for k, p in params.items()}
    best_auc = -np.inf
    best_epoch = 0
    stale = 0
    for epoch in range(1, config.epochs + 1):
        try:
            value, grads, _ = loss_and_gradients(pipeline, seq, params, train_rows, weights, rng=rng)
        except FloatingPointError as exc:
            raise RuntimeError(f"training diverged at epoch {epoch}: {exc}") from exc
        if not np.isfinite(value):
            raise RuntimeError(f"training diverged at epoch {epoch}: loss is not finite")
        adam_step(state, params, grads)

        probs = predict_proba(pipeline, seq.features, params, val_rows)
        report = macro_auc(probs, labels_flat[val_rows])
        val_auc = report.macro_auc
        history.append(EpochRecord(epoch, value, val_auc, state.lr))

        if val_auc > best_auc:
            best_auc = val_auc
            best_epoch = epoch
            best_params = {k: p.copy() for k, p in params.items()}
            stale = 0
        else:
            stale += 1
            if stale > config.plateau_patience:
                state.lr = max(state.lr * config.plateau_factor, config.min_lr)
                stale = 0
    return FitResult(best_params, history, best_epoch, best_auc, config, pipeline)


def write_history_csv(path, history: list[EpochRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,val_macro_auc,lr\n")
        for rec in history:
            fh.write(f"{rec.epoch},{rec.train_loss!r},{rec.val_macro_auc!r},{rec.lr!r}\n")


CHECKPOINT_FORMAT = "tagnn-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, config: TrainConfig, params: dict[str, np.ndarray]) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": config_to_dict(config),
        "params": {
            name: {
                "shape": list(arr.shape),
                "dtype": "float64",
                "data": base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode(),
            }
            for name, arr in params.items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_checkpoint(path) -> tuple[TrainConfig, dict[str, np.ndarray]]:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a checkpoint file")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
    config = config_from_dict(payload["config"])
    params = {}
    for name, entry in payload["params"].items():
        arr = np.frombuffer(base64.b64decode(entry["data"]), dtype="<f8")
        params[name] = arr.reshape(entry["shape"]).copy()
    return config, params


def _preactivation_margin(cache: ForwardCache) -> float:
    """Smallest |pre-activation| across ReLU/LeakyReLU sites (kink distance)."""
    margins = [np.abs(cache.dec.pre_hidden).min()]
    for stage in cache.stages:
        for layer in stage.layers:
            margins.append(np.abs(layer.pre_activation).min())
        if stage.att_cache is not None:
            margins.append(np.abs(stage.att_cache.z).min())
    return float(min(margins))


@dataclass
class GradientCheckResult:
    max_rel_error: float
    per_param: dict[str, float]


def gradient_check(
    config: TrainConfig,
    seed: int = 0,
    n_nodes: int = 10,
    n_steps: int = 3,
    h: float = 1e-5,
    max_entries: int = 200,
    kink_margin: float = 1e-3,
    details: bool = False,
):
    """Compare hand-rolled gradients against central finite differences.

    Dropout is disabled; parameter draws are retried until every
    pre-activation sits at least ``kink_margin`` from a ReLU kink so the
    difference quotient stays on one smooth piece. Large parameters are
    subsampled to ``max_entries`` random entries.
    """
    config = replace(config, dropout=0.0, decoder_dropout=0.0)
    seq = synth_dsbm(n_nodes, n_steps, 3, p_in=0.7, p_out=0.3, drift=0.2, seed=seed)
    train_steps = max(n_steps - 1, 1)
    train_rows = np.arange(train_steps * n_nodes, dtype=np.int64)
    weights = class_weights(seq.labels, train_rows)
    spec = config.model_spec(seq.n_classes, seq.features.dim)
    pipeline = assemble_pipeline(seq, spec)

    # the check point need not be a realistic initialization: wider draws
    # push pre-activations clear of the ReLU kinks
    gain = 4.0
    params = None
    for attempt in range(64):
        candidate = init_params(spec, np.random.default_rng(seed + 7919 * attempt))
        candidate = {k: v * gain for k, v in candidate.items()}
        cache = forward_pass(pipeline, seq.features, candidate, train_rows)
        if _preactivation_margin(cache) >= kink_margin:
            params = candidate
            break
    if params is None:
        raise RuntimeError("could not find a parameter draw clear of activation kinks")

    _, grads, _ = loss_and_gradients(pipeline, seq, params, train_rows, weights)
    y = seq.labels.flat()[train_rows]
    w_rows = weights.for_labels(y)

    def loss_at() -> float:
        cache = forward_pass(pipeline, seq.features, params, train_rows)
        v, _ = weighted_cross_entropy(cache.logits, y, w_rows)
        return v

    entry_rng = np.random.default_rng(seed + 104729)
    per_param: dict[str, float] = {}
    worst = 0.0
    for name, arr in params.items():
        flat = arr.reshape(-1)
        if flat.size > max_entries:
            idx = entry_rng.choice(flat.size, size=max_entries, replace=False)
        else:
            idx = np.arange(flat.size)
        g_flat = grads[name].reshape(-1)
        param_worst = 0.0
        for i in idx:
            original = flat[i]
            flat[i] = original + h
            up = loss_at()
            flat[i] = original - h
            down = loss_at()
            flat[i] = original
            fd = (up - down) / (2.0 * h)
            g = g_flat[i]
            err = abs(g - fd) / max(1.0, abs(g), abs(fd))
            param_worst = max(param_worst, err)
        per_param[name] = param_worst
        worst = max(worst, param_worst)
    if details:
        return GradientCheckResult(worst, per_param)
    return worst
