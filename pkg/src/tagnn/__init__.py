"""Dynamic-graph node classification via time-augmented spatio-temporal graphs."""

from .augment import (
    CorrespondenceReport,
    Realization,
    TimeAugmentedGraph,
    build_augmented,
    enumerate_temporal_walks,
    verify_correspondence,
)
from .attention import (
    AttentionParams,
    TransitionMatrix,
    edge_scores,
    edge_softmax_transition,
    uniform_transition,
)
from .bench import BenchReport, complexity_audit, measure_epoch_time
from .data import (
    MISSING,
    FeatureMatrix,
    LabelTensor,
    Snapshot,
    SnapshotSequence,
    SplitSpec,
    build_split,
    load_edge_stream,
    synth_dsbm,
)
from .evaluation import EvalReport, binary_auc, macro_auc
from .propagation import (
    PropagationConfig,
    PropagationParams,
    forward,
    forward_disentangled,
    initial_embedding,
    layer_forward,
    layer_forward_variant,
)
from .sparse import SparseCsr
from .training import (
    AdamState,
    ClassWeights,
    TrainConfig,
    adam_init,
    adam_step,
    class_weights,
    fit,
    gradient_check,
    load_checkpoint,
    loss,
    save_checkpoint,
)

__all__ = [
    "AdamState",
    "AttentionParams",
    "BenchReport",
    "ClassWeights",
    "CorrespondenceReport",
    "EvalReport",
    "FeatureMatrix",
    "LabelTensor",
    "MISSING",
    "PropagationConfig",
    "PropagationParams",
    "Realization",
    "Snapshot",
    "SnapshotSequence",
    "SparseCsr",
    "SplitSpec",
    "TimeAugmentedGraph",
    "TrainConfig",
    "TransitionMatrix",
    "adam_init",
    "adam_step",
    "binary_auc",
    "build_augmented",
    "build_split",
    "class_weights",
    "complexity_audit",
    "edge_scores",
    "edge_softmax_transition",
    "enumerate_temporal_walks",
    "fit",
    "forward",
    "forward_disentangled",
    "gradient_check",
    "initial_embedding",
    "layer_forward",
    "layer_forward_variant",
    "load_checkpoint",
    "load_edge_stream",
    "loss",
    "macro_auc",
    "measure_epoch_time",
    "save_checkpoint",
    "synth_dsbm",
    "uniform_transition",
    "verify_correspondence",
]

__version__ = "0.1.0"
