"""Data model for discrete-time dynamic graphs.

A dynamic graph is a sequence of T undirected snapshots over a shared node
set of size N, with per-node-time features and (possibly missing) class
labels. Node-time (v, t) pairs are flattened as ``t * N + v`` throughout.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .sparse import SparseCsr, add_self_loops, csr_from_edges

MISSING = -1

ONE_HOT = "one_hot"
EXPLICIT = "explicit"


@dataclass(frozen=True)
class FeatureMatrix:
    """Per-node-time feature rows.

    ``one_hot`` mode encodes node identity (d = N, row (v, t) is e_v for all
    t) without materializing the T*N x N dense matrix. ``explicit`` mode
    stores a (T*N, d) array, row index t*N + v.
    """

    n_nodes: int
    n_steps: int
    dim: int
    mode: str = ONE_HOT
    data: np.ndarray | None = None

    def __post_init__(self):
        if self.mode == ONE_HOT:
            if self.dim != self.n_nodes or self.data is not None:
                raise ValueError("one-hot features require dim == n_nodes and no data")
        elif self.mode == EXPLICIT:
            if self.data is None or self.data.shape != (self.n_steps * self.n_nodes, self.dim):
                raise ValueError("explicit features require a (T*N, d) data array")
        else:
            raise ValueError(f"unknown feature mode {self.mode!r}")

    def row(self, v: int, t: int) -> np.ndarray:
        if self.mode == ONE_HOT:
            x = np.zeros(self.dim)
            x[v] = 1.0
            return x
        return self.data[t * self.n_nodes + v]

    def project(self, theta: np.ndarray) -> np.ndarray:
        """All-rows projection x -> theta @ x, returned as a (T*N, F) matrix.

        One-hot rows reduce to a column gather of theta, tiled over time.
        """
        if theta.shape[1] != self.dim:
            raise ValueError(f"projection expects dim {self.dim}, got {theta.shape[1]}")
        if self.mode == ONE_HOT:
            return np.tile(theta.T, (self.n_steps, 1))
        return self.data @ theta.T

    def project_transpose(self, grad_rows: np.ndarray) -> np.ndarray:
        """Adjoint of :meth:`project`: maps a (T*N, F) row gradient to d/d theta."""
        if self.mode == ONE_HOT:
            per_node = grad_rows.reshape(self.n_steps, self.n_nodes, -1).sum(axis=0)
            return per_node.T
        return grad_rows.T @ self.data


@dataclass(frozen=True)
class LabelTensor:
    """Class index per node-time, ``MISSING`` where unlabeled."""

    y: np.ndarray  # (T, N) int64
    n_classes: int

    def __post_init__(self):
        present = self.y[self.y != MISSING]
        if present.size and (present.min() < 0 or present.max() >= self.n_classes):
            raise ValueError("label outside [0, n_classes)")

    def flat(self) -> np.ndarray:
        """Labels as a (T*N,) vector indexed by node-time t*N + v."""
        return self.y.reshape(-1)


@dataclass(frozen=True)
class Snapshot:
    adjacency: SparseCsr
    adjacency_with_loops: SparseCsr

    @property
    def n_edges(self) -> int:
        """Undirected edge count (each edge stored as two directed entries)."""
        return self.adjacency.nnz // 2


@dataclass(frozen=True)
class SnapshotSequence:
    n_nodes: int
    n_steps: int
    snapshots: list[Snapshot]
    features: FeatureMatrix
    labels: LabelTensor
    n_classes: int
    node_ids: list | None = field(default=None)     # dense id -> original id
    class_values: list | None = field(default=None)  # class index -> original label

    def __post_init__(self):
        if len(self.snapshots) != self.n_steps:
            raise ValueError("snapshot count must equal n_steps")
        for snap in self.snapshots:
            if snap.adjacency.n_rows != self.n_nodes:
                raise ValueError("all snapshots must share the node set")


@dataclass(frozen=True)
class SplitSpec:
    """Contiguous-in-time split, train snapshots first."""

    n_train: int
    n_val: int
    n_test: int

    def validate(self, n_steps: int) -> None:
        if min(self.n_train, self.n_val, self.n_test) < 1:
            raise ValueError("each split partition needs at least one snapshot")
        if self.n_train + self.n_val + self.n_test != n_steps:
            raise ValueError(
                f"split {self.n_train}/{self.n_val}/{self.n_test} does not sum to T={n_steps}"
            )


def make_snapshot(n: int, u: np.ndarray, v: np.ndarray) -> Snapshot:
    adj = csr_from_edges(n, u, v)
    return Snapshot(adj, add_self_loops(adj))


def sequence_from_edge_lists(
    n_nodes: int,
    edge_lists: list[tuple[np.ndarray, np.ndarray]],
    labels: LabelTensor | None = None,
    n_classes: int = 2,
    features: FeatureMatrix | None = None,
) -> SnapshotSequence:
    """Assemble a sequence from per-step undirected edge lists (test helper)."""
    T = len(edge_lists)
    snaps = [make_snapshot(n_nodes, u, v) for u, v in edge_lists]
    if labels is None:
        labels = LabelTensor(np.full((T, n_nodes), MISSING, dtype=np.int64), n_classes)
    if features is None:
        features = FeatureMatrix(n_nodes, T, n_nodes)
    return SnapshotSequence(n_nodes, T, snaps, features, labels, labels.n_classes)


def _parse_rows(path, n_fields: int, kind: str):
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != n_fields:
                raise ValueError(
                    f"{kind} file {path}, line {lineno}: expected {n_fields} fields, got {len(parts)}"
                )
            rows.append((lineno, parts))
    return rows


def _to_timestamp(token: str, path, lineno: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise ValueError(f"{path}, line {lineno}: bad timestamp {token!r}") from None


def _dense_id_order(tokens: set[str]) -> list[str]:
    """Deterministic id order: numeric when every id parses as an int."""
    try:
        return sorted(tokens, key=int)
    except ValueError:
        return sorted(tokens)


def load_edge_stream(edges_path, labels_path, n_steps: int) -> SnapshotSequence:
    """Slice a timestamped edge stream into ``n_steps`` equal-width snapshots.

    Edge file rows are ``u v timestamp``; label rows are ``v timestamp class``.
    Intervals are half-open in raw timestamp space with the last one closed.
    Node ids are remapped to a dense [0, N) range (mapping kept on the
    returned sequence); labels take the last value per node-time, missing
    elsewhere. Features default to one-hot node ids.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    edge_rows = _parse_rows(edges_path, 3, "edge")
    label_rows = _parse_rows(labels_path, 3, "label")
    if not edge_rows:
        raise ValueError(f"edge file {edges_path} contains no edges")

    ids = {p[0] for _, p in edge_rows} | {p[1] for _, p in edge_rows}
    ids |= {p[0] for _, p in label_rows}
    node_ids = _dense_id_order(ids)
    id_map = {tok: i for i, tok in enumerate(node_ids)}
    n = len(node_ids)

    ts = np.array([_to_timestamp(p[2], edges_path, ln) for ln, p in edge_rows])
    t_min, t_max = float(ts.min()), float(ts.max())
    span = t_max - t_min

    def interval_of(stamp: float) -> int:
        if span == 0.0:
            return 0
        k = int(np.floor((stamp - t_min) / span * n_steps))
        return min(max(k, 0), n_steps - 1)

    per_step_u: list[list[int]] = [[] for _ in range(n_steps)]
    per_step_v: list[list[int]] = [[] for _ in range(n_steps)]
    for (lineno, parts), stamp in zip(edge_rows, ts):
        u, v = id_map[parts[0]], id_map[parts[1]]
        if u == v:
            warnings.warn(f"{edges_path}, line {lineno}: self edge ignored")
            continue
        k = interval_of(float(stamp))
        per_step_u[k].append(u)
        per_step_v[k].append(v)

    nonempty = sum(1 for us in per_step_u if us)
    if nonempty < n_steps:
        warnings.warn(
            f"only {nonempty} of {n_steps} snapshots contain edges; empty snapshots kept"
        )

    class_tokens = _dense_id_order({p[2] for _, p in label_rows}) if label_rows else []
    class_map = {tok: i for i, tok in enumerate(class_tokens)}
    n_classes = max(len(class_tokens), 1)

    y = np.full((n_steps, n), MISSING, dtype=np.int64)
    for lineno, parts in label_rows:
        stamp = _to_timestamp(parts[1], labels_path, lineno)
        v = id_map[parts[0]]
        y[interval_of(stamp), v] = class_map[parts[2]]

    snaps = [
        make_snapshot(n, np.array(us, dtype=np.int64), np.array(vs, dtype=np.int64))
        for us, vs in zip(per_step_u, per_step_v)
    ]
    return SnapshotSequence(
        n_nodes=n,
        n_steps=n_steps,
        snapshots=snaps,
        features=FeatureMatrix(n, n_steps, n),
        labels=LabelTensor(y, n_classes),
        n_classes=n_classes,
        node_ids=node_ids,
        class_values=class_tokens,
    )


def build_split(
    seq: SnapshotSequence, spec: SplitSpec
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Labeled node-time indices (t*N + v) per partition, train snapshots first."""
    spec.validate(seq.n_steps)
    flat = seq.labels.flat()
    n = seq.n_nodes
    bounds = [
        (0, spec.n_train),
        (spec.n_train, spec.n_train + spec.n_val),
        (spec.n_train + spec.n_val, seq.n_steps),
    ]
    out = []
    for name, (lo, hi) in zip(("train", "val", "test"), bounds):
        idx = np.arange(lo * n, hi * n, dtype=np.int64)
        idx = idx[flat[idx] != MISSING]
        if idx.size == 0:
            raise ValueError(f"{name} partition contains no labeled node-times")
        out.append(idx)
    return out[0], out[1], out[2]


def synth_uniform(
    n_nodes: int,
    n_steps: int,
    edge_prob: float,
    seed: int,
    n_classes: int = 2,
) -> SnapshotSequence:
    """Uniform random snapshots with uniform random labels (bench/oracle data)."""
    if not (0.0 <= edge_prob <= 1.0):
        raise ValueError("edge_prob must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    snaps = []
    for _ in range(n_steps):
        hit = np.triu(rng.random((n_nodes, n_nodes)) < edge_prob, k=1)
        u, v = np.nonzero(hit)
        snaps.append(make_snapshot(n_nodes, u, v))
    y = rng.integers(0, n_classes, size=(n_steps, n_nodes)).astype(np.int64)
    return SnapshotSequence(
        n_nodes=n_nodes,
        n_steps=n_steps,
        snapshots=snaps,
        features=FeatureMatrix(n_nodes, n_steps, n_nodes),
        labels=LabelTensor(y, n_classes),
        n_classes=n_classes,
    )


def synth_dsbm(
    n_nodes: int,
    n_steps: int,
    n_blocks: int,
    p_in: float,
    p_out: float,
    drift: float,
    seed: int,
) -> SnapshotSequence:
    """Drifting stochastic-block-model sequence; labels are current blocks.

    Each step every node independently switches to a uniformly random other
    block with probability ``drift``; edges are sampled fresh per snapshot
    (p_in within blocks, p_out across). Bit-identical given the seed.
    """
    if not (0.0 <= p_out < p_in <= 1.0):
        raise ValueError("require 0 <= p_out < p_in <= 1")
    if not (0.0 <= drift <= 1.0):
        raise ValueError("drift must lie in [0, 1]")
    if n_blocks > n_nodes:
        raise ValueError("n_blocks cannot exceed n_nodes")

    rng = np.random.default_rng(seed)
    z = rng.integers(0, n_blocks, size=n_nodes)
    snaps = []
    y = np.empty((n_steps, n_nodes), dtype=np.int64)
    for t in range(n_steps):
        if t > 0 and drift > 0.0:
            switch = rng.random(n_nodes) < drift
            if n_blocks > 1:
                r = rng.integers(0, n_blocks - 1, size=n_nodes)
                z = np.where(switch, np.where(r >= z, r + 1, r), z)
        prob = np.where(z[:, None] == z[None, :], p_in, p_out)
        hit = np.triu(rng.random((n_nodes, n_nodes)) < prob, k=1)
        u, v = np.nonzero(hit)
        snaps.append(make_snapshot(n_nodes, u, v))
        y[t] = z
    return SnapshotSequence(
        n_nodes=n_nodes,
        n_steps=n_steps,
        snapshots=snaps,
        features=FeatureMatrix(n_nodes, n_steps, n_nodes),
        labels=LabelTensor(y, n_blocks),
        n_classes=n_blocks,
    )
