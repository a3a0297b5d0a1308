"""Time-augmented spatio-temporal graph construction and walk oracles.

A snapshot sequence over N nodes and T steps is lifted to a directed graph
over T*N node-times (index ``t * N + v``). Three realizations are supported:

* ``full``: block (t, t) is the snapshot adjacency with self-loops, block
  (i, j) for i < j is the plain time-j adjacency. Walks simulate temporal
  walks directly.
* ``self_evolution``: diagonal blocks as above plus identity superdiagonal
  blocks, so a node reaches its neighbors at later times by first advancing
  its own version.
* ``disentangled``: the self-evolution graph split into a block-diagonal
  structural part and an identity diagonal+superdiagonal temporal part.

All realizations are block upper-triangular: edges never point backward in
time. Edge direction is earlier node-time to later node-time. Blocks are
kept as references to per-snapshot CSR matrices; a flat edge structure is
materialized lazily and nothing T*N x T*N dense is ever allocated.

Time indices are 0-based throughout (the first snapshot is t = 0).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .data import SnapshotSequence
from .sparse import identity_csr

DIAGONAL = 0
CROSS = 1

TAG_NAMES = {DIAGONAL: "diagonal", CROSS: "cross"}

WALK_BUDGET = 1_000_000


class Realization(Enum):
    FULL = "full"
    SELF_EVOLUTION = "self_evolution"
    DISENTANGLED = "disentangled"


@dataclass(frozen=True)
class EdgeStructure:
    """Flat directed edges grouped by destination node-time.

    ``src[dst_offsets[v]:dst_offsets[v + 1]]`` are the in-neighbors of
    node-time ``v`` (sorted ascending). ``src_perm``/``src_offsets`` give the
    transposed (source-grouped) view over the same edge ids.
    """

    n: int
    dst_offsets: np.ndarray
    src: np.ndarray
    tag: np.ndarray
    dst: np.ndarray
    src_perm: np.ndarray
    src_offsets: np.ndarray

    @property
    def n_edges(self) -> int:
        return int(self.src.shape[0])


def _ragged_arange(counts: np.ndarray) -> np.ndarray:
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    starts = np.concatenate([[0], np.cumsum(counts[:-1])])
    return np.arange(total, dtype=np.int64) - np.repeat(starts, counts)


def _structure_from_edges(n_total: int, src: np.ndarray, dst: np.ndarray, tag: np.ndarray) -> EdgeStructure:
    order = np.lexsort((src, dst))
    src, dst, tag = src[order], dst[order], tag[order]
    counts = np.bincount(dst, minlength=n_total)
    dst_offsets = np.zeros(n_total + 1, dtype=np.int64)
    np.cumsum(counts, out=dst_offsets[1:])
    src_perm = np.argsort(src, kind="stable")
    src_offsets = np.zeros(n_total + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n_total), out=src_offsets[1:])
    return EdgeStructure(n_total, dst_offsets, src, tag, dst, src_perm, src_offsets)


class GraphPart:
    """One augmented graph: a block pattern over per-snapshot CSR matrices.

    ``blocks`` is a list of (source_time, dest_time, matrix, tag); the flat
    destination-grouped :class:`EdgeStructure` is built on first access and
    cached.
    """

    def __init__(self, n_nodes: int, n_steps: int, blocks: list, structure: EdgeStructure | None = None):
        self.n_nodes = n_nodes
        self.n_steps = n_steps
        self.blocks = blocks
        self._structure = structure

    @property
    def n(self) -> int:
        return self.n_nodes * self.n_steps

    @property
    def n_edges(self) -> int:
        if self._structure is not None:
            return self._structure.n_edges
        return sum(mat.nnz for _, _, mat, _ in self.blocks)

    @property
    def structure(self) -> EdgeStructure:
        if self._structure is None:
            self._structure = self._build_structure()
        return self._structure

    def _build_structure(self) -> EdgeStructure:
        n, T = self.n_nodes, self.n_steps
        total = self.n
        by_dest: list[list] = [[] for _ in range(T)]
        for i, j, mat, tag in self.blocks:
            by_dest[j].append((i, mat, tag))
        for lst in by_dest:
            lst.sort(key=lambda item: item[0])

        counts = np.zeros(total, dtype=np.int64)
        for j, lst in enumerate(by_dest):
            for _, mat, _ in lst:
                counts[j * n:(j + 1) * n] += mat.row_degrees()
        offsets = np.zeros(total + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])

        src = np.empty(int(offsets[-1]), dtype=np.int64)
        tags = np.empty(int(offsets[-1]), dtype=np.uint8)
        cursor = offsets[:-1].copy()
        for j, lst in enumerate(by_dest):
            rows = np.arange(j * n, (j + 1) * n)
            for i, mat, tag in lst:
                deg = mat.row_degrees()
                if mat.nnz == 0:
                    continue
                pos = np.repeat(cursor[rows], deg) + _ragged_arange(deg)
                src[pos] = i * n + mat.col_indices
                tags[pos] = tag
                cursor[rows] += deg

        dst = np.repeat(np.arange(total, dtype=np.int64), counts)
        src_perm = np.argsort(src, kind="stable")
        src_offsets = np.zeros(total + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=total), out=src_offsets[1:])
        return EdgeStructure(total, offsets, src, tags, dst, src_perm, src_offsets)

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(src, dst, tag) in destination-grouped order."""
        s = self.structure
        return s.src, s.dst, s.tag

    def edge_set(self) -> set[tuple[int, int]]:
        src, dst, _ = self.edge_arrays()
        return set(zip(src.tolist(), dst.tolist()))

    def out_adjacency(self, include_self_loops: bool = True) -> list[list[int]]:
        """Adjacency lists keyed by source node-time."""
        s = self.structure
        adj: list[list[int]] = [[] for _ in range(s.n)]
        for e in range(s.n_edges):
            u, v = int(s.src[e]), int(s.dst[e])
            if not include_self_loops and u == v:
                continue
            adj[u].append(v)
        for lst in adj:
            lst.sort()
        return adj


@dataclass(frozen=True)
class TimeAugmentedGraph:
    n_nodes: int
    n_steps: int
    realization: Realization
    part: GraphPart | None = None
    structural_part: GraphPart | None = None
    temporal_part: GraphPart | None = None

    @property
    def parts(self) -> list[GraphPart]:
        if self.realization is Realization.DISENTANGLED:
            return [self.structural_part, self.temporal_part]
        return [self.part]

    @property
    def n_edges(self) -> int:
        return sum(p.n_edges for p in self.parts)


def node_time_index(v: int, t: int, n_nodes: int) -> int:
    return t * n_nodes + v


def build_augmented(seq: SnapshotSequence, realization: Realization) -> TimeAugmentedGraph:
    """Construct the time-augmented graph for one realization."""
    n, T = seq.n_nodes, seq.n_steps
    eye = identity_csr(n)
    diag = [(t, t, seq.snapshots[t].adjacency_with_loops, DIAGONAL) for t in range(T)]

    if realization is Realization.FULL:
        cross = [
            (i, j, seq.snapshots[j].adjacency, CROSS)
            for j in range(T)
            for i in range(j)
        ]
        return TimeAugmentedGraph(n, T, realization, part=GraphPart(n, T, diag + cross))

    if realization is Realization.SELF_EVOLUTION:
        cross = [(t, t + 1, eye, CROSS) for t in range(T - 1)]
        return TimeAugmentedGraph(n, T, realization, part=GraphPart(n, T, diag + cross))

    if realization is Realization.DISENTANGLED:
        temporal = [(t, t, eye, DIAGONAL) for t in range(T)]
        temporal += [(t, t + 1, eye, CROSS) for t in range(T - 1)]
        return TimeAugmentedGraph(
            n, T, realization,
            structural_part=GraphPart(n, T, diag),
            temporal_part=GraphPart(n, T, temporal),
        )

    raise ValueError(f"unknown realization {realization!r}")


def write_edge_tsv(part: GraphPart, path) -> None:
    src, dst, tag = part.edge_arrays()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# src_idx\tdst_idx\tblock_tag\n")
        for s, d, g in zip(src.tolist(), dst.tolist(), tag.tolist()):
            fh.write(f"{s}\t{d}\t{TAG_NAMES[g]}\n")


def _snapshot_neighbor_lists(seq: SnapshotSequence) -> list[list[np.ndarray]]:
    return [
        [seq.snapshots[t].adjacency.row(v) for v in range(seq.n_nodes)]
        for t in range(seq.n_steps)
    ]


def enumerate_temporal_walks(
    seq: SnapshotSequence, source: int, max_len: int, budget: int = WALK_BUDGET
) -> list[tuple]:
    """Exhaustive temporal walks from ``source`` of length 1..max_len.

    A walk is a tuple of (v_i, v_{i+1}, t_i) steps with nondecreasing times
    and (v_i, v_{i+1}) an edge of snapshot t_i. Raises if the enumeration
    would exceed ``budget`` walks.
    """
    nbrs = _snapshot_neighbor_lists(seq)
    T = seq.n_steps
    walks: list[tuple] = []
    stack: list[tuple[int, int, tuple]] = [(source, 0, ())]
    while stack:
        v, t_min, steps = stack.pop()
        if len(steps) == max_len:
            continue
        for t in range(t_min, T):
            for w in nbrs[t][v]:
                walk = steps + ((v, int(w), t),)
                walks.append(walk)
                if len(walks) > budget:
                    raise RuntimeError(f"temporal walk enumeration exceeded budget {budget}")
                stack.append((int(w), t, walk))
    return walks


def _enumerate_augmented_walks(
    adj: list[list[int]], max_len: int, budget: int
) -> list[tuple]:
    """All directed walks (as node-index tuples) of length 1..max_len."""
    walks: list[tuple] = []
    for start in range(len(adj)):
        stack: list[tuple[int, tuple]] = [(start, (start,))]
        while stack:
            v, path = stack.pop()
            if len(path) - 1 == max_len:
                continue
            for w in adj[v]:
                new = path + (w,)
                walks.append(new)
                if len(walks) > budget:
                    raise RuntimeError(f"augmented walk enumeration exceeded budget {budget}")
                stack.append((w, new))
    return walks


@dataclass
class CorrespondenceReport:
    """Outcome of the walk-correspondence verification.

    For ``full``: ``injective_map_ok`` states that every temporal walk maps
    to a valid augmented walk and distinct walks map to distinct images;
    ``reachability_ok`` states the converse, that every augmented walk using
    no self-loop edge projects to a valid temporal walk. For
    ``self_evolution``: ``injective_map_ok`` is vacuously true and
    ``reachability_ok`` states the reachability equivalence with temporal
    walks. For ``disentangled``: ``injective_map_ok`` states that the two
    parts recombine exactly to the self-evolution edge set and
    ``reachability_ok`` is the reachability check on the recombined graph.
    """

    injective_map_ok: bool
    reachability_ok: bool
    counterexample: object | None = None

    @property
    def ok(self) -> bool:
        return self.injective_map_ok and self.reachability_ok


def _temporal_walk_image(walk: tuple, n: int) -> tuple:
    """Map a temporal walk to its augmented node path (t0 taken as t1)."""
    v1, _, t1 = walk[0]
    path = [node_time_index(v1, t1, n)]
    for (_, w, t) in walk:
        path.append(node_time_index(w, t, n))
    return tuple(path)


def _check_full(seq: SnapshotSequence, part: GraphPart, max_len: int, budget: int) -> CorrespondenceReport:
    n = seq.n_nodes
    edges = part.edge_set()

    images = set()
    n_walks = 0
    for source in range(n):
        for walk in enumerate_temporal_walks(seq, source, max_len, budget):
            n_walks += 1
            image = _temporal_walk_image(walk, n)
            for a, b in zip(image[:-1], image[1:]):
                if (a, b) not in edges:
                    return CorrespondenceReport(False, False, ("missing_edge", walk, (a, b)))
            if image in images:
                return CorrespondenceReport(False, False, ("duplicate_image", walk, image))
            images.add(image)

    nbrs = _snapshot_neighbor_lists(seq)
    adj = part.out_adjacency(include_self_loops=False)
    for path in _enumerate_augmented_walks(adj, max_len, budget):
        prev_t = None
        for a, b in zip(path[:-1], path[1:]):
            u, v = a % n, b % n
            t = b // n
            if prev_t is not None and t < prev_t:
                return CorrespondenceReport(True, False, ("time_decreasing", path))
            if v not in nbrs[t][u]:
                return CorrespondenceReport(True, False, ("invalid_projection", path, (u, v, t)))
            prev_t = t
    return CorrespondenceReport(True, True, None)


def _augmented_reachable_sets(part: GraphPart) -> list[set[int]]:
    adj = part.out_adjacency()
    out = []
    for start in range(part.n):
        seen = {start}
        frontier = [start]
        while frontier:
            v = frontier.pop()
            for w in adj[v]:
                if w not in seen:
                    seen.add(w)
                    frontier.append(w)
        out.append(seen)
    return out


def _temporal_reachable_oracle(seq: SnapshotSequence) -> list[set[int]]:
    """Brute-force: (v, j) is reachable from (u, i) iff some temporal walk
    u -> v uses edge times within [i, j], or u == v with i <= j."""
    n, T = seq.n_nodes, seq.n_steps
    nbrs = _snapshot_neighbor_lists(seq)
    out = []
    for i in range(T):
        for u in range(n):
            states = {(u, i)}  # (node, earliest time the next edge may use)
            frontier = [(u, i)]
            best: dict[int, int] = {}  # node -> smallest last-edge time
            while frontier:
                v, t_min = frontier.pop()
                for t in range(t_min, T):
                    for w in nbrs[t][v]:
                        w = int(w)
                        if (w, t) not in states:
                            states.add((w, t))
                            frontier.append((w, t))
                            if w not in best or t < best[w]:
                                best[w] = t
            reach = {node_time_index(u, j, n) for j in range(i, T)}
            for v, t_first in best.items():
                reach |= {node_time_index(v, j, n) for j in range(t_first, T)}
            out.append(reach)
    return out


def _check_reachability(seq: SnapshotSequence, part: GraphPart) -> CorrespondenceReport:
    actual = _augmented_reachable_sets(part)
    expected = _temporal_reachable_oracle(seq)
    for idx, (a, b) in enumerate(zip(actual, expected)):
        if a != b:
            diff = (a - b) | (b - a)
            return CorrespondenceReport(True, False, ("reachability_mismatch", idx, sorted(diff)[:5]))
    return CorrespondenceReport(True, True, None)


def _combined_disentangled_part(graph: TimeAugmentedGraph) -> GraphPart:
    """Recombine the two parts, dropping the temporal self-loop blocks and
    keeping the structural diagonal; equals self-evolution when correct."""
    keep = [block for block in graph.temporal_part.blocks if block[0] != block[1]]
    return GraphPart(graph.n_nodes, graph.n_steps, graph.structural_part.blocks + keep)


def verify_correspondence(
    seq: SnapshotSequence,
    realization: Realization,
    max_len: int,
    budget: int = WALK_BUDGET,
    graph: TimeAugmentedGraph | None = None,
) -> CorrespondenceReport:
    """Verify that walks on the augmented graph simulate temporal walks.

    Exhaustive on desk-scale instances only; raises when the enumeration
    budget is exceeded. Pass ``graph`` to verify a prebuilt (possibly
    mutated) construction instead of a fresh one.
    """
    if seq.n_nodes * seq.n_steps > 64:
        warnings.warn("verify_correspondence is exhaustive; instance looks large")
    if graph is None:
        graph = build_augmented(seq, realization)

    if realization is Realization.FULL:
        return _check_full(seq, graph.part, max_len, budget)

    if realization is Realization.SELF_EVOLUTION:
        return _check_reachability(seq, graph.part)

    if realization is Realization.DISENTANGLED:
        combined = _combined_disentangled_part(graph)
        reference = build_augmented(seq, Realization.SELF_EVOLUTION).part
        union_ok = combined.edge_set() == reference.edge_set()
        reach = _check_reachability(seq, combined)
        return CorrespondenceReport(union_ok, reach.reachability_ok,
                                    reach.counterexample if not reach.reachability_ok else None)

    raise ValueError(f"unknown realization {realization!r}")
