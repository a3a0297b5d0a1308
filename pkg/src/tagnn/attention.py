"""Adaptive transition matrices over time-augmented edges.

Each directed edge (u -> v) gets a score a . LeakyReLU(theta_l x_u +
theta_r x_v) from the initial node-time features; scores are softmax
normalized per destination over its in-neighborhood, yielding a
row-stochastic transition matrix (row v holds the incoming weights of v).
The matrix is computed once per forward pass and shared by all layers.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse as _sp

from .augment import EdgeStructure, GraphPart
from .data import FeatureMatrix


@dataclass
class AttentionParams:
    theta_l: np.ndarray   # (F, d), applied to edge sources
    theta_r: np.ndarray   # (F, d), applied to edge destinations
    att_vec: np.ndarray   # (F,)
    leaky_slope: float = 0.2

    def validate(self, dim: int) -> None:
        f = self.att_vec.shape[0]
        if self.theta_l.shape != (f, dim) or self.theta_r.shape != (f, dim):
            raise ValueError(
                f"attention weights must be ({f}, {dim}); got {self.theta_l.shape} / {self.theta_r.shape}"
            )
        if not (0.0 < self.leaky_slope < 1.0):
            raise ValueError("leaky_slope must lie in (0, 1)")


def _segment_starts(offsets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    counts = np.diff(offsets)
    nz = counts > 0
    return offsets[:-1][nz], counts[nz]


def segment_sum_rows(values: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Per-segment row sums; empty segments yield zero rows."""
    n = offsets.shape[0] - 1
    out = np.zeros((n,) + values.shape[1:])
    starts, _ = _segment_starts(offsets)
    if starts.size:
        out[np.diff(offsets) > 0] = np.add.reduceat(values, starts, axis=0)
    return out


@dataclass
class TransitionMatrix:
    """Row-stochastic weights over a fixed edge structure.

    ``values[k]`` is the weight of edge k in destination-grouped order; row v
    of the matrix covers ``structure.src[dst_offsets[v]:dst_offsets[v+1]]``.
    Aggregation runs through CSR matmul kernels (built once, cached); the
    summation order within a row is ascending source index either way.
    """

    structure: EdgeStructure
    values: np.ndarray
    _csr: object = field(default=None, repr=False, compare=False)
    _csr_t: object = field(default=None, repr=False, compare=False)

    def _matrix(self):
        if self._csr is None:
            s = self.structure
            self._csr = _sp.csr_matrix((self.values, s.src, s.dst_offsets), shape=(s.n, s.n))
        return self._csr

    def _matrix_t(self):
        if self._csr_t is None:
            s = self.structure
            self._csr_t = _sp.csr_matrix(
                (self.values[s.src_perm], s.dst[s.src_perm], s.src_offsets), shape=(s.n, s.n))
        return self._csr_t

    def row_sums(self) -> np.ndarray:
        return segment_sum_rows(self.values, self.structure.dst_offsets)

    def apply(self, h: np.ndarray) -> np.ndarray:
        """Aggregate in-neighbors: out[v] = sum_u alpha_uv h[u]."""
        return self._matrix() @ h

    def apply_transpose(self, g: np.ndarray) -> np.ndarray:
        """Adjoint of :meth:`apply`: out[u] = sum over edges (u -> v) of alpha_uv g[v]."""
        return self._matrix_t() @ g

    def to_dense(self) -> np.ndarray:
        n = self.structure.n
        dense = np.zeros((n, n))
        dense[self.structure.dst, self.structure.src] = self.values
        return dense


def _resolve_part(graph_or_part) -> GraphPart:
    if isinstance(graph_or_part, GraphPart):
        return graph_or_part
    part = getattr(graph_or_part, "part", None)
    if part is None:
        raise ValueError("disentangled graphs: pass structural_part or temporal_part explicitly")
    return part


def edge_scores(graph_or_part, features: FeatureMatrix, params: AttentionParams) -> np.ndarray:
    """Raw per-edge attention scores e_uv, destination-grouped order."""
    e, _ = _edge_scores_cached(_resolve_part(graph_or_part), features, params)
    return e


def _edge_scores_cached(part: GraphPart, features: FeatureMatrix, params: AttentionParams):
    params.validate(features.dim)
    s = part.structure
    pl = features.project(params.theta_l)
    pr = features.project(params.theta_r)
    pre = pl[s.src] + pr[s.dst]
    z = np.where(pre > 0, pre, params.leaky_slope * pre)
    return z @ params.att_vec, z


def edge_softmax_transition(graph_or_part, scores: np.ndarray) -> TransitionMatrix:
    """Normalize scores per destination (max-shifted for stability)."""
    s = _resolve_part(graph_or_part).structure
    if scores.shape != (s.n_edges,):
        raise ValueError("scores must cover every edge exactly once")
    starts, counts = _segment_starts(s.dst_offsets)
    values = np.empty_like(scores)
    if starts.size:
        seg_max = np.maximum.reduceat(scores, starts)
        ex = np.exp(scores - np.repeat(seg_max, counts))
        seg_sum = np.add.reduceat(ex, starts)
        values = ex / np.repeat(seg_sum, counts)
    return TransitionMatrix(s, values)


def uniform_transition(graph_or_part) -> TransitionMatrix:
    """Attention-free transition: each in-edge of v weighs 1/indeg(v)."""
    s = _resolve_part(graph_or_part).structure
    _, counts = _segment_starts(s.dst_offsets)
    values = np.repeat(1.0 / counts, counts)
    return TransitionMatrix(s, values)


def write_transition_tsv(trans: TransitionMatrix, path) -> None:
    """Debug dump: one ``src_idx dst_idx alpha`` row per edge."""
    s = trans.structure
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# src_idx\tdst_idx\talpha\n")
        for u, v, a in zip(s.src.tolist(), s.dst.tolist(), trans.values.tolist()):
            fh.write(f"{u}\t{v}\t{a!r}\n")


@dataclass
class AttentionCache:
    part: GraphPart
    features: FeatureMatrix
    params: AttentionParams
    z: np.ndarray        # (E, F) leaky outputs
    alpha: np.ndarray    # (E,)


def attention_forward(
    part: GraphPart, features: FeatureMatrix, params: AttentionParams
) -> tuple[TransitionMatrix, AttentionCache]:
    scores, z = _edge_scores_cached(part, features, params)
    trans = edge_softmax_transition(part, scores)
    return trans, AttentionCache(part, features, params, z, trans.values)


def attention_backward(cache: AttentionCache, d_alpha: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of the transition values w.r.t. the attention parameters.

    Returns d(theta_l), d(theta_r) and d(att_vec); the theta_r piece covers
    only the attention path (a tied initial-projection adds its own term).
    """
    s = cache.part.structure
    alpha, z, params = cache.alpha, cache.z, cache.params

    # softmax jacobian per destination segment
    weighted = d_alpha * alpha
    seg = segment_sum_rows(weighted, s.dst_offsets)
    de = weighted - alpha * seg[s.dst]

    d_att = z.T @ de
    dz = de[:, None] * params.att_vec[None, :]
    ds = dz * np.where(z > 0, 1.0, params.leaky_slope)

    d_src_rows = segment_sum_rows(ds[s.src_perm], s.src_offsets)
    d_dst_rows = segment_sum_rows(ds, s.dst_offsets)
    return {
        "theta_l": cache.features.project_transpose(d_src_rows),
        "theta_r": cache.features.project_transpose(d_dst_rows),
        "att_vec": d_att,
    }
