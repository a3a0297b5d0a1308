import numpy as np
import pytest

from tagnn.attention import (
    AttentionParams,
    attention_forward,
    edge_scores,
    edge_softmax_transition,
    uniform_transition,
)
from tagnn.augment import Realization, build_augmented
from tagnn.data import FeatureMatrix, sequence_from_edge_lists

from oracles import dense_features, dense_full, dense_transition, snapshot_edge_lists


def small_seq(explicit_dim=None, seed=0):
    rng = np.random.default_rng(seed)
    seq = sequence_from_edge_lists(3, [
        (np.array([0, 1]), np.array([1, 2])),
        (np.array([0]), np.array([2])),
    ])
    if explicit_dim is not None:
        data = rng.normal(size=(6, explicit_dim))
        features = FeatureMatrix(3, 2, explicit_dim, mode="explicit", data=data)
        seq = sequence_from_edge_lists(3, [
            (np.array([0, 1]), np.array([1, 2])),
            (np.array([0]), np.array([2])),
        ], features=features)
    return seq


def random_params(rng, f, d, slope=0.2):
    return AttentionParams(rng.normal(size=(f, d)), rng.normal(size=(f, d)),
                           rng.normal(size=f), leaky_slope=slope)


class TestEdgeScores:
    def test_zero_attention_vector(self):
        seq = small_seq()
        part = build_augmented(seq, Realization.FULL).part
        rng = np.random.default_rng(0)
        params = AttentionParams(rng.normal(size=(2, 3)), rng.normal(size=(2, 3)), np.zeros(2))
        assert np.array_equal(edge_scores(part, seq.features, params), np.zeros(part.n_edges))

    def test_zero_weight_matrices(self):
        seq = small_seq(explicit_dim=3)
        part = build_augmented(seq, Realization.FULL).part
        params = AttentionParams(np.zeros((2, 3)), np.zeros((2, 3)),
                                 np.random.default_rng(0).normal(size=2))
        assert np.array_equal(edge_scores(part, seq.features, params), np.zeros(part.n_edges))

    def test_matches_dense_reference(self):
        seq = small_seq(explicit_dim=3, seed=1)
        part = build_augmented(seq, Realization.FULL).part
        rng = np.random.default_rng(2)
        params = random_params(rng, 2, 3)
        scores = edge_scores(part, seq.features, params)
        x = dense_features(seq)
        pl = x @ params.theta_l.T
        pr = x @ params.theta_r.T
        s = part.structure
        for k in range(part.n_edges):
            pre = pl[s.src[k]] + pr[s.dst[k]]
            z = np.where(pre > 0, pre, 0.2 * pre)
            assert scores[k] == pytest.approx(z @ params.att_vec, abs=1e-14)

    def test_concatenated_form_equivalence(self):
        # [theta_l, theta_r] @ [x_u || x_v] == theta_l x_u + theta_r x_v
        rng = np.random.default_rng(3)
        theta_l = rng.normal(size=(4, 5))
        theta_r = rng.normal(size=(4, 5))
        xu = rng.normal(size=5)
        xv = rng.normal(size=5)
        stacked = np.hstack([theta_l, theta_r]) @ np.concatenate([xu, xv])
        assert np.allclose(stacked, theta_l @ xu + theta_r @ xv, atol=1e-14)

    def test_dimension_mismatch(self):
        seq = small_seq()
        part = build_augmented(seq, Realization.FULL).part
        params = random_params(np.random.default_rng(0), 2, 5)
        with pytest.raises(ValueError):
            edge_scores(part, seq.features, params)

    def test_score_locality(self):
        seq = small_seq(explicit_dim=3, seed=4)
        part = build_augmented(seq, Realization.FULL).part
        rng = np.random.default_rng(5)
        params = random_params(rng, 2, 3)
        base = edge_scores(part, seq.features, params)
        w = 2  # perturb node-time index 2
        data = seq.features.data.copy()
        data[w] += rng.normal(size=3)
        bumped = FeatureMatrix(3, 2, 3, mode="explicit", data=data)
        changed = edge_scores(part, bumped, params) != base
        s = part.structure
        incident = (s.src == w) | (s.dst == w)
        assert not np.any(changed & ~incident)


class TestEdgeSoftmax:
    def test_single_in_neighbor_exact_one(self):
        seq = sequence_from_edge_lists(2, [((np.array([], dtype=np.int64),) * 2)])
        part = build_augmented(seq, Realization.DISENTANGLED).temporal_part
        scores = np.random.default_rng(0).normal(size=part.n_edges)
        trans = edge_softmax_transition(part, scores)
        assert np.array_equal(trans.values, np.ones(part.n_edges))

    def test_equal_scores_give_uniform(self):
        seq = small_seq()
        part = build_augmented(seq, Realization.FULL).part
        trans = edge_softmax_transition(part, np.full(part.n_edges, 1.7))
        counts = np.diff(part.structure.dst_offsets)
        expected = np.repeat(1.0 / counts[counts > 0], counts[counts > 0])
        assert np.array_equal(trans.values, expected)

    def test_closed_form_quarter_three_quarters(self):
        seq = sequence_from_edge_lists(2, [(np.array([0]), np.array([1]))])
        part = build_augmented(seq, Realization.FULL).part
        s = part.structure
        scores = np.zeros(part.n_edges)
        # destination node-time 0 has in-edges from 0 (self) and 1
        scores[s.dst_offsets[0]:s.dst_offsets[1]] = [0.0, np.log(3.0)]
        trans = edge_softmax_transition(part, scores)
        row = trans.values[s.dst_offsets[0]:s.dst_offsets[1]]
        assert row == pytest.approx([0.25, 0.75], abs=1e-15)

    def test_row_stochastic_random_configs(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            n = int(rng.integers(2, 6))
            t = int(rng.integers(1, 4))
            lists = []
            for _ in range(t):
                hit = np.triu(rng.random((n, n)) < 0.5, k=1)
                u, v = np.nonzero(hit)
                lists.append((u, v))
            seq = sequence_from_edge_lists(n, lists)
            realization = rng.choice([Realization.FULL, Realization.SELF_EVOLUTION])
            part = build_augmented(seq, realization).part
            params = random_params(rng, 3, n)
            trans, _ = attention_forward(part, seq.features, params)
            sums = trans.row_sums()
            assert np.all(np.abs(sums - 1.0) <= 1e-12)
            assert np.all(trans.values > 0) and np.all(trans.values <= 1.0)

    def test_shift_invariance(self):
        seq = small_seq()
        part = build_augmented(seq, Realization.FULL).part
        rng = np.random.default_rng(7)
        scores = rng.normal(size=part.n_edges)
        base = edge_softmax_transition(part, scores).values
        s = part.structure
        shifted = scores.copy()
        v = 4  # add a constant to every in-score of one destination
        shifted[s.dst_offsets[v]:s.dst_offsets[v + 1]] += 3.25
        bumped = edge_softmax_transition(part, shifted).values
        assert np.all(np.abs(bumped - base) <= 1e-12)

    def test_matches_dense_transition(self):
        seq = small_seq(explicit_dim=4, seed=8)
        part = build_augmented(seq, Realization.FULL).part
        rng = np.random.default_rng(9)
        params = random_params(rng, 3, 4)
        trans, _ = attention_forward(part, seq.features, params)
        dense = dense_transition(
            dense_full(seq.n_nodes, snapshot_edge_lists(seq)), dense_features(seq),
            params.theta_l, params.theta_r, params.att_vec,
        )
        assert np.allclose(trans.to_dense(), dense, atol=1e-12)

    def test_scores_must_cover_edges(self):
        seq = small_seq()
        part = build_augmented(seq, Realization.FULL).part
        with pytest.raises(ValueError):
            edge_softmax_transition(part, np.zeros(part.n_edges - 1))


class TestTransitionMatrix:
    def test_apply_matches_dense(self):
        seq = small_seq(explicit_dim=3, seed=10)
        part = build_augmented(seq, Realization.SELF_EVOLUTION).part
        rng = np.random.default_rng(11)
        trans, _ = attention_forward(part, seq.features, random_params(rng, 2, 3))
        h = rng.normal(size=(part.n, 4))
        dense = trans.to_dense()
        assert np.allclose(trans.apply(h), dense @ h, atol=1e-12)
        g = rng.normal(size=(part.n, 4))
        assert np.allclose(trans.apply_transpose(g), dense.T @ g, atol=1e-12)

    def test_uniform_transition(self):
        seq = small_seq()
        part = build_augmented(seq, Realization.FULL).part
        trans = uniform_transition(part)
        assert np.all(np.abs(trans.row_sums() - 1.0) <= 1e-12)
        counts = np.diff(part.structure.dst_offsets)
        assert np.array_equal(trans.values, np.repeat(1.0 / counts, counts))

    def test_tsv_dump(self, tmp_path):
        from tagnn.attention import write_transition_tsv
        seq = small_seq()
        part = build_augmented(seq, Realization.FULL).part
        trans = uniform_transition(part)
        path = tmp_path / "alpha.tsv"
        write_transition_tsv(trans, path)
        lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
        assert len(lines) == part.n_edges
        u, v, a = lines[0].split("\t")
        assert float(a) == trans.values[0]
