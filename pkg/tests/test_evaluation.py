import numpy as np
import pytest

from tagnn.evaluation import average_ranks, binary_auc, macro_auc

from oracles import pairwise_auc, pairwise_macro_auc


class TestBinaryAuc:
    def test_perfect_separation(self):
        assert binary_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
        assert binary_auc([0.8, 0.9, 0.1, 0.2], [0, 0, 1, 1]) == 0.0

    def test_all_ties(self):
        assert binary_auc([0.5] * 6, [0, 1, 0, 1, 0, 1]) == 0.5

    def test_reference_case(self):
        # 3 of 4 positive-negative pairs correctly ordered
        assert binary_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75

    def test_single_class_undefined(self):
        with pytest.warns(UserWarning, match="undefined"):
            assert binary_auc([0.1, 0.2], [1, 1]) is None

    def test_complement_identity_exact(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = int(rng.integers(2, 40))
            scores = np.round(rng.normal(size=n), 1)  # rounding forces ties
            labels = rng.integers(0, 2, size=n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            assert binary_auc(scores, labels) + binary_auc(scores, 1 - labels) == 1.0

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(1)
        scores = rng.normal(size=30)
        labels = rng.integers(0, 2, size=30)
        labels[:2] = [0, 1]
        base = binary_auc(scores, labels)
        assert binary_auc(np.exp(scores), labels) == base
        assert binary_auc(3.0 * scores + 7.0, labels) == base

    def test_matches_pairwise_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            n = int(rng.integers(2, 60))
            scores = np.round(rng.normal(size=n), 1)
            labels = rng.integers(0, 2, size=n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            assert abs(binary_auc(scores, labels) - pairwise_auc(scores, labels)) <= 1e-12

    def test_average_ranks(self):
        assert average_ranks(np.array([10.0, 20.0, 20.0, 30.0])).tolist() == [1.0, 2.5, 2.5, 4.0]


class TestMacroAuc:
    def test_oracle_probabilities_give_one(self):
        labels = np.array([0, 1, 2, 1, 0, 2])
        probs = np.eye(3)[labels]
        report = macro_auc(probs, labels)
        assert report.macro_auc == 1.0
        assert report.per_class_auc == [1.0, 1.0, 1.0]

    def test_binary_symmetry(self):
        rng = np.random.default_rng(3)
        p1 = rng.uniform(size=20)
        probs = np.stack([1.0 - p1, p1], axis=1)
        labels = rng.integers(0, 2, size=20)
        labels[:2] = [0, 1]
        report = macro_auc(probs, labels)
        assert report.per_class_auc[0] == report.per_class_auc[1]
        assert report.macro_auc == binary_auc(p1, labels)

    def test_matches_pairwise_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            n = 30
            raw = rng.uniform(size=(n, 3))
            probs = raw / raw.sum(axis=1, keepdims=True)
            labels = rng.integers(0, 3, size=n)
            labels[:3] = [0, 1, 2]
            report = macro_auc(probs, labels)
            assert abs(report.macro_auc - pairwise_macro_auc(probs, labels)) <= 1e-12

    def test_permutation_invariance(self):
        rng = np.random.default_rng(5)
        raw = rng.uniform(size=(25, 3))
        probs = raw / raw.sum(axis=1, keepdims=True)
        labels = rng.integers(0, 3, size=25)
        labels[:3] = [0, 1, 2]
        base = macro_auc(probs, labels).macro_auc
        perm = rng.permutation(25)
        assert macro_auc(probs[perm], labels[perm]).macro_auc == base

    def test_undefined_class_excluded_with_warning(self):
        labels = np.array([0, 1, 0, 1])
        raw = np.random.default_rng(6).uniform(size=(4, 3))
        probs = raw / raw.sum(axis=1, keepdims=True)
        with pytest.warns(UserWarning):
            report = macro_auc(probs, labels)
        assert report.per_class_auc[2] is None
        defined = [a for a in report.per_class_auc if a is not None]
        assert report.macro_auc == pytest.approx(np.mean(defined))

    def test_all_undefined_is_error(self):
        probs = np.array([[1.0, 0.0], [1.0, 0.0]])
        with pytest.warns(UserWarning):
            with pytest.raises(ValueError, match="undefined"):
                macro_auc(probs, np.array([0, 0]))

    def test_row_sum_validated(self):
        with pytest.raises(ValueError, match="sum to 1"):
            macro_auc(np.array([[0.7, 0.7]]), np.array([0]))

    def test_eval_set_selection(self):
        rng = np.random.default_rng(7)
        raw = rng.uniform(size=(10, 2))
        probs = raw / raw.sum(axis=1, keepdims=True)
        labels = rng.integers(0, 2, size=10)
        labels[:2] = [0, 1]
        labels[8:] = [0, 1]
        subset = np.array([0, 1, 8, 9])
        direct = macro_auc(probs[subset], labels[subset])
        via_eval_set = macro_auc(probs, labels, eval_set=subset)
        assert direct.macro_auc == via_eval_set.macro_auc
        assert via_eval_set.n_examples == 4

    def test_per_step_averaging(self):
        # two snapshots of three nodes; per-step averages differ from pooled
        n_nodes = 3
        eval_set = np.arange(6)
        labels = np.array([0, 1, 1, 1, 0, 0])
        p1 = np.array([0.9, 0.8, 0.1, 0.7, 0.2, 0.3])
        probs = np.stack([1 - p1, p1], axis=1)
        pooled = macro_auc(probs, labels, eval_set=eval_set)
        stepped = macro_auc(probs, labels, eval_set=eval_set, per_step=True, n_nodes=n_nodes)
        step0 = binary_auc(p1[:3], labels[:3])
        step1 = binary_auc(p1[3:], labels[3:])
        assert stepped.per_class_auc[1] == pytest.approx((step0 + step1) / 2)
        assert pooled.macro_auc != stepped.macro_auc

    def test_report_serializes(self):
        labels = np.array([0, 1])
        probs = np.array([[0.9, 0.1], [0.2, 0.8]])
        report = macro_auc(probs, labels, config={"seed": 1})
        data = report.to_dict()
        assert data["config"] == {"seed": 1}
        assert data["n_examples"] == 2
