import numpy as np
import pytest

from patchrank.errors import DimensionMismatch, InsufficientClasses, NonFiniteLoss
from patchrank.feature_model import GlobalDescriptor, l2_normalize
from patchrank.metric_head import (
    Adam,
    EpochStats,
    ProjectionHead,
    TrainerConfig,
    batch_sampler,
    contrastive_loss,
    format_training_log,
    identity_head,
    init_head,
    load_head,
    mine_pairs,
    project,
    save_head,
    train_head,
)


def contrastive_loss_value_oracle(pairs, embeddings, margin):
    """Scalar-only recomputation of the loss, no gradients, pure python."""
    total = 0.0
    for p in pairs:
        d = float(np.linalg.norm(embeddings[p.anchor_index] - embeddings[p.other_index]))
        total += d * d if p.positive else max(0.0, margin - d) ** 2
    return total / len(pairs)


def fd_gradient(pairs, embeddings, margin, h=1e-4):
    """Central finite differences of the loss w.r.t. every embedding entry."""
    grad = np.zeros_like(embeddings)
    for i in range(embeddings.shape[0]):
        for j in range(embeddings.shape[1]):
            up = embeddings.copy()
            up[i, j] += h
            down = embeddings.copy()
            down[i, j] -= h
            grad[i, j] = (
                contrastive_loss_value_oracle(pairs, up, margin)
                - contrastive_loss_value_oracle(pairs, down, margin)
            ) / (2 * h)
    return grad


class TestProject:
    def test_identity_head_returns_same_unit_vector(self):
        vec = l2_normalize([1.0, 2.0, 2.0])
        desc = GlobalDescriptor("x", vec, normalized=True)
        out = project(desc, identity_head(3))
        assert out.normalized
        assert out.vector == pytest.approx(vec, abs=1e-7)

    def test_scaling_cancels_under_normalization(self):
        vec = l2_normalize([3.0, 4.0])
        desc = GlobalDescriptor("x", vec, normalized=True)
        doubled = ProjectionHead(2.0 * np.eye(2), np.zeros(2))
        assert project(desc, doubled).vector == pytest.approx(vec, abs=1e-6)

    def test_matches_matrix_vector_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            w = rng.standard_normal((4, 6))
            b = rng.standard_normal(4)
            v = rng.standard_normal(6).astype(np.float32)
            desc = GlobalDescriptor("x", v, normalized=False)
            head = ProjectionHead(w, b)
            raw = np.array([sum(w[i, j] * float(v[j]) for j in range(6)) + b[i] for i in range(4)])
            expect = raw / np.linalg.norm(raw)
            assert project(desc, head).vector == pytest.approx(expect, abs=1e-5)

    def test_dimension_mismatch(self):
        desc = GlobalDescriptor("x", np.ones(3, dtype=np.float32))
        with pytest.raises(DimensionMismatch):
            project(desc, identity_head(4))


class TestBatchSampler:
    def test_two_by_two_single_batch(self):
        labels = ["A", "A", "B", "B"]
        batches = list(batch_sampler(labels, 2, 2, np.random.default_rng(0)))
        assert len(batches) == 1
        assert sorted(batches[0]) == [0, 1, 2, 3]

    def test_deterministic_given_seed(self):
        labels = [f"c{i % 5}" for i in range(40)]
        a = list(batch_sampler(labels, 3, 2, np.random.default_rng(9)))
        b = list(batch_sampler(labels, 3, 2, np.random.default_rng(9)))
        assert a == b

    def test_batch_geometry_over_epoch(self):
        labels = [f"c{i // 10}" for i in range(100)]  # 10 classes x 10 entries
        seen = []
        for batch in batch_sampler(labels, 4, 2, np.random.default_rng(1)):
            assert len(batch) == 8
            batch_labels = [labels[i] for i in batch]
            counts = {c: batch_labels.count(c) for c in set(batch_labels)}
            assert len(counts) == 4
            assert all(n == 2 for n in counts.values())
            seen.extend(batch)
        assert len(seen) == len(set(seen))  # without replacement within the epoch

    def test_insufficient_classes(self):
        with pytest.raises(InsufficientClasses):
            list(batch_sampler(["A", "A", "B"], 2, 2, np.random.default_rng(0)))


class TestMinePairs:
    def test_two_by_two(self):
        pairs = mine_pairs(["A", "A", "B", "B"])
        assert len(pairs) == 6  # C(4, 2)
        positives = {(p.anchor_index, p.other_index) for p in pairs if p.positive}
        assert positives == {(0, 1), (2, 3)}
        assert sum(not p.positive for p in pairs) == 4

    def test_single_negative(self):
        pairs = mine_pairs(["A", "B"])
        assert len(pairs) == 1 and not pairs[0].positive

    def test_single_positive(self):
        pairs = mine_pairs(["A", "A"])
        assert len(pairs) == 1 and pairs[0].positive

    def test_count_formula(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            labels = [f"c{rng.integers(4)}" for _ in range(int(rng.integers(2, 12)))]
            pairs = mine_pairs(labels)
            n = len(labels)
            assert len(pairs) == n * (n - 1) // 2
            pos = sum(p.positive for p in pairs)
            expect = sum(
                labels.count(c) * (labels.count(c) - 1) // 2 for c in set(labels)
            )
            assert pos == expect


class TestContrastiveLoss:
    def test_identical_positive_pair_zero_loss(self):
        emb = np.array([[1.0, 0.0], [1.0, 0.0]])
        loss, grad = contrastive_loss(mine_pairs(["A", "A"]), emb, margin=0.5)
        assert loss == 0.0
        assert np.allclose(grad, 0.0)

    def test_distant_negative_pair_zero_loss(self):
        emb = np.array([[1.0, 0.0], [-1.0, 0.0]])  # D = 2 >= margin
        loss, grad = contrastive_loss(mine_pairs(["A", "B"]), emb, margin=0.5)
        assert loss == 0.0
        assert np.allclose(grad, 0.0)

    def test_positive_pair_point_three(self):
        emb = np.array([[0.0, 0.0], [0.3, 0.0]])
        loss, _ = contrastive_loss(mine_pairs(["A", "A"]), emb, margin=0.5)
        assert loss == pytest.approx(0.09, abs=1e-12)

    def test_negative_pair_inside_margin(self):
        emb = np.array([[0.0, 0.0], [0.3, 0.0]])
        loss, _ = contrastive_loss(mine_pairs(["A", "B"]), emb, margin=0.5)
        assert loss == pytest.approx(0.04, abs=1e-12)  # (0.5 - 0.3)^2

    def test_loss_nonnegative(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            n = int(rng.integers(2, 9))
            emb = rng.standard_normal((n, 4))
            labels = [f"c{rng.integers(3)}" for _ in range(n)]
            loss, _ = contrastive_loss(mine_pairs(labels), emb, margin=0.5)
            assert loss >= 0.0

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        checked = 0
        while checked < 20:
            n = int(rng.integers(2, 9))
            dim = int(rng.integers(2, 9))
            emb = rng.standard_normal((n, dim))
            emb /= np.linalg.norm(emb, axis=1, keepdims=True)
            labels = [f"c{rng.integers(3)}" for _ in range(n)]
            pairs = mine_pairs(labels)
            margin = 0.5
            dists = [np.linalg.norm(emb[p.anchor_index] - emb[p.other_index]) for p in pairs]
            if any(abs(d - margin) < 1e-2 or d < 1e-2 for d in dists):
                continue  # keep clear of the hinge kink and the D=0 cusp
            loss, grad = contrastive_loss(pairs, emb, margin)
            fd = fd_gradient(pairs, emb, margin)
            scale = max(np.abs(fd).max(), 1e-8)
            assert np.abs(grad - fd).max() / scale <= 1e-4
            checked += 1


class TestAdam:
    def test_zero_gradient_fixed_point(self):
        opt = Adam(learning_rate=0.1)
        params = [np.array([1.0, -2.0]), np.array([[3.0]])]
        out = opt.step(params, [np.zeros(2), np.zeros((1, 1))])
        assert np.array_equal(out[0], params[0])
        assert np.array_equal(out[1], params[1])

    def test_first_step_magnitude(self):
        # with bias correction the first step is ~lr * sign(g)
        opt = Adam(learning_rate=0.01, epsilon=1e-8)
        (out,) = opt.step([np.array([0.0])], [np.array([4.0])])
        assert out[0] == pytest.approx(-0.01, rel=1e-5)


def two_cluster_data(n=50, seed=42):
    rng = np.random.default_rng(seed)
    a = rng.normal(0, 0.15, size=(n, 8)) + np.array([2.0, 0, 0, 0, 0, 0, 0, 0])
    b = rng.normal(0, 0.15, size=(n, 8)) + np.array([0, 2.0, 0, 0, 0, 0, 0, 0])
    return np.vstack([a, b]).astype(np.float32), ["a"] * n + ["b"] * n


class TestTrainHead:
    def test_zero_epochs_returns_initial_head(self):
        data, labels = two_cluster_data(4)
        cfg = TrainerConfig(epochs=0, classes_per_batch=2, samples_per_class=2, seed=11, out_dim=4)
        head, history = train_head(cfg, data, labels)
        init = init_head(8, 4, 11)
        assert np.array_equal(head.weights, init.weights)
        assert np.array_equal(head.bias, init.bias)
        assert history == []

    def test_two_clusters_loss_halves(self):
        data, labels = two_cluster_data()
        cfg = TrainerConfig(epochs=100, classes_per_batch=2, samples_per_class=8, seed=3, out_dim=4)
        head, history = train_head(cfg, data, labels)
        assert history[-1].mean_loss <= 0.5 * history[0].mean_loss
        assert np.all(np.isfinite(head.weights)) and np.all(np.isfinite(head.bias))

    def test_bit_identical_given_seed(self):
        data, labels = two_cluster_data(10)
        cfg = TrainerConfig(epochs=5, classes_per_batch=2, samples_per_class=3, seed=21, out_dim=4)
        head_a, _ = train_head(cfg, data, labels)
        head_b, _ = train_head(cfg, data, labels)
        assert np.array_equal(head_a.weights, head_b.weights)
        assert np.array_equal(head_a.bias, head_b.bias)

    def test_non_finite_loss_aborts_with_step(self):
        data, labels = two_cluster_data(4)
        data = data.astype(np.float64) * 1e308  # projection overflows to inf
        cfg = TrainerConfig(epochs=1, classes_per_batch=2, samples_per_class=2, seed=0, out_dim=4)
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(NonFiniteLoss) as exc_info:
                train_head(cfg, data, labels)
        assert exc_info.value.step >= 1

    def test_insufficient_classes(self):
        cfg = TrainerConfig(epochs=1, classes_per_batch=2, samples_per_class=2, seed=0, out_dim=2)
        with pytest.raises(InsufficientClasses):
            train_head(cfg, np.ones((3, 4), dtype=np.float32), ["a", "a", "b"])

    def test_training_log_format(self):
        text = format_training_log([EpochStats(1, 0.25, 12), EpochStats(2, 0.125, 12)])
        assert text == "1\t0.25\t12\n2\t0.125\t12\n"


class TestHeadCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(6)
        head = ProjectionHead(rng.standard_normal((4, 7)).astype(np.float32), rng.standard_normal(4).astype(np.float32))
        path = tmp_path / "head.prhd"
        save_head(head, path)
        again = load_head(path)
        assert np.array_equal(again.weights, head.weights)
        assert np.array_equal(again.bias, head.bias)
        path2 = tmp_path / "head2.prhd"
        save_head(again, path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_layout(self, tmp_path):
        head = identity_head(2)
        path = tmp_path / "head.prhd"
        save_head(head, path)
        raw = path.read_bytes()
        assert raw[:4] == b"PRHD"
        assert raw[4:6] == (1).to_bytes(2, "little")
        assert raw[6:10] == (2).to_bytes(4, "little")
        assert raw[10:14] == (2).to_bytes(4, "little")
        assert len(raw) == 14 + 4 * (4 + 2)
