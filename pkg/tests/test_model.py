import math

import numpy as np
import pytest

from cdwce.data import Dataset, SyntheticConfig, generate_synthetic
from cdwce.metrics import summary_metrics
from cdwce.model import (
    AdamState,
    MlpModel,
    TrainConfig,
    adam_step,
    build_model,
    fit,
    forward_backward,
    load_checkpoint,
    mlp_init,
    predict_labels,
    save_checkpoint,
)
from cdwce.numeric import InvalidInputError
from conftest import central_diff, rel_error


def zero_model(sizes, head="softmax"):
    m = mlp_init(sizes, 0, head)
    return m.with_parameters([np.zeros_like(p) for p in m.parameters()])


def separable(n=200, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    y = (X[:, 0] + 0.5 * X[:, 1] > 0).astype(int)
    X[:, 0] += np.where(y == 1, 0.5, -0.5)  # margin
    return Dataset(X, y, np.arange(n), 2)


class TestInit:
    def test_deterministic(self):
        a, b = mlp_init([8, 16, 4], 3), mlp_init([8, 16, 4], 3)
        for p, q in zip(a.parameters(), b.parameters()):
            assert p.tobytes() == q.tobytes()

    def test_zero_biases(self):
        assert all(np.all(b == 0) for b in mlp_init([8, 16, 4], 0).biases)

    def test_shapes(self):
        m = mlp_init([8, 16, 4], 0)
        assert [W.shape for W in m.weights] == [(16, 8), (4, 16)]

    def test_he_scale(self):
        W = mlp_init([400, 300, 2], 0).weights[0]
        assert W.std() == pytest.approx(math.sqrt(2 / 400), rel=0.02)

    @pytest.mark.parametrize("sizes", [[4], [4, 0, 2], [3, -1]])
    def test_invalid(self, sizes):
        with pytest.raises(InvalidInputError):
            mlp_init(sizes, 0)

    def test_ce_and_cdw_share_shape(self):
        a = build_model(16, 4, TrainConfig("ce"))
        b = build_model(16, 4, TrainConfig("cdw_ce", 5.0))
        c = build_model(16, 4, TrainConfig("corn"))
        assert a.layer_sizes == b.layer_sizes == (16, 32, 32, 4)
        assert c.layer_sizes == (16, 32, 32, 3)


class TestForwardBackward:
    def test_zero_model_ce_is_ln4(self):
        X = np.ones((5, 3))
        r, _ = forward_backward(zero_model([3, 6, 4]), X, [0, 1, 2, 3, 0], "ce")
        assert r.value == pytest.approx(math.log(4), abs=1e-12)

    def test_zero_model_corn_is_ln2(self):
        X = np.ones((4, 3))
        r, _ = forward_backward(zero_model([3, 6, 3], "corn"), X, [1, 2, 3, 1], "corn")
        assert r.value == pytest.approx(math.log(2), abs=1e-12)

    def test_pure(self):
        m = mlp_init([3, 5, 4], 1)
        before = [p.copy() for p in m.parameters()]
        forward_backward(m, np.ones((2, 3)), [0, 1], "ce")
        assert all(np.array_equal(a, b) for a, b in zip(before, m.parameters()))

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidInputError):
            forward_backward(mlp_init([3, 4], 0), np.ones((2, 5)), [0, 1], "ce")

    def test_head_mismatch(self):
        with pytest.raises(InvalidInputError):
            forward_backward(mlp_init([3, 4], 0), np.ones((2, 3)), [0, 1], "corn")

    @pytest.mark.parametrize("loss, power", [("ce", None), ("cdw_ce", 1.0), ("cdw_ce", 3.0), ("cdw_ce", 6.0), ("corn", None)])
    def test_gradients_match_finite_differences(self, loss, power, rng):
        head = "corn" if loss == "corn" else "softmax"
        for trial in range(5):
            m = mlp_init([4, 6, 5, 3 if head == "corn" else 4], trial, head)
            # nonzero biases keep ReLU inputs off the kink at exactly 0
            m = m.with_parameters([p if p.ndim == 2 else rng.normal(0, 0.5, size=p.shape) for p in m.parameters()])
            X = rng.normal(size=(3, 4))
            y = rng.integers(0, 4, size=3)
            _, grads = forward_backward(m, X, y, loss, power)
            params = m.parameters()
            for k, p in enumerate(params):
                def f(v, k=k):
                    trial_params = list(params)
                    trial_params[k] = v
                    return forward_backward(m.with_parameters(trial_params), X, y, loss, power)[0].value

                assert rel_error(grads[k], central_diff(f, p)) < 1e-4, (loss, k)


class TestAdam:
    def test_first_step_is_lr_sign(self):
        m = mlp_init([2, 2], 0)
        grads = [np.array([[0.3, -2.0], [1e-3, -5.0]]), np.array([4.0, -0.1])]
        new, state = adam_step(m, grads, AdamState.for_model(m, lr=2e-4))
        for p, q, g in zip(m.parameters(), new.parameters(), grads):
            np.testing.assert_allclose(q - p, -2e-4 * np.sign(g), rtol=1e-4)
        assert state.step == 1

    def test_zero_gradient_no_change(self):
        m = mlp_init([3, 4, 2], 0)
        new, _ = adam_step(m, [np.zeros_like(p) for p in m.parameters()], AdamState.for_model(m))
        assert all(np.array_equal(a, b) for a, b in zip(m.parameters(), new.parameters()))

    def test_deterministic(self, rng):
        m = mlp_init([3, 4, 2], 0)
        grads = [rng.normal(size=p.shape) for p in m.parameters()]
        a, sa = adam_step(m, grads, AdamState.for_model(m))
        b, sb = adam_step(m, grads, AdamState.for_model(m))
        assert all(np.array_equal(x, y) for x, y in zip(a.parameters(), b.parameters()))
        assert all(np.array_equal(x, y) for x, y in zip(sa.v, sb.v))

    def test_matches_textbook_over_steps(self, rng):
        m = mlp_init([2, 3], 0)
        state = AdamState.for_model(m, lr=0.01)
        theta = [p.copy() for p in m.parameters()]
        mom = [np.zeros_like(p) for p in theta]
        vel = [np.zeros_like(p) for p in theta]
        for t in range(1, 6):
            grads = [rng.normal(size=p.shape) for p in theta]
            m, state = adam_step(m, grads, state)
            for i, g in enumerate(grads):
                mom[i] = 0.9 * mom[i] + 0.1 * g
                vel[i] = 0.999 * vel[i] + 0.001 * g * g
                theta[i] = theta[i] - 0.01 * (mom[i] / (1 - 0.9**t)) / (np.sqrt(vel[i] / (1 - 0.999**t)) + 1e-8)
        for a, b in zip(m.parameters(), theta):
            np.testing.assert_allclose(a, b, rtol=1e-12)

    def test_shape_mismatch(self):
        m = mlp_init([3, 2], 0)
        with pytest.raises(InvalidInputError):
            adam_step(m, [np.zeros((3, 3)), np.zeros(2)], AdamState.for_model(m))


class TestFit:
    def test_separable_reaches_perfect_accuracy(self):
        ds = separable()
        cfg = TrainConfig("ce", epochs=50, batch_size=16, lr=1e-2, seed=0, hidden=(8,))
        m, trace = fit(build_model(2, 2, cfg), ds, cfg)
        assert summary_metrics(predict_labels(m, ds.X), ds.labels, 2).accuracy == 1.0
        assert trace[-1] < trace[0]

    @pytest.mark.parametrize("loss, power", [("cdw_ce", 2.0), ("corn", None)])
    def test_loss_decreases_other_heads(self, loss, power):
        ds = separable()
        cfg = TrainConfig(loss, power, epochs=50, batch_size=16, lr=1e-2, seed=0, hidden=(8,))
        m, trace = fit(build_model(2, 2, cfg), ds, cfg)
        assert trace[-1] < trace[0]
        assert summary_metrics(predict_labels(m, ds.X), ds.labels, 2).accuracy == 1.0

    def test_trace_length(self):
        cfg = TrainConfig("ce", epochs=7, hidden=(4,))
        _, trace = fit(build_model(2, 2, cfg), separable(50), cfg)
        assert len(trace) == 7

    def test_deterministic_bytes(self):
        ds = generate_synthetic(SyntheticConfig(n_groups=20, samples_per_group=5), 0)
        cfg = TrainConfig("cdw_ce", 3.0, epochs=3, seed=9)
        a, ta = fit(build_model(16, 4, cfg), ds, cfg)
        b, tb = fit(build_model(16, 4, cfg), ds, cfg)
        assert ta == tb
        assert all(p.tobytes() == q.tobytes() for p, q in zip(a.parameters(), b.parameters()))

    def test_input_model_untouched(self):
        cfg = TrainConfig("ce", epochs=2, hidden=(4,))
        m = build_model(2, 2, cfg)
        before = [p.copy() for p in m.parameters()]
        fit(m, separable(40), cfg)
        assert all(np.array_equal(a, b) for a, b in zip(before, m.parameters()))

    def test_empty_dataset(self):
        ds = Dataset(np.zeros((0, 2)), [], [], 2)
        cfg = TrainConfig("ce", epochs=1, hidden=(4,))
        with pytest.raises(InvalidInputError):
            fit(build_model(2, 2, cfg), ds, cfg)

    def test_cdw_without_power(self):
        cfg = TrainConfig("cdw_ce", None, epochs=1, hidden=(4,))
        with pytest.raises(InvalidInputError):
            fit(build_model(2, 2, TrainConfig("ce", hidden=(4,))), separable(10), cfg)


class TestPredict:
    def _fixed_logits(self, logits, head="softmax"):
        k = len(logits)
        return MlpModel((1, k), (np.zeros((k, 1)),), (np.array(logits, dtype=float),), head)

    def test_argmax(self):
        assert predict_labels(self._fixed_logits([0.1, 2.0, 0.3, 0.2]), [[0.0]]).tolist() == [1]

    def test_tie_lowest_index(self):
        assert predict_labels(self._fixed_logits([1.0, 1.0]), [[0.0]]).tolist() == [0]

    def test_corn_saturated(self):
        assert predict_labels(self._fixed_logits([30.0, 30.0, 30.0], "corn"), [[0.0]]).tolist() == [3]

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidInputError):
            predict_labels(mlp_init([3, 4], 0), np.ones((2, 2)))


def test_checkpoint_round_trip(tmp_path):
    m = mlp_init([5, 7, 3], 4, "corn")
    save_checkpoint(m, tmp_path / "m.json", meta={"loss": "corn"})
    back, meta = load_checkpoint(tmp_path / "m.json")
    assert back.head == "corn" and back.layer_sizes == (5, 7, 3) and meta == {"loss": "corn"}
    assert all(p.tobytes() == q.tobytes() for p, q in zip(m.parameters(), back.parameters()))


def test_checkpoint_rejects_foreign_file(tmp_path):
    (tmp_path / "x.json").write_text('{"format": "other"}')
    with pytest.raises(InvalidInputError):
        load_checkpoint(tmp_path / "x.json")
