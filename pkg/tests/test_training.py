import numpy as np
import pytest

import oracles
from mlcc.cost import tiny_schema
from mlcc.embedding import FeatureSchema
from mlcc.errors import ConfigError, DivergenceError
from mlcc.interaction import PlcConfig
from mlcc.models import ModelConfig, build_model
from mlcc.tensor import Tensor, backward, logistic_loss, matmul, reshape
from mlcc.training import (
    SGD,
    Adam,
    Encoded,
    MetricError,
    Momentum,
    TrainConfig,
    auc,
    evaluate,
    logloss,
    train,
)


class TestAuc:
    def test_perfect(self):
        assert auc([0.9, 0.2, 0.8], [1, 0, 1]) == 1.0

    def test_tie_half_credit(self):
        assert auc([0.5, 0.5], [1, 0]) == 0.5

    def test_antisymmetry(self):
        rng = np.random.default_rng(0)
        s, y = rng.normal(size=200), rng.integers(0, 2, size=200)
        assert auc(-s, y) == pytest.approx(1 - auc(s, y), abs=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_pair_count(self, seed):
        rng = np.random.default_rng(seed)
        s = rng.integers(0, 5, size=60).astype(float)  # many ties
        y = rng.integers(0, 2, size=60)
        assert auc(s, y) == pytest.approx(oracles.auc_pairs(s, y), abs=1e-12)

    def test_single_class(self):
        with pytest.raises(MetricError):
            auc([0.1, 0.2], [1, 1])

    def test_logloss(self):
        assert logloss([0.0, 0.0], [1, 0]) == pytest.approx(np.log(2))


class TestOptimizers:
    def test_sgd_step_is_exact(self):
        x = np.array([[1.5, -2.0]])
        w = Tensor([[0.3], [0.1]], requires_grad=True)
        backward(logistic_loss(reshape(matmul(Tensor(x), w), (1,)), [1]))
        z = 0.3 * 1.5 + 0.1 * -2.0
        hand = (1 / (1 + np.exp(-z)) - 1) * x.T
        np.testing.assert_allclose(w.grad, hand, atol=1e-15)
        SGD([w], 0.1).step()
        np.testing.assert_allclose(w.data, np.array([[0.3], [0.1]]) - 0.1 * hand, atol=1e-15)

    def test_momentum_accumulates(self):
        w = Tensor([1.0], requires_grad=True)
        opt = Momentum([w], 0.5, beta=0.5)
        for _ in range(2):
            w.grad = np.array([1.0])
            opt.step()
        np.testing.assert_allclose(w.data, [1.0 - 0.5 * 1.0 - 0.5 * 1.5])

    def test_adam_first_step_is_lr_sized(self):
        w = Tensor([0.0, 0.0], requires_grad=True)
        w.grad = np.array([3.0, -0.01])
        Adam([w], 0.1).step()
        np.testing.assert_allclose(w.data, [-0.1, 0.1], rtol=1e-6)

    def test_config_validation(self):
        for bad in (dict(lr=-1.0), dict(batch_size=0), dict(optimizer="rmsprop"), dict(beta2=1.0)):
            with pytest.raises(ConfigError):
                TrainConfig(**bad).validate()


def toy_dataset(rows=2000, seed=0):
    """Two fields; the label is a deterministic function of field ``a``."""
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 20, size=rows)
    b = rng.integers(0, 20, size=rows)
    return Encoded(np.stack([a, b], axis=1), (a % 2).astype(np.int8))


def toy_model(kind="dnn", seed=0):
    schema = FeatureSchema(["a", "b"], 20, 4)
    plc = None if kind == "dnn" else PlcConfig(2, (4, 4))
    return build_model(ModelConfig(kind, schema, plc, None if kind == "dnn" else 4, (8,)), seed=seed)


class TestTrain:
    def test_zero_lr_leaves_parameters(self):
        model = toy_model()
        before = model.state_dict()
        train(model, toy_dataset(300), None, TrainConfig(lr=0.0, batch_size=32, epochs=2, optimizer="sgd"))
        for k, v in model.state_dict().items():
            np.testing.assert_array_equal(v, before[k])

    @pytest.mark.parametrize("kind", ["dnn", "mlcc"])
    def test_separable_toy(self, kind):
        data = toy_dataset()
        model = toy_model(kind)
        res = train(model, data, data, TrainConfig(lr=0.01, batch_size=64, epochs=5, seed=1))
        assert res.best_auc > 0.99
        assert evaluate(model, data).auc > 0.99

    def test_same_seed_same_trace(self):
        data, valid = toy_dataset(600), toy_dataset(200, seed=1)
        cfg = TrainConfig(lr=0.01, batch_size=50, epochs=2, seed=3, eval_every=5)
        a = train(toy_model("mlcc"), data, valid, cfg)
        b = train(toy_model("mlcc"), data, valid, cfg)
        assert a.trace_csv() == b.trace_csv()
        for k in a.best_state:
            np.testing.assert_array_equal(a.best_state[k], b.best_state[k])

    def test_trace_layout(self):
        res = train(toy_model(), toy_dataset(200), toy_dataset(100, 1), TrainConfig(batch_size=50, epochs=2))
        lines = res.trace_csv().splitlines()
        assert lines[0] == "step,split,auc,logloss"
        assert [ln.split(",")[1] for ln in lines[1:]] == ["train", "valid", "train", "valid"]
        assert res.steps == 8

    def test_best_state_is_kept(self):
        res = train(toy_model(), toy_dataset(400), toy_dataset(200, 1),
                    TrainConfig(lr=0.01, batch_size=40, epochs=3, eval_every=4))
        valid = [m for m in res.history if m.split == "valid"]
        best = max(valid, key=lambda m: m.auc)
        assert res.best_step == best.step and res.best_auc == best.auc

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence(self):
        model = toy_model()
        model.readout[-1][1].data[...] = np.nan
        with pytest.raises(DivergenceError):
            train(model, toy_dataset(100), None, TrainConfig(batch_size=10))

    def test_float32_training(self):
        schema = tiny_schema(2, 2, 3)
        model = build_model(ModelConfig("mlcc", schema, PlcConfig(1, (2, 2)), 2, (4,)), dtype=np.float32)
        data = Encoded(np.array([[0, 1], [2, 0], [1, 1], [0, 2]]), np.array([1, 0, 1, 0]))
        train(model, data, data, TrainConfig(batch_size=2, epochs=2))
        assert all(p.dtype == np.float32 for p in model.parameters())
