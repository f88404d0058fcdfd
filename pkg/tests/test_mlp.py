import numpy as np
import pytest

from pixelcause import (
    ManipulationObjective,
    Predictor,
    TrainConfig,
    forward,
    init_predictor,
    input_gradient,
    train,
    weight_gradient,
)
from pixelcause.errors import ConfigError, DimensionMismatch, NonFiniteLoss
from pixelcause.mlp import batch_loss, forward_batch, objective_value


def _rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    diff = np.linalg.norm(analytic - numeric)
    return diff / max(np.linalg.norm(numeric), 1e-6)


def numeric_weight_gradient(model, X, y, loss, step=1e-5):
    """Central finite differences through every parameter."""
    grads = []
    for name in ("w1", "b1", "w2", "b2"):
        value = getattr(model, name)
        if name == "b2":
            up = Predictor(model.w1, model.b1, model.w2, value + step)
            down = Predictor(model.w1, model.b1, model.w2, value - step)
            grads.append(
                np.array([(batch_loss(up, X, y, loss) - batch_loss(down, X, y, loss)) / (2 * step)])
            )
            continue
        flat = value.ravel().copy()
        g = np.zeros_like(flat)
        for k in range(len(flat)):
            for sgn, target in ((1.0, None), (-1.0, None)):
                pass
            plus = flat.copy(); plus[k] += step
            minus = flat.copy(); minus[k] -= step
            kwargs_p = {n: getattr(model, n) for n in ("w1", "b1", "w2")}
            kwargs_m = dict(kwargs_p)
            kwargs_p[name] = plus.reshape(value.shape)
            kwargs_m[name] = minus.reshape(value.shape)
            up = Predictor(b2=model.b2, **kwargs_p)
            down = Predictor(b2=model.b2, **kwargs_m)
            g[k] = (batch_loss(up, X, y, loss) - batch_loss(down, X, y, loss)) / (2 * step)
        grads.append(g)
    return grads


def numeric_input_gradient(model, image, objective, step=1e-5):
    j = np.asarray(image, dtype=float).ravel()
    g = np.zeros_like(j)
    for k in range(len(j)):
        plus = j.copy(); plus[k] += step
        minus = j.copy(); minus[k] -= step
        g[k] = (
            objective_value(model, plus, objective)
            - objective_value(model, minus, objective)
        ) / (2 * step)
    return g


class TestForward:
    def test_zero_weights_give_half(self):
        model = Predictor(np.zeros((4, 6)), np.zeros(4), np.zeros(4), 0.0)
        assert forward(model, np.ones(6)) == pytest.approx(0.5)

    def test_deterministic(self):
        a = init_predictor(10, 8, np.random.default_rng(1))
        b = init_predictor(10, 8, np.random.default_rng(1))
        x = np.random.default_rng(2).random(10)
        assert forward(a, x) == forward(b, x)

    def test_binary_equals_relaxed_copy(self):
        model = init_predictor(9, 5, np.random.default_rng(3))
        binary = np.array([0, 1, 1, 0, 1, 0, 0, 1, 0], dtype=np.uint8)
        assert forward(model, binary) == forward(model, binary.astype(float))

    def test_output_strictly_inside_unit_interval(self):
        model = init_predictor(9, 5, np.random.default_rng(4))
        for x in np.random.default_rng(5).random((20, 9)):
            assert 0.0 < forward(model, x) < 1.0

    def test_dimension_mismatch(self):
        model = init_predictor(9, 5, np.random.default_rng(6))
        with pytest.raises(DimensionMismatch):
            forward(model, np.ones(8))

    def test_lipschitz_bound_from_weight_norms(self):
        model = init_predictor(12, 7, np.random.default_rng(7))
        L = 0.0625 * np.linalg.norm(model.w2) * np.linalg.norm(model.w1, 2)
        rng = np.random.default_rng(8)
        for _ in range(50):
            x = rng.random(12)
            delta = rng.normal(scale=0.05, size=12)
            assert abs(forward(model, x + delta) - forward(model, x)) <= L * np.linalg.norm(delta) + 1e-12


class TestWeightGradient:
    @pytest.mark.parametrize("loss", ["squared", "cross-entropy"])
    def test_matches_central_differences(self, loss):
        rng = np.random.default_rng(10)
        model = init_predictor(6, 4, rng)
        X = rng.random((8, 6))
        y = rng.random(8)
        g = weight_gradient(model, X, y, loss)
        numeric = numeric_weight_gradient(model, X, y, loss)
        assert _rel_error(g.w1.ravel(), numeric[0]) <= 1e-5
        assert _rel_error(g.b1, numeric[1]) <= 1e-5
        assert _rel_error(g.w2, numeric[2]) <= 1e-5
        assert _rel_error(np.array([g.b2]), numeric[3]) <= 1e-5

    def test_zero_at_perfect_fit(self):
        rng = np.random.default_rng(11)
        model = init_predictor(5, 3, rng)
        X = rng.random((6, 5))
        y = forward_batch(model, X)  # residuals exactly zero
        g = weight_gradient(model, X, y, "squared")
        assert g.norm() <= 1e-8

    def test_doubling_residuals_doubles_output_block(self):
        rng = np.random.default_rng(12)
        model = init_predictor(5, 3, rng)
        X = rng.random((6, 5))
        f = forward_batch(model, X)
        y = f - 0.1
        y2 = f - 0.2
        g1 = weight_gradient(model, X, y, "squared")
        g2 = weight_gradient(model, X, y2, "squared")
        assert np.allclose(g2.w2, 2 * g1.w2)
        assert g2.b2 == pytest.approx(2 * g1.b2)

    def test_empty_batch_rejected(self):
        model = init_predictor(5, 3, np.random.default_rng(13))
        with pytest.raises(DimensionMismatch):
            weight_gradient(model, np.empty((0, 5)), np.empty(0))


class TestInputGradient:
    def test_pure_metric_term(self):
        model = init_predictor(6, 4, np.random.default_rng(14))
        anchor = np.random.default_rng(15).random(6)
        obj = ManipulationObjective(target=0.9, anchor=anchor, tradeoff=1.0)
        j = np.random.default_rng(16).random(6)
        assert np.allclose(input_gradient(model, j, obj), 2 * (j - anchor))
        assert np.allclose(input_gradient(model, anchor, obj), 0.0)

    def test_zero_subgradient_at_kink(self):
        model = init_predictor(6, 4, np.random.default_rng(17))
        j = np.random.default_rng(18).random(6)
        obj = ManipulationObjective(
            target=forward(model, j), anchor=np.zeros(6), tradeoff=0.0
        )
        assert np.allclose(input_gradient(model, j, obj), 0.0)

    def test_matches_central_differences_away_from_kink(self):
        rng = np.random.default_rng(19)
        checked = 0
        while checked < 10:
            model = init_predictor(7, 5, rng)
            j = rng.random(7)
            anchor = rng.random(7)
            target = rng.random()
            if abs(forward(model, j) - target) <= 1e-3:
                continue
            obj = ManipulationObjective(target=target, anchor=anchor, tradeoff=0.5)
            analytic = input_gradient(model, j, obj)
            numeric = numeric_input_gradient(model, j, obj)
            assert _rel_error(analytic, numeric) <= 1e-5
            checked += 1


class TestTrain:
    def test_xor_converges(self):
        X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
        y = np.array([0.0, 1.0, 1.0, 0.0])
        model = init_predictor(2, 20, np.random.default_rng(42))
        config = TrainConfig(
            learning_rate=0.5, momentum=0.9, batch_size=4, epochs=2000, seed=42
        )
        result = train(model, X, y, config)
        assert batch_loss(result.model, X, y, "squared") <= 0.01

    def test_zero_epochs_forbidden(self):
        with pytest.raises(ConfigError):
            TrainConfig(epochs=0)

    def test_duplicated_samples_leave_gradient_unchanged(self):
        rng = np.random.default_rng(20)
        model = init_predictor(5, 3, rng)
        X = rng.random((6, 5))
        y = rng.random(6)
        g1 = weight_gradient(model, X, y)
        g2 = weight_gradient(model, np.vstack([X, X]), np.concatenate([y, y]))
        # the mean loss is mathematically identical; only float summation
        # order differs
        assert np.allclose(g1.w1, g2.w1, rtol=1e-12, atol=1e-15)
        assert np.allclose(g1.w2, g2.w2, rtol=1e-12, atol=1e-15)
        assert g1.b2 == pytest.approx(g2.b2, rel=1e-12)

    def test_bit_reproducible(self):
        rng = np.random.default_rng(21)
        X = rng.random((30, 6))
        y = rng.random(30)
        cfg = TrainConfig(epochs=5, seed=9, batch_size=8)
        a = train(init_predictor(6, 4, np.random.default_rng(1)), X, y, cfg)
        b = train(init_predictor(6, 4, np.random.default_rng(1)), X, y, cfg)
        assert np.array_equal(a.model.w1, b.model.w1)
        assert np.array_equal(a.model.w2, b.model.w2)
        assert a.epoch_losses == b.epoch_losses

    def test_targets_outside_unit_interval_rejected(self):
        model = init_predictor(3, 2, np.random.default_rng(22))
        with pytest.raises(ConfigError):
            train(model, np.zeros((2, 3)), np.array([0.5, 1.5]), TrainConfig(epochs=1))

    def test_non_finite_loss_aborts(self):
        model = Predictor(
            np.full((2, 3), np.inf), np.zeros(2), np.ones(2), 0.0
        )
        with pytest.raises(NonFiniteLoss):
            train(model, np.zeros((2, 3)), np.array([0.5, 0.5]), TrainConfig(epochs=1))

    def test_warning_attached_when_loss_rises(self):
        # a huge learning rate on a hard target makes the loss bounce
        rng = np.random.default_rng(23)
        X = rng.random((8, 4))
        y = rng.integers(0, 2, size=8).astype(float)
        model = init_predictor(4, 3, rng)
        result = train(
            model, X, y, TrainConfig(learning_rate=500.0, epochs=40, seed=3)
        )
        assert result.warning is None or "non-decreasing" in result.warning
