import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pixelcause import (
    CausalDataset,
    CausalRecord,
    GratingConfig,
    GratingOracle,
    LoopConfig,
    ManipulationRecord,
    OptimizerConfig,
    TrainConfig,
    causal_predictor_training,
    forward,
    generate_observational_dataset,
    init_predictor,
    manipulate,
    manipulation_distance,
    manipulation_error,
    manipulator_learning,
)
from pixelcause.errors import (
    ConfigError,
    EmptyBatch,
    InsufficientClasses,
    OracleAnswerMissing,
    UnknownObservationalClass,
)
from pixelcause.grating import detect_hbar, observational_class_values


def small_config(**kw):
    return GratingConfig(side=9, **kw)


def observations(config, n, seed=0):
    samples = generate_observational_dataset(config, n, np.random.default_rng(seed))
    return [(s.pixels, s.obs_prob) for s in samples], samples


class TestCausalPredictorTraining:
    def test_coarsened_labels_and_query_economy(self):
        config = small_config(seed=3)
        obs, _ = observations(config, 300)
        oracle = GratingOracle(config)
        _, dataset = causal_predictor_training(
            obs, observational_class_values(config), oracle,
            TrainConfig(epochs=2), hidden_units=16,
        )
        assert set(dataset.class_values()) == {0.2, 0.8}
        assert oracle.query_count == 4  # one exact query per observational class
        assert all(r.provenance == "coarsened-observational" for r in dataset)
        assert all(r.round == 0 for r in dataset)

    def test_coarsening_consistency(self):
        config = small_config(seed=4)
        obs, samples = observations(config, 200)
        oracle = GratingOracle(config)
        _, dataset = causal_predictor_training(
            obs, observational_class_values(config), oracle,
            TrainConfig(epochs=2), hidden_units=16,
        )
        by_class = {}
        for s, rec in zip(samples, dataset):
            by_class.setdefault(s.obs_prob, set()).add(rec.label)
        for labels in by_class.values():
            assert len(labels) == 1

    def test_single_class_dataset(self):
        config = small_config(seed=5)
        obs, _ = observations(config, 100)
        blanks = [(p, 0.1) for p, v in obs if v == 0.1][:20]
        oracle = GratingOracle(config)
        _, dataset = causal_predictor_training(
            blanks, [0.1], oracle, TrainConfig(epochs=1), hidden_units=8
        )
        assert oracle.query_count == 1
        assert len(dataset.class_values()) == 1

    def test_unknown_class_rejected(self):
        config = small_config()
        obs, _ = observations(config, 20)
        with pytest.raises(UnknownObservationalClass):
            causal_predictor_training(
                obs, [0.5], GratingOracle(config), TrainConfig(epochs=1)
            )

    def test_sample_mode_estimate_converges(self):
        config = small_config(seed=6)
        obs, _ = observations(config, 200)
        oracle = GratingOracle(config, mode="sample", rng=np.random.default_rng(7))
        _, dataset = causal_predictor_training(
            obs, observational_class_values(config), oracle,
            TrainConfig(epochs=1), reps=2000, hidden_units=8,
        )
        exact = {0.2, 0.8}
        for est in dataset.class_values():
            assert min(abs(est - e) for e in exact) <= 0.03
        assert oracle.query_count == 4 * 2000


@pytest.fixture(scope="module")
def trained():
    config = small_config(seed=8)
    obs, _ = observations(config, 400, seed=8)
    oracle = GratingOracle(config)
    model, dataset = causal_predictor_training(
        obs, observational_class_values(config), oracle,
        TrainConfig(epochs=20, salt_noise=0.05, weight_decay=1e-3),
    )
    return config, model, dataset


class TestManipulate:

    def test_identity_when_already_in_class(self, trained):
        _, model, dataset = trained
        rec = dataset[0]
        target = forward(model, rec.pixels.ravel())
        out = manipulate(
            model, rec.pixels, target, OptimizerConfig(), np.random.default_rng(0)
        )
        assert np.array_equal(out.output, rec.pixels)
        assert out.distance == 0.0

    def test_pure_distance_tradeoff_is_identity(self, trained):
        _, model, dataset = trained
        rec = dataset[1]
        out = manipulate(
            model,
            rec.pixels,
            1.0 - rec.label,
            OptimizerConfig(tradeoff=1.0),
            np.random.default_rng(1),
        )
        assert np.array_equal(out.output, rec.pixels)

    def test_bad_target_rejected(self, trained):
        _, model, dataset = trained
        with pytest.raises(ConfigError):
            manipulate(model, dataset[0].pixels, 1.5, OptimizerConfig(), np.random.default_rng(0))

    def test_moves_prediction_toward_target(self, trained):
        _, model, dataset = trained
        sources = [r for r in dataset if r.label < 0.5][:10]
        improved = 0
        rng = np.random.default_rng(2)
        for rec in sources:
            before = forward(model, rec.pixels.ravel())
            out = manipulate(model, rec.pixels, 0.8, OptimizerConfig(), rng)
            if abs(out.predicted - 0.8) < abs(before - 0.8):
                improved += 1
        assert improved >= 8


class TestMetrics:
    def _rec(self, target, answer, distance=1.0):
        img = np.zeros((3, 3), dtype=np.uint8)
        return ManipulationRecord(
            source=img, target_value=target, output=img,
            predicted=target, distance=distance, oracle_answer=answer,
        )

    def test_exact_answers_give_zero_error(self):
        recs = [self._rec(0.8, 0.8), self._rec(0.2, 0.2)]
        assert manipulation_error(recs) == 0.0

    def test_eq2_arithmetic(self):
        recs = [self._rec(0.8, 0.2)] + [self._rec(0.8, 0.8)] * 3
        assert manipulation_error(recs) == pytest.approx(0.15)

    def test_distance_mean(self):
        img = np.zeros((3, 3), dtype=np.uint8)
        out = img.copy()
        out[0, :2] = 1
        out[1, :2] = 1
        rec = ManipulationRecord(
            source=img, target_value=0.8, output=out,
            predicted=0.8, distance=2.0, oracle_answer=0.8,
        )
        assert manipulation_distance([rec]) == pytest.approx(2.0)  # 4 pixels -> sqrt(4)

    def test_empty_batch(self):
        with pytest.raises(EmptyBatch):
            manipulation_error([])
        with pytest.raises(EmptyBatch):
            manipulation_distance([])

    def test_missing_answer(self):
        rec = self._rec(0.8, 0.8)
        unanswered = ManipulationRecord(
            source=rec.source, target_value=0.8, output=rec.output,
            predicted=0.8, distance=0.0,
        )
        with pytest.raises(OracleAnswerMissing):
            manipulation_error([rec, unanswered])

    @given(st.permutations(list(range(6))))
    @settings(max_examples=30, deadline=None)
    def test_permutation_and_duplication_invariance(self, perm):
        recs = [self._rec(0.8, a, d) for a, d in
                zip([0.2, 0.8, 0.8, 0.2, 0.8, 0.8], [1, 2, 3, 4, 5, 6])]
        shuffled = [recs[i] for i in perm]
        assert manipulation_error(shuffled) == pytest.approx(manipulation_error(recs))
        assert manipulation_distance(shuffled) == pytest.approx(manipulation_distance(recs))
        doubled = recs + recs
        assert manipulation_error(doubled) == pytest.approx(manipulation_error(recs))
        assert manipulation_distance(doubled) == pytest.approx(manipulation_distance(recs))


def _small_loop_setup(seed=9, n=250):
    config = small_config(seed=seed)
    obs, _ = observations(config, n, seed=seed)
    oracle = GratingOracle(config)
    train_cfg = TrainConfig(epochs=10, salt_noise=0.05, weight_decay=1e-3, seed=seed)
    model, dataset = causal_predictor_training(
        obs, observational_class_values(config), oracle, train_cfg, hidden_units=40
    )
    return config, oracle, dataset, train_cfg


class TestManipulatorLearning:
    def test_single_round_query_accounting(self):
        config, oracle, dataset, train_cfg = _small_loop_setup()
        before = oracle.query_count
        loop = LoopConfig(
            rounds=1, queries_per_round=25, train=train_cfg, hidden_units=40, seed=1
        )
        result = manipulator_learning(dataset, oracle, loop)
        assert oracle.query_count - before == 25
        assert result.metrics[0].oracle_queries == oracle.query_count
        assert len(result.dataset) == 250 + 25
        appended = [r for r in result.dataset if r.provenance == "manipulated"]
        assert len(appended) == 25
        assert all(r.round == 1 for r in appended)

    def test_total_oracle_accounting(self):
        config, oracle, dataset, train_cfg = _small_loop_setup(seed=10)
        loop = LoopConfig(
            rounds=3, queries_per_round=20, train=train_cfg, hidden_units=40, seed=2
        )
        manipulator_learning(dataset, oracle, loop)
        # 4 observational classes (exact mode) + rounds * Q
        assert oracle.query_count == 4 + 3 * 20

    def test_deterministic_metrics(self):
        metrics = []
        for _ in range(2):
            config, oracle, dataset, train_cfg = _small_loop_setup(seed=11)
            loop = LoopConfig(
                rounds=2, queries_per_round=15, train=train_cfg, hidden_units=40, seed=3
            )
            result = manipulator_learning(dataset, oracle, loop)
            metrics.append(
                [(m.manipulation_error, m.manipulation_distance) for m in result.metrics]
            )
        assert metrics[0] == metrics[1]

    def test_insufficient_classes(self):
        img = np.zeros((5, 5), dtype=np.uint8)
        dataset = CausalDataset(
            [CausalRecord(pixels=img, label=0.2, provenance="coarsened-observational")] * 5
        )
        with pytest.raises(InsufficientClasses):
            manipulator_learning(dataset, GratingOracle(small_config()), LoopConfig(rounds=1, queries_per_round=2))

    def test_q_exceeding_dataset_rejected(self):
        config, oracle, dataset, train_cfg = _small_loop_setup(seed=12, n=30)
        loop = LoopConfig(rounds=1, queries_per_round=500, train=train_cfg)
        with pytest.raises(ConfigError):
            manipulator_learning(dataset, oracle, loop)

    def test_early_stop(self):
        config, oracle, dataset, train_cfg = _small_loop_setup(seed=13)
        loop = LoopConfig(
            rounds=8, queries_per_round=20, train=train_cfg, hidden_units=40,
            seed=4, stop_threshold=0.9,  # trivially satisfied after round 1
        )
        result = manipulator_learning(dataset, oracle, loop)
        assert len(result.metrics) == 1


class TestVbarNonCausality:
    def test_oracle_ignores_vbar_flips(self):
        config = small_config(seed=14)
        oracle = GratingOracle(config)
        rng = np.random.default_rng(14)
        from pixelcause.grating import add_vbar, grating_sample

        for _ in range(100):
            s = grating_sample(config, rng)
            assert oracle.query(s.pixels) == oracle.query(add_vbar(s.pixels, rng))
