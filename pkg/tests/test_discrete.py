import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pixelcause import (
    DiscreteWorld,
    interventional_posterior,
    observational_posterior,
    sample_world,
    sample_world_constrained,
)
from pixelcause.discrete import residual_confounding_world
from pixelcause.errors import ConfigError, ZeroMarginal

from reference import do_posterior_ref, make_w0, obs_posterior_ref


class TestObservationalPosterior:
    def test_w0_values(self):
        w0 = make_w0()
        assert observational_posterior(w0, 0) == pytest.approx(0.1, abs=1e-12)
        assert observational_posterior(w0, 1) == pytest.approx(0.7, abs=1e-12)

    def test_matches_joint_enumeration(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            w = sample_world(int(rng.integers(1, 5)), int(rng.integers(1, 7)), rng)
            for i in range(w.num_images):
                assert observational_posterior(w, i) == pytest.approx(
                    obs_posterior_ref(w, i), abs=1e-12
                )

    def test_constant_alpha_half(self):
        w = DiscreteWorld(
            alpha=np.full((2, 3), 0.5),
            beta=np.random.default_rng(0).dirichlet(np.ones(3), size=2).T,
            gamma=np.array([0.25, 0.75]),
        )
        for i in range(3):
            assert observational_posterior(w, i) == pytest.approx(0.5, abs=1e-12)

    def test_zero_marginal_raises(self):
        w = DiscreteWorld(
            alpha=np.array([[0.2, 0.4]]),
            beta=np.array([[1.0], [0.0]]),
            gamma=np.array([1.0]),
        )
        with pytest.raises(ZeroMarginal):
            observational_posterior(w, 1)
        # the interventional posterior does not condition on the image marginal
        assert interventional_posterior(w, 1) == pytest.approx(0.6)


class TestInterventionalPosterior:
    def test_w0_values(self):
        w0 = make_w0()
        assert interventional_posterior(w0, 0) == pytest.approx(0.4, abs=1e-12)
        assert interventional_posterior(w0, 1) == pytest.approx(0.4, abs=1e-12)
        assert do_posterior_ref(w0, 0) == pytest.approx(0.4, abs=1e-12)

    def test_matches_do_enumeration(self):
        rng = np.random.default_rng(4)
        for _ in range(25):
            w = sample_world(int(rng.integers(1, 5)), int(rng.integers(1, 7)), rng)
            for i in range(w.num_images):
                assert interventional_posterior(w, i) == pytest.approx(
                    do_posterior_ref(w, i), abs=1e-12
                )

    def test_k1_collapses_to_observational(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            w = sample_world(1, int(rng.integers(1, 7)), rng)
            for i in range(w.num_images):
                assert abs(
                    interventional_posterior(w, i) - observational_posterior(w, i)
                ) <= 1e-12

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_invariant_under_beta_resampling(self, seed):
        rng = np.random.default_rng(seed)
        w = sample_world(3, 4, rng)
        before = [interventional_posterior(w, i) for i in range(4)]
        w2 = DiscreteWorld(
            alpha=w.alpha, beta=rng.dirichlet(np.ones(4), size=3).T, gamma=w.gamma
        )
        after = [interventional_posterior(w2, i) for i in range(4)]
        assert np.max(np.abs(np.array(before) - np.array(after))) <= 1e-12


class TestSampleWorld:
    def test_deterministic_from_seed(self):
        a = sample_world(2, 3, np.random.default_rng(7))
        b = sample_world(2, 3, np.random.default_rng(7))
        assert np.array_equal(a.alpha, b.alpha)
        assert np.array_equal(a.beta, b.beta)
        assert np.array_equal(a.gamma, b.gamma)

    def test_distribution_invariants(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            w = sample_world(int(rng.integers(1, 6)), int(rng.integers(1, 8)), rng)
            assert np.max(np.abs(w.beta.sum(axis=0) - 1.0)) <= 1e-12
            assert abs(w.gamma.sum() - 1.0) <= 1e-12
            for arr in (w.alpha, w.beta, w.gamma):
                assert arr.min() >= 0.0 and arr.max() <= 1.0

    def test_unconstrained_values_pairwise_distinct(self):
        # continuous sampling makes exact observational ties probability zero,
        # so the coarsening relation holds vacuously on unconstrained worlds
        rng = np.random.default_rng(13)
        for _ in range(1000):
            w = sample_world(4, 6, rng)
            vals = sorted(observational_posterior(w, i) for i in range(6))
            assert all(b - a > 1e-9 for a, b in zip(vals, vals[1:]))

    def test_bad_shapes_rejected(self):
        with pytest.raises(ConfigError):
            sample_world(0, 3, np.random.default_rng(0))


class TestSampleWorldConstrained:
    SPEC = [((0, 1), 0.3), ((2,), 0.8)]

    def test_pins_observational_values(self):
        w = sample_world_constrained(self.SPEC, 2, np.random.default_rng(0))
        assert observational_posterior(w, 0) == pytest.approx(0.3, abs=1e-9)
        assert observational_posterior(w, 1) == pytest.approx(0.3, abs=1e-9)
        assert observational_posterior(w, 2) == pytest.approx(0.8, abs=1e-9)

    def test_class_shares_interventional_value(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            w = sample_world_constrained(self.SPEC, int(rng.integers(2, 5)), rng)
            assert abs(
                interventional_posterior(w, 0) - interventional_posterior(w, 1)
            ) <= 1e-9

    def test_deterministic_from_seed(self):
        a = sample_world_constrained(self.SPEC, 3, np.random.default_rng(21))
        b = sample_world_constrained(self.SPEC, 3, np.random.default_rng(21))
        assert np.array_equal(a.alpha, b.alpha)

    def test_boundary_values_rejected(self):
        for bad in (0.0, 1.0):
            with pytest.raises(ConfigError):
                sample_world_constrained([((0,), bad)], 2, np.random.default_rng(0))

    def test_k1_rejected(self):
        with pytest.raises(ConfigError):
            sample_world_constrained(self.SPEC, 1, np.random.default_rng(0))

    def test_overlapping_classes_rejected(self):
        with pytest.raises(ConfigError):
            sample_world_constrained(
                [((0, 1), 0.3), ((1, 2), 0.8)], 2, np.random.default_rng(0)
            )


def test_residual_confounding_world_is_valid():
    w = residual_confounding_world()
    assert w.num_h_states == 2 and w.num_images == 2
    assert abs(w.gamma.sum() - 1.0) <= 1e-12
    assert np.max(np.abs(w.beta.sum(axis=0) - 1.0)) <= 1e-12
