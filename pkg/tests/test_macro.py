import math

import numpy as np
import pytest

from pixelcause import (
    causal_partition,
    grating_world,
    observational_partition,
    residual_confounding_example,
    sample_world_constrained,
    set_partitions,
    spurious_correlate,
    verify_complete_description,
)
from pixelcause.counterexamples import find_coarsening_violation
from pixelcause.errors import ConfigError, NotACoarsening
from pixelcause.grating import GratingConfig
from pixelcause.macro import partition_entropy

from reference import make_w0


class TestSpuriousCorrelate:
    def test_w0_assignment(self):
        a = spurious_correlate(make_w0())
        assert list(a.c_of) == [0, 0]
        assert list(a.s_of) == [1, 2]

    def test_identical_partitions_give_constant_s(self):
        world, _ = residual_confounding_example()
        a = spurious_correlate(world)
        assert set(int(s) for s in a.s_of) == {1}

    def test_grating_macro_variables_track_bars(self):
        # image index i = 2*hbar + vbar: the causal class must track the h-bar,
        # the within-class index must track the v-bar
        world = grating_world(GratingConfig())
        a = spurious_correlate(world)
        for vbar in range(2):
            for hbar in range(2):
                i = 2 * hbar + vbar
                assert int(a.c_of[i]) == hbar
                assert int(a.s_of[i]) == vbar + 1

    def test_reconstructs_both_partitions(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            spec = [((0, 1), 0.25), ((2, 3), 0.55), ((4,), 0.85)]
            world = sample_world_constrained(spec, 3, rng)
            a = spurious_correlate(world)
            obs = observational_partition(world)
            caus = causal_partition(world)
            pair_blocks = {
                frozenset(m) for m in _group(lambda i: (a.c_of[i], a.s_of[i]), 5)
            }
            assert pair_blocks == {frozenset(m) for m, _ in obs.classes()}
            c_blocks = {frozenset(m) for m in _group(lambda i: int(a.c_of[i]), 5)}
            assert c_blocks == {frozenset(m) for m, _ in caus.classes()}
            for k in range(caus.num_classes):
                members = [i for i in range(5) if a.c_of[i] == k]
                s_vals = sorted(int(a.s_of[i]) for i in members)
                assert sorted(set(s_vals)) == list(range(1, max(s_vals) + 1))

    def test_violating_world_raises(self):
        cx = find_coarsening_violation(
            "obs-coarsens-causal", 2, 3, np.random.default_rng(0)
        )
        with pytest.raises(NotACoarsening):
            spurious_correlate(cx.world)


def _group(key, n):
    groups = {}
    for i in range(n):
        groups.setdefault(key(i), []).append(i)
    return groups.values()


class TestSetPartitions:
    @pytest.mark.parametrize("n,bell", [(1, 1), (2, 2), (3, 5), (4, 15), (6, 203)])
    def test_bell_counts(self, n, bell):
        assert sum(1 for _ in set_partitions(n)) == bell

    def test_canonical_labels(self):
        for labels in set_partitions(4):
            assert labels[0] == 0
            for pos in range(1, 4):
                assert labels[pos] <= max(labels[:pos]) + 1


class TestVerifyCompleteDescription:
    def test_w0_passes_and_minimizer_is_observational(self):
        w0 = make_w0()
        a = spurious_correlate(w0)
        report = verify_complete_description(w0, a)
        assert report.holds
        assert report.value_check_max_error <= 1e-12
        assert report.minimizer_is_pair_partition
        obs = observational_partition(w0)
        marginal = np.array([0.5, 0.5])
        assert report.min_entropy == pytest.approx(
            partition_entropy([int(c) for c in obs.class_of], marginal)
        )
        assert report.min_entropy == pytest.approx(report.pair_entropy)

    def test_all_singleton_observational(self):
        # only the all-singleton partition can reproduce P(T|I) here
        world, _ = residual_confounding_example()
        a = spurious_correlate(world)
        report = verify_complete_description(world, a)
        assert report.num_qualifying_partitions == 1
        assert report.holds

    def test_constrained_world_passes(self):
        world = sample_world_constrained(
            [((0, 1), 0.3), ((2,), 0.8)], 2, np.random.default_rng(0)
        )
        report = verify_complete_description(world, spurious_correlate(world))
        assert report.holds
        assert report.value_check_max_error <= 1e-10

    def test_large_space_rejected(self):
        rng = np.random.default_rng(0)
        spec = [((i,), 0.1 + 0.08 * i) for i in range(9)]
        world = sample_world_constrained(spec, 2, rng)
        with pytest.raises(ConfigError):
            verify_complete_description(world, spurious_correlate(world))

    def test_entropy_uses_natural_log(self):
        assert partition_entropy([0, 1], np.array([0.5, 0.5])) == pytest.approx(
            math.log(2)
        )


class TestResidualConfoundingExample:
    def test_fixed_values(self):
        _, report = residual_confounding_example()
        assert report.interventional_pair[0] == pytest.approx(0.30, abs=1e-12)
        assert report.interventional_pair[1] == pytest.approx(0.65, abs=1e-12)
        assert report.observational_pair[0] == pytest.approx(0.18, abs=1e-12)
        assert report.observational_pair[1] == pytest.approx(0.80, abs=1e-12)

    def test_all_inequalities_hold(self):
        _, report = residual_confounding_example()
        assert report.interventional_differs
        assert report.observational_differs
        assert report.observational_not_interventional
        assert report.s_is_constant
        assert report.c_retains_noncausal_information
        assert report.holds

    def test_c_is_predictive_but_not_causal(self):
        _, report = residual_confounding_example()
        assert report.p_t_given_c == pytest.approx((0.18, 0.80), abs=1e-12)
        assert report.p_t_do_c == pytest.approx((0.30, 0.65), abs=1e-12)
