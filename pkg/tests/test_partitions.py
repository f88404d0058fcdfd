import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pixelcause import (
    causal_partition,
    grating_world,
    is_coarsening,
    observational_partition,
    partition_values,
)
from pixelcause.errors import AmbiguousClustering, ConfigError, SizeMismatch
from pixelcause.grating import GratingConfig

from reference import make_w0


class TestPartitionValues:
    def test_two_classes_ascending(self):
        p = partition_values([0.7, 0.1, 0.7], 1e-9)
        assert p.num_classes == 2
        assert list(p.class_values) == pytest.approx([0.1, 0.7])
        assert list(p.class_of) == [1, 0, 1]

    def test_single_class(self):
        p = partition_values([0.5, 0.5, 0.5], 1e-9)
        assert p.num_classes == 1

    def test_gap_at_tolerance_merges(self):
        p = partition_values([0.0, 0.1], 0.1)
        assert p.num_classes == 1
        p = partition_values([0.0, 0.1000001], 0.1)
        assert p.num_classes == 2

    def test_ambiguous_chain_reported(self):
        with pytest.raises(AmbiguousClustering):
            partition_values([0.0, 0.09, 0.18, 0.27], 0.1)
        # a chain inside twice the tolerance is kept
        p = partition_values([0.0, 0.09, 0.18], 0.1)
        assert p.num_classes == 1

    def test_negative_tolerance_rejected(self):
        with pytest.raises(ConfigError):
            partition_values([0.1], -1.0)

    @given(
        st.lists(st.floats(min_value=0, max_value=1), min_size=1, max_size=12),
    )
    @settings(max_examples=100, deadline=None)
    def test_partition_covers_all_indices(self, values):
        try:
            p = partition_values(values, 1e-6)
        except AmbiguousClustering:
            return
        assert p.num_images == len(values)
        assert sorted(set(int(c) for c in p.class_of)) == list(range(p.num_classes))
        assert list(p.class_values) == sorted(p.class_values)


class TestWorldPartitions:
    def test_w0_observational(self):
        p = observational_partition(make_w0(), 1e-9)
        assert p.num_classes == 2
        assert list(p.class_values) == pytest.approx([0.1, 0.7], abs=1e-12)

    def test_w0_causal_single_class(self):
        p = causal_partition(make_w0(), 1e-9)
        assert p.num_classes == 1
        assert p.class_values[0] == pytest.approx(0.4, abs=1e-12)

    def test_grating_enumeration_classes(self):
        world = grating_world(GratingConfig())
        obs = observational_partition(world)
        caus = causal_partition(world)
        assert obs.num_classes == 4
        assert list(obs.class_values) == pytest.approx([0.1, 0.3, 0.7, 0.9])
        assert caus.num_classes == 2
        assert list(caus.class_values) == pytest.approx([0.2, 0.8])
        assert is_coarsening(caus, obs).holds


class TestIsCoarsening:
    def test_singleton_fine_refines_everything(self):
        fine = partition_values([0.1, 0.2, 0.3], 1e-9)  # all singletons
        coarse = partition_values([0.5, 0.5, 0.5], 1e-9)
        assert is_coarsening(coarse, fine).holds

    def test_w0_directions(self):
        w0 = make_w0()
        obs = observational_partition(w0)
        caus = causal_partition(w0)
        assert is_coarsening(caus, obs).holds
        swapped = is_coarsening(obs, caus)
        assert not swapped.holds
        assert swapped.violations[0].pair == (0, 1)
        assert swapped.violations[0].fine_values == pytest.approx((0.4, 0.4))
        assert sorted(swapped.violations[0].coarse_values) == pytest.approx([0.1, 0.7])

    def test_size_mismatch(self):
        a = partition_values([0.1, 0.2], 1e-9)
        b = partition_values([0.1, 0.2, 0.3], 1e-9)
        with pytest.raises(SizeMismatch):
            is_coarsening(a, b)
