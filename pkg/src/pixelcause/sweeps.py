"""Verification campaigns over randomly sampled constrained worlds."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .discrete import sample_world_constrained
from .macro import spurious_correlate, verify_complete_description
from .partitions import causal_partition, is_coarsening, observational_partition


def random_observational_spec(
    n_images: int, rng: np.random.Generator, min_gap: float = 0.02
) -> list[tuple[tuple[int, ...], float]]:
    """A random partition of the image indices with random interior values
    separated by at least ``min_gap``."""
    n_classes = int(rng.integers(1, n_images + 1))
    labels = rng.integers(0, n_classes, size=n_images)
    present = sorted(set(int(c) for c in labels))
    while True:
        values = np.sort(rng.uniform(0.1, 0.9, size=len(present)))
        if len(present) == 1 or np.min(np.diff(values)) >= min_gap:
            break
    spec = []
    for value, cls in zip(values, present):
        members = tuple(int(i) for i in np.flatnonzero(labels == cls))
        spec.append((members, float(value)))
    return spec


@dataclass
class SweepReport:
    trials: int
    coarsening_violations: int = 0
    spec_mismatches: int = 0
    violation_examples: list[dict] = field(default_factory=list)
    elapsed_s: float = 0.0

    @property
    def clean(self) -> bool:
        return self.coarsening_violations == 0 and self.spec_mismatches == 0

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "coarsening_violations": self.coarsening_violations,
            "spec_mismatches": self.spec_mismatches,
            "violation_examples": self.violation_examples,
            "elapsed_s": self.elapsed_s,
            "clean": self.clean,
        }


def coarsening_sweep(
    trials: int,
    seed: int = 0,
    tolerance: float = 1e-9,
    k_choices=(2, 3, 4),
    n_choices=(3, 4, 5, 6),
) -> SweepReport:
    """Sample constrained worlds across shapes and check that the causal
    partition coarsens the observational one in every single world."""
    rng = np.random.default_rng(seed)
    report = SweepReport(trials=trials)
    start = time.time()
    for _ in range(trials):
        K = int(rng.choice(k_choices))
        N = int(rng.choice(n_choices))
        spec = random_observational_spec(N, rng)
        world = sample_world_constrained(spec, K, rng)
        obs = observational_partition(world, tolerance)
        if not _partition_matches_spec(obs, spec, tolerance):
            report.spec_mismatches += 1
            continue
        caus = causal_partition(world, tolerance)
        result = is_coarsening(caus, obs)
        if not result.holds:
            report.coarsening_violations += 1
            if len(report.violation_examples) < 5:
                report.violation_examples.append(
                    {"world": world.to_dict(), "report": result.to_dict()}
                )
    report.elapsed_s = time.time() - start
    return report


def _partition_matches_spec(partition, spec, tolerance) -> bool:
    blocks = {frozenset(m) for m, _ in partition.classes()}
    want = {frozenset(members) for members, _ in spec}
    if blocks != want:
        return False
    by_members = {frozenset(m): v for m, v in partition.classes()}
    return all(
        abs(by_members[frozenset(members)] - value) <= tolerance
        for members, value in spec
    )


@dataclass
class MacroSweepReport:
    worlds: int
    value_check_failures: int = 0
    entropy_check_failures: int = 0
    max_value_error: float = 0.0
    elapsed_s: float = 0.0

    @property
    def clean(self) -> bool:
        return self.value_check_failures == 0 and self.entropy_check_failures == 0

    def to_dict(self) -> dict:
        return {
            "worlds": self.worlds,
            "value_check_failures": self.value_check_failures,
            "entropy_check_failures": self.entropy_check_failures,
            "max_value_error": self.max_value_error,
            "elapsed_s": self.elapsed_s,
            "clean": self.clean,
        }


def macro_description_sweep(
    worlds: int,
    seed: int = 0,
    tolerance: float = 1e-9,
    value_atol: float = 1e-10,
    k_choices=(2, 3, 4),
    n_choices=(3, 4, 5, 6),
) -> MacroSweepReport:
    """Run the exhaustive two-part macro-variable completeness check on
    constrained-sampled worlds."""
    rng = np.random.default_rng(seed)
    report = MacroSweepReport(worlds=worlds)
    start = time.time()
    for _ in range(worlds):
        K = int(rng.choice(k_choices))
        N = int(rng.choice(n_choices))
        spec = random_observational_spec(N, rng)
        world = sample_world_constrained(spec, K, rng)
        assignment = spurious_correlate(world, tolerance)
        result = verify_complete_description(
            world, assignment, tolerance, value_atol
        )
        report.max_value_error = max(report.max_value_error, result.value_check_max_error)
        if not result.value_check_holds:
            report.value_check_failures += 1
        if not (result.entropy_check_holds and result.minimizer_is_pair_partition):
            report.entropy_check_failures += 1
    report.elapsed_s = time.time() - start
    return report
