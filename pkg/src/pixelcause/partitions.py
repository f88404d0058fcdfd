"""Value partitions of a finite image space and coarsening checks.

A partition groups image indices by (approximately) equal probability values.
Classes are built by single linkage over the sorted values: adjacent sorted
values closer than the tolerance join the same class.  A class whose total
spread exceeds twice the tolerance is reported as ambiguous rather than merged
silently.  Class ids are assigned in ascending order of the class value, so
partition construction is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .discrete import (
    DiscreteWorld,
    interventional_posterior,
    observational_posterior,
)
from .errors import AmbiguousClustering, ConfigError, SizeMismatch


@dataclass(frozen=True, eq=False)
class Partition:
    class_of: np.ndarray      # per-image class id, 0..M-1
    class_values: np.ndarray  # representative value per class, ascending
    tolerance: float

    def __post_init__(self):
        object.__setattr__(self, "class_of", np.asarray(self.class_of, dtype=int))
        object.__setattr__(self, "class_values", np.asarray(self.class_values, dtype=float))

    @property
    def num_images(self) -> int:
        return len(self.class_of)

    @property
    def num_classes(self) -> int:
        return len(self.class_values)

    def members(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.class_of == k)

    def value_of(self, i: int) -> float:
        return float(self.class_values[self.class_of[i]])

    def classes(self) -> list[tuple[tuple[int, ...], float]]:
        return [
            (tuple(int(i) for i in self.members(k)), float(self.class_values[k]))
            for k in range(self.num_classes)
        ]

    def same_structure(self, other: "Partition") -> bool:
        if self.num_images != other.num_images:
            return False
        return {frozenset(m) for m, _ in self.classes()} == {
            frozenset(m) for m, _ in other.classes()
        }

    def to_dict(self) -> dict:
        return {
            "class_of": [int(c) for c in self.class_of],
            "class_values": [float(v) for v in self.class_values],
            "tolerance": self.tolerance,
        }


def partition_values(values, tolerance: float) -> Partition:
    """Group indices whose values tie within ``tolerance`` (single linkage)."""
    if tolerance < 0:
        raise ConfigError("tolerance must be non-negative")
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n == 0:
        raise ConfigError("cannot partition an empty value list")
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    class_of = np.empty(n, dtype=int)
    reps: list[float] = []
    start = 0
    current = 0
    for pos in range(1, n + 1):
        boundary = pos == n or sorted_vals[pos] - sorted_vals[pos - 1] > tolerance
        if not boundary:
            continue
        chain = sorted_vals[start:pos]
        if chain[-1] - chain[0] > 2.0 * tolerance:
            raise AmbiguousClustering(
                f"values in [{chain[0]}, {chain[-1]}] chain across more than "
                f"2x tolerance ({tolerance})"
            )
        class_of[order[start:pos]] = current
        reps.append(float(chain.mean()))
        start = pos
        current += 1
    return Partition(class_of=class_of, class_values=np.array(reps), tolerance=tolerance)


def observational_partition(world: DiscreteWorld, tolerance: float = 1e-9) -> Partition:
    vals = [observational_posterior(world, i) for i in range(world.num_images)]
    return partition_values(vals, tolerance)


def causal_partition(world: DiscreteWorld, tolerance: float = 1e-9) -> Partition:
    vals = [interventional_posterior(world, i) for i in range(world.num_images)]
    return partition_values(vals, tolerance)


@dataclass(frozen=True)
class CoarseningViolation:
    pair: tuple[int, int]
    fine_values: tuple[float, float]
    coarse_values: tuple[float, float]

    def to_dict(self) -> dict:
        return {
            "pair": list(self.pair),
            "fine_values": list(self.fine_values),
            "coarse_values": list(self.coarse_values),
        }


@dataclass(frozen=True)
class CoarseningReport:
    holds: bool
    violations: tuple[CoarseningViolation, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "holds": self.holds,
            "violations": [v.to_dict() for v in self.violations],
        }


def is_coarsening(coarse: Partition, fine: Partition) -> CoarseningReport:
    """Does every class of ``fine`` sit wholly inside one class of ``coarse``?

    A violation is a pair of images sharing a fine class but split across
    coarse classes; both value pairs are reported.
    """
    if coarse.num_images != fine.num_images:
        raise SizeMismatch(
            f"partitions cover {coarse.num_images} vs {fine.num_images} images"
        )
    violations: list[CoarseningViolation] = []
    for k in range(fine.num_classes):
        members = fine.members(k)
        coarse_ids = coarse.class_of[members]
        if len(set(int(c) for c in coarse_ids)) <= 1:
            continue
        for a_pos in range(len(members)):
            for b_pos in range(a_pos + 1, len(members)):
                i, j = int(members[a_pos]), int(members[b_pos])
                if coarse.class_of[i] != coarse.class_of[j]:
                    violations.append(
                        CoarseningViolation(
                            pair=(i, j),
                            fine_values=(fine.value_of(i), fine.value_of(j)),
                            coarse_values=(coarse.value_of(i), coarse.value_of(j)),
                        )
                    )
    return CoarseningReport(holds=not violations, violations=tuple(violations))
