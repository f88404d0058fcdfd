"""Macro-variables built on top of the two partitions.

When the causal partition coarsens the observational one, each image can be
described by a pair (c, s): its causal class c and the index s of its
observational class inside that causal class.  The pair reproduces the
observational partition exactly, c alone reproduces the causal partition, and
among all variables X with P(T|X) = P(T|I) the pair has minimal Shannon
entropy.  :func:`verify_complete_description` checks both claims exhaustively
by enumerating every set partition of the image space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .discrete import (
    DiscreteWorld,
    image_marginal,
    interventional_posterior,
    observational_posterior,
)
from .errors import ConfigError, NotACoarsening
from .partitions import causal_partition, is_coarsening, observational_partition


@dataclass(frozen=True, eq=False)
class MacroAssignment:
    c_of: np.ndarray  # per-image causal class id
    s_of: np.ndarray  # per-image 1-based index within the causal class

    def __post_init__(self):
        object.__setattr__(self, "c_of", np.asarray(self.c_of, dtype=int))
        object.__setattr__(self, "s_of", np.asarray(self.s_of, dtype=int))

    @property
    def num_images(self) -> int:
        return len(self.c_of)

    def cells(self) -> dict[tuple[int, int], list[int]]:
        out: dict[tuple[int, int], list[int]] = {}
        for i in range(self.num_images):
            out.setdefault((int(self.c_of[i]), int(self.s_of[i])), []).append(i)
        return out

    def to_dict(self) -> dict:
        return {"c_of": [int(c) for c in self.c_of], "s_of": [int(s) for s in self.s_of]}


def spurious_correlate(world: DiscreteWorld, tolerance: float = 1e-9) -> MacroAssignment:
    """Split each causal class into its observational classes, numbered 1..M_k
    by ascending observational value.

    Raises :class:`NotACoarsening` when the causal partition does not coarsen
    the observational one (the measure-zero case).
    """
    obs = observational_partition(world, tolerance)
    caus = causal_partition(world, tolerance)
    report = is_coarsening(caus, obs)
    if not report.holds:
        raise NotACoarsening(
            f"{len(report.violations)} observational classes straddle causal classes"
        )
    c_of = caus.class_of.copy()
    s_of = np.zeros(world.num_images, dtype=int)
    for k in range(caus.num_classes):
        members = caus.members(k)
        # observational class ids are already ascending in value
        obs_ids = sorted(set(int(obs.class_of[i]) for i in members))
        rank = {cid: pos + 1 for pos, cid in enumerate(obs_ids)}
        for i in members:
            s_of[i] = rank[int(obs.class_of[i])]
    return MacroAssignment(c_of=c_of, s_of=s_of)


def set_partitions(n: int) -> Iterator[tuple[int, ...]]:
    """All set partitions of range(n) as canonical label tuples
    (restricted growth strings: labels[0] = 0, labels[i] <= max(labels[:i]) + 1)."""
    labels = [0] * n

    def rec(pos: int, max_used: int) -> Iterator[tuple[int, ...]]:
        if pos == n:
            yield tuple(labels)
            return
        for lab in range(max_used + 2):
            labels[pos] = lab
            yield from rec(pos + 1, max(max_used, lab))

    yield from rec(1, 0) if n > 1 else iter([tuple(labels)])


def partition_entropy(labels, marginal: np.ndarray) -> float:
    """Shannon entropy (natural log) of the variable induced by ``labels``
    under the image marginal."""
    masses: dict[int, float] = {}
    for i, lab in enumerate(labels):
        masses[lab] = masses.get(lab, 0.0) + float(marginal[i])
    return -sum(m * math.log(m) for m in masses.values() if m > 0.0)


@dataclass(frozen=True)
class CompleteDescriptionReport:
    value_check_max_error: float
    value_check_holds: bool
    pair_entropy: float
    num_qualifying_partitions: int
    min_entropy: float
    minimizer_labels: tuple[int, ...]
    minimizer_is_pair_partition: bool
    entropy_check_holds: bool

    @property
    def holds(self) -> bool:
        return self.value_check_holds and self.entropy_check_holds

    def to_dict(self) -> dict:
        return {
            "value_check_max_error": self.value_check_max_error,
            "value_check_holds": self.value_check_holds,
            "pair_entropy": self.pair_entropy,
            "num_qualifying_partitions": self.num_qualifying_partitions,
            "min_entropy": self.min_entropy,
            "minimizer_labels": list(self.minimizer_labels),
            "minimizer_is_pair_partition": self.minimizer_is_pair_partition,
            "entropy_check_holds": self.entropy_check_holds,
            "holds": self.holds,
        }


def verify_complete_description(
    world: DiscreteWorld,
    assignment: MacroAssignment,
    tolerance: float = 1e-9,
    value_atol: float = 1e-10,
) -> CompleteDescriptionReport:
    """Check the two completeness properties of the (c, s) description.

    1. P(T=1 | I=i) equals P(T=1 | C=c_of[i], S=s_of[i]) for every image,
       where the right side aggregates image marginals over the (c, s) cell.
    2. Every variable X (any set partition of the image space) with
       P(T|X) = P(T|I) satisfies H(X) >= H(C,S); the minimizer is reported.

    Enumeration is exhaustive, so the image space must be small (N <= 8).
    """
    n = world.num_images
    if n > 8:
        raise ConfigError("set-partition enumeration is limited to N <= 8")
    if assignment.num_images != n:
        raise ConfigError("assignment does not cover the world's image space")

    marginal = np.array([image_marginal(world, i) for i in range(n)])
    obs_vals = np.array([observational_posterior(world, i) for i in range(n)])

    cells = assignment.cells()
    max_err = 0.0
    for members in cells.values():
        mass = float(marginal[members].sum())
        cell_val = float((obs_vals[members] * marginal[members]).sum()) / mass
        for i in members:
            max_err = max(max_err, abs(obs_vals[i] - cell_val))
    value_holds = max_err <= value_atol

    pair_labels = tuple(
        sorted(cells).index((int(assignment.c_of[i]), int(assignment.s_of[i])))
        for i in range(n)
    )
    pair_entropy = partition_entropy(pair_labels, marginal)

    qualifying = 0
    min_entropy = math.inf
    minimizer: tuple[int, ...] = ()
    entropy_holds = True
    for labels in set_partitions(n):
        blocks: dict[int, list[int]] = {}
        for i, lab in enumerate(labels):
            blocks.setdefault(lab, []).append(i)
        refines = all(
            max(obs_vals[b]) - min(obs_vals[b]) <= tolerance for b in blocks.values()
        )
        if not refines:
            continue
        qualifying += 1
        h = partition_entropy(labels, marginal)
        if h < pair_entropy - 1e-12:
            entropy_holds = False
        if h < min_entropy:
            min_entropy = h
            minimizer = labels

    minimizer_is_pair = _same_blocks(minimizer, pair_labels)
    return CompleteDescriptionReport(
        value_check_max_error=max_err,
        value_check_holds=value_holds,
        pair_entropy=pair_entropy,
        num_qualifying_partitions=qualifying,
        min_entropy=min_entropy,
        minimizer_labels=minimizer,
        minimizer_is_pair_partition=minimizer_is_pair,
        entropy_check_holds=entropy_holds,
    )


def _same_blocks(a, b) -> bool:
    def blocks(labels):
        out: dict[int, set[int]] = {}
        for i, lab in enumerate(labels):
            out.setdefault(lab, set()).add(i)
        return {frozenset(s) for s in out.values()}

    return blocks(a) == blocks(b)


@dataclass(frozen=True)
class ResidualConfoundingReport:
    interventional_pair: tuple[float, float]
    observational_pair: tuple[float, float]
    interventional_differs: bool
    observational_differs: bool
    observational_not_interventional: bool
    s_is_constant: bool
    p_t_given_c: tuple[float, ...]
    p_t_do_c: tuple[float, ...]
    c_retains_noncausal_information: bool

    @property
    def holds(self) -> bool:
        return (
            self.interventional_differs
            and self.observational_differs
            and self.observational_not_interventional
            and self.s_is_constant
            and self.c_retains_noncausal_information
        )

    def to_dict(self) -> dict:
        return {
            "interventional_pair": list(self.interventional_pair),
            "observational_pair": list(self.observational_pair),
            "interventional_differs": self.interventional_differs,
            "observational_differs": self.observational_differs,
            "observational_not_interventional": self.observational_not_interventional,
            "s_is_constant": self.s_is_constant,
            "p_t_given_c": list(self.p_t_given_c),
            "p_t_do_c": list(self.p_t_do_c),
            "c_retains_noncausal_information": self.c_retains_noncausal_information,
            "holds": self.holds,
        }


def residual_confounding_example() -> tuple[DiscreteWorld, ResidualConfoundingReport]:
    """Fixed confounded two-image model where the causal macro-variable still
    carries predictive information that is not causal: the spurious index is
    constant, yet P(T|C) differs from P(T|do(C))."""
    from .discrete import residual_confounding_world

    world = residual_confounding_world()
    iv = tuple(interventional_posterior(world, i) for i in range(2))
    obs = tuple(observational_posterior(world, i) for i in range(2))

    assignment = spurious_correlate(world)
    s_constant = len(set(int(s) for s in assignment.s_of)) == 1

    marginal = np.array([image_marginal(world, i) for i in range(2)])
    caus = causal_partition(world)
    p_t_given_c = []
    p_t_do_c = []
    for k in range(caus.num_classes):
        members = caus.members(k)
        mass = float(marginal[members].sum())
        p_t_given_c.append(
            float(sum(obs[i] * marginal[i] for i in members)) / mass
        )
        p_t_do_c.append(float(caus.class_values[k]))

    retains = any(abs(a - b) > 1e-9 for a, b in zip(p_t_given_c, p_t_do_c))
    report = ResidualConfoundingReport(
        interventional_pair=iv,
        observational_pair=obs,
        interventional_differs=abs(iv[0] - iv[1]) > 1e-9,
        observational_differs=abs(obs[0] - obs[1]) > 1e-9,
        observational_not_interventional=any(
            abs(o - v) > 1e-9 for o, v in zip(obs, iv)
        ),
        s_is_constant=s_constant,
        p_t_given_c=tuple(p_t_given_c),
        p_t_do_c=tuple(p_t_do_c),
        c_retains_noncausal_information=retains,
    )
    return world, report
