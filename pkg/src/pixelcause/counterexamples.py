"""Constructors for measure-zero worlds that break the coarsening relation.

Generic finite worlds have all-distinct posterior values, so the causal
partition coarsens the observational one vacuously.  Breaking that requires
planting an algebraic tie: the observational tie constraint is linear in any
single alpha entry (cross-multiplied posterior equality), and the
interventional tie constraint is linear as well.  Each constructor samples a
world, solves one alpha entry in closed form per planted tie, and verifies the
result with the partition engine before returning.  Perturbing any solved
entry destroys its tie, which is what the fragility tests exercise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .discrete import (
    DiscreteWorld,
    interventional_posterior,
    observational_posterior,
)
from .errors import ConfigError, SolveFailed
from .partitions import causal_partition, is_coarsening, observational_partition

VIOLATION_KINDS = ("obs-coarsens-causal", "incomparable")

# Non-tied values must stay separated by much more than the 1e-9 partition
# tolerance so a ~1e-3 perturbation of a solved entry cannot create new ties.
_MIN_GAP = 1e-2


@dataclass(frozen=True, eq=False)
class CounterexampleWorld:
    world: DiscreteWorld
    kind: str
    solved_entries: tuple[tuple[int, int], ...]  # (h, i) pairs set by a tie solve

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "solved_entries": [list(e) for e in self.solved_entries],
            "world": self.world.to_dict(),
        }


def _distinct(values: np.ndarray, skip: set[tuple[int, int]] = frozenset()) -> bool:
    n = len(values)
    for i in range(n):
        for j in range(i + 1, n):
            if (i, j) in skip:
                continue
            if abs(values[i] - values[j]) < _MIN_GAP:
                return False
    return True


def _solve_observational_tie(alpha, beta, gamma, i: int, target_q: float) -> tuple[int, float]:
    """Pick the heaviest-weight hidden state and solve its alpha entry so that
    P(T=0 | I=i) equals ``target_q``."""
    w = beta[i, :] * gamma
    h0 = int(np.argmax(w))
    others = [h for h in range(len(gamma)) if h != h0]
    num = target_q * float(w.sum()) - sum(alpha[h, i] * w[h] for h in others)
    return h0, num / w[h0]


def _solve_interventional_tie(alpha, gamma, i: int, target_qbar: float) -> tuple[int, float]:
    """Solve one alpha entry so that sum_h alpha[h,i] gamma[h] = target_qbar."""
    h1 = int(np.argmax(gamma))
    others = [h for h in range(len(gamma)) if h != h1]
    num = target_qbar - sum(alpha[h, i] * gamma[h] for h in others)
    return h1, num / gamma[h1]


def find_coarsening_violation(
    kind: str,
    K: int,
    N: int,
    rng: np.random.Generator,
    max_attempts: int = 10_000,
    tolerance: float = 1e-9,
) -> CounterexampleWorld:
    """Construct a world violating the stated coarsening direction.

    ``kind="obs-coarsens-causal"``: images 0 and 1 share an observational value
    but have distinct interventional values, so the observational partition
    properly coarsens the causal one and the causal partition fails to coarsen
    the observational one.

    ``kind="incomparable"``: additionally images 0 and 2 share an
    interventional value while their observational values differ, so neither
    partition coarsens the other.  Requires N >= 3.
    """
    if kind not in VIOLATION_KINDS:
        raise ConfigError(f"kind must be one of {VIOLATION_KINDS}")
    if K < 2:
        raise ConfigError("counterexamples require K >= 2")
    if N < (3 if kind == "incomparable" else 2):
        raise ConfigError(f"kind={kind} requires N >= {3 if kind == 'incomparable' else 2}")

    for _ in range(max_attempts):
        alpha = rng.uniform(0.0, 1.0, size=(K, N))
        beta = rng.dirichlet(np.ones(N), size=K).T
        gamma = rng.dirichlet(np.ones(K))

        solved: list[tuple[int, int]] = []
        q0 = 1.0 - observational_posterior(
            DiscreteWorld(alpha=alpha, beta=beta, gamma=gamma), 0
        )
        h0, a_obs = _solve_observational_tie(alpha, beta, gamma, 1, q0)
        if not (0.0 <= a_obs <= 1.0):
            continue
        alpha[h0, 1] = a_obs
        solved.append((h0, 1))

        if kind == "incomparable":
            qbar0 = float(alpha[:, 0] @ gamma)
            h1, a_iv = _solve_interventional_tie(alpha, gamma, 2, qbar0)
            if not (0.0 <= a_iv <= 1.0):
                continue
            alpha[h1, 2] = a_iv
            solved.append((h1, 2))

        world = DiscreteWorld(alpha=alpha, beta=beta, gamma=gamma)
        obs = np.array([observational_posterior(world, i) for i in range(N)])
        ivs = np.array([interventional_posterior(world, i) for i in range(N)])

        # Planted ties must be the only near-coincidences, with wide margins.
        if abs(obs[0] - obs[1]) > tolerance or not _distinct(obs, skip={(0, 1)}):
            continue
        if kind == "obs-coarsens-causal":
            if not _distinct(ivs):
                continue
        else:
            if abs(ivs[0] - ivs[2]) > tolerance or not _distinct(ivs, skip={(0, 2)}):
                continue

        candidate = CounterexampleWorld(
            world=world, kind=kind, solved_entries=tuple(solved)
        )
        if _verified(candidate, tolerance):
            return candidate
    raise SolveFailed(
        f"no in-range root for kind={kind} (K={K}, N={N}) after {max_attempts} attempts"
    )


def _verified(cx: CounterexampleWorld, tolerance: float) -> bool:
    obs_part = observational_partition(cx.world, tolerance)
    caus_part = causal_partition(cx.world, tolerance)
    causal_over_obs = is_coarsening(caus_part, obs_part).holds
    obs_over_causal = is_coarsening(obs_part, caus_part).holds
    if cx.kind == "obs-coarsens-causal":
        return (not causal_over_obs) and obs_over_causal
    return (not causal_over_obs) and (not obs_over_causal)


def perturb_solved_entries(
    cx: CounterexampleWorld,
    rng: np.random.Generator,
    scale: float = 1e-3,
    entries: tuple[tuple[int, int], ...] | None = None,
) -> DiscreteWorld:
    """Return a copy of the world with solved entries nudged by roughly
    ``scale``, staying inside [0,1].  Breaking the solved ties is what
    restores the coarsening relation."""
    alpha = cx.world.alpha.copy()
    for h, i in entries if entries is not None else cx.solved_entries:
        delta = scale * rng.uniform(0.5, 1.5)
        if rng.random() < 0.5:
            delta = -delta
        if not (0.0 <= alpha[h, i] + delta <= 1.0):
            delta = -delta
        alpha[h, i] += delta
    return DiscreteWorld(alpha=alpha, beta=cx.world.beta, gamma=cx.world.gamma)
