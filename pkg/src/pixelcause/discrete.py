"""Finite generative worlds over a discrete image space.

A world is a joint distribution P(T, H, I) over a binary behavior T, a
flattened hidden domain H of size K and an image space I of size N, stored in
the parametrization

    alpha[h, i] = P(T=0 | H=h, I=i)        (K x N)
    beta[i, h]  = P(I=i | H=h)             (N x K, columns sum to one)
    gamma[h]    = P(H=h)                   (K,)

Two conditionals matter everywhere downstream:

* the observational posterior  P(T=1 | I=i), which mixes over P(h | i), and
* the interventional posterior P(T=1 | man(I=i)) = sum_h (1-alpha[h,i]) gamma[h],
  which mixes over the hidden prior and is independent of beta.

The samplers in this module produce random worlds either unconstrained or
conditioned on a requested observational partition (equal posterior values on
each class, plus a shared interventional value per class so the causal
partition coarsens the observational one; see the notes on
:func:`sample_world_constrained`).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, RejectionExhausted, ZeroMarginal

DIST_ATOL = 1e-12


@dataclass(frozen=True, eq=False)
class DiscreteWorld:
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        beta = np.asarray(self.beta, dtype=float)
        gamma = np.asarray(self.gamma, dtype=float)
        if alpha.ndim != 2 or beta.ndim != 2 or gamma.ndim != 1:
            raise ConfigError("alpha must be KxN, beta NxK, gamma length K")
        K, N = alpha.shape
        if beta.shape != (N, K) or gamma.shape != (K,):
            raise ConfigError(
                f"inconsistent shapes: alpha {alpha.shape}, beta {beta.shape}, "
                f"gamma {gamma.shape}"
            )
        for name, arr in (("alpha", alpha), ("beta", beta), ("gamma", gamma)):
            if not np.all(np.isfinite(arr)):
                raise ConfigError(f"{name} contains non-finite entries")
            if arr.min() < -DIST_ATOL or arr.max() > 1.0 + DIST_ATOL:
                raise ConfigError(f"{name} entries must lie in [0, 1]")
        col_sums = beta.sum(axis=0)
        if np.max(np.abs(col_sums - 1.0)) > DIST_ATOL:
            raise ConfigError("every beta column must sum to 1")
        if abs(gamma.sum() - 1.0) > DIST_ATOL:
            raise ConfigError("gamma must sum to 1")
        object.__setattr__(self, "alpha", np.clip(alpha, 0.0, 1.0))
        object.__setattr__(self, "beta", np.clip(beta, 0.0, 1.0))
        object.__setattr__(self, "gamma", np.clip(gamma, 0.0, 1.0))

    @property
    def num_h_states(self) -> int:
        return self.alpha.shape[0]

    @property
    def num_images(self) -> int:
        return self.alpha.shape[1]

    def to_dict(self) -> dict:
        return {
            "K": self.num_h_states,
            "N": self.num_images,
            "alpha": [float(x) for x in self.alpha.ravel(order="C")],
            "beta": [float(x) for x in self.beta.ravel(order="C")],
            "gamma": [float(x) for x in self.gamma],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DiscreteWorld":
        K, N = int(doc["K"]), int(doc["N"])
        alpha = np.asarray(doc["alpha"], dtype=float).reshape(K, N)
        beta = np.asarray(doc["beta"], dtype=float).reshape(N, K)
        gamma = np.asarray(doc["gamma"], dtype=float)
        return cls(alpha=alpha, beta=beta, gamma=gamma)


def image_marginal(world: DiscreteWorld, i: int) -> float:
    """P(I=i) under the world's generative distribution."""
    return float(world.beta[i, :] @ world.gamma)


def observational_posterior(world: DiscreteWorld, i: int) -> float:
    """P(T=1 | I=i).  Raises :class:`ZeroMarginal` when P(I=i) = 0."""
    weights = world.beta[i, :] * world.gamma
    marginal = float(weights.sum())
    if marginal <= 0.0:
        raise ZeroMarginal(i)
    return 1.0 - float(world.alpha[:, i] @ weights) / marginal


def interventional_posterior(world: DiscreteWorld, i: int) -> float:
    """P(T=1 | man(I=i)) = sum_h (1 - alpha[h,i]) gamma[h].

    Setting the pixels leaves the hidden state distributed by its prior, so
    beta plays no role here.
    """
    _ = world.beta[i]  # index-bounds check only
    return float((1.0 - world.alpha[:, i]) @ world.gamma)


def observational_values(world: DiscreteWorld) -> np.ndarray:
    return np.array([observational_posterior(world, i) for i in range(world.num_images)])


def interventional_values(world: DiscreteWorld) -> np.ndarray:
    return np.array([interventional_posterior(world, i) for i in range(world.num_images)])


def sample_world(K: int, N: int, rng: np.random.Generator) -> DiscreteWorld:
    """Uniform world: alpha i.i.d. U[0,1], each beta column and gamma uniform
    on their simplices."""
    if K < 1 or N < 1:
        raise ConfigError("K and N must be positive")
    alpha = rng.uniform(0.0, 1.0, size=(K, N))
    beta = rng.dirichlet(np.ones(N), size=K).T
    gamma = rng.dirichlet(np.ones(K))
    return DiscreteWorld(alpha=alpha, beta=beta, gamma=gamma)


ObsSpec = Sequence[tuple[Sequence[int], float]]


def _validate_obs_spec(obs_spec: ObsSpec) -> tuple[int, list[tuple[tuple[int, ...], float]]]:
    classes = [(tuple(int(i) for i in members), float(v)) for members, v in obs_spec]
    if not classes:
        raise ConfigError("observational spec must contain at least one class")
    seen: set[int] = set()
    for members, value in classes:
        if not members:
            raise ConfigError("observational classes must be non-empty")
        if not (0.0 < value < 1.0):
            raise ConfigError(f"class value {value} must lie strictly inside (0, 1)")
        if seen & set(members):
            raise ConfigError("observational classes must be disjoint")
        seen.update(members)
    N = max(seen) + 1
    if seen != set(range(N)):
        raise ConfigError("observational classes must cover 0..N-1 exactly")
    values = sorted(v for _, v in classes)
    for a, b in zip(values, values[1:]):
        if b - a <= 2e-9:
            raise ConfigError("class values must be separated by more than 2e-9")
    return N, classes


def sample_world_constrained(
    obs_spec: ObsSpec,
    K: int,
    rng: np.random.Generator,
    max_rejects: int = 10_000,
) -> DiscreteWorld:
    """Sample a world whose observational partition equals ``obs_spec``.

    ``obs_spec`` is a sequence of ``(members, value)`` pairs: each class lists
    its image indices and the P(T=1 | I=i) shared by all of them.  Classes must
    cover 0..N-1 and carry distinct interior values.

    Free parameters: beta, gamma and K-2 alpha entries per image.  The two
    remaining alpha entries of each image (those with the heaviest
    beta*gamma weight) are solved from a 2x2 linear system pinning

    * the observational posterior to the class value, and
    * the interventional posterior to a per-class value drawn uniformly from
      the intersection of the member images' feasible intervals,

    so that every observational class sits inside a single causal class.  An
    attempt is rejected wholesale when any solved entry leaves [0,1], the
    system is near-singular, or a class's feasible interval is empty.
    """
    if K < 2:
        raise ConfigError("constrained sampling requires K >= 2")
    N, classes = _validate_obs_spec(obs_spec)

    for _ in range(max_rejects):
        beta = rng.dirichlet(np.ones(N), size=K).T
        gamma = rng.dirichlet(np.ones(K))
        alpha = rng.uniform(0.0, 1.0, size=(K, N))
        ok = True
        for members, value in classes:
            q = 1.0 - value  # target P(T=0 | I=i)
            lo, hi = 0.0, 1.0
            plans = []
            for i in members:
                w = beta[i, :] * gamma
                order = np.argsort(-w)
                h0, h1 = int(order[0]), int(order[1])
                det = w[h0] * gamma[h1] - w[h1] * gamma[h0]
                if abs(det) < 1e-12:
                    ok = False
                    break
                free = [h for h in range(K) if h not in (h0, h1)]
                b_obs = q * float(w.sum()) - sum(alpha[h, i] * w[h] for h in free)
                b_iv = -sum(alpha[h, i] * gamma[h] for h in free)
                # Solve [w[h0] w[h1]; gamma[h0] gamma[h1]] @ (a0, a1) = (b_obs, b_iv + Qbar)
                # where Qbar = sum_h alpha[h,i] gamma[h].  Both entries are affine
                # in Qbar; intersect their [0,1] box constraints into a Qbar window.
                c0 = (gamma[h1] * b_obs - w[h1] * b_iv) / det
                s0 = -w[h1] / det
                c1 = (-gamma[h0] * b_obs + w[h0] * b_iv) / det
                s1 = w[h0] / det
                for c, s in ((c0, s0), (c1, s1)):
                    if abs(s) < 1e-15:
                        if not (0.0 <= c <= 1.0):
                            ok = False
                        continue
                    a, b = -c / s, (1.0 - c) / s
                    lo = max(lo, min(a, b))
                    hi = min(hi, max(a, b))
                if not ok:
                    break
                plans.append((i, h0, h1, c0, s0, c1, s1))
            if not ok or lo >= hi:
                ok = False
                break
            q_bar = rng.uniform(lo, hi)
            for i, h0, h1, c0, s0, c1, s1 in plans:
                alpha[h0, i] = min(max(c0 + s0 * q_bar, 0.0), 1.0)
                alpha[h1, i] = min(max(c1 + s1 * q_bar, 0.0), 1.0)
        if not ok:
            continue
        world = DiscreteWorld(alpha=alpha, beta=beta, gamma=gamma)
        if _matches_spec(world, classes):
            return world
    raise RejectionExhausted(
        f"no feasible world after {max_rejects} attempts for spec {classes}"
    )


def _matches_spec(world: DiscreteWorld, classes, tol: float = 1e-9) -> bool:
    for members, value in classes:
        for i in members:
            if abs(observational_posterior(world, i) - value) > tol:
                return False
        ivs = [interventional_posterior(world, i) for i in members]
        if max(ivs) - min(ivs) > tol:
            return False
    return True


def residual_confounding_world() -> DiscreteWorld:
    """Fixed two-pixel-state model I -> T, I <- H -> T used to show that the
    causal macro-variable can retain predictive information that is not causal.

    gamma = (0.5, 0.5); P(I=1|H=0) = 0.2, P(I=1|H=1) = 0.8;
    P(T=1|I,H) = {(0,0): 0.1, (0,1): 0.5, (1,0): 0.4, (1,1): 0.9}.
    """
    gamma = np.array([0.5, 0.5])
    beta = np.array([[0.8, 0.2], [0.2, 0.8]])  # beta[i, h] = P(I=i | H=h)
    p_t1 = {(0, 0): 0.1, (0, 1): 0.5, (1, 0): 0.4, (1, 1): 0.9}
    alpha = np.empty((2, 2))
    for h in range(2):
        for i in range(2):
            alpha[h, i] = 1.0 - p_t1[(i, h)]
    return DiscreteWorld(alpha=alpha, beta=beta, gamma=gamma)
