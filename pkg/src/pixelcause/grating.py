"""Synthetic bar-grating image world and its causal oracles.

Images are side x side binary grids driven by two independent hidden coin
flips: one places a single vertical bar at a uniform column, the other a
single horizontal bar at a uniform row.  Background pixels flip on with a
small noise rate, re-drawn whenever the noise completes an unintended bar, so
bar presence stays recoverable from the pixels.  The behavior probability
depends only on (h-bar presence, the v-bar cause): the h-bar is the visual
cause, the v-bar merely correlates through the shared hidden flip.

The oracle answers interventional queries: it looks only at h-bar presence in
the *presented* pixels and marginalizes the hidden v-bar cause by its prior,
so pasting or removing v-bars never changes its answer.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .discrete import DiscreteWorld
from .errors import ConfigError, RejectionExhausted

# behavior_table[hbar][h1] = P(T=1 | h-bar presence, v-bar cause)
DEFAULT_BEHAVIOR_TABLE = ((0.1, 0.3), (0.7, 0.9))


@dataclass(frozen=True)
class GratingConfig:
    side: int = 15
    noise_rate: float = 0.03
    behavior_table: tuple[tuple[float, float], tuple[float, float]] = DEFAULT_BEHAVIOR_TABLE
    p_h1: float = 0.5
    p_h2: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.side < 3:
            raise ConfigError("side must be at least 3")
        if not (0.0 <= self.noise_rate < 1.0):
            raise ConfigError("noise_rate must lie in [0, 1)")
        for p in (self.p_h1, self.p_h2):
            if not (0.0 <= p <= 1.0):
                raise ConfigError("hidden-cause probabilities must lie in [0, 1]")
        t = self.behavior_table
        flat = [t[0][0], t[0][1], t[1][0], t[1][1]]
        if any(not (0.0 <= p <= 1.0) for p in flat):
            raise ConfigError("behavior probabilities must lie in [0, 1]")
        # behavior must increase with the h-bar at fixed H1, and with H1 at a
        # fixed h-bar state
        if not (t[1][0] > t[0][0] and t[1][1] > t[0][1]):
            raise ConfigError("behavior_table must increase when the h-bar appears")
        if not (t[0][1] > t[0][0] and t[1][1] > t[1][0]):
            raise ConfigError("behavior_table must increase with the v-bar cause")

    def to_dict(self) -> dict:
        return {
            "side": self.side,
            "noise_rate": self.noise_rate,
            "behavior_table": [list(row) for row in self.behavior_table],
            "p_h1": self.p_h1,
            "p_h2": self.p_h2,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GratingConfig":
        doc = dict(doc)
        if "behavior_table" in doc:
            doc["behavior_table"] = tuple(tuple(row) for row in doc["behavior_table"])
        return cls(**doc)


@dataclass(frozen=True, eq=False)
class ImageSample:
    pixels: np.ndarray  # (side, side) uint8 in {0, 1}
    h1: int
    h2: int
    obs_prob: float
    t_draw: int


def _as_grid(image) -> np.ndarray:
    grid = np.asarray(image)
    if grid.ndim != 2:
        raise ConfigError("image must be a 2-d grid")
    return grid


def detect_hbar(image) -> bool:
    """True iff some row is entirely on.  Ground-truth helper; learners never
    see it."""
    grid = _as_grid(image)
    return bool(np.any(np.all(grid != 0, axis=1)))


def detect_vbar(image) -> bool:
    """True iff some column is entirely on."""
    grid = _as_grid(image)
    return bool(np.any(np.all(grid != 0, axis=0)))


def _bar_counts(grid: np.ndarray) -> tuple[int, int]:
    rows = int(np.sum(np.all(grid != 0, axis=1)))
    cols = int(np.sum(np.all(grid != 0, axis=0)))
    return rows, cols


def grating_sample(
    config: GratingConfig,
    rng: np.random.Generator,
    max_noise_redraws: int = 1000,
) -> ImageSample:
    """Draw hidden causes, place at most one bar per orientation, then add
    background noise, redrawing it whenever it completes an extra bar."""
    side = config.side
    h1 = int(rng.random() < config.p_h1)
    h2 = int(rng.random() < config.p_h2)
    base = np.zeros((side, side), dtype=np.uint8)
    if h1:
        base[:, int(rng.integers(side))] = 1
    if h2:
        base[int(rng.integers(side)), :] = 1

    background = base == 0
    for _ in range(max_noise_redraws):
        pixels = base.copy()
        noise = (rng.random((side, side)) < config.noise_rate) & background
        pixels[noise] = 1
        rows, cols = _bar_counts(pixels)
        if rows == h2 and cols == h1:
            break
    else:
        raise RejectionExhausted(
            f"noise at rate {config.noise_rate} kept completing bars"
        )

    obs_prob = config.behavior_table[h2][h1]
    t_draw = int(rng.random() < obs_prob)
    return ImageSample(pixels=pixels, h1=h1, h2=h2, obs_prob=obs_prob, t_draw=t_draw)


def generate_observational_dataset(
    config: GratingConfig,
    n: int,
    rng: np.random.Generator | None = None,
) -> list[ImageSample]:
    if n < 1:
        raise ConfigError("dataset size must be at least 1")
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    return [grating_sample(config, rng) for _ in range(n)]


def observational_class_values(config: GratingConfig) -> list[float]:
    """The P(T=1 | I) values occurring in observational data, ascending."""
    t = config.behavior_table
    return sorted({t[0][0], t[0][1], t[1][0], t[1][1]})


def add_vbar(pixels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Copy of ``pixels`` with one full column switched on (a pure
    manipulation of the non-causal feature)."""
    grid = _as_grid(pixels).copy()
    incomplete = np.flatnonzero(~np.all(grid != 0, axis=0))
    col = int(rng.choice(incomplete)) if len(incomplete) else int(rng.integers(grid.shape[1]))
    grid[:, col] = 1
    return grid


class CausalOracle(Protocol):
    """Anything that answers P(T=1 | man(I=image)) queries and counts them."""

    def query(self, image) -> float: ...

    @property
    def query_count(self) -> int: ...


class GratingOracle:
    """Interventional oracle for the grating world.

    ``exact`` mode returns sum over the v-bar cause of
    behavior_table[h-bar(image)][h1] * P(h1); ``sample`` mode returns a single
    Bernoulli draw of that probability.  The query counter and the sample
    generator are guarded by a lock so concurrent queries cannot interleave
    generator state.
    """

    def __init__(
        self,
        config: GratingConfig,
        mode: str = "exact",
        rng: np.random.Generator | None = None,
    ):
        if mode not in ("exact", "sample"):
            raise ConfigError("oracle mode must be 'exact' or 'sample'")
        self.config = config
        self.mode = mode
        self._rng = rng if rng is not None else np.random.default_rng(config.seed)
        self._count = 0
        self._lock = threading.Lock()

    def exact_value(self, hbar: bool) -> float:
        row = self.config.behavior_table[1 if hbar else 0]
        return (1.0 - self.config.p_h1) * row[0] + self.config.p_h1 * row[1]

    def query(self, image) -> float:
        value = self.exact_value(detect_hbar(image))
        with self._lock:
            self._count += 1
            if self.mode == "exact":
                return value
            return float(self._rng.random() < value)

    def query_batch(self, images: Sequence) -> list[float]:
        return [self.query(image) for image in images]

    @property
    def query_count(self) -> int:
        return self._count


def grating_world(config: GratingConfig) -> DiscreteWorld:
    """Collapse the grating model onto its four (v-bar, h-bar) configurations
    as a finite world, for exercising the partition machinery.

    Image index i = 2*hbar + vbar; hidden index h = 2*h2 + h1; the image is a
    deterministic function of the hidden pair.
    """
    t = config.behavior_table
    p1, p2 = config.p_h1, config.p_h2
    gamma = np.array(
        [
            (1 - p1) * (1 - p2),  # h1=0, h2=0
            p1 * (1 - p2),        # h1=1, h2=0
            (1 - p1) * p2,        # h1=0, h2=1
            p1 * p2,              # h1=1, h2=1
        ]
    )
    beta = np.zeros((4, 4))
    for h1 in range(2):
        for h2 in range(2):
            h = 2 * h2 + h1
            i = 2 * h2 + h1  # vbar = h1, hbar = h2
            beta[i, h] = 1.0
    alpha = np.zeros((4, 4))
    for h1 in range(2):
        for h2 in range(2):
            h = 2 * h2 + h1
            for vbar in range(2):
                for hbar in range(2):
                    i = 2 * hbar + vbar
                    alpha[h, i] = 1.0 - t[hbar][h1]
    return DiscreteWorld(alpha=alpha, beta=beta, gamma=gamma)
