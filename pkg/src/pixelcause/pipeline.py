"""Causal predictor training and iterative manipulator learning.

Stage one turns an observational dataset into a causal one at oracle cost
linear in the number of observational classes: one interventional query per
class representative, propagated to every class member (licensed by the
coarsening relation between the two partitions), then ordinary training.

Stage two grows the dataset actively: each round retrains the predictor,
picks source images and target causal values, synthesizes the closest image
the predictor assigns the target value (projected gradient descent on the
relaxed pixel box, then binarization), asks the oracle what the synthesized
images actually cause, and appends the answers.  Round quality is tracked by
the mean |oracle answer - target| and the mean pixel distance to the source.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ConfigError,
    EmptyBatch,
    InsufficientClasses,
    NonFiniteObjective,
    OracleAnswerMissing,
    UnknownObservationalClass,
)
from .grating import CausalOracle, GratingConfig, add_vbar, grating_sample
from .mlp import (
    Predictor,
    TrainConfig,
    forward,
    forward_batch,
    init_predictor,
    input_gradient_batch,
    sigmoid,
    train,
)

PROVENANCES = ("coarsened-observational", "oracle-query", "manipulated")


@dataclass(frozen=True, eq=False)
class CausalRecord:
    pixels: np.ndarray  # (side, side) uint8
    label: float
    provenance: str
    round: int = 0

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ConfigError(f"provenance must be one of {PROVENANCES}")
        if not (0.0 <= self.label <= 1.0):
            raise ConfigError("causal labels must lie in [0, 1]")
        object.__setattr__(self, "pixels", np.asarray(self.pixels, dtype=np.uint8))


class CausalDataset:
    """Append-only list of causally labeled images."""

    def __init__(self, records: Iterable[CausalRecord] = ()):
        self._records: list[CausalRecord] = list(records)

    def append(self, record: CausalRecord) -> None:
        self._records.append(record)

    def extend(self, records: Iterable[CausalRecord]) -> None:
        for r in records:
            self.append(r)

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self):
        return iter(self._records)

    def __getitem__(self, idx: int) -> CausalRecord:
        return self._records[idx]

    @property
    def records(self) -> tuple[CausalRecord, ...]:
        return tuple(self._records)

    def images_matrix(self) -> np.ndarray:
        return np.stack([r.pixels.ravel() for r in self._records]).astype(float)

    def labels_array(self) -> np.ndarray:
        return np.array([r.label for r in self._records], dtype=float)

    def class_values(self) -> list[float]:
        return sorted({r.label for r in self._records})


def causal_predictor_training(
    observations: Sequence[tuple[np.ndarray, float]],
    obs_classes: Sequence[float],
    oracle: CausalOracle,
    train_config: TrainConfig,
    reps: int = 1,
    hidden_units: int = 100,
    tolerance: float = 1e-9,
) -> tuple[Predictor, CausalDataset]:
    """Coarsen observational data into causal labels and train a predictor.

    ``observations`` holds (pixels, P(T=1|image)) pairs; every observational
    value must match one of ``obs_classes`` within ``tolerance``.  For each
    class the lowest-index record is the representative.  An exact-mode oracle
    is asked once per class; a sample-mode oracle is asked ``reps`` times and
    the Bernoulli draws are averaged.  The estimate is propagated to every
    record in the class; the predictor trains on the relabeled dataset.
    """
    if not observations:
        raise ConfigError("observational dataset must be non-empty")
    if reps < 1:
        raise ConfigError("reps must be at least 1")
    class_list = sorted(float(v) for v in obs_classes)

    member_class = []
    for pixels, value in observations:
        matches = [m for m, p in enumerate(class_list) if abs(value - p) <= tolerance]
        if not matches:
            raise UnknownObservationalClass(
                f"observational value {value} not in declared classes {class_list}"
            )
        member_class.append(matches[0])

    sample_mode = getattr(oracle, "mode", "exact") == "sample"
    estimates: dict[int, float] = {}
    for m in range(len(class_list)):
        rep_idx = next((k for k, cm in enumerate(member_class) if cm == m), None)
        if rep_idx is None:
            continue  # class declared but absent from the data: nothing to query
        rep_pixels = observations[rep_idx][0]
        if sample_mode:
            draws = [oracle.query(rep_pixels) for _ in range(reps)]
            estimates[m] = float(np.mean(draws))
        else:
            estimates[m] = float(oracle.query(rep_pixels))

    dataset = CausalDataset()
    for (pixels, _), m in zip(observations, member_class):
        dataset.append(
            CausalRecord(
                pixels=pixels,
                label=estimates[m],
                provenance="coarsened-observational",
                round=0,
            )
        )

    rng = np.random.default_rng(train_config.seed)
    model = init_predictor(dataset[0].pixels.size, hidden_units, rng)
    result = train(model, dataset.images_matrix(), dataset.labels_array(), train_config)
    return result.model, dataset


SEARCH_METHODS = ("greedy-flips", "pgd-sign", "pgd-gradient")


@dataclass
class OptimizerConfig:
    """Search settings for a single manipulation.

    ``greedy-flips`` (default) does a discrete local search: rank candidate
    single-pixel flips by the first-order objective change, exactly re-score
    the top few, and apply the best flip while the objective improves.  The
    two ``pgd-*`` methods run projected gradient descent on the relaxed pixel
    box and threshold iterates at 0.5; they are kept for non-binary tasks but
    stall on binary bar images (the relaxed surface has diffuse minima that
    binarize back to the source).

    The distance weight must stay small relative to the causal value spread
    divided by the edit size of a real manipulation, or no structural edit
    can ever lower the objective.
    """

    tradeoff: float = 0.01   # weight on the distance term
    steps: int = 40          # flip budget (greedy) or iteration count (pgd)
    step_size: float = 0.1   # pgd only
    restarts: int = 2        # restart 0 starts exactly at the source
    noise_scale: float = 0.02
    method: str = "greedy-flips"
    rank_candidates: int = 8  # greedy: exactly re-scored flips per step
    # "class-extremes": inside the learning loop, a target at the top (bottom)
    # of the class set is searched as 1.0 (0.0).  With interior class values,
    # literal |C(j) - target| rewards patterns tuned to the exact target value
    # over genuine class members that overshoot it, so the search reliably
    # returns impostors.  Reported metrics always use the true targets.
    search_targets: str = "class-extremes"
    # a counter-push prune flip must leave the predictor value within this
    # band; larger changes indicate a non-monotonicity exploit
    prune_tolerance: float = 0.005

    def __post_init__(self):
        if not (0.0 <= self.tradeoff <= 1.0):
            raise ConfigError("tradeoff must lie in [0, 1]")
        if self.steps < 1 or self.restarts < 1:
            raise ConfigError("steps and restarts must be at least 1")
        if self.step_size <= 0:
            raise ConfigError("step size must be positive")
        if self.method not in SEARCH_METHODS:
            raise ConfigError(f"method must be one of {SEARCH_METHODS}")
        if self.rank_candidates < 1:
            raise ConfigError("rank_candidates must be at least 1")
        if self.search_targets not in ("class-extremes", "literal"):
            raise ConfigError("search_targets must be 'class-extremes' or 'literal'")

    def to_dict(self) -> dict:
        return {
            "tradeoff": self.tradeoff,
            "steps": self.steps,
            "step_size": self.step_size,
            "restarts": self.restarts,
            "noise_scale": self.noise_scale,
            "method": self.method,
            "rank_candidates": self.rank_candidates,
            "search_targets": self.search_targets,
        }


@dataclass(frozen=True, eq=False)
class ManipulationRecord:
    source: np.ndarray          # (side, side) uint8
    target_value: float
    output: np.ndarray          # (side, side) uint8
    predicted: float            # predictor value at the binarized output
    distance: float             # plain L2 between source and output
    oracle_answer: float | None = None

    def answered(self, answer: float) -> "ManipulationRecord":
        return ManipulationRecord(
            source=self.source,
            target_value=self.target_value,
            output=self.output,
            predicted=self.predicted,
            distance=self.distance,
            oracle_answer=answer,
        )


def _binary_objective(models, binary, tgts, anchors, tradeoff):
    """Objective on binary candidates under a committee of predictors: the
    value term is the worst target gap over the committee, so a candidate
    must convince every member.  Single-net precision exploits do not
    transfer between independently trained members, genuine class structure
    does.  Returns member 0's value (the round's predictor) and the
    objective."""
    f0 = None
    worst_gap = None
    for model in models:
        f = forward_batch(model, binary)
        if not np.all(np.isfinite(f)):
            raise NonFiniteObjective("manipulation objective became non-finite")
        gap = np.abs(f - tgts)
        if f0 is None:
            f0, worst_gap = f, gap
        else:
            worst_gap = np.maximum(worst_gap, gap)
    obj = (1.0 - tradeoff) * worst_gap + tradeoff * np.sum(
        (binary - anchors) ** 2, axis=1
    )
    return f0, obj


def _restart_starts(sources, targets, optimizer, rng):
    """Restart 0 is the pristine source (keeps already-in-class manipulations
    exactly identical); later restarts perturb it."""
    R = optimizer.restarts
    anchors = np.repeat(sources, R, axis=0)
    tgts = np.repeat(targets, R)
    noisy = np.ones(len(anchors), dtype=bool)
    noisy[0::R] = False
    return anchors, tgts, noisy


def _candidate_moves(model, x, tgts, push, grads, optimizer, donors=None):
    """Flip-set proposals per row, restricted to the push direction (turning
    pixels on when chasing a higher value, off when chasing a lower one):

    * single pixels and gradient-ranked groups, by first-order objective change;
    * hidden-unit templates: for the most promising units, flip the pixels
      that push the unit toward full alignment with its weight template —
      these cross plateaus no pixel-by-pixel path climbs;
    * donor unions (push-up only): turn on every pixel of a known
      target-class member that the image lacks.

    Counter-push flips are handled separately as value-neutral prunes."""
    n, d = x.shape
    moves: list[np.ndarray] = []
    pushable = (x < 0.5) == (push > 0)[:, None]  # flips along the push direction

    est = grads * (1.0 - 2.0 * x)  # first-order objective change per flip
    est = np.where(pushable, est, np.inf)
    ranked = np.argsort(est, axis=1, kind="stable")
    for c in range(optimizer.rank_candidates):
        mask = np.zeros_like(x, dtype=bool)
        ok = np.take_along_axis(est, ranked[:, c : c + 1], axis=1)[:, 0] < np.inf
        mask[np.flatnonzero(ok), ranked[ok, c]] = True
        moves.append(mask)
    for m in (2, 4, 8, 16, 32):
        mask = np.zeros_like(x, dtype=bool)
        cols = ranked[:, :m]
        take = np.take_along_axis(est, cols, axis=1) < 0.0
        rows = np.repeat(np.arange(n), m).reshape(n, m)
        mask[rows[take], cols[take]] = True
        moves.append(mask)

    z1 = x @ model.w1.T + model.b1
    a1 = sigmoid(z1)
    f = sigmoid(a1 @ model.w2 + model.b2)
    desired = np.sign(tgts - f)
    w_pos = np.clip(model.w1, 0.0, None)
    w_neg = np.clip(-model.w1, 0.0, None)
    # pre-activation change if the unit were pushed toward (or away from) its
    # template using only push-direction flips
    up = (push > 0)[:, None]
    gain = np.where(up, (1.0 - x) @ w_pos.T, -(x @ w_pos.T))
    post = sigmoid(z1 + gain)
    unit_score = desired[:, None] * model.w2[None, :] * (post - a1)
    top_units = np.argsort(-unit_score, axis=1, kind="stable")[:, :6]
    rows_idx = np.arange(n)
    for c in range(top_units.shape[1]):
        units = top_units[:, c]
        w_rows = model.w1[units]  # (n, d)
        align = (w_rows > 0) & pushable
        weight = np.where(align, np.abs(w_rows), -np.inf)
        order = np.argsort(-weight, axis=1, kind="stable")[:, :20]
        mask = np.zeros_like(x, dtype=bool)
        picked = np.take_along_axis(weight, order, axis=1) > -np.inf
        rr = np.repeat(rows_idx, order.shape[1]).reshape(n, -1)
        mask[rr[picked], order[picked]] = True
        moves.append(mask)

    if donors is not None:
        for c in range(donors.shape[1]):
            moves.append((donors[:, c, :] > 0.5) & (x < 0.5) & up)
    return moves


def _prune_moves(x, anchors, push, grads, limit=4):
    """Counter-push single flips restricted to pixels this search added
    relative to the anchor, most value-neutral (smallest |gradient|) first.
    Prunes may only reclaim distance; a counter-push flip that *improves* the
    predictor value is a non-monotonicity exploit and is rejected later."""
    added = (x != anchors) & ((x >= 0.5) == (push > 0)[:, None])
    score = np.where(added, np.abs(grads), np.inf)
    order = np.argsort(score, axis=1, kind="stable")[:, :limit]
    moves = []
    for c in range(order.shape[1]):
        ok = np.take_along_axis(score, order[:, c : c + 1], axis=1)[:, 0] < np.inf
        mask = np.zeros_like(x, dtype=bool)
        mask[np.flatnonzero(ok), order[ok, c]] = True
        moves.append(mask)
    return moves


def _greedy_flip_batch(models, sources, targets, optimizer, rng, donors=None):
    B, d = sources.shape
    R = optimizer.restarts
    anchors, tgts, noisy = _restart_starts(sources, targets, optimizer, rng)
    x = anchors.copy()
    flips = (rng.random(x.shape) < optimizer.noise_scale) & noisy[:, None]
    x[flips] = 1.0 - x[flips]
    donor_rows = np.repeat(donors, R, axis=0) if donors is not None else None
    model = models[0]  # gradients, templates and reported values use the round's predictor

    cur_f, cur_obj = _binary_objective(models, x, tgts, anchors, optimizer.tradeoff)
    best_x, best_f, best_obj = x.copy(), cur_f.copy(), cur_obj.copy()
    push = np.where(tgts >= cur_f, 1.0, -1.0)
    active = np.ones(len(x), dtype=bool)
    eps = optimizer.prune_tolerance
    for _ in range(optimizer.steps):
        if not active.any():
            break
        grads, _ = input_gradient_batch(model, x, tgts, anchors, optimizer.tradeoff)
        push_moves = _candidate_moves(model, x, tgts, push, grads, optimizer, donor_rows)
        prune_moves = _prune_moves(x, anchors, push, grads)
        moves = push_moves + prune_moves
        n_push = len(push_moves)
        cand_obj = np.full((len(x), len(moves)), np.inf)
        cand_f = np.zeros((len(x), len(moves)))
        for c, mask in enumerate(moves):
            if not mask.any():
                continue
            flipped = np.where(mask, 1.0 - x, x)
            cand_f[:, c], cand_obj[:, c] = _binary_objective(
                models, flipped, tgts, anchors, optimizer.tradeoff
            )
            empty = ~mask.any(axis=1)
            cand_obj[empty, c] = np.inf
            if c >= n_push:
                # value-neutrality gate for prunes
                cand_obj[np.abs(cand_f[:, c] - cur_f) > eps, c] = np.inf
        pick = np.argmin(cand_obj, axis=1)
        rows_all = np.arange(len(x))
        picked_obj = cand_obj[rows_all, pick]
        improve = active & (picked_obj < cur_obj - 1e-12)
        active = improve
        rows = np.flatnonzero(improve)
        for r in rows:
            mask = moves[pick[r]][r]
            x[r, mask] = 1.0 - x[r, mask]
        cur_obj[rows] = picked_obj[rows]
        cur_f[rows] = cand_f[rows, pick[rows]]
        better = rows[cur_obj[rows] < best_obj[rows]]
        best_obj[better] = cur_obj[better]
        best_x[better] = x[better]
        best_f[better] = cur_f[better]

    per_source = best_obj.reshape(B, R)
    pick = np.argmin(per_source, axis=1)
    rows = np.arange(B) * R + pick
    return best_x[rows].astype(np.uint8), best_f[rows]


def _pgd_batch(models, sources, targets, optimizer, rng):
    model = models[0]
    B, d = sources.shape
    R = optimizer.restarts
    anchors, tgts, noisy = _restart_starts(sources, targets, optimizer, rng)
    J = anchors.copy()
    J += noisy[:, None] * optimizer.noise_scale * rng.standard_normal(J.shape)
    J = np.clip(J, 0.0, 1.0)

    binary = (J >= 0.5).astype(float)
    best_f, best_obj = _binary_objective(models, binary, tgts, anchors, optimizer.tradeoff)
    best_bin = binary
    for _ in range(optimizer.steps):
        grads, relaxed = input_gradient_batch(model, J, tgts, anchors, optimizer.tradeoff)
        if not np.all(np.isfinite(relaxed)):
            raise NonFiniteObjective("manipulation objective became non-finite")
        delta = np.sign(grads) if optimizer.method == "pgd-sign" else grads
        J = np.clip(J - optimizer.step_size * delta, 0.0, 1.0)
        binary = (J >= 0.5).astype(float)
        f_bin, obj = _binary_objective(models, binary, tgts, anchors, optimizer.tradeoff)
        better = obj < best_obj
        best_obj[better] = obj[better]
        best_f[better] = f_bin[better]
        best_bin[better] = binary[better]

    per_source = best_obj.reshape(B, R)
    pick = np.argmin(per_source, axis=1)  # ties: lowest restart index
    rows = np.arange(B) * R + pick
    return best_bin[rows].astype(np.uint8), best_f[rows]


def _search_batch(models, sources, targets, optimizer, rng, donors=None):
    """Dispatch the manipulation search over a batch.  ``models`` is the
    selection committee; member 0 is the round's predictor.  Returns the
    chosen binary outputs (B, d) and member 0's values on them."""
    if optimizer.method == "greedy-flips":
        return _greedy_flip_batch(models, sources, targets, optimizer, rng, donors)
    return _pgd_batch(models, sources, targets, optimizer, rng)


def manipulate(
    model: Predictor,
    source: np.ndarray,
    target_value: float,
    optimizer: OptimizerConfig,
    rng: np.random.Generator,
) -> ManipulationRecord:
    """Find a binary image near ``source`` that the predictor maps to
    ``target_value``, minimizing (1-tradeoff)|C(j) - target| + tradeoff*d(j, source)^2
    over binary images with the configured search method and restarts.  Every
    candidate is scored as a binary image; the best across restarts wins (ties
    to the lowest restart index, which starts at the pristine source)."""
    if not (0.0 <= target_value <= 1.0):
        raise ConfigError("target value must lie in [0, 1]")
    grid = np.asarray(source)
    flat = grid.astype(float).reshape(1, -1)
    outputs, predicted = _search_batch(
        [model], flat, np.array([target_value]), optimizer, rng
    )
    out_grid = outputs[0].reshape(grid.shape)
    distance = float(np.sqrt(np.sum((out_grid.astype(float) - grid.astype(float)) ** 2)))
    return ManipulationRecord(
        source=grid.astype(np.uint8),
        target_value=float(target_value),
        output=out_grid,
        predicted=float(predicted[0]),
        distance=distance,
    )


def manipulation_error(records: Sequence[ManipulationRecord]) -> float:
    """Mean |oracle answer - target| over the batch."""
    if not records:
        raise EmptyBatch("manipulation error over an empty batch")
    missing = [k for k, r in enumerate(records) if r.oracle_answer is None]
    if missing:
        raise OracleAnswerMissing(f"records {missing} lack oracle answers")
    return float(np.mean([abs(r.oracle_answer - r.target_value) for r in records]))


def manipulation_distance(records: Sequence[ManipulationRecord]) -> float:
    """Mean plain-L2 pixel distance between sources and outputs."""
    if not records:
        raise EmptyBatch("manipulation distance over an empty batch")
    return float(np.mean([r.distance for r in records]))


def _nearest_class_members(
    dataset: CausalDataset,
    sources: np.ndarray,
    target_values: np.ndarray,
    per_source: int = 2,
) -> np.ndarray:
    """For each source, the closest dataset images carrying the target label
    (known members of the target causal class), as union-move donors."""
    all_imgs = dataset.images_matrix()
    labels = dataset.labels_array()
    donors = np.zeros((len(sources), per_source, sources.shape[1]))
    sq = (all_imgs**2).sum(axis=1)
    for b in range(len(sources)):
        gap = np.abs(labels - target_values[b])
        pool = np.flatnonzero(gap <= gap.min() + 1e-12)
        dist = sq[pool] - 2.0 * (all_imgs[pool] @ sources[b]) + (sources[b] ** 2).sum()
        order = pool[np.argsort(dist, kind="stable")[:per_source]]
        for c, idx in enumerate(order):
            donors[b, c] = all_imgs[idx]
        for c in range(len(order), per_source):
            donors[b, c] = donors[b, 0]
    return donors


@dataclass
class LoopConfig:
    rounds: int = 10
    queries_per_round: int = 100
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    hidden_units: int = 100
    seed: int = 0
    stop_threshold: float | None = None
    # number of independently seeded predictors retrained per round; member 0
    # is the round's predictor, the others only vet manipulation candidates
    committee_size: int = 2

    def __post_init__(self):
        if self.rounds < 1:
            raise ConfigError("rounds must be at least 1")
        if self.queries_per_round < 1:
            raise ConfigError("queries per round must be at least 1")
        if self.committee_size < 1:
            raise ConfigError("committee size must be at least 1")

    def to_dict(self) -> dict:
        return {
            "rounds": self.rounds,
            "queries_per_round": self.queries_per_round,
            "optimizer": self.optimizer.to_dict(),
            "train": self.train.to_dict(),
            "hidden_units": self.hidden_units,
            "seed": self.seed,
            "stop_threshold": self.stop_threshold,
            "committee_size": self.committee_size,
        }


@dataclass(frozen=True)
class RoundMetrics:
    round: int
    manipulation_error: float
    manipulation_distance: float
    oracle_queries: int  # cumulative oracle count after this round


@dataclass
class LoopResult:
    predictor: Predictor
    metrics: list[RoundMetrics]
    dataset: CausalDataset
    round_records: list[list[ManipulationRecord]]


def manipulator_learning(
    dataset: CausalDataset,
    oracle: CausalOracle,
    config: LoopConfig,
) -> LoopResult:
    """Iteratively refine the manipulator against the oracle.

    Each round: retrain the predictor on the current dataset, draw source
    records uniformly without replacement, draw target values uniformly from
    the other causal classes, manipulate, query the oracle on every output,
    append the answered records, and log the round metrics.  Stops early when
    ``stop_threshold`` is set and reached.
    """
    class_values = dataset.class_values()
    if len(class_values) < 2:
        raise InsufficientClasses(
            f"need at least two causal classes, found {class_values}"
        )
    if config.queries_per_round > len(dataset):
        raise ConfigError("queries per round exceeds dataset size")

    seeds = np.random.SeedSequence(config.seed).spawn(config.rounds)
    metrics: list[RoundMetrics] = []
    round_records: list[list[ManipulationRecord]] = []
    predictor: Predictor | None = None

    for round_no in range(1, config.rounds + 1):
        round_rng = np.random.default_rng(seeds[round_no - 1])
        X, labels = dataset.images_matrix(), dataset.labels_array()
        committee = []
        for _ in range(config.committee_size):
            member_seed = int(round_rng.integers(2**31))
            model = init_predictor(
                dataset[0].pixels.size,
                config.hidden_units,
                np.random.default_rng(member_seed),
            )
            train_cfg = replace(config.train, seed=member_seed)
            committee.append(train(model, X, labels, train_cfg).model)
        predictor = committee[0]

        chosen = round_rng.choice(len(dataset), config.queries_per_round, replace=False)
        sources = [dataset[int(k)] for k in chosen]
        targets = []
        for rec in sources:
            candidates = [v for v in class_values if v != rec.label]
            if not candidates:
                candidates = class_values
            targets.append(float(candidates[int(round_rng.integers(len(candidates)))]))

        src_matrix = np.stack([r.pixels.ravel() for r in sources]).astype(float)
        search_targets = np.array(targets)
        if config.optimizer.search_targets == "class-extremes":
            lo, hi = class_values[0], class_values[-1]
            search_targets = np.where(
                search_targets == hi, 1.0, np.where(search_targets == lo, 0.0, search_targets)
            )
        donors = _nearest_class_members(dataset, src_matrix, np.array(targets))
        outputs, predicted = _search_batch(
            committee, src_matrix, search_targets, config.optimizer, round_rng, donors
        )

        shape = sources[0].pixels.shape
        records = []
        for k, rec in enumerate(sources):
            out_grid = outputs[k].reshape(shape)
            dist = float(
                np.sqrt(np.sum((out_grid.astype(float) - rec.pixels.astype(float)) ** 2))
            )
            records.append(
                ManipulationRecord(
                    source=rec.pixels,
                    target_value=targets[k],
                    output=out_grid,
                    predicted=float(predicted[k]),
                    distance=dist,
                )
            )

        images = [r.output for r in records]
        if hasattr(oracle, "query_batch"):
            answers = oracle.query_batch(images)
        else:
            answers = [oracle.query(img) for img in images]
        records = [r.answered(float(a)) for r, a in zip(records, answers)]

        dataset.extend(
            CausalRecord(
                pixels=r.output,
                label=float(r.oracle_answer),
                provenance="manipulated",
                round=round_no,
            )
            for r in records
        )

        merr = manipulation_error(records)
        mdist = manipulation_distance(records)
        metrics.append(
            RoundMetrics(
                round=round_no,
                manipulation_error=merr,
                manipulation_distance=mdist,
                oracle_queries=oracle.query_count,
            )
        )
        round_records.append(records)
        if config.stop_threshold is not None and merr <= config.stop_threshold:
            break

    return LoopResult(
        predictor=predictor,
        metrics=metrics,
        dataset=dataset,
        round_records=round_records,
    )


def vbar_insensitivity_fraction(
    model: Predictor,
    config: GratingConfig,
    n_pairs: int,
    rng: np.random.Generator,
    threshold: float = 0.1,
) -> float:
    """Fraction of (image, image + v-bar) pairs on which the predictor moves
    by at most ``threshold`` — the learned analogue of the v-bar having no
    causal role."""
    within = 0
    for _ in range(n_pairs):
        sample = grating_sample(config, rng)
        with_bar = add_vbar(sample.pixels, rng)
        a = forward(model, sample.pixels.ravel())
        b = forward(model, with_bar.ravel())
        if abs(a - b) <= threshold:
            within += 1
    return within / n_pairs
