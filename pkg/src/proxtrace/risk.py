"""Area risk scoring and the combinatorics behind risk curves.

The score for an area is a weighted mean over the individuals observed in
it.  Each observation carries a risk category (highest risk first) and a
distance from the scanner; with weights w and distances d the score is

    score = sum_i w[cat_i] * d_i / (w[0] * sum_i d_i)

which is a distance-weighted convex combination of the weight ratios
w[k] / w[0].  Consequences worth knowing: the score lives in
[w[-1]/w[0], 1], it equals 1 exactly when everyone observed is in the top
category, it is invariant to rescaling all distances by a common factor,
and farther observations carry *more* weight than nearer ones (the
distances appear as multipliers, not attenuators).  That last property is
kept as-is deliberately; see the README note on score behavior.

Also here: enumeration of category-count distributions (all ways to place
up to N individuals into K categories), and seed-deterministic curve and
surface generators that score every such distribution under randomized
placements.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from itertools import islice
from pathlib import Path
from typing import Iterator, Literal, Sequence

import numpy as np

from .core import DeviceId
from .errors import NoObservationsError, ScoreRangeError, ValidationError

# Distances are drawn at least this far from the scanner: a reporting
# device is never at distance zero from itself.
MIN_PLACEMENT_DISTANCE_M = 0.5

DEFAULT_AREA_RADIUS_M = 10.0
DEFAULT_PLACEMENT_REPEATS = 100

Placement = Literal["uniform", "equal"]


# =========================================================================
# Weights and observations
# =========================================================================

@dataclass(frozen=True)
class WeightConfig:
    """Per-category weights, strictly positive and strictly descending."""

    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.weights) < 1:
            raise ValidationError("at least one category weight is required")
        for w in self.weights:
            if not w > 0:
                raise ValidationError("category weights must be strictly positive")
        for hi, lo in zip(self.weights, self.weights[1:]):
            if not hi > lo:
                raise ValidationError("category weights must be strictly descending")

    @property
    def top(self) -> float:
        return self.weights[0]

    def __len__(self) -> int:
        return len(self.weights)

    def __getitem__(self, index: int) -> float:
        return self.weights[index]


# Standard four-category weighting, highest risk first.
DEFAULT_WEIGHTS = WeightConfig((0.7, 0.2, 0.09, 0.01))


@dataclass(frozen=True)
class Observation:
    """One individual seen in the area: who, what category, how far away."""

    peer: DeviceId
    category: int
    distance: float

    def __post_init__(self) -> None:
        if int(self.category) < 0:
            raise ValidationError("category index must be non-negative")
        if not self.distance > 0:
            raise ValidationError("observation distance must be strictly positive")


@dataclass(frozen=True)
class AreaObservation:
    """Everything observed within one scan radius; never empty."""

    radius: float
    observations: tuple[Observation, ...]

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ValidationError("area radius must be strictly positive")
        if len(self.observations) == 0:
            raise NoObservationsError("area score is undefined with zero observations")
        for obs in self.observations:
            if obs.distance > self.radius:
                raise ValidationError(
                    f"observation at {obs.distance} m lies outside the {self.radius} m radius"
                )

    @property
    def count(self) -> int:
        return len(self.observations)


# =========================================================================
# Scoring and classification
# =========================================================================

@dataclass(frozen=True)
class RiskScore:
    value: float


class RiskClass(Enum):
    """Five classification bands over the unit interval."""

    A = "Very Low"
    B = "Low"
    C = "Medium"
    D = "High"
    E = "Very High"

    @property
    def label(self) -> str:
        return self.value


def score_from_arrays(
    categories: np.ndarray, distances: np.ndarray, weights: WeightConfig
) -> float:
    """Numeric kernel behind assess_area, usable on plain arrays."""
    if categories.size == 0:
        raise NoObservationsError("area score is undefined with zero observations")
    if int(categories.max()) >= len(weights):
        raise ValidationError(
            f"category index {int(categories.max())} has no weight (got {len(weights)} weights)"
        )
    w = np.asarray(weights.weights, dtype=float)
    d = np.asarray(distances, dtype=float)
    raw = float((w[categories] * d).sum() / (weights.top * d.sum()))
    # The value is provably inside [w_K/w_1, 1]; anything past an edge is
    # summation-order rounding, so pin it back rather than leak epsilon out.
    return min(max(raw, weights.weights[-1] / weights.top), 1.0)


def assess_area(area: AreaObservation, weights: WeightConfig = DEFAULT_WEIGHTS) -> RiskScore:
    """Score one area observation set under the given weights."""
    cats = np.fromiter((int(o.category) for o in area.observations), dtype=np.int64)
    dists = np.fromiter((o.distance for o in area.observations), dtype=float)
    return RiskScore(score_from_arrays(cats, dists, weights))


# Upper band edges, inclusive on the right: class A is [0, 0.2] and each
# later band is a half-open (lo, hi] interval.
_BAND_EDGES = ((0.2, "A"), (0.4, "B"), (0.6, "C"), (0.8, "D"), (1.0, "E"))


def classify(score: RiskScore | float) -> RiskClass:
    """Map a score in [0, 1] onto its band; anything outside is an error."""
    value = score.value if isinstance(score, RiskScore) else float(score)
    if math.isnan(value) or value < 0.0 or value > 1.0:
        raise ScoreRangeError(f"risk score {value!r} outside [0, 1] cannot be classified")
    for edge, name in _BAND_EDGES:
        if value <= edge:
            return RiskClass[name]
    raise ScoreRangeError(f"risk score {value!r} outside [0, 1] cannot be classified")


# =========================================================================
# Category-count distributions
# =========================================================================

@dataclass(frozen=True)
class CategoryDistribution:
    """How many observed individuals fall in each category; total may be zero."""

    cardinalities: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.cardinalities) < 1:
            raise ValidationError("a distribution needs at least one category")
        for n in self.cardinalities:
            if n < 0:
                raise ValidationError("category cardinalities must be non-negative")

    @property
    def total(self) -> int:
        return sum(self.cardinalities)


def _descending_vectors(remaining: int, slots: int) -> Iterator[tuple[int, ...]]:
    if slots == 1:
        for x in range(remaining, -1, -1):
            yield (x,)
        return
    for x in range(remaining, -1, -1):
        for rest in _descending_vectors(remaining - x, slots - 1):
            yield (x,) + rest


def enumerate_distributions(n: int, k: int) -> Iterator[CategoryDistribution]:
    """Yield every k-category distribution with total <= n.

    Order is lexicographically descending on the cardinality vector:
    (n, 0, ..., 0) comes first and the all-zero vector comes last.
    """
    if n < 0 or k < 1:
        raise ValidationError("need n >= 0 individuals and k >= 1 categories")
    for vec in _descending_vectors(n, k):
        yield CategoryDistribution(vec)


def count_distributions(n: int, k: int) -> int:
    """Number of k-category distributions with total <= n, i.e. C(n + k, k).

    The count includes the empty (all-zero) arrangement: for n=20, k=4 it
    is C(24, 4) = 10626.  A figure of 10627 is sometimes quoted for this
    quantity; the exact count of distinct cardinality vectors is C(n+k, k)
    and that is what the enumerator produces.
    """
    if n < 0 or k < 1:
        raise ValidationError("need n >= 0 individuals and k >= 1 categories")
    return math.comb(n + k, k)


# =========================================================================
# Curve and surface generation
# =========================================================================

@dataclass(frozen=True)
class CurvePoint:
    index: int  # 1-based position in enumeration order
    cardinalities: tuple[int, ...]
    mean_score: float


@dataclass(frozen=True)
class SurfaceCell:
    n_a: int
    n_b: int
    mean_score: float


def _placement_matrix(
    rng: np.random.Generator, placement: Placement, total: int, repeats: int, radius: float
) -> np.ndarray:
    if placement == "uniform":
        return rng.uniform(MIN_PLACEMENT_DISTANCE_M, radius, size=(repeats, total))
    if placement == "equal":
        return np.full((repeats, total), radius / 2.0)
    raise ValidationError(f"unknown placement policy {placement!r}")


def _mean_score(
    counts: Sequence[int],
    weights: WeightConfig,
    seed_key: tuple[int, ...],
    placement: Placement,
    repeats: int,
    radius: float,
) -> float:
    total = int(sum(counts))
    if total == 0:
        # Empty area: reported as zero risk by convention so curves and
        # surfaces stay total over the whole enumeration.
        return 0.0
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed_key[0], spawn_key=seed_key[1:]))
    d = _placement_matrix(rng, placement, total, repeats, radius)
    w = np.asarray(weights.weights, dtype=float)
    w_vec = np.repeat(w, np.asarray(counts, dtype=np.int64))
    scores = (d * w_vec).sum(axis=1) / (weights.top * d.sum(axis=1))
    np.clip(scores, weights.weights[-1] / weights.top, 1.0, out=scores)
    return float(scores.mean())


def _curve_chunk(args: tuple) -> list[CurvePoint]:
    n, k, start, stop, weights_tuple, radius, placement, repeats, seed = args
    weights = WeightConfig(weights_tuple)
    points = []
    vectors = islice(enumerate_distributions(n, k), start, stop)
    for offset, dist in enumerate(vectors):
        index = start + offset + 1
        mean = _mean_score(
            dist.cardinalities, weights, (seed, index), placement, repeats, radius
        )
        points.append(CurvePoint(index, dist.cardinalities, mean))
    return points


def risk_curve(
    n: int,
    k: int,
    weights: WeightConfig = DEFAULT_WEIGHTS,
    *,
    radius: float = DEFAULT_AREA_RADIUS_M,
    placement: Placement = "uniform",
    repeats: int = DEFAULT_PLACEMENT_REPEATS,
    seed: int = 0,
    jobs: int = 1,
) -> list[CurvePoint]:
    """Score every distribution of up to n individuals over k categories.

    Each point averages `repeats` random placements inside `radius`; the
    per-point RNG is keyed on (seed, index) so the result is identical for
    any `jobs` value.
    """
    if len(weights) != k:
        raise ValidationError(f"need exactly {k} weights, got {len(weights)}")
    if repeats < 1:
        raise ValidationError("placement repeats must be at least 1")
    total = count_distributions(n, k)
    if jobs <= 1 or total < 64:
        return _curve_chunk((n, k, 0, total, weights.weights, radius, placement, repeats, seed))
    bounds = np.linspace(0, total, num=jobs + 1, dtype=int)
    tasks = [
        (n, k, int(lo), int(hi), weights.weights, radius, placement, repeats, seed)
        for lo, hi in zip(bounds, bounds[1:])
    ]
    points: list[CurvePoint] = []
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        for chunk in pool.map(_curve_chunk, tasks):
            points.extend(chunk)
    return points


def _surface_chunk(args: tuple) -> list[SurfaceCell]:
    cells, weights_tuple, radius, placement, repeats, seed, k = args
    weights = WeightConfig(weights_tuple)
    out = []
    for n_a, n_b in cells:
        counts = (n_a, n_b) + (0,) * (k - 2)
        mean = _mean_score(counts, weights, (seed, n_a, n_b), placement, repeats, radius)
        out.append(SurfaceCell(n_a, n_b, mean))
    return out


def risk_surface(
    n_max: int,
    weights: WeightConfig = DEFAULT_WEIGHTS,
    *,
    radius: float = DEFAULT_AREA_RADIUS_M,
    placement: Placement = "uniform",
    repeats: int = DEFAULT_PLACEMENT_REPEATS,
    seed: int = 0,
    jobs: int = 1,
) -> list[SurfaceCell]:
    """Score every (n_a, n_b) cell with n_a + n_b <= n_max.

    Only the two highest-risk categories are populated; remaining
    categories stay empty.  Deterministic for a given seed, independent
    of the parallelism degree.
    """
    if n_max < 0:
        raise ValidationError("n_max must be non-negative")
    if len(weights) < 2:
        raise ValidationError("surface generation needs at least two categories")
    cells = [(a, b) for a in range(n_max + 1) for b in range(n_max - a + 1)]
    k = len(weights)
    if jobs <= 1 or len(cells) < 64:
        return _surface_chunk((cells, weights.weights, radius, placement, repeats, seed, k))
    bounds = np.linspace(0, len(cells), num=jobs + 1, dtype=int)
    tasks = [
        (cells[int(lo):int(hi)], weights.weights, radius, placement, repeats, seed, k)
        for lo, hi in zip(bounds, bounds[1:])
    ]
    out: list[SurfaceCell] = []
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        for chunk in pool.map(_surface_chunk, tasks):
            out.extend(chunk)
    return out


# =========================================================================
# CSV emission
# =========================================================================

def write_curve_csv(points: Sequence[CurvePoint], path: str | Path, k: int) -> None:
    header = ["index"] + [f"n_{i}" for i in range(1, k + 1)] + ["mean_score", "risk_class"]
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for pt in points:
            writer.writerow(
                [pt.index, *pt.cardinalities, repr(pt.mean_score), classify(pt.mean_score).name]
            )


def write_surface_csv(cells: Sequence[SurfaceCell], path: str | Path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["n_a", "n_b", "mean_score", "risk_class"])
        for cell in cells:
            writer.writerow(
                [cell.n_a, cell.n_b, repr(cell.mean_score), classify(cell.mean_score).name]
            )
