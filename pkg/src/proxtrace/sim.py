"""Discrete-day spatial epidemic engine with an optional tracing app.

Each day every free agent jumps to a fresh uniform position in a square
arena, pairs within the infection radius expose each other, and (when the
app is on) pairs within radio range log mutual contacts into a protocol
registry.  Agents turn symptomatic a fixed delay after infection; with
the app enabled that triggers a verified status update, whose co-contact
trace quarantines the reporter and everyone traced.  Quarantined agents
neither move, nor transmit, nor get infected.

Determinism contract: every random draw is keyed by purpose, day, and the
identity it concerns (positions by (seed, day, agent); infection events by
(seed, day, pair)).  Runs with and without the app therefore share one
event stream (common random numbers), and no amount of re-ordering or
parallelism changes an outcome.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .core import DeviceId, SimClock, Stage, hash_identifier
from .errors import ValidationError
from .protocol import NotificationKind, Registry, RegistryPolicy

# Arena sizing reference: 20 individuals per 100 m^2.
REFERENCE_DENSITY_PER_M2 = 0.2

# Stage encoding inside the engine's arrays.
_S, _I, _R = 0, 1, 2

# Stream tags for the per-day seed derivation.
_INIT_STREAM = 0
_MOVE_STREAM = 1

_STAFF_CREDENTIAL = "field-clinic"


# =========================================================================
# Configuration
# =========================================================================

@dataclass(frozen=True)
class SimConfig:
    """Engine parameters; every field is validated by name."""

    population: int = 2000
    initial_infected: int = 1
    # Square arena side in meters; None derives it from the reference
    # density (population / 0.2 per m^2, i.e. side 100 m at 2000 agents).
    arena_side: float | None = None
    bluetooth_range: float = 10.0
    infection_radius: float = 2.0
    infection_probability: float = 0.5
    symptom_onset_delay: int = 2
    quarantine_start_delay: int = 0
    quarantine_days: int = 10
    infectious_period: int = 10
    app_enabled: bool = True
    seed: int = 0
    max_days: int = 60
    encounter_duration_s: float = 300.0

    def __post_init__(self) -> None:
        checks = [
            ("population", self.population >= 1),
            ("initial_infected", 0 <= self.initial_infected <= self.population),
            ("arena_side", self.arena_side is None or self.arena_side > 0),
            ("bluetooth_range", self.bluetooth_range > 0),
            ("infection_radius", 0 < self.infection_radius <= self.bluetooth_range),
            ("infection_probability", 0.0 <= self.infection_probability <= 1.0),
            ("symptom_onset_delay", self.symptom_onset_delay >= 0),
            ("quarantine_start_delay", self.quarantine_start_delay >= 0),
            ("quarantine_days", self.quarantine_days >= 0),
            ("infectious_period", self.infectious_period >= 1),
            ("max_days", self.max_days >= 1),
            ("encounter_duration_s", self.encounter_duration_s >= 0),
        ]
        for name, ok in checks:
            if not ok:
                raise ValidationError(f"invalid value for config field {name!r}")

    @property
    def side(self) -> float:
        if self.arena_side is not None:
            return self.arena_side
        return math.sqrt(self.population / REFERENCE_DENSITY_PER_M2)


@dataclass(frozen=True)
class DayStats:
    day: int
    new_infections: int
    cumulative_infections: int
    quarantined_count: int
    susceptible_count: int


@dataclass
class WorldState:
    """Mutable engine state; step() advances it one day in place."""

    config: SimConfig
    day: int
    positions: np.ndarray
    stage: np.ndarray
    infection_day: np.ndarray
    q_start: np.ndarray
    q_end: np.ndarray
    detected: np.ndarray
    devices: list[DeviceId]
    index_of: dict[DeviceId, int]
    registry: Registry | None


# =========================================================================
# Keyed randomness
# =========================================================================

def _day_rng(seed: int, stream: int, day: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(stream, day)))


_MASK64 = (1 << 64) - 1


def _mix64_int(z: int) -> int:
    # splitmix64 finalizer on plain ints; masking emulates uint64 wrap.
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _mix64(z: np.ndarray) -> np.ndarray:
    # Same finalizer vectorized; uint64 arithmetic wraps, which is the point.
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _pair_uniforms(seed: int, day: int, ii: np.ndarray, jj: np.ndarray) -> np.ndarray:
    """One float in [0, 1) per (i, j) pair, independent of evaluation order."""
    base = _mix64_int(_mix64_int((seed & _MASK64) ^ 0x9E3779B97F4A7C15) ^ (day + 1))
    keys = (ii.astype(np.uint64) << np.uint64(32)) | jj.astype(np.uint64)
    hashed = _mix64(keys ^ np.uint64(base))
    return (hashed >> np.uint64(11)).astype(np.float64) / float(1 << 53)


# =========================================================================
# World construction
# =========================================================================

def build_world(config: SimConfig) -> WorldState:
    n = config.population
    rng = _day_rng(config.seed, _INIT_STREAM, 0)
    positions = rng.uniform(0.0, config.side, size=(n, 2))
    stage = np.full(n, _S, dtype=np.int8)
    infection_day = np.full(n, -1, dtype=np.int32)
    seeds = rng.choice(n, size=config.initial_infected, replace=False)
    stage[seeds] = _I
    infection_day[seeds] = 0

    devices = [hash_identifier(f"agent-{i:06d}") for i in range(n)]
    registry: Registry | None = None
    if config.app_enabled:
        registry = Registry(
            {_STAFF_CREDENTIAL},
            seed=config.seed,
            policy=RegistryPolicy(
                quarantine_days=config.quarantine_days,
                bluetooth_range_m=config.bluetooth_range,
                encounter_duration_s=config.encounter_duration_s,
            ),
            log_events=False,
        )
        for i, device in enumerate(devices):
            otc = registry.issue_otc(_STAFF_CREDENTIAL)
            registry.register_user(otc.code, f"agent-{i:06d}")

    return WorldState(
        config=config,
        day=0,
        positions=positions,
        stage=stage,
        infection_day=infection_day,
        q_start=np.zeros(n, dtype=np.int32),
        q_end=np.zeros(n, dtype=np.int32),
        detected=np.zeros(n, dtype=bool),
        devices=devices,
        index_of={device: i for i, device in enumerate(devices)},
        registry=registry,
    )


# =========================================================================
# One day
# =========================================================================

def step(world: WorldState, config: SimConfig | None = None) -> tuple[WorldState, DayStats]:
    """Advance one day: move, meet, transmit, detect, recover."""
    cfg = world.config if config is None else config
    n = cfg.population
    day = world.day
    isolated = (world.q_start <= day) & (day < world.q_end)
    free = ~isolated

    # Movement: one draw per agent per day regardless of quarantine, so the
    # stream is identical across arms; only free agents actually move.
    proposed = _day_rng(cfg.seed, _MOVE_STREAM, day).uniform(0.0, cfg.side, size=(n, 2))
    world.positions[free] = proposed[free]

    # Proximity: all pairs of free agents within the widest radius needed.
    free_idx = np.flatnonzero(free)
    new_targets = np.empty(0, dtype=np.int64)
    if free_idx.size >= 2:
        radius = cfg.bluetooth_range if cfg.app_enabled else cfg.infection_radius
        tree = cKDTree(world.positions[free_idx])
        local_pairs = tree.query_pairs(r=radius, output_type="ndarray")
        if local_pairs.size:
            ii = free_idx[local_pairs[:, 0]]
            jj = free_idx[local_pairs[:, 1]]
            deltas = world.positions[ii] - world.positions[jj]
            dist = np.hypot(deltas[:, 0], deltas[:, 1])

            if cfg.app_enabled and world.registry is not None:
                registry = world.registry
                registry.advance_clock(SimClock(day))
                devices = world.devices
                for a, b, d in zip(ii.tolist(), jj.tolist(), dist.tolist()):
                    registry.record_encounter(devices[a], devices[b], d)

            close = dist <= cfg.infection_radius
            stage_i = world.stage[ii]
            stage_j = world.stage[jj]
            exposed = close & (
                ((stage_i == _I) & (stage_j == _S)) | ((stage_j == _I) & (stage_i == _S))
            )
            if np.any(exposed):
                u = _pair_uniforms(cfg.seed, day, ii, jj)
                hit = exposed & (u < cfg.infection_probability)
                if np.any(hit):
                    targets = np.where(world.stage[ii[hit]] == _S, ii[hit], jj[hit])
                    new_targets = np.unique(targets)

    # Infections land after the whole pair sweep: agents infected today are
    # snapshot-susceptible for every pair, so pair order cannot matter.
    world.stage[new_targets] = _I
    world.infection_day[new_targets] = day

    # Detection: newly symptomatic agents report through the protocol.
    if cfg.app_enabled and world.registry is not None:
        lag = cfg.symptom_onset_delay + cfg.quarantine_start_delay
        due = np.flatnonzero(
            (world.infection_day >= 0)
            & (world.infection_day + lag == day)
            & ~world.detected
        )
        if due.size:
            registry = world.registry
            registry.advance_clock(SimClock(day))
            clock = SimClock(day)
            for idx in due.tolist():
                world.detected[idx] = True
                device = world.devices[idx]
                otc = registry.issue_otc(_STAFF_CREDENTIAL)
                notes = registry.update_status(otc.code, device, Stage.INFECTED, clock)
                to_isolate = [idx]
                for note in notes:
                    if note.kind is NotificationKind.CONTACT_AT_RISK:
                        to_isolate.append(world.index_of[note.recipient])
                for agent in to_isolate:
                    end = day + 1 + cfg.quarantine_days
                    if end > world.q_end[agent]:
                        world.q_start[agent] = day + 1
                        world.q_end[agent] = end

    # Recovery at end of day: the infectious window is exactly
    # `infectious_period` full days after the infection day.
    recovered = (world.stage == _I) & (day - world.infection_day >= cfg.infectious_period)
    world.stage[recovered] = _R

    stats = DayStats(
        day=day,
        new_infections=int(new_targets.size),
        cumulative_infections=int(np.count_nonzero(world.stage != _S)),
        quarantined_count=int(np.count_nonzero((world.q_start <= day) & (day < world.q_end))),
        susceptible_count=int(np.count_nonzero(world.stage == _S)),
    )
    world.day = day + 1
    return world, stats


# =========================================================================
# Full runs
# =========================================================================

def run(config: SimConfig) -> list[DayStats]:
    """Step until max_days or until no infectious agent remains."""
    world = build_world(config)
    stats: list[DayStats] = []
    for _ in range(config.max_days):
        world, today = step(world)
        stats.append(today)
        if not np.any(world.stage == _I):
            break
    return stats


@dataclass(frozen=True)
class CompareSummary:
    population: int
    seed: int
    baseline_total: int
    app_total: int
    baseline_attack_rate: float
    app_attack_rate: float
    baseline_peak_day: int
    app_peak_day: int
    ratio: float


@dataclass(frozen=True)
class CompareResult:
    baseline: list[DayStats]
    app: list[DayStats]
    summary: CompareSummary


def _peak_day(series: Sequence[DayStats]) -> int:
    best = max(s.new_infections for s in series)
    for s in series:
        if s.new_infections == best:
            return s.day
    return 0


def compare(config: SimConfig) -> CompareResult:
    """Run the app-off and app-on arms under common random numbers."""
    baseline = run(replace(config, app_enabled=False))
    app = run(replace(config, app_enabled=True))
    base_total = baseline[-1].cumulative_infections
    app_total = app[-1].cumulative_infections
    if base_total > 0:
        ratio = app_total / base_total
    else:
        ratio = 1.0 if app_total == 0 else float("inf")
    summary = CompareSummary(
        population=config.population,
        seed=config.seed,
        baseline_total=base_total,
        app_total=app_total,
        baseline_attack_rate=base_total / config.population,
        app_attack_rate=app_total / config.population,
        baseline_peak_day=_peak_day(baseline),
        app_peak_day=_peak_day(app),
        ratio=ratio,
    )
    return CompareResult(baseline=baseline, app=app, summary=summary)


def replicate_compare(config: SimConfig, replicates: int, jobs: int = 1) -> list[CompareResult]:
    """compare() over consecutive seeds; output order is by seed offset."""
    if replicates < 1:
        raise ValidationError("invalid value for config field 'replicates'")
    configs = [replace(config, seed=config.seed + k) for k in range(replicates)]
    if jobs <= 1 or replicates == 1:
        return [compare(c) for c in configs]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(compare, configs))
