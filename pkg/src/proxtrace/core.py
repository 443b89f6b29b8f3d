"""Shared domain types for proximity tracing.

Hashed device identities, health states with quarantine windows, contact
records and per-device contact lists, and the day-granularity clock the
rest of the package runs on.  Everything here is an immutable value type:
updates return new objects, so snapshots can be shared freely.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from enum import Enum, IntEnum
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .errors import TransitionError, ValidationError

# Width of every device digest, in bytes.
DIGEST_BYTES = 16

# Policy constants shared across modules.
DEFAULT_BLUETOOTH_RANGE_M = 10.0
DEFAULT_QUARANTINE_DAYS = 10
CONTACT_WINDOW_DAYS = 2


# =========================================================================
# Device identity
# =========================================================================

@dataclass(frozen=True, order=True)
class DeviceId:
    """Opaque fixed-width digest standing in for a raw radio identifier.

    Equality and ordering are defined on the digest bytes alone; the
    pre-image is hashed at construction time and never stored, so no API
    in this package can leak it.
    """

    digest: bytes

    def __post_init__(self) -> None:
        if not isinstance(self.digest, bytes) or len(self.digest) != DIGEST_BYTES:
            raise ValidationError(
                f"device digest must be exactly {DIGEST_BYTES} bytes"
            )

    @property
    def hex(self) -> str:
        return self.digest.hex()

    @classmethod
    def from_hex(cls, text: str) -> "DeviceId":
        try:
            raw = bytes.fromhex(text.strip())
        except ValueError as exc:
            raise ValidationError(f"not a hex digest: {text!r}") from exc
        return cls(raw)

    def __repr__(self) -> str:  # keep logs short but unambiguous
        return f"DeviceId({self.digest.hex()})"


def hash_identifier(raw_id: bytes | str, *, algorithm: str = "sha256") -> DeviceId:
    """Map a raw device identifier onto its fixed-width digest.

    The digest algorithm is pluggable by name (anything hashlib knows);
    output is truncated to DIGEST_BYTES so every identity has the same
    width regardless of algorithm.
    """
    if isinstance(raw_id, str):
        raw_id = raw_id.encode("utf-8")
    if not raw_id:
        raise ValidationError("empty identifier cannot be hashed")
    digest = hashlib.new(algorithm, raw_id).digest()
    if len(digest) < DIGEST_BYTES:
        raise ValidationError(
            f"hash algorithm {algorithm!r} is narrower than {DIGEST_BYTES} bytes"
        )
    return DeviceId(digest[:DIGEST_BYTES])


# =========================================================================
# Health state
# =========================================================================

class Stage(Enum):
    """Epidemiological stage of one individual."""

    SUSCEPTIBLE = "susceptible"
    INFECTED = "infected"
    RECOVERED = "recovered"


# The only admissible stage changes: susceptible -> infected -> recovered.
_VALID_TRANSITIONS = {
    (Stage.SUSCEPTIBLE, Stage.INFECTED),
    (Stage.INFECTED, Stage.RECOVERED),
}


def validate_transition(old: Stage, new: Stage) -> None:
    if (old, new) not in _VALID_TRANSITIONS:
        raise TransitionError(f"illegal status transition {old.value} -> {new.value}")


@dataclass(frozen=True)
class Quarantine:
    """Half-open isolation window: active on days start_day <= d < end_day."""

    start_day: int
    end_day: int

    def __post_init__(self) -> None:
        if self.start_day < 0 or self.end_day <= self.start_day:
            raise ValidationError("quarantine window must be non-empty and non-negative")

    @classmethod
    def starting(cls, first_day: int, days: int = DEFAULT_QUARANTINE_DAYS) -> "Quarantine":
        return cls(first_day, first_day + days)

    @property
    def days(self) -> int:
        return self.end_day - self.start_day

    def covers(self, day: int) -> bool:
        return self.start_day <= day < self.end_day


@dataclass(frozen=True)
class HealthStatus:
    """Stage plus an optional quarantine window."""

    stage: Stage
    quarantine: Quarantine | None = None

    def with_stage(self, new_stage: Stage) -> "HealthStatus":
        """Return a copy in the new stage, enforcing the forward-only chain."""
        validate_transition(self.stage, new_stage)
        return HealthStatus(new_stage, self.quarantine)

    def with_quarantine(self, window: Quarantine) -> "HealthStatus":
        return HealthStatus(self.stage, window)

    def is_quarantined(self, day: int) -> bool:
        return self.quarantine is not None and self.quarantine.covers(day)


# =========================================================================
# Contact taxonomy
# =========================================================================

class Category(IntEnum):
    """Observed-individual risk category, highest risk first.

    A: infected; B: contact of an infected individual; C: contact of a
    category-B individual; D: no known exposure.  The integer value is
    the 0-based index into a weight vector, so generalized taxonomies
    with more than four levels can use plain ints alongside these.
    """

    A = 0
    B = 1
    C = 2
    D = 3

    @classmethod
    def from_letter(cls, letter: str) -> "Category":
        try:
            return cls[letter.strip().upper()]
        except KeyError as exc:
            raise ValidationError(f"unknown category {letter!r}") from exc


# =========================================================================
# Contacts
# =========================================================================

@dataclass(frozen=True)
class ContactRecord:
    """One (peer, day) encounter: closest distance and accumulated duration."""

    peer: DeviceId
    day: int
    distance: float
    duration: float

    def __post_init__(self) -> None:
        if self.day < 0:
            raise ValidationError("contact day must be non-negative")
        if not self.distance > 0:
            raise ValidationError("contact distance must be strictly positive")
        if self.duration < 0:
            raise ValidationError("contact duration must be non-negative")


def _merge_records(records: Iterable[ContactRecord]) -> tuple[ContactRecord, ...]:
    """Collapse duplicates per (peer, day): keep min distance, sum duration."""
    merged: dict[tuple[int, DeviceId], ContactRecord] = {}
    for rec in records:
        key = (rec.day, rec.peer)
        prior = merged.get(key)
        if prior is None:
            merged[key] = rec
        else:
            merged[key] = ContactRecord(
                peer=rec.peer,
                day=rec.day,
                distance=min(prior.distance, rec.distance),
                duration=prior.duration + rec.duration,
            )
    return tuple(merged[key] for key in sorted(merged))


@dataclass(frozen=True)
class ContactList:
    """All encounters one device has logged, at most one record per (peer, day).

    Records are kept sorted by (day, peer); construction normalizes any
    duplicates with the same merge rule used by add().
    """

    owner: DeviceId
    records: tuple[ContactRecord, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", _merge_records(self.records))

    def add(self, record: ContactRecord) -> "ContactList":
        return ContactList(self.owner, self.records + (record,))

    def on_day(self, day: int) -> tuple[ContactRecord, ...]:
        return tuple(rec for rec in self.records if rec.day == day)

    def since(self, first_day: int) -> tuple[ContactRecord, ...]:
        return tuple(rec for rec in self.records if rec.day >= first_day)

    def peers(self) -> tuple[DeviceId, ...]:
        seen: dict[DeviceId, None] = {}
        for rec in self.records:
            seen.setdefault(rec.peer, None)
        return tuple(seen)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[ContactRecord]:
        return iter(self.records)


def record_contact(
    contacts: ContactList,
    record: ContactRecord,
    clock: "SimClock",
    *,
    max_range_m: float = DEFAULT_BLUETOOTH_RANGE_M,
) -> ContactList:
    """Insert one encounter, rejecting future-dated or out-of-range records."""
    if record.day > clock.current_day:
        raise ValidationError(
            f"contact dated day {record.day} is in the future (today is {clock.current_day})"
        )
    if record.distance > max_range_m:
        raise ValidationError(
            f"contact at {record.distance} m exceeds the {max_range_m} m radio range"
        )
    return contacts.add(record)


# =========================================================================
# Clock
# =========================================================================

@dataclass(frozen=True)
class SimClock:
    """Integer day counter; within-day time exists only as encounter duration."""

    current_day: int = 0

    def __post_init__(self) -> None:
        if self.current_day < 0:
            raise ValidationError("day counter cannot be negative")

    def tick(self, days: int = 1) -> "SimClock":
        if days < 1:
            raise ValidationError("clock can only move forward")
        return SimClock(self.current_day + days)


# =========================================================================
# Contact graph CSV
# =========================================================================

GRAPH_CSV_HEADER = ("owner_digest_hex", "peer_digest_hex", "day", "distance_m", "duration_s")


def write_contact_graph(graph: Mapping[DeviceId, ContactList], path: str | Path) -> None:
    """Serialize a contact graph, one row per record, sorted for stable bytes."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(GRAPH_CSV_HEADER)
        for owner in sorted(graph):
            for rec in graph[owner].records:
                writer.writerow(
                    [owner.hex, rec.peer.hex, rec.day, repr(rec.distance), repr(rec.duration)]
                )


def read_contact_graph(path: str | Path) -> dict[DeviceId, ContactList]:
    """Parse a contact graph CSV written by write_contact_graph.

    Raises ValidationError naming the offending line on malformed input.
    """
    rows: dict[DeviceId, list[ContactRecord]] = {}
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        for lineno, row in enumerate(reader, start=1):
            if not row or (lineno == 1 and tuple(row) == GRAPH_CSV_HEADER):
                continue
            try:
                owner = DeviceId.from_hex(row[0])
                record = ContactRecord(
                    peer=DeviceId.from_hex(row[1]),
                    day=int(row[2]),
                    distance=float(row[3]),
                    duration=float(row[4]),
                )
            except (IndexError, ValueError, ValidationError) as exc:
                raise ValidationError(f"line {lineno}: malformed contact row ({exc})") from exc
            rows.setdefault(owner, []).append(record)
    return {owner: ContactList(owner, tuple(records)) for owner, records in rows.items()}
