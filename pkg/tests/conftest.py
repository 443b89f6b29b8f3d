"""Shared helpers for the test suite."""

from __future__ import annotations

import pytest

from proxtrace.core import ContactList, ContactRecord, DeviceId, hash_identifier


def device(tag: str | int) -> DeviceId:
    """Deterministic device identity for a short tag."""
    return hash_identifier(f"test-device-{tag}")


def contacts(owner: DeviceId, *records) -> ContactList:
    """Build a ContactList from (peer, day, distance[, duration]) tuples."""
    recs = tuple(
        ContactRecord(peer=r[0], day=r[1], distance=r[2], duration=r[3] if len(r) > 3 else 0.0)
        for r in records
    )
    return ContactList(owner, recs)


@pytest.fixture
def devices():
    return [device(i) for i in range(8)]
