"""Shared low-level helpers: canonical JSON, hashing, clocks, timestamps.

Canonical serialization is the single byte-level contract used for
signatures, state digests and persisted records: UTF-8, key-sorted,
no insignificant whitespace.
"""

from __future__ import annotations

import hashlib
import json
from datetime import datetime, timedelta, timezone
from typing import Any

UTC_FORMAT = "%Y-%m-%dT%H:%M:%SZ"


def canonical_json(obj: Any) -> bytes:
    """Serialize ``obj`` to canonical UTF-8 JSON bytes."""
    return json.dumps(
        obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def format_utc(dt: datetime) -> str:
    """Render a timestamp at second granularity, always UTC with ``Z``."""
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc).strftime(UTC_FORMAT)


def parse_utc(text: str) -> datetime:
    """Parse an ISO 8601 timestamp; naive values are taken as UTC."""
    cleaned = text.strip()
    if cleaned.endswith("Z"):
        cleaned = cleaned[:-1] + "+00:00"
    dt = datetime.fromisoformat(cleaned)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def normalize_utc(text: str) -> str:
    """Round-trip a timestamp string into the canonical second-granular form."""
    return format_utc(parse_utc(text))


class SystemClock:
    """Wall-clock time truncated to whole seconds."""

    def now(self) -> datetime:
        return datetime.now(timezone.utc).replace(microsecond=0)


class LogicalClock:
    """Deterministic clock: every reading advances one second.

    Used by tests and the simulation harness so that timestamps are
    reproducible and strictly increasing within one node.
    """

    def __init__(self, start: datetime | None = None):
        self._current = start or datetime(2026, 1, 1, tzinfo=timezone.utc)

    def now(self) -> datetime:
        value = self._current
        self._current = value + timedelta(seconds=1)
        return value

    def peek(self) -> datetime:
        return self._current
