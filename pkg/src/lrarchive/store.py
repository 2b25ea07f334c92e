"""Immutable, fixity-checked object storage with linear version chains.

Content lives in a write-once blob area addressed by its SHA-256 hash;
object records describe each archived unit and are persisted one JSON
file per URID. Nothing above the resolver ever sees a physical path,
and no code path rewrites stored bytes: new versions are new objects
with fresh identifiers, and the old ones keep resolving forever.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .errors import (
    EmptyContent,
    IdenticalContent,
    NotFound,
    TransferCorrupt,
    VersionConflict,
    WriteOnceViolation,
)
from .resolver import HandleRecord, HandleResolver, InstanceLocation, URID, as_urid
from .util import SystemClock, canonical_json, format_utc, sha256_hex


@dataclass(frozen=True)
class ArchivalObject:
    """One immutable content unit; every field is fixed at creation."""

    urid: URID
    content_hash: str
    media_type: str
    size_bytes: int
    depositor_id: str
    created_at: str
    version_number: int = 1
    predecessor: str | None = None

    def to_dict(self) -> dict:
        return {
            "urid": self.urid.text,
            "contentHash": self.content_hash,
            "mediaType": self.media_type,
            "sizeBytes": self.size_bytes,
            "depositorId": self.depositor_id,
            "createdAt": self.created_at,
            "versionNumber": self.version_number,
            "predecessor": self.predecessor,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ArchivalObject":
        return cls(
            urid=URID.parse(data["urid"]),
            content_hash=data["contentHash"],
            media_type=data["mediaType"],
            size_bytes=int(data["sizeBytes"]),
            depositor_id=data["depositorId"],
            created_at=data["createdAt"],
            version_number=int(data["versionNumber"]),
            predecessor=data.get("predecessor"),
        )


@dataclass(frozen=True)
class FixityReport:
    urid: str
    checked_at: str
    status: str  # PASS | FAIL
    expected_hash: str
    observed_hash: str

    def to_dict(self) -> dict:
        return {
            "urid": self.urid,
            "checkedAt": self.checked_at,
            "status": self.status,
            "expectedHash": self.expected_hash,
            "observedHash": self.observed_hash,
        }


class _MemoryBlobs:
    """In-memory write-once blob area (used by tests and the sim harness)."""

    def __init__(self):
        self._blobs: dict[str, bytes] = {}

    def put(self, digest: str, data: bytes) -> str:
        existing = self._blobs.get(digest)
        if existing is not None:
            if existing != data:
                raise WriteOnceViolation(digest)
            return f"mem:{digest}"
        self._blobs[digest] = bytes(data)
        return f"mem:{digest}"

    def get(self, digest: str) -> bytes | None:
        return self._blobs.get(digest)

    def has(self, digest: str) -> bool:
        return digest in self._blobs

    def delete(self, digest: str) -> None:
        self._blobs.pop(digest, None)

    def corrupt(self, digest: str, index: int = 0) -> None:
        data = bytearray(self._blobs[digest])
        data[index % len(data)] ^= 0x01
        self._blobs[digest] = bytes(data)


class _FileBlobs:
    """Write-once blob files under ``store/<hh>/<hash>``."""

    def __init__(self, root: Path):
        self.root = root
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, digest: str) -> Path:
        return self.root / digest[:2] / digest

    def put(self, digest: str, data: bytes) -> str:
        path = self._path(digest)
        if path.exists():
            if path.read_bytes() != data:
                raise WriteOnceViolation(digest)
            return str(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_bytes(data)
        os.replace(tmp, path)
        return str(path)

    def get(self, digest: str) -> bytes | None:
        path = self._path(digest)
        return path.read_bytes() if path.exists() else None

    def has(self, digest: str) -> bool:
        return self._path(digest).exists()

    def delete(self, digest: str) -> None:
        path = self._path(digest)
        if path.exists():
            path.unlink()

    def corrupt(self, digest: str, index: int = 0) -> None:
        path = self._path(digest)
        data = bytearray(path.read_bytes())
        data[index % len(data)] ^= 0x01
        path.write_bytes(bytes(data))


class ObjectStore:
    """Archival storage for one node.

    Holds three kinds of state: blobs (content-addressed, write-once),
    full object records for everything archived or imported here, and
    bare replica holdings for content received over the replication
    channel (where only the bytes and their hash travel).
    """

    def __init__(
        self,
        node_id: str,
        resolver: HandleResolver,
        root: str | Path | None = None,
        clock=None,
    ):
        self.node_id = node_id
        self.resolver = resolver
        self.clock = clock or SystemClock()
        self.root = Path(root) if root is not None else None
        if self.root is not None:
            self.blobs = _FileBlobs(self.root / "store")
            (self.root / "objects").mkdir(parents=True, exist_ok=True)
        else:
            self.blobs = _MemoryBlobs()
        self._objects: dict[str, ArchivalObject] = {}
        self._holdings: dict[str, str] = {}  # urid text -> content hash

    # -- persistence ------------------------------------------------------------

    def _write_object_record(self, obj: ArchivalObject) -> None:
        if self.root is None:
            return
        path = self.root / "objects" / obj.urid.prefix / f"{obj.urid.suffix}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(canonical_json(obj.to_dict()) + b"\n")

    def _drop_object_record(self, urid: URID) -> None:
        if self.root is None:
            return
        path = self.root / "objects" / urid.prefix / f"{urid.suffix}.json"
        if path.exists():
            path.unlink()

    # -- core operations -----------------------------------------------------------

    def ingest(
        self, content: bytes, media_type: str, depositor_id: str, prefix: str
    ) -> ArchivalObject:
        """Archive new content under an owned prefix.

        Allocates a URID, stores the bytes write-once, and registers a
        handle record with one local master instance. The bytes are
        retrievable bit-identically forever after.
        """
        if not content:
            raise EmptyContent("cannot ingest empty content")
        urid = self.resolver.allocate(prefix)
        return self._archive(
            urid,
            content,
            media_type,
            depositor_id,
            version_number=1,
            predecessor=None,
        )

    def _archive(
        self,
        urid: URID,
        content: bytes,
        media_type: str,
        depositor_id: str,
        version_number: int,
        predecessor: str | None,
    ) -> ArchivalObject:
        digest = sha256_hex(content)
        obj = ArchivalObject(
            urid=urid,
            content_hash=digest,
            media_type=media_type,
            size_bytes=len(content),
            depositor_id=depositor_id,
            created_at=format_utc(self.clock.now()),
            version_number=version_number,
            predecessor=predecessor,
        )
        path = self.blobs.put(digest, content)
        record = HandleRecord(
            urid=urid,
            owner=self.node_id,
            instances=[
                InstanceLocation(self.node_id, path, digest, is_master=True)
            ],
            predecessor=predecessor,
        )
        try:
            self.resolver.register(record)
        except Exception:
            self._release_blob(digest)
            raise
        self._objects[urid.text] = obj
        self._write_object_record(obj)
        return obj

    def get_object(self, urid: URID | str) -> ArchivalObject:
        obj = self._objects.get(as_urid(urid).text)
        if obj is None:
            raise NotFound(as_urid(urid).text)
        return obj

    def has_object(self, urid: URID | str) -> bool:
        return as_urid(urid).text in self._objects

    def _local_hash(self, urid: URID | str) -> str | None:
        """The expected content hash for a URID, if known at this node."""
        key = as_urid(urid).text
        obj = self._objects.get(key)
        if obj is not None:
            return obj.content_hash
        if key in self._holdings:
            return self._holdings[key]
        try:
            record = self.resolver.resolve(key)
        except NotFound:
            return None
        return record.instances[0].content_hash if record.instances else None

    def read(self, urid: URID | str) -> bytes:
        """Return the ingest-time bytes of exactly this version."""
        digest = self._local_hash(urid)
        if digest is None:
            raise NotFound(as_urid(urid).text)
        data = self.blobs.get(digest)
        if data is None:
            raise NotFound(f"{as_urid(urid).text}: no local instance")
        return data

    def verify_fixity(self, urid: URID | str) -> FixityReport:
        """Recompute the hash of the locally held bytes; never mutates them."""
        key = as_urid(urid).text
        expected = self._local_hash(key)
        if expected is None:
            raise NotFound(key)
        data = self.blobs.get(expected)
        if data is None:
            raise NotFound(f"{key}: no local instance")
        observed = sha256_hex(data)
        return FixityReport(
            urid=key,
            checked_at=format_utc(self.clock.now()),
            status="PASS" if observed == expected else "FAIL",
            expected_hash=expected,
            observed_hash=observed,
        )

    def commit_version(
        self,
        predecessor: URID | str,
        content: bytes,
        media_type: str,
        depositor_id: str,
    ) -> ArchivalObject:
        """Append a new version to a linear chain; the predecessor is untouched."""
        pred_urid = as_urid(predecessor)
        pred_obj = self._objects.get(pred_urid.text)
        if pred_obj is None:
            raise NotFound(pred_urid.text)
        pred_record = self.resolver.resolve(pred_urid)
        if pred_record.successor is not None:
            raise VersionConflict(
                f"{pred_urid.text} already has successor {pred_record.successor}"
            )
        if not content:
            raise EmptyContent("cannot archive an empty version")
        if sha256_hex(content) == pred_obj.content_hash:
            raise IdenticalContent(pred_urid.text)
        urid = self.resolver.allocate(pred_urid.prefix)
        obj = self._archive(
            urid,
            content,
            media_type,
            depositor_id,
            version_number=pred_obj.version_number + 1,
            predecessor=pred_urid.text,
        )
        self.resolver.set_version_links(pred_urid, successor=urid.text)
        return obj

    def version_chain(self, urid: URID | str) -> list[URID]:
        """The full chain from version 1 to head, from any member."""
        key = as_urid(urid).text
        record = self.resolver.resolve(key)  # raises NotFound
        while record.predecessor is not None:
            record = self.resolver.resolve(record.predecessor)
        chain = [record.urid]
        while record.successor is not None:
            record = self.resolver.resolve(record.successor)
            chain.append(record.urid)
        return chain

    # -- replica holdings -------------------------------------------------------------

    def receive_replica(self, urid: URID | str, content: bytes, expected_hash: str) -> str:
        """Accept replicated bytes, verifying fixity before acknowledging."""
        observed = sha256_hex(content)
        if observed != expected_hash:
            raise TransferCorrupt(
                f"expected {expected_hash}, got {observed} for {as_urid(urid).text}"
            )
        path = self.blobs.put(expected_hash, content)
        self._holdings[as_urid(urid).text] = expected_hash
        return path

    def add_foreign_object(self, obj: ArchivalObject, content: bytes) -> str:
        """Store a full object record plus content imported from a bundle."""
        digest = sha256_hex(content)
        if digest != obj.content_hash:
            raise TransferCorrupt(
                f"bundle content hash {digest} != record hash {obj.content_hash}"
            )
        path = self.blobs.put(digest, content)
        self._objects[obj.urid.text] = obj
        self._holdings.pop(obj.urid.text, None)
        self._write_object_record(obj)
        return path

    def holds_content(self, urid: URID | str) -> bool:
        digest = self._local_hash(urid)
        return digest is not None and self.blobs.has(digest)

    def has_holding(self, urid: URID | str) -> bool:
        return as_urid(urid).text in self._holdings

    # -- rollback support ------------------------------------------------------------------

    def _release_blob(self, digest: str) -> None:
        """Drop a blob only when nothing else references its hash."""
        for obj in self._objects.values():
            if obj.content_hash == digest:
                return
        if digest in self._holdings.values():
            return
        self.blobs.delete(digest)

    def discard_object(self, urid: URID | str) -> None:
        """Undo one archived object during a failed atomic commit."""
        key = as_urid(urid).text
        obj = self._objects.pop(key, None)
        if obj is None:
            return
        self._drop_object_record(obj.urid)
        self.resolver.discard_record(obj.urid)
        self._release_blob(obj.content_hash)

    # -- test hooks and introspection ----------------------------------------------------------

    def corrupt_stored_bytes(self, urid: URID | str, index: int = 0) -> None:
        """Test hook: flip one byte of a stored blob, bypassing the guard."""
        digest = self._local_hash(urid)
        if digest is None or not self.blobs.has(digest):
            raise NotFound(as_urid(urid).text)
        self.blobs.corrupt(digest, index)

    def objects(self) -> Iterable[ArchivalObject]:
        return [self._objects[k] for k in sorted(self._objects)]

    def owned_objects(self) -> list[ArchivalObject]:
        return [
            o for o in self.objects() if self.resolver.owns(o.urid.prefix)
        ]

    def fixity_map(self) -> dict[str, dict]:
        """Expected vs observed hash for every locally held content unit."""
        result: dict[str, dict] = {}
        keys = sorted(set(self._objects) | set(self._holdings))
        for key in keys:
            expected = self._local_hash(key)
            data = self.blobs.get(expected) if expected else None
            if expected is None or data is None:
                continue
            result[key] = {"expected": expected, "observed": sha256_hex(data)}
        return result

    def snapshot(self) -> dict:
        return {
            "objects": [o.to_dict() for o in self.objects()],
            "holdings": dict(sorted(self._holdings.items())),
        }
