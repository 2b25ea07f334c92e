"""Unique resource identifiers and the handle resolution service.

Every archival object gets a URID of the form ``urid:<prefix>/<suffix>``.
The prefix names the owning archive's sub-domain; the suffix is a
zero-padded 64-bit counter in lowercase hex, so identifiers are
deterministic, sortable and never reissued. Behind each URID sits a
handle record listing the physical instances of the content, carrying
the owner-defined access policy, and linking versions together.

Records are mutable only at the owning node. Other nodes hold read-only
replicas obtained through watermark-based pull sync: the owner assigns
every mutation a fresh per-prefix sequence number, and a mirror asks for
"everything after my watermark". Because each prefix has exactly one
writer, replicas converge without conflict resolution.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Iterable

from .errors import (
    AlreadyRegistered,
    HashMismatch,
    NotFound,
    NotOwner,
    UnknownPrefix,
    UntrustedPeer,
)
from .util import canonical_json, sha256_hex

_PREFIX_RE = re.compile(r"^[0-9a-z._-]+$")
_SUFFIX_RE = re.compile(r"^[0-9a-f]{16}$")
SUFFIX_WIDTH = 16


@dataclass(frozen=True, order=True)
class URID:
    """A globally unique, location-independent resource identifier."""

    prefix: str
    suffix: str

    def __post_init__(self):
        if not _PREFIX_RE.match(self.prefix):
            raise ValueError(f"invalid URID prefix: {self.prefix!r}")
        if not _SUFFIX_RE.match(self.suffix):
            raise ValueError(f"invalid URID suffix: {self.suffix!r}")

    @property
    def text(self) -> str:
        return f"urid:{self.prefix}/{self.suffix}"

    @classmethod
    def parse(cls, text: str) -> "URID":
        if not text.startswith("urid:") or "/" not in text:
            raise ValueError(f"not a URID: {text!r}")
        prefix, _, suffix = text[len("urid:"):].partition("/")
        return cls(prefix, suffix)

    @classmethod
    def from_counter(cls, prefix: str, counter: int) -> "URID":
        return cls(prefix, format(counter, f"0{SUFFIX_WIDTH}x"))

    def __str__(self) -> str:
        return self.text


def as_urid(value: "URID | str") -> URID:
    return value if isinstance(value, URID) else URID.parse(value)


@dataclass(frozen=True)
class InstanceLocation:
    """One physical copy of an object at some node."""

    node_id: str
    physical_path: str
    content_hash: str
    is_master: bool = False

    def to_dict(self) -> dict:
        return {
            "nodeId": self.node_id,
            "physicalPath": self.physical_path,
            "contentHash": self.content_hash,
            "isMaster": self.is_master,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "InstanceLocation":
        return cls(
            node_id=data["nodeId"],
            physical_path=data["physicalPath"],
            content_hash=data["contentHash"],
            is_master=bool(data["isMaster"]),
        )


@dataclass
class HandleRecord:
    """The resolvable record behind a URID.

    ``record_seq`` is drawn from a per-prefix mutation counter, so the
    sequence numbers of all records under one prefix form a single
    strictly increasing series. That is what makes "give me everything
    after sequence N" a complete sync protocol.
    """

    urid: URID
    owner: str
    instances: list[InstanceLocation] = field(default_factory=list)
    policy: dict | None = None
    record_seq: int = 0
    predecessor: str | None = None
    successor: str | None = None

    def to_dict(self) -> dict:
        return {
            "urid": self.urid.text,
            "owner": self.owner,
            "instances": [loc.to_dict() for loc in self.instances],
            "policy": self.policy,
            "recordSeq": self.record_seq,
            "versionLinks": {
                "predecessor": self.predecessor,
                "successor": self.successor,
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "HandleRecord":
        links = data.get("versionLinks") or {}
        return cls(
            urid=URID.parse(data["urid"]),
            owner=data["owner"],
            instances=[InstanceLocation.from_dict(d) for d in data["instances"]],
            policy=data.get("policy"),
            record_seq=int(data["recordSeq"]),
            predecessor=links.get("predecessor"),
            successor=links.get("successor"),
        )

    def copy(self) -> "HandleRecord":
        return HandleRecord.from_dict(self.to_dict())

    def canonical_bytes(self) -> bytes:
        return canonical_json(self.to_dict())


class HandleResolver:
    """Allocates URIDs and resolves them to handle records.

    The resolver owns a set of prefixes it may mutate; any other prefix
    it knows about (via the trust list) can only be mirrored read-only.
    ``trust`` is an object exposing ``is_trusted(node_id)`` and
    ``prefix_owner(prefix)``; it is attached by the composing node.
    """

    def __init__(self, node_id: str, owned_prefixes: Iterable[str], trust=None):
        self.node_id = node_id
        self.owned_prefixes = list(owned_prefixes)
        self.trust = trust
        self._counters: dict[str, int] = {p: 0 for p in self.owned_prefixes}
        self._prefix_seq: dict[str, int] = {p: 0 for p in self.owned_prefixes}
        self._records: dict[str, HandleRecord] = {}
        self._replicas: dict[str, HandleRecord] = {}
        self.watermarks: dict[str, int] = {}

    # -- prefix bookkeeping ------------------------------------------------

    def owns(self, prefix: str) -> bool:
        return prefix in self.owned_prefixes

    def _known_prefix(self, prefix: str) -> bool:
        if self.owns(prefix):
            return True
        return bool(self.trust and self.trust.prefix_owner(prefix))

    def _check_owned(self, prefix: str) -> None:
        if self.owns(prefix):
            return
        if self._known_prefix(prefix):
            raise NotOwner(f"prefix {prefix!r} is owned by another node")
        raise UnknownPrefix(f"prefix {prefix!r} is not registered")

    def _next_seq(self, prefix: str) -> int:
        self._prefix_seq[prefix] = self._prefix_seq.get(prefix, 0) + 1
        return self._prefix_seq[prefix]

    # -- allocation and registration -----------------------------------------

    def allocate(self, prefix: str) -> URID:
        """Hand out a fresh URID under an owned prefix; never reissues."""
        self._check_owned(prefix)
        self._counters[prefix] = self._counters.get(prefix, 0) + 1
        return URID.from_counter(prefix, self._counters[prefix])

    def register(self, record: HandleRecord) -> HandleRecord:
        prefix = record.urid.prefix
        self._check_owned(prefix)
        if record.urid.text in self._records:
            raise AlreadyRegistered(record.urid.text)
        if not record.instances:
            raise ValueError("a registered record needs at least one instance")
        record.owner = self.node_id
        record.record_seq = self._next_seq(prefix)
        self._records[record.urid.text] = record
        return record

    # -- resolution ------------------------------------------------------------

    def resolve(self, urid: URID | str) -> HandleRecord:
        key = as_urid(urid).text
        record = self._records.get(key) or self._replicas.get(key)
        if record is None:
            raise NotFound(key)
        return record

    def is_replica(self, urid: URID | str) -> bool:
        return as_urid(urid).text in self._replicas

    def has(self, urid: URID | str) -> bool:
        key = as_urid(urid).text
        return key in self._records or key in self._replicas

    def owned_records(self) -> list[HandleRecord]:
        return [self._records[k] for k in sorted(self._records)]

    # -- owner-side mutation ----------------------------------------------------

    def _owned_record(self, urid: URID | str) -> HandleRecord:
        key = as_urid(urid).text
        record = self._records.get(key)
        if record is None:
            if key in self._replicas:
                raise NotOwner(f"{key} is mirrored here, owned elsewhere")
            raise NotFound(key)
        return record

    def add_instance(self, urid: URID | str, location: InstanceLocation) -> HandleRecord:
        record = self._owned_record(urid)
        existing = record.instances[0].content_hash if record.instances else None
        if existing is not None and location.content_hash != existing:
            raise HashMismatch(
                f"instance hash {location.content_hash} != record hash {existing}"
            )
        for loc in record.instances:
            if (loc.node_id, loc.physical_path) == (
                location.node_id,
                location.physical_path,
            ):
                return record  # idempotent: no mutation, no sequence bump
        if location.is_master and any(loc.is_master for loc in record.instances):
            location = replace(location, is_master=False)
        record.instances.append(location)
        record.record_seq = self._next_seq(record.urid.prefix)
        return record

    def set_record_policy(self, urid: URID | str, policy: dict | None) -> HandleRecord:
        """Write the owner-defined policy payload into the record.

        No-op (and no sequence bump) when the payload is unchanged, so
        policy refreshes are idempotent.
        """
        record = self._owned_record(urid)
        if canonical_json(record.policy) == canonical_json(policy):
            return record
        record.policy = policy
        record.record_seq = self._next_seq(record.urid.prefix)
        return record

    def set_version_links(
        self,
        urid: URID | str,
        *,
        predecessor: str | None = None,
        successor: str | None = None,
    ) -> HandleRecord:
        record = self._owned_record(urid)
        changed = False
        if predecessor is not None and record.predecessor != predecessor:
            record.predecessor = predecessor
            changed = True
        if successor is not None and record.successor != successor:
            record.successor = successor
            changed = True
        if changed:
            record.record_seq = self._next_seq(record.urid.prefix)
        return record

    def discard_record(self, urid: URID | str) -> None:
        """Remove an owned record during a failed atomic commit.

        The suffix counter is deliberately left advanced: suffixes are
        never reissued, even for rolled-back registrations.
        """
        self._records.pop(as_urid(urid).text, None)

    # -- mirroring ------------------------------------------------------------------

    def records_since(
        self, prefix: str, since_seq: int, requester: str | None = None
    ) -> list[dict]:
        """Serve owner records with ``recordSeq > since_seq``, ascending.

        When a requester id is given it must be in the trust list: bulk
        record export is a federation privilege, not a public read.
        """
        if requester is not None:
            if not (self.trust and self.trust.is_trusted(requester)):
                raise UntrustedPeer(f"{requester!r} is not a trusted peer")
        if not self.owns(prefix):
            raise UnknownPrefix(f"this node does not own prefix {prefix!r}")
        rows = [
            r.to_dict()
            for r in self._records.values()
            if r.urid.prefix == prefix and r.record_seq > since_seq
        ]
        rows.sort(key=lambda d: d["recordSeq"])
        return rows

    def apply_replica_records(
        self, prefix: str, rows: list[dict], advance_watermark: bool = True
    ) -> int:
        """Apply pulled owner records to the local replica set, idempotently.

        Bundle imports pass ``advance_watermark=False``: a bundle carries
        only part of a prefix, so the sync watermark must stay behind.
        """
        applied = 0
        top = self.watermarks.get(prefix, 0)
        for row in rows:
            incoming = HandleRecord.from_dict(row)
            current = self._replicas.get(incoming.urid.text)
            if current is None or incoming.record_seq > current.record_seq:
                self._replicas[incoming.urid.text] = incoming
                applied += 1
            top = max(top, incoming.record_seq)
        if advance_watermark:
            self.watermarks[prefix] = top
        return applied

    def mirror_sync(self, peer, prefix: str, since_seq: int | None = None) -> int:
        """Pull records for ``prefix`` from its owning node.

        ``peer`` is any node handle exposing ``node_id`` and
        ``pull_records(prefix, since_seq, requester)``. Returns the
        number of records applied; repeating the call applies zero.
        """
        if not (self.trust and self.trust.is_trusted(peer.node_id)):
            raise UntrustedPeer(f"{peer.node_id!r} is not in the trust list")
        owner = self.trust.prefix_owner(prefix)
        if owner is None:
            raise UnknownPrefix(f"no enrolled node owns prefix {prefix!r}")
        if owner != peer.node_id:
            raise UnknownPrefix(f"prefix {prefix!r} is owned by {owner!r}, not the peer")
        watermark = self.watermarks.get(prefix, 0) if since_seq is None else since_seq
        rows = peer.pull_records(prefix, watermark, requester=self.node_id)
        return self.apply_replica_records(prefix, rows)

    # -- introspection ---------------------------------------------------------------

    def replica_records(self, prefix: str | None = None) -> list[HandleRecord]:
        records = [
            self._replicas[k]
            for k in sorted(self._replicas)
            if prefix is None or self._replicas[k].urid.prefix == prefix
        ]
        return records

    def prefix_digest(self, prefix: str) -> str:
        """Digest of this node's view of a prefix's records (owned or mirrored)."""
        if self.owns(prefix):
            rows = [r.to_dict() for r in self.owned_records() if r.urid.prefix == prefix]
        else:
            rows = [r.to_dict() for r in self.replica_records(prefix)]
        return sha256_hex(canonical_json(rows))

    def snapshot(self) -> dict:
        return {
            "owned": [r.to_dict() for r in self.owned_records()],
            "replicas": [r.to_dict() for r in self.replica_records()],
            "watermarks": dict(sorted(self.watermarks.items())),
        }
