"""The trust domain: enrollment, signed attribute assertions, filtering,
cross-node content replication and federated search.

Authentication stays with a user's home institution: it issues a signed
assertion of the user's attributes, and archives authorize against
those attributes after renaming them into the canonical federation
vocabulary (org, role, project, community). Signatures are Ed25519 over
canonical key-sorted JSON bytes, so an assertion is verifiable
bit-exactly by any enrolled partner.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from datetime import timedelta

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .errors import (
    BadSignature,
    BadTtl,
    DuplicateNode,
    Expired,
    NotAuthorized,
    NotOwner,
    PeerUnreachable,
    PrefixConflict,
    UntrustedIssuer,
    UntrustedPeer,
)
from .resolver import InstanceLocation, as_urid
from .util import canonical_json, format_utc, parse_utc

CANONICAL_ATTRIBUTES = ("community", "org", "project", "role")


def generate_signing_key(seed: bytes | None = None) -> Ed25519PrivateKey:
    """A fresh signing key, or a deterministic one from a 32-byte seed."""
    if seed is None:
        return Ed25519PrivateKey.generate()
    if len(seed) != 32:
        raise ValueError("seed must be exactly 32 bytes")
    return Ed25519PrivateKey.from_private_bytes(seed)


def public_key_bytes(key: Ed25519PrivateKey | Ed25519PublicKey) -> bytes:
    from cryptography.hazmat.primitives import serialization

    public = key.public_key() if isinstance(key, Ed25519PrivateKey) else key
    return public.public_bytes(
        serialization.Encoding.Raw, serialization.PublicFormat.Raw
    )


@dataclass(frozen=True)
class NodeIdentity:
    """One archive in the federation: its id, key and prefix sub-domain."""

    node_id: str
    public_key: bytes
    owned_prefixes: tuple
    url: str | None = None

    def to_dict(self) -> dict:
        return {
            "nodeId": self.node_id,
            "publicKey": base64.b64encode(self.public_key).decode("ascii"),
            "ownedPrefixes": list(self.owned_prefixes),
            "url": self.url,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NodeIdentity":
        return cls(
            node_id=data["nodeId"],
            public_key=base64.b64decode(data["publicKey"]),
            owned_prefixes=tuple(data["ownedPrefixes"]),
            url=data.get("url"),
        )

    def verifier(self) -> Ed25519PublicKey:
        return Ed25519PublicKey.from_public_bytes(self.public_key)


class TrustList:
    """The deliberate, admin-curated membership of the federation."""

    def __init__(self):
        self._members: dict[str, NodeIdentity] = {}
        self.version = 0

    def enroll(self, identity: NodeIdentity, actor: str, admin: str) -> "TrustList":
        if actor != admin:
            raise NotAuthorized(f"{actor!r} is not the local admin")
        if identity.node_id in self._members:
            raise DuplicateNode(identity.node_id)
        for prefix in identity.owned_prefixes:
            holder = self.prefix_owner(prefix)
            if holder is not None:
                raise PrefixConflict(f"prefix {prefix!r} already owned by {holder!r}")
        self._members[identity.node_id] = identity
        self.version += 1
        return self

    def is_trusted(self, node_id: str) -> bool:
        return node_id in self._members

    def get(self, node_id: str) -> NodeIdentity | None:
        return self._members.get(node_id)

    def prefix_owner(self, prefix: str) -> str | None:
        for identity in self._members.values():
            if prefix in identity.owned_prefixes:
                return identity.node_id
        return None

    def members(self) -> list[NodeIdentity]:
        return [self._members[k] for k in sorted(self._members)]

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "members": [m.to_dict() for m in self.members()],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrustList":
        trust = cls()
        for entry in data.get("members", []):
            trust._members[entry["nodeId"]] = NodeIdentity.from_dict(entry)
        trust.version = int(data.get("version", len(trust._members)))
        return trust


@dataclass(frozen=True)
class AttributeAssertion:
    """A home institution's signed statement of a user's attributes."""

    subject: str
    issuer: str
    issued_at: str
    expires_at: str
    attributes: dict
    signature: bytes

    def payload(self) -> dict:
        return {
            "subject": self.subject,
            "issuer": self.issuer,
            "issuedAt": self.issued_at,
            "expiresAt": self.expires_at,
            "attributes": {k: list(v) for k, v in sorted(self.attributes.items())},
        }

    def signed_bytes(self) -> bytes:
        return canonical_json(self.payload())

    def to_wire(self) -> bytes:
        wire = self.payload()
        wire["signature"] = base64.b64encode(self.signature).decode("ascii")
        return canonical_json(wire)

    @classmethod
    def from_wire(cls, data: bytes) -> "AttributeAssertion":
        """Parse wire bytes, insisting on exact canonical form.

        Re-serializing the parsed object must reproduce the input byte
        for byte; anything else (whitespace games, base64 aliasing,
        duplicate keys) is rejected outright.
        """
        try:
            obj = json.loads(data.decode("utf-8"))
            assertion = cls(
                subject=obj["subject"],
                issuer=obj["issuer"],
                issued_at=obj["issuedAt"],
                expires_at=obj["expiresAt"],
                attributes={k: list(v) for k, v in obj["attributes"].items()},
                signature=base64.b64decode(obj["signature"], validate=True),
            )
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            raise BadSignature(f"malformed assertion: {exc}") from exc
        if assertion.to_wire() != bytes(data):
            raise BadSignature("assertion bytes are not in canonical form")
        return assertion


def issue_assertion(
    signing_key: Ed25519PrivateKey,
    issuer: str,
    subject: str,
    attributes: dict,
    ttl_seconds: int,
    now=None,
) -> AttributeAssertion:
    """Sign an attribute statement valid for ``ttl_seconds`` from now."""
    if ttl_seconds <= 0:
        raise BadTtl(f"ttl must be positive, got {ttl_seconds}")
    from .util import SystemClock

    issued = now if now is not None else SystemClock().now()
    unsigned = AttributeAssertion(
        subject=subject,
        issuer=issuer,
        issued_at=format_utc(issued),
        expires_at=format_utc(issued + timedelta(seconds=ttl_seconds)),
        attributes={k: list(v) for k, v in attributes.items()},
        signature=b"",
    )
    signature = signing_key.sign(unsigned.signed_bytes())
    return AttributeAssertion(
        subject=unsigned.subject,
        issuer=unsigned.issuer,
        issued_at=unsigned.issued_at,
        expires_at=unsigned.expires_at,
        attributes=unsigned.attributes,
        signature=signature,
    )


def verify_assertion(assertion: AttributeAssertion, trust: TrustList, now) -> dict:
    """Return the attributes iff the issuer is enrolled, the assertion is
    unexpired (strictly before ``expiresAt``) and the signature verifies."""
    identity = trust.get(assertion.issuer)
    if identity is None:
        raise UntrustedIssuer(assertion.issuer)
    try:
        expires = parse_utc(assertion.expires_at)
    except ValueError as exc:
        raise BadSignature(f"malformed expiry timestamp: {exc}") from exc
    if now >= expires:
        raise Expired(f"assertion expired at {assertion.expires_at}")
    try:
        identity.verifier().verify(assertion.signature, assertion.signed_bytes())
    except InvalidSignature:
        raise BadSignature("assertion signature does not verify") from None
    return {k: list(v) for k, v in assertion.attributes.items()}


@dataclass(frozen=True)
class AttributeFilter:
    """Rename one institution's local attribute names into the canonical
    vocabulary; everything that does not land on a canonical name drops
    (``drop_unknown`` is fixed true by federation agreement)."""

    issuer: str
    mapping: dict = field(default_factory=dict)
    drop_unknown: bool = True

    def __post_init__(self):
        if not self.drop_unknown:
            raise ValueError("drop_unknown is fixed true across the federation")

    def to_dict(self) -> dict:
        return {
            "issuer": self.issuer,
            "mapping": dict(sorted(self.mapping.items())),
            "dropUnknown": self.drop_unknown,
        }


def filter_attributes(
    filters: dict[str, AttributeFilter], issuer: str, raw: dict
) -> dict:
    """Apply the issuer's filter; unknown issuers get the identity mapping
    restricted to canonical keys."""
    mapping = filters[issuer].mapping if issuer in filters else {}
    out: dict[str, list[str]] = {}
    for name, values in raw.items():
        canonical = mapping.get(name, name)
        if canonical in CANONICAL_ATTRIBUTES:
            held = out.setdefault(canonical, [])
            for value in values if isinstance(values, (list, tuple)) else [values]:
                if value not in held:
                    held.append(value)
    return out


# -- cross-node operations ------------------------------------------------------


def replicate_content(node, urid, target) -> InstanceLocation:
    """Push one object's bytes to a trusted peer and record the new instance.

    The receiver recomputes the hash before acknowledging; a corrupt
    transfer registers nothing on either side.
    """
    urid = as_urid(urid)
    if not node.trust.is_trusted(target.node_id):
        raise UntrustedPeer(f"{target.node_id!r} is not in the trust list")
    if not node.resolver.owns(urid.prefix):
        raise NotOwner(f"{urid.text} is not owned by this node")
    record = node.resolver.resolve(urid)
    digest = record.instances[0].content_hash
    content = node.store.read(urid)
    path = target.receive_replica(
        urid.text, content, digest, from_node=node.node_id
    )
    location = InstanceLocation(
        node_id=target.node_id,
        physical_path=path,
        content_hash=digest,
        is_master=False,
    )
    node.resolver.add_instance(urid, location)
    return location


def federated_search(query: dict, handles, expand: bool = False) -> tuple[list[dict], list[str]]:
    """Fan a catalog search out over peer nodes and merge the results.

    Replicated metadata appearing at several nodes collapses to one
    entry attributed to the owning archive. Unreachable peers degrade to
    warnings rather than failures.
    """
    merged: dict[str, dict] = {}
    warnings: list[str] = []
    for handle in handles:
        try:
            hits = handle.search_catalog(query, expand=expand)
        except (PeerUnreachable, ConnectionError, OSError):
            warnings.append(handle.node_id)
            continue
        for hit in hits:
            entry = {
                "node": handle.node_id,
                "owner": hit["owner"],
                "hit": hit["nodeId"],
            }
            known = merged.get(hit["nodeId"])
            if known is None:
                merged[hit["nodeId"]] = entry
            elif entry["node"] == entry["owner"] and known["node"] != known["owner"]:
                merged[hit["nodeId"]] = entry
    results = [merged[k] for k in sorted(merged)]
    return results, warnings
