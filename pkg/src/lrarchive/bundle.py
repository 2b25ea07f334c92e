"""Self-describing sub-archive bundles for export, exchange and import.

A bundle is a zip with a deterministic layout: ``manifest.json``, the
catalog subtree and archival records under ``metadata/``, and content
blobs at ``content/<prefix>/<suffix>``, all entries sorted by path with
fixed zip metadata. Identical archive state and identical rights
produce byte-identical bundles, which is what makes round-trip tests
meaningful.

Imported material never changes ownership: content lands as replica
holdings, handle records as read-only replicas, catalog nodes flagged
replica. A single corrupt entry aborts the whole import.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass, field

from .errors import ImportCorrupt, NodeNotFound, NotAuthorized
from .policy import AccessLevel, PERMIT
from .resolver import URID
from .store import ArchivalObject
from .util import canonical_json, sha256_hex

# Fixed zip entry metadata so archives are reproducible byte for byte.
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


@dataclass
class Bundle:
    """An exported sub-archive: manifest, metadata tree, content payloads."""

    origin: str
    root: str
    entries: list[dict] = field(default_factory=list)
    omissions: list[dict] = field(default_factory=list)
    catalog_nodes: list[dict] = field(default_factory=list)
    objects: list[dict] = field(default_factory=list)
    handles: list[dict] = field(default_factory=list)
    contents: dict[str, bytes] = field(default_factory=dict)

    def manifest(self) -> dict:
        return {
            "origin": self.origin,
            "root": self.root,
            "entries": self.entries,
            "omissions": self.omissions,
        }

    def manifest_bytes(self) -> bytes:
        return canonical_json(self.manifest())

    def to_zip_bytes(self) -> bytes:
        members: list[tuple[str, bytes]] = [
            ("manifest.json", self.manifest_bytes()),
            ("metadata/catalog.json", canonical_json(self.catalog_nodes)),
            ("metadata/handles.json", canonical_json(self.handles)),
            ("metadata/objects.json", canonical_json(self.objects)),
        ]
        for row in self.entries:
            urid_text = row["urid"]
            if urid_text in self.contents:
                members.append((row["relativePath"], self.contents[urid_text]))
        members.sort(key=lambda pair: pair[0])
        buffer = io.BytesIO()
        with zipfile.ZipFile(buffer, "w", compression=zipfile.ZIP_STORED) as archive:
            for name, data in members:
                info = zipfile.ZipInfo(name, date_time=_ZIP_DATE)
                info.external_attr = 0o644 << 16
                archive.writestr(info, data)
        return buffer.getvalue()

    @classmethod
    def from_zip_bytes(cls, data: bytes) -> "Bundle":
        try:
            with zipfile.ZipFile(io.BytesIO(data)) as archive:
                manifest = json.loads(archive.read("manifest.json"))
                catalog_nodes = json.loads(archive.read("metadata/catalog.json"))
                handles = json.loads(archive.read("metadata/handles.json"))
                objects = json.loads(archive.read("metadata/objects.json"))
                names = set(archive.namelist())
                contents = {}
                for row in manifest["entries"]:
                    if row["relativePath"] in names:
                        contents[row["urid"]] = archive.read(row["relativePath"])
        except (KeyError, ValueError, zipfile.BadZipFile) as exc:
            raise ImportCorrupt(f"unreadable bundle: {exc}") from exc
        return cls(
            origin=manifest["origin"],
            root=manifest["root"],
            entries=manifest["entries"],
            omissions=manifest["omissions"],
            catalog_nodes=catalog_nodes,
            objects=objects,
            handles=handles,
            contents=contents,
        )


def _content_path(urid: URID) -> str:
    return f"content/{urid.prefix}/{urid.suffix}"


def export_subarchive(node, root_id: str, attributes: dict) -> Bundle:
    """Build a bundle for one catalog subtree.

    Metadata covers the full subtree; content rides along only where the
    requester's attributes grant read, everything else being explained
    in the omissions list. Requires discover on the subtree root.
    """
    if not node.catalog.has(root_id):
        raise NodeNotFound(root_id)
    gate = node.policy.decide_node(attributes, root_id, AccessLevel.DISCOVER)
    if gate.effect != PERMIT:
        raise NotAuthorized(f"discover on {root_id} denied")
    subtree = node.catalog.subtree(root_id)
    subtree_sorted = sorted(subtree, key=lambda n: n.node_id)

    linked: list[str] = []
    for cat_node in subtree_sorted:
        for urid_text in cat_node.linked_objects:
            if urid_text not in linked:
                linked.append(urid_text)
    linked.sort()

    bundle = Bundle(origin=node.node_id, root=root_id)
    bundle.catalog_nodes = [n.to_dict() for n in subtree_sorted]
    for urid_text in linked:
        urid = URID.parse(urid_text)
        record = node.resolver.resolve(urid_text)
        row = {
            "urid": urid_text,
            "relativePath": _content_path(urid),
            "contentHash": record.instances[0].content_hash,
            "mediaType": None,
        }
        bundle.handles.append(record.to_dict())
        if node.store.has_object(urid_text):
            obj = node.store.get_object(urid_text)
            row["mediaType"] = obj.media_type
            bundle.objects.append(obj.to_dict())
        bundle.entries.append(row)
        decision = node.policy.decide(attributes, urid_text, AccessLevel.READ)
        if decision.effect != PERMIT:
            bundle.omissions.append({"urid": urid_text, "reason": "read-denied"})
            continue
        if not node.store.holds_content(urid_text):
            bundle.omissions.append({"urid": urid_text, "reason": "content-not-local"})
            continue
        bundle.contents[urid_text] = node.store.read(urid_text)
    bundle.entries.sort(key=lambda row: row["urid"])
    bundle.omissions.sort(key=lambda row: row["urid"])
    return bundle


def import_bundle(node, bundle: Bundle, actor: str) -> dict:
    """Install a bundle's material as replicas; all-or-nothing on hashes.

    Every content payload is verified against its manifest row before
    anything is stored. Rows without content (listed as omissions) and
    rows already present locally count as skipped, so re-importing the
    same bundle is a no-op.
    """
    if actor != node.admin:
        raise NotAuthorized(f"{actor!r} is not the local admin")
    by_urid = {row["urid"]: row for row in bundle.entries}
    for urid_text, payload in bundle.contents.items():
        row = by_urid.get(urid_text)
        if row is None:
            raise ImportCorrupt(f"content for {urid_text} missing a manifest row")
        digest = sha256_hex(payload)
        if digest != row["contentHash"]:
            raise ImportCorrupt(
                f"{urid_text}: content hash {digest} != manifest {row['contentHash']}"
            )

    objects_by_urid = {row["urid"]: row for row in bundle.objects}
    imported = skipped = failed = 0
    for row in bundle.entries:
        urid_text = row["urid"]
        if urid_text not in bundle.contents:
            skipped += 1
            continue
        if node.store.has_object(urid_text) or node.store.has_holding(urid_text):
            skipped += 1
            continue
        payload = bundle.contents[urid_text]
        obj_row = objects_by_urid.get(urid_text)
        try:
            if obj_row is not None:
                node.store.add_foreign_object(ArchivalObject.from_dict(obj_row), payload)
            else:
                node.store.receive_replica(urid_text, payload, row["contentHash"])
            imported += 1
        except Exception:
            failed += 1
            raise

    # Handle records become read-only replicas, except for prefixes this
    # node already owns (re-importing one's own export changes nothing).
    replica_rows: dict[str, list[dict]] = {}
    for record_row in bundle.handles:
        prefix = URID.parse(record_row["urid"]).prefix
        if node.resolver.owns(prefix):
            continue
        replica_rows.setdefault(prefix, []).append(record_row)
    for prefix, rows in sorted(replica_rows.items()):
        rows.sort(key=lambda r: r["recordSeq"])
        node.resolver.apply_replica_records(prefix, rows, advance_watermark=False)

    for node_row in bundle.catalog_nodes:
        if node_row["origin"] == node.node_id:
            continue
        node.catalog.adopt_replica(node_row)

    return {"imported": imported, "skipped": skipped, "failed": failed}
