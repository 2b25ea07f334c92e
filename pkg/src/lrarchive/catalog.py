"""The linguistic organization layer: corpora, sessions, metadata.

The catalog arranges archived material by scientific structure (a
forest of corpus and session nodes) and knows nothing about physical
storage: it references content exclusively through URIDs. Nodes are
never deleted, only flagged deprecated, which keeps incremental
harvesting simple and honest.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable

from .errors import (
    BadToken,
    CycleDetected,
    EmptyQuery,
    MissingLanguage,
    NodeNotFound,
    ParentNotFound,
    UridNotFound,
)
from .util import SystemClock, canonical_json, format_utc, normalize_utc

_LANGUAGE_RE = re.compile(r"^[a-z]{3}$")

CORPUS = "CORPUS"
SESSION = "SESSION"

HARVEST_PAGE_SIZE = 100

DC_ELEMENTS = (
    "title", "creator", "subject", "description", "publisher",
    "contributor", "date", "type", "format", "identifier",
    "source", "language", "relation", "coverage", "rights",
)

# Fixed, documented crosswalk from the rich session metadata to the
# shallow fifteen-element record. Everything else is reported as loss.
_DC_CROSSWALK = {
    "title": "title",
    "languages": "language",
    "date": "date",
    "description": "description",
    "location": "coverage",
}


@dataclass
class MetadataRecord:
    """Descriptive metadata for one corpus or recording session."""

    title: str = ""
    description: str = ""
    languages: list[str] = field(default_factory=list)
    genre: str | None = None
    date: str | None = None
    location: str | None = None
    participants: list[str] = field(default_factory=list)
    recording_conditions: str | None = None

    def __post_init__(self):
        for code in self.languages:
            if not _LANGUAGE_RE.match(code):
                raise ValueError(
                    f"language codes must be 3-letter lowercase (ISO 639-3): {code!r}"
                )

    def to_dict(self) -> dict:
        return {
            "title": self.title,
            "description": self.description,
            "languages": list(self.languages),
            "genre": self.genre,
            "date": self.date,
            "location": self.location,
            "participants": list(self.participants),
            "recordingConditions": self.recording_conditions,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MetadataRecord":
        return cls(
            title=data.get("title", ""),
            description=data.get("description", ""),
            languages=list(data.get("languages", [])),
            genre=data.get("genre"),
            date=data.get("date"),
            location=data.get("location"),
            participants=list(data.get("participants", [])),
            recording_conditions=data.get("recordingConditions"),
        )


@dataclass
class DCRecord:
    """A fifteen-element record; unset elements are simply absent."""

    elements: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        unknown = set(self.elements) - set(DC_ELEMENTS)
        if unknown:
            raise ValueError(f"not DC elements: {sorted(unknown)}")

    def to_dict(self) -> dict:
        return {k: self.elements[k] for k in DC_ELEMENTS if k in self.elements}


@dataclass
class CatalogNode:
    node_id: str
    kind: str  # CORPUS | SESSION
    parent: str | None
    record: MetadataRecord
    linked_objects: list[str] = field(default_factory=list)
    datestamp: str = ""
    deprecated: bool = False
    origin: str = ""
    replica: bool = False

    def to_dict(self) -> dict:
        return {
            "nodeId": self.node_id,
            "kind": self.kind,
            "parent": self.parent,
            "record": self.record.to_dict(),
            "linkedObjects": list(self.linked_objects),
            "datestamp": self.datestamp,
            "deprecated": self.deprecated,
            "origin": self.origin,
            "replica": self.replica,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CatalogNode":
        return cls(
            node_id=data["nodeId"],
            kind=data["kind"],
            parent=data.get("parent"),
            record=MetadataRecord.from_dict(data["record"]),
            linked_objects=list(data.get("linkedObjects", [])),
            datestamp=data["datestamp"],
            deprecated=bool(data.get("deprecated", False)),
            origin=data.get("origin", ""),
            replica=bool(data.get("replica", False)),
        )


class TermMap:
    """Unordered term pairs for single-hop, symmetric search expansion."""

    def __init__(self, pairs: list[tuple[str, str]] | None = None):
        self._neighbors: dict[str, set[str]] = {}
        for a, b in pairs or []:
            self.add_pair(a, b)

    def add_pair(self, a: str, b: str) -> None:
        self._neighbors.setdefault(a, set()).add(b)
        self._neighbors.setdefault(b, set()).add(a)

    def expand(self, term: str) -> set[str]:
        """Reflexive-symmetric closure of one term: itself plus direct pairs."""
        return {term} | self._neighbors.get(term, set())


# Query keys accepted by search, mapped onto metadata record fields.
_QUERY_FIELDS = {
    "title": "title",
    "description": "description",
    "language": "languages",
    "languages": "languages",
    "genre": "genre",
    "date": "date",
    "location": "location",
    "participant": "participants",
    "participants": "participants",
    "recordingConditions": "recording_conditions",
    "kind": "kind",
}


class Catalog:
    """Corpus/session hierarchy with search, crosswalk and harvesting."""

    def __init__(
        self,
        origin: str,
        clock=None,
        urid_exists: Callable[[str], bool] | None = None,
        term_map: TermMap | None = None,
    ):
        self.origin = origin
        self.clock = clock or SystemClock()
        self.urid_exists = urid_exists or (lambda urid: True)
        self.term_map = term_map or TermMap()
        self._nodes: dict[str, CatalogNode] = {}
        self._counter = 0
        # urid text -> catalog node ids in link order; first entry is the
        # node used for policy inheritance.
        self._links: dict[str, list[str]] = {}
        self._harvest_tokens: dict[str, tuple[tuple, list[str], int]] = {}

    # -- node management ---------------------------------------------------------

    def _mint_id(self) -> str:
        self._counter += 1
        return f"{self.origin}-n{self._counter:06d}"

    def get(self, node_id: str) -> CatalogNode:
        node = self._nodes.get(node_id)
        if node is None:
            raise NodeNotFound(node_id)
        return node

    def has(self, node_id: str) -> bool:
        return node_id in self._nodes

    def create_node(
        self, parent: str | None, kind: str, record: MetadataRecord
    ) -> CatalogNode:
        if kind not in (CORPUS, SESSION):
            raise ValueError(f"kind must be CORPUS or SESSION, got {kind!r}")
        if parent is not None and parent not in self._nodes:
            raise ParentNotFound(parent)
        if kind == SESSION and not record.languages:
            raise MissingLanguage("a session must name at least one language")
        node = CatalogNode(
            node_id=self._mint_id(),
            kind=kind,
            parent=parent,
            record=record,
            datestamp=format_utc(self.clock.now()),
            origin=self.origin,
        )
        self._nodes[node.node_id] = node
        return node

    def reparent(self, node_id: str, new_parent: str | None) -> CatalogNode:
        node = self.get(node_id)
        if new_parent is not None:
            if new_parent not in self._nodes:
                raise ParentNotFound(new_parent)
            if node_id in self._ancestor_chain(new_parent, inclusive=True):
                raise CycleDetected(f"{node_id} would become its own ancestor")
        node.parent = new_parent
        node.datestamp = format_utc(self.clock.now())
        return node

    def deprecate(self, node_id: str) -> CatalogNode:
        node = self.get(node_id)
        if not node.deprecated:
            node.deprecated = True
            node.datestamp = format_utc(self.clock.now())
        return node

    def _ancestor_chain(self, node_id: str, inclusive: bool = False) -> list[str]:
        chain = [node_id] if inclusive else []
        current = self._nodes[node_id].parent
        while current is not None:
            chain.append(current)
            current = self._nodes[current].parent
        return chain

    def ancestors(self, node_id: str) -> list[str]:
        """Node id followed by its parents up to the root."""
        self.get(node_id)
        return self._ancestor_chain(node_id, inclusive=True)

    def subtree(self, root_id: str) -> list[CatalogNode]:
        """The root and all descendants, in a stable id-sorted order."""
        self.get(root_id)
        children: dict[str, list[str]] = {}
        for node in self._nodes.values():
            if node.parent is not None:
                children.setdefault(node.parent, []).append(node.node_id)
        result = []
        stack = [root_id]
        while stack:
            current = stack.pop()
            result.append(self._nodes[current])
            stack.extend(sorted(children.get(current, []), reverse=True))
        return result

    # -- object linkage -----------------------------------------------------------

    def link_object(self, node_id: str, urid: str) -> CatalogNode:
        """Attach an archived object to a node; idempotent per (node, urid)."""
        node = self.get(node_id)
        if not self.urid_exists(urid):
            raise UridNotFound(urid)
        if urid not in node.linked_objects:
            node.linked_objects.append(urid)
            node.datestamp = format_utc(self.clock.now())
        linked_at = self._links.setdefault(urid, [])
        if node_id not in linked_at:
            linked_at.append(node_id)
        return node

    def unlink_object(self, node_id: str, urid: str) -> None:
        """Rollback helper for failed atomic commits; not a public operation."""
        node = self._nodes.get(node_id)
        if node and urid in node.linked_objects:
            node.linked_objects.remove(urid)
        linked_at = self._links.get(urid)
        if linked_at and node_id in linked_at:
            linked_at.remove(node_id)
            if not linked_at:
                del self._links[urid]

    def remove_node(self, node_id: str) -> None:
        """Rollback helper for failed atomic commits; not a public operation."""
        node = self._nodes.pop(node_id, None)
        if node is None:
            return
        for urid in node.linked_objects:
            linked_at = self._links.get(urid)
            if linked_at and node_id in linked_at:
                linked_at.remove(node_id)
                if not linked_at:
                    del self._links[urid]

    def first_link(self, urid: str) -> str | None:
        linked_at = self._links.get(urid)
        return linked_at[0] if linked_at else None

    def linking_nodes(self, urid: str) -> list[str]:
        return list(self._links.get(urid, []))

    # -- search ----------------------------------------------------------------------

    def _match_value(self, candidate: str, wanted: str, expand: bool) -> bool:
        if not expand:
            return candidate == wanted
        return candidate in self.term_map.expand(wanted)

    def _node_matches(self, node: CatalogNode, query: dict, expand: bool) -> bool:
        for key, wanted in query.items():
            field_name = _QUERY_FIELDS.get(key)
            if field_name is None:
                return False
            if field_name == "kind":
                value = node.kind
            else:
                value = getattr(node.record, field_name)
            if isinstance(value, list):
                if not any(self._match_value(v, wanted, expand) for v in value):
                    return False
            else:
                if value is None or not self._match_value(value, wanted, expand):
                    return False
        return True

    def search(self, query: dict, expand: bool = False) -> list[str]:
        """Node ids matching every predicate, sorted; deprecated nodes excluded."""
        if not query:
            raise EmptyQuery("search needs at least one predicate")
        hits = [
            node.node_id
            for node in self._nodes.values()
            if not node.deprecated and self._node_matches(node, query, expand)
        ]
        return sorted(hits)

    def expand_terms(self, term: str) -> set[str]:
        return self.term_map.expand(term)

    # -- crosswalk --------------------------------------------------------------------

    def crosswalk_dc(self, node_id: str) -> tuple[DCRecord, list[str]]:
        """Map a node's metadata onto the shallow record, reporting what drops."""
        node = self.get(node_id)
        elements: dict[str, str] = {}
        loss: list[str] = []
        for source_field, value in node.record.to_dict().items():
            is_set = bool(value) if isinstance(value, list) else value not in (None, "")
            if not is_set:
                continue
            target = _DC_CROSSWALK.get(source_field)
            if target is None:
                loss.append(source_field)
            elif source_field == "languages":
                elements[target] = ";".join(value)
            else:
                elements[target] = value
        return DCRecord(elements), sorted(loss)

    # -- harvesting ---------------------------------------------------------------------

    def _harvest_snapshot(self, from_ts: str, set_id: str | None) -> list[str]:
        cutoff = normalize_utc(from_ts)
        members: set[str] | None = None
        if set_id is not None:
            members = {n.node_id for n in self.subtree(set_id)}
        rows = [
            node
            for node in self._nodes.values()
            if not node.deprecated
            and node.datestamp >= cutoff
            and (members is None or node.node_id in members)
        ]
        rows.sort(key=lambda n: (n.datestamp, n.node_id))
        return [n.node_id for n in rows]

    def harvest(
        self,
        from_ts: str,
        set_id: str | None = None,
        token: str | None = None,
    ) -> tuple[list[dict], str | None]:
        """Incremental listing of non-deprecated nodes, 100 per page.

        The first call snapshots the matching ids in (datestamp, nodeId)
        order; continuation tokens page through that snapshot so pages
        always compose to exactly the snapshot set.
        """
        params = (normalize_utc(from_ts), set_id)
        if token is None:
            snapshot = self._harvest_snapshot(from_ts, set_id)
            offset = 0
        else:
            state = self._harvest_tokens.get(token)
            if state is None or state[0] != params:
                raise BadToken(token)
            _, snapshot, offset = state
        page = snapshot[offset : offset + HARVEST_PAGE_SIZE]
        next_offset = offset + len(page)
        next_token: str | None = None
        if next_offset < len(snapshot):
            next_token = f"offset:{next_offset}"
            self._harvest_tokens[next_token] = (params, snapshot, next_offset)
        records = [self._nodes[node_id].to_dict() for node_id in page]
        return records, next_token

    # -- import / introspection -----------------------------------------------------------

    def adopt_replica(self, data: dict) -> bool:
        """Insert a foreign catalog node from a bundle; False if already present."""
        node = CatalogNode.from_dict(data)
        if node.node_id in self._nodes:
            return False
        node.replica = True
        self._nodes[node.node_id] = node
        for urid in node.linked_objects:
            linked_at = self._links.setdefault(urid, [])
            if node.node_id not in linked_at:
                linked_at.append(node.node_id)
        return True

    def all_nodes(self) -> list[CatalogNode]:
        return [self._nodes[k] for k in sorted(self._nodes)]

    def full_dump(self) -> list[dict]:
        rows = [n for n in self.all_nodes() if not n.deprecated]
        rows.sort(key=lambda n: (n.datestamp, n.node_id))
        return [n.to_dict() for n in rows]

    def snapshot(self) -> dict:
        return {"nodes": [n.to_dict() for n in self.all_nodes()]}

    def assert_no_physical_paths(self) -> None:
        """Decoupling guard: catalog state never mentions storage paths."""
        blob = canonical_json(self.snapshot()).decode("utf-8")
        for marker in ("store/", "mem:", "objects/"):
            if marker in blob:
                raise AssertionError(f"catalog serialization leaks {marker!r}")
