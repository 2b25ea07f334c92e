"""Staged deposits and stand-off enrichment.

A workspace lets a depositor accumulate uploads with draft metadata and
then commit them in one atomic step: either every item is archived,
cataloged and linked, or nothing is. Validation is deliberately lenient
while staging (fieldworkers upload incrementally) and strict at commit
(nothing enters the archive without its languages named).

Enrichments (comments on fragments, relations between resources)
are archival objects in their own right. They carry their own URIDs,
are fixity-checked like any other content, and never touch the bytes of
what they describe.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .catalog import SESSION, MetadataRecord
from .errors import (
    DuplicateName,
    EmptyContent,
    EmptyWorkspace,
    InvalidFragment,
    NotAuthorized,
    NotFound,
    SelfRelation,
    UnknownPrincipal,
    ValidationFailed,
    VersionConflict,
    WorkspaceClosed,
)
from .policy import AccessLevel, PERMIT
from .resolver import URID, as_urid
from .util import canonical_json, format_utc

ENRICHMENT_MEDIA_TYPE = "application/x-archive-enrichment+json"

OPEN = "OPEN"
COMMITTED = "COMMITTED"
ABORTED = "ABORTED"

COMMENT = "COMMENT"
RELATION = "RELATION"

TIME = "TIME"
CHARSPAN = "CHARSPAN"


@dataclass(frozen=True)
class FragmentLocator:
    """A span inside a resource: seconds (ms precision) or character offsets."""

    kind: str  # TIME | CHARSPAN
    start: float
    end: float

    def validate(self) -> "FragmentLocator":
        if self.kind not in (TIME, CHARSPAN):
            raise InvalidFragment(f"unknown fragment kind: {self.kind!r}")
        if not (0 <= self.start < self.end):
            raise InvalidFragment(
                f"fragment needs 0 <= start < end, got [{self.start}, {self.end})"
            )
        return self

    def to_dict(self) -> dict:
        return {"kind": self.kind, "start": self.start, "end": self.end}

    @classmethod
    def from_dict(cls, data: dict) -> "FragmentLocator":
        return cls(kind=data["kind"], start=data["start"], end=data["end"])


@dataclass
class StagedItem:
    local_name: str
    content: bytes
    media_type: str
    metadata: MetadataRecord
    predecessor: str | None = None


@dataclass
class Workspace:
    ws_id: str
    depositor_id: str
    state: str = OPEN
    staged: list[StagedItem] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "wsId": self.ws_id,
            "depositorId": self.depositor_id,
            "state": self.state,
            "staged": [item.local_name for item in self.staged],
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class Enrichment:
    """A stand-off comment or relation, archived under its own URID."""

    urid: URID
    kind: str  # COMMENT | RELATION
    target: str
    target_b: str | None
    fragment: FragmentLocator | None
    body: str
    author: str
    created_at: str

    def to_dict(self) -> dict:
        return {
            "urid": self.urid.text,
            "kind": self.kind,
            "target": self.target,
            "targetB": self.target_b,
            "fragment": self.fragment.to_dict() if self.fragment else None,
            "body": self.body,
            "author": self.author,
            "createdAt": self.created_at,
        }

    def payload(self) -> dict:
        """The archived content: everything except the identifier itself."""
        data = self.to_dict()
        del data["urid"]
        return data


class WorkspaceManager:
    """Workspace lifecycle plus the enrichment operations for one node."""

    def __init__(self, store, resolver, catalog, policy, principals: set, clock):
        self.store = store
        self.resolver = resolver
        self.catalog = catalog
        self.policy = policy
        self.principals = principals
        self.clock = clock
        self._workspaces: dict[str, Workspace] = {}
        self._counter = 0

    def get(self, ws_id: str) -> Workspace:
        ws = self._workspaces.get(ws_id)
        if ws is None:
            raise NotFound(ws_id)
        return ws

    def open(self, depositor_id: str) -> Workspace:
        if depositor_id not in self.principals:
            raise UnknownPrincipal(depositor_id)
        self._counter += 1
        ws = Workspace(ws_id=f"ws-{self._counter:06d}", depositor_id=depositor_id)
        self._workspaces[ws.ws_id] = ws
        return ws

    def stage(self, ws_id: str, item: StagedItem) -> Workspace:
        ws = self.get(ws_id)
        if ws.state != OPEN:
            raise WorkspaceClosed(f"{ws_id} is {ws.state}")
        if any(existing.local_name == item.local_name for existing in ws.staged):
            raise DuplicateName(item.local_name)
        if not item.content:
            raise EmptyContent(item.local_name)
        if not item.metadata.languages:
            ws.warnings.append(f"{item.local_name}: no language named yet")
        ws.staged.append(item)
        return ws

    def abort(self, ws_id: str, actor: str) -> Workspace:
        """Discard an open workspace; nothing staged ever reaches the archive."""
        ws = self.get(ws_id)
        if ws.state != OPEN:
            raise WorkspaceClosed(f"{ws_id} is {ws.state}")
        if actor != ws.depositor_id:
            raise NotAuthorized(f"{actor!r} is not the workspace depositor")
        ws.state = ABORTED
        return ws

    # -- commit ---------------------------------------------------------------

    def _validate_for_commit(self, ws: Workspace) -> None:
        problems: list[tuple[str, str]] = []
        seen_predecessors: set[str] = set()
        for item in ws.staged:
            if not item.metadata.languages:
                problems.append((item.local_name, "session requires a language"))
            if item.predecessor is not None:
                pred = item.predecessor
                if pred in seen_predecessors:
                    raise VersionConflict(
                        f"two staged items both version {pred}"
                    )
                seen_predecessors.add(pred)
                if not self.store.has_object(pred):
                    problems.append((item.local_name, f"predecessor {pred} not found"))
                    continue
                record = self.resolver.resolve(pred)
                if record.successor is not None:
                    raise VersionConflict(
                        f"{pred} already has successor {record.successor}"
                    )
                if self.store.read(pred) == item.content:
                    problems.append(
                        (item.local_name, "content identical to predecessor")
                    )
        if problems:
            raise ValidationFailed(problems)

    def commit(
        self,
        ws_id: str,
        actor: str,
        prefix: str,
        parent_node: str | None = None,
        _fail_after: int | None = None,
    ) -> list[URID]:
        """Archive every staged item atomically.

        New items are ingested and get a fresh session node; versioned
        items join their predecessor's catalog placement. On any failure
        everything is rolled back and the workspace stays OPEN.
        ``_fail_after`` is a test hook that raises after the k-th item.
        """
        ws = self.get(ws_id)
        if ws.state != OPEN:
            raise WorkspaceClosed(f"{ws_id} is {ws.state}")
        if actor != ws.depositor_id:
            raise NotAuthorized(f"{actor!r} is not the workspace depositor")
        if not ws.staged:
            raise EmptyWorkspace(ws_id)
        self._validate_for_commit(ws)

        archived: list[URID] = []
        created_nodes: list[str] = []
        added_links: list[tuple[str, str]] = []
        try:
            for index, item in enumerate(ws.staged):
                if item.predecessor is None:
                    obj = self.store.ingest(
                        item.content, item.media_type, ws.depositor_id, prefix
                    )
                    node = self.catalog.create_node(
                        parent_node, SESSION, item.metadata
                    )
                    created_nodes.append(node.node_id)
                    anchor = node.node_id
                else:
                    obj = self.store.commit_version(
                        item.predecessor,
                        item.content,
                        item.media_type,
                        ws.depositor_id,
                    )
                    anchor = self.catalog.first_link(item.predecessor)
                    if anchor is None:
                        node = self.catalog.create_node(
                            parent_node, SESSION, item.metadata
                        )
                        created_nodes.append(node.node_id)
                        anchor = node.node_id
                archived.append(obj.urid)
                self.catalog.link_object(anchor, obj.urid.text)
                added_links.append((anchor, obj.urid.text))
                self.policy.refresh_record_policy(obj.urid.text)
                if _fail_after is not None and index + 1 >= _fail_after:
                    raise RuntimeError(f"injected failure after item {index + 1}")
        except Exception:
            for anchor, urid_text in reversed(added_links):
                self.catalog.unlink_object(anchor, urid_text)
            for node_id in reversed(created_nodes):
                self.catalog.remove_node(node_id)
            for urid in reversed(archived):
                self.store.discard_object(urid)
            raise
        ws.state = COMMITTED
        return archived

    # -- enrichment ---------------------------------------------------------------

    def _archive_enrichment(self, enrichment_fields: dict, prefix: str) -> Enrichment:
        payload = dict(enrichment_fields)
        content = canonical_json(payload)
        obj = self.store.ingest(
            content, ENRICHMENT_MEDIA_TYPE, payload["author"], prefix
        )
        enrichment = Enrichment(
            urid=obj.urid,
            kind=payload["kind"],
            target=payload["target"],
            target_b=payload["targetB"],
            fragment=FragmentLocator.from_dict(payload["fragment"])
            if payload["fragment"]
            else None,
            body=payload["body"],
            author=payload["author"],
            created_at=payload["createdAt"],
        )
        # Enrichments ride with their target: linking them beside the
        # target's first catalog placement makes them inherit its policy
        # reach and travel in sub-archive exports.
        anchor = self.catalog.first_link(payload["target"])
        if anchor is not None:
            self.catalog.link_object(anchor, obj.urid.text)
            self.policy.refresh_record_policy(obj.urid.text)
        return enrichment

    def annotate(
        self,
        target: str,
        fragment: FragmentLocator | None,
        body: str,
        author: str,
        attributes: dict,
        prefix: str,
    ) -> Enrichment:
        """Attach a comment to a resource (or a fragment of it)."""
        target = as_urid(target).text
        if not self.resolver.has(target):
            raise NotFound(target)
        if fragment is not None:
            fragment.validate()
        decision = self.policy.decide(attributes, target, AccessLevel.ANNOTATE)
        if decision.effect != PERMIT:
            raise NotAuthorized(
                f"annotate on {target} denied (granted {decision.granted_level.text})"
            )
        return self._archive_enrichment(
            {
                "kind": COMMENT,
                "target": target,
                "targetB": None,
                "fragment": fragment.to_dict() if fragment else None,
                "body": body,
                "author": author,
                "createdAt": format_utc(self.clock.now()),
            },
            prefix,
        )

    def relate(
        self,
        a: str,
        b: str,
        relation_type: str,
        author: str,
        attributes: dict,
        prefix: str,
    ) -> Enrichment:
        """Record a typed relation between two distinct resources."""
        a, b = as_urid(a).text, as_urid(b).text
        if a == b:
            raise SelfRelation(a)
        for urid in (a, b):
            if not self.resolver.has(urid):
                raise NotFound(urid)
        decision = self.policy.decide(attributes, a, AccessLevel.ANNOTATE)
        if decision.effect != PERMIT:
            raise NotAuthorized(
                f"annotate on {a} denied (granted {decision.granted_level.text})"
            )
        return self._archive_enrichment(
            {
                "kind": RELATION,
                "target": a,
                "targetB": b,
                "fragment": None,
                "body": relation_type,
                "author": author,
                "createdAt": format_utc(self.clock.now()),
            },
            prefix,
        )

    def snapshot(self) -> dict:
        return {
            "workspaces": [
                self._workspaces[k].summary() for k in sorted(self._workspaces)
            ]
        }
