"""One archive node: the resource-managing component that wires the
object store, handle resolver, catalog, policy engine, federation state
and workspaces together behind a single facade.

An :class:`ArchiveNode` is also a valid peer handle for other nodes:
it exposes ``pull_records``, ``receive_replica`` and ``search_catalog``
so federation operations work identically whether peers are in-process
(tests, simulation) or remote (HTTP gateway).
"""

from __future__ import annotations

import threading
from pathlib import Path
from typing import Iterable

from . import bundle as bundle_mod
from . import federation
from .catalog import Catalog, MetadataRecord, TermMap
from .errors import UntrustedPeer
from .federation import (
    AttributeFilter,
    NodeIdentity,
    TrustList,
    generate_signing_key,
    public_key_bytes,
)
from .policy import AccessPolicy, Decision, PolicyEngine
from .resolver import HandleResolver, InstanceLocation, URID, as_urid
from .store import ArchivalObject, FixityReport, ObjectStore
from .util import SystemClock, canonical_json, sha256_hex
from .workspace import FragmentLocator, WorkspaceManager


class ArchiveNode:
    """A federated archive node for one institution's prefix sub-domain."""

    def __init__(
        self,
        node_id: str,
        owned_prefixes: Iterable[str],
        *,
        admin: str = "admin",
        principals: Iterable[str] = (),
        root: str | Path | None = None,
        clock=None,
        signing_key=None,
        url: str | None = None,
    ):
        self.node_id = node_id
        self.admin = admin
        self.principals = {admin, *principals}
        self.clock = clock or SystemClock()
        self.signing_key = signing_key or generate_signing_key()
        self.url = url
        self._lock = threading.RLock()

        self.trust = TrustList()
        self.resolver = HandleResolver(node_id, owned_prefixes, trust=self.trust)
        self.store = ObjectStore(node_id, self.resolver, root=root, clock=self.clock)
        self.catalog = Catalog(
            node_id, clock=self.clock, urid_exists=self.resolver.has
        )
        self.policy = PolicyEngine(
            node_id, self.resolver, self.catalog, self.store, admin
        )
        self.workspaces = WorkspaceManager(
            self.store,
            self.resolver,
            self.catalog,
            self.policy,
            self.principals,
            self.clock,
        )
        self.attribute_filters: dict[str, AttributeFilter] = {}
        # A node always trusts itself; partners are enrolled explicitly.
        self.trust.enroll(self.identity(), actor=admin, admin=admin)

    # -- identity ---------------------------------------------------------------

    def identity(self) -> NodeIdentity:
        return NodeIdentity(
            node_id=self.node_id,
            public_key=public_key_bytes(self.signing_key),
            owned_prefixes=tuple(self.resolver.owned_prefixes),
            url=self.url,
        )

    @property
    def default_prefix(self) -> str:
        return self.resolver.owned_prefixes[0]

    def add_principal(self, principal_id: str) -> None:
        self.principals.add(principal_id)

    # -- object store operations ---------------------------------------------------

    def ingest(
        self, content: bytes, media_type: str, depositor_id: str, prefix: str
    ) -> ArchivalObject:
        with self._lock:
            return self.store.ingest(content, media_type, depositor_id, prefix)

    def read(self, urid) -> bytes:
        return self.store.read(urid)

    def verify_fixity(self, urid) -> FixityReport:
        return self.store.verify_fixity(urid)

    def commit_version(
        self, predecessor, content: bytes, media_type: str, depositor_id: str
    ) -> ArchivalObject:
        with self._lock:
            return self.store.commit_version(
                predecessor, content, media_type, depositor_id
            )

    def version_chain(self, urid) -> list[URID]:
        return self.store.version_chain(urid)

    # -- resolution ------------------------------------------------------------------

    def resolve(self, urid):
        return self.resolver.resolve(urid)

    def mirror_sync(self, peer, prefix: str, since_seq: int | None = None) -> int:
        with self._lock:
            return self.resolver.mirror_sync(peer, prefix, since_seq)

    # -- catalog ----------------------------------------------------------------------

    def create_node(self, parent, kind, record: MetadataRecord):
        with self._lock:
            return self.catalog.create_node(parent, kind, record)

    def link_object(self, node_id: str, urid) -> None:
        """Link and keep the object's materialized record policy current:
        the first link decides which subtree the object inherits from."""
        with self._lock:
            urid_text = as_urid(urid).text
            self.catalog.link_object(node_id, urid_text)
            if self.resolver.owns(as_urid(urid).prefix):
                self.policy.refresh_record_policy(urid_text)

    def search(self, query: dict, expand: bool = False) -> list[str]:
        with self._lock:
            return self.catalog.search(query, expand=expand)

    def harvest(self, from_ts: str, set_id=None, token=None):
        with self._lock:
            return self.catalog.harvest(from_ts, set_id=set_id, token=token)

    def set_term_map(self, term_map: TermMap) -> None:
        self.catalog.term_map = term_map

    # -- policy ------------------------------------------------------------------------

    def set_policy(self, target: str, policy: AccessPolicy, actor: str) -> AccessPolicy:
        with self._lock:
            return self.policy.set_policy(target, policy, actor)

    def delegate(self, scope: str, grantee: str, actor: str):
        with self._lock:
            return self.policy.delegate(scope, grantee, actor)

    def decide(self, attributes: dict, urid, requested) -> Decision:
        return self.policy.decide(attributes, as_urid(urid).text, requested)

    # -- federation -----------------------------------------------------------------------

    def enroll(self, identity: NodeIdentity, actor: str) -> TrustList:
        with self._lock:
            return self.trust.enroll(identity, actor=actor, admin=self.admin)

    def set_attribute_filter(self, filter_: AttributeFilter) -> None:
        self.attribute_filters[filter_.issuer] = filter_

    def filter_attributes(self, issuer: str, raw: dict) -> dict:
        return federation.filter_attributes(self.attribute_filters, issuer, raw)

    def verify_assertion(self, assertion) -> dict:
        """Verify against this node's trust list and filter to canonical names."""
        raw = federation.verify_assertion(assertion, self.trust, self.clock.now())
        return self.filter_attributes(assertion.issuer, raw)

    def issue_assertion(self, subject: str, attributes: dict, ttl_seconds: int):
        return federation.issue_assertion(
            self.signing_key,
            self.node_id,
            subject,
            attributes,
            ttl_seconds,
            now=self.clock.now(),
        )

    def replicate_content(self, urid, target) -> InstanceLocation:
        with self._lock:
            return federation.replicate_content(self, urid, target)

    def federated_search(self, query: dict, handles, expand: bool = False):
        return federation.federated_search(query, handles, expand=expand)

    # -- workspaces and enrichment ------------------------------------------------------------

    def open_workspace(self, depositor_id: str):
        with self._lock:
            return self.workspaces.open(depositor_id)

    def stage(self, ws_id: str, item):
        with self._lock:
            return self.workspaces.stage(ws_id, item)

    def commit_workspace(
        self, ws_id: str, actor: str, prefix: str | None = None, parent_node=None,
        _fail_after: int | None = None,
    ) -> list[URID]:
        with self._lock:
            return self.workspaces.commit(
                ws_id,
                actor,
                prefix or self.default_prefix,
                parent_node=parent_node,
                _fail_after=_fail_after,
            )

    def annotate(
        self,
        target,
        fragment: FragmentLocator | None,
        body: str,
        author: str,
        attributes: dict,
    ):
        with self._lock:
            return self.workspaces.annotate(
                target, fragment, body, author, attributes, self.default_prefix
            )

    def relate(self, a, b, relation_type: str, author: str, attributes: dict):
        with self._lock:
            return self.workspaces.relate(
                a, b, relation_type, author, attributes, self.default_prefix
            )

    # -- bundles ----------------------------------------------------------------------------------

    def export_subarchive(self, root_id: str, attributes: dict) -> bundle_mod.Bundle:
        with self._lock:
            return bundle_mod.export_subarchive(self, root_id, attributes)

    def import_bundle(self, bundle: bundle_mod.Bundle, actor: str) -> dict:
        with self._lock:
            return bundle_mod.import_bundle(self, bundle, actor)

    # -- peer handle surface ------------------------------------------------------------------------

    def pull_records(
        self, prefix: str, since_seq: int, requester: str | None = None
    ) -> list[dict]:
        """Serve records to a peer. Runs under the node lock so concurrent
        commits are seen entirely or not at all, never partially."""
        with self._lock:
            return self.resolver.records_since(prefix, since_seq, requester=requester)

    def receive_replica(
        self, urid: str, content: bytes, expected_hash: str, from_node: str = ""
    ) -> str:
        """Accept replicated bytes from a trusted peer; fixity-checked."""
        if not self.trust.is_trusted(from_node):
            raise UntrustedPeer(f"{from_node!r} is not in this node's trust list")
        with self._lock:
            return self.store.receive_replica(urid, content, expected_hash)

    def search_catalog(self, query: dict, expand: bool = False) -> list[dict]:
        with self._lock:
            hits = []
            for node_id in self.catalog.search(query, expand=expand):
                cat_node = self.catalog.get(node_id)
                hits.append(
                    {
                        "nodeId": node_id,
                        "owner": cat_node.origin,
                        "replica": cat_node.replica,
                        "title": cat_node.record.title,
                    }
                )
            return hits

    # -- state digests ---------------------------------------------------------------------------------

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "nodeId": self.node_id,
                "store": self.store.snapshot(),
                "resolver": self.resolver.snapshot(),
                "catalog": self.catalog.snapshot(),
                "policy": self.policy.snapshot(),
                "trustVersion": self.trust.version,
            }

    def state_digest(self) -> str:
        return sha256_hex(canonical_json(self.snapshot()))
