"""The node's HTTP shell.

Every interaction with a running node goes through these endpoints;
the CLI is a thin client over them so there is exactly one enforcement
path for access control. Bodies are UTF-8 JSON except for raw content
(object download, replica upload, bundle import/export).

Principals authenticate by attaching a signed attribute assertion
(``X-Archive-Assertion`` header, base64 of the wire JSON; ``POST
/decide`` also accepts it inline). The verified subject is the acting
principal; the filtered attributes feed the access decision. Peer
archives authenticate node-to-node calls by signing the request body
with their enrolled key (``X-Archive-Node`` / ``X-Archive-Signature``).
"""

from __future__ import annotations

import base64
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from cryptography.exceptions import InvalidSignature

from .bundle import Bundle
from .catalog import MetadataRecord
from .errors import (
    AlreadyRegistered,
    ArchiveError,
    BadSignature,
    DuplicateName,
    DuplicateNode,
    Expired,
    HashMismatch,
    ImportCorrupt,
    NodeNotFound,
    NotAuthorized,
    NotFound,
    NotOwner,
    ParentNotFound,
    PeerUnreachable,
    PrefixConflict,
    TargetNotFound,
    TransferCorrupt,
    UnknownPrefix,
    UnknownPrincipal,
    UntrustedIssuer,
    UntrustedPeer,
    UridNotFound,
    VersionConflict,
)
from .federation import AttributeAssertion
from .node import ArchiveNode
from .policy import AccessLevel, AccessPolicy, PERMIT
from .util import canonical_json
from .workspace import FragmentLocator, StagedItem

_STATUS = {
    NotFound: 404,
    NodeNotFound: 404,
    UridNotFound: 404,
    TargetNotFound: 404,
    UnknownPrefix: 404,
    ParentNotFound: 404,
    UnknownPrincipal: 403,
    NotAuthorized: 403,
    NotOwner: 403,
    UntrustedPeer: 403,
    UntrustedIssuer: 403,
    Expired: 403,
    BadSignature: 403,
    VersionConflict: 409,
    AlreadyRegistered: 409,
    DuplicateNode: 409,
    DuplicateName: 409,
    PrefixConflict: 409,
    HashMismatch: 409,
    TransferCorrupt: 422,
    ImportCorrupt: 422,
    PeerUnreachable: 502,
}


def _status_for(exc: ArchiveError) -> int:
    return _STATUS.get(type(exc), 400)


class _Handler(BaseHTTPRequestHandler):
    node: ArchiveNode  # attached by make_server
    protocol_version = "HTTP/1.1"

    # -- plumbing -----------------------------------------------------------

    def log_message(self, format, *args):  # noqa: A002 - stdlib signature
        pass

    def _body(self) -> bytes:
        length = int(self.headers.get("Content-Length") or 0)
        return self.rfile.read(length) if length else b""

    def _send(self, status: int, payload: bytes, content_type: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def _json(self, obj, status: int = 200) -> None:
        self._send(status, canonical_json(obj), "application/json; charset=utf-8")

    def _error(self, exc: ArchiveError) -> None:
        self._json(
            {"error": exc.code, "detail": str(exc)}, status=_status_for(exc)
        )

    # -- authentication -------------------------------------------------------

    def _assertion_context(self, body_obj: dict | None = None) -> tuple[str | None, dict]:
        """Verified (subject, canonical attributes) or (None, {}) when anonymous."""
        wire: bytes | None = None
        header = self.headers.get("X-Archive-Assertion")
        if header:
            wire = base64.b64decode(header)
        elif body_obj and body_obj.get("assertion") is not None:
            wire = canonical_json(body_obj["assertion"])
        if wire is None:
            return None, {}
        assertion = AttributeAssertion.from_wire(wire)
        attributes = self.node.verify_assertion(assertion)
        return assertion.subject, attributes

    def _require_principal(self, body_obj: dict | None = None) -> tuple[str, dict]:
        subject, attributes = self._assertion_context(body_obj)
        if subject is None:
            raise NotAuthorized("this endpoint requires a signed assertion")
        return subject, attributes

    def _verify_peer(self, body: bytes) -> str:
        """Authenticate a node-to-node call by its body signature."""
        peer_id = self.headers.get("X-Archive-Node")
        signature = self.headers.get("X-Archive-Signature")
        if not peer_id or not signature:
            raise UntrustedPeer("missing node authentication headers")
        identity = self.node.trust.get(peer_id)
        if identity is None:
            raise UntrustedPeer(f"{peer_id!r} is not in the trust list")
        try:
            identity.verifier().verify(base64.b64decode(signature), body)
        except (InvalidSignature, ValueError):
            raise BadSignature("node signature does not verify") from None
        return peer_id

    # -- dispatch -------------------------------------------------------------------

    def _dispatch(self, route) -> None:
        try:
            route()
        except ArchiveError as exc:
            self._error(exc)
        except (ValueError, KeyError, TypeError) as exc:
            # Malformed input (bad JSON, missing keys, invalid identifiers).
            self._json(
                {"error": "BadRequest", "detail": f"{type(exc).__name__}: {exc}"},
                status=400,
            )

    def do_GET(self):  # noqa: N802 - stdlib casing
        self._dispatch(self._route_get)

    def do_POST(self):  # noqa: N802
        self._dispatch(self._route_post)

    def do_PUT(self):  # noqa: N802
        self._dispatch(self._route_put)

    # -- GET routes ----------------------------------------------------------------------

    def _route_get(self):
        parsed = urlparse(self.path)
        parts = [p for p in parsed.path.split("/") if p]
        query = {k: v[0] for k, v in parse_qs(parsed.query).items()}

        if len(parts) == 3 and parts[0] == "object":
            return self._get_object(f"urid:{parts[1]}/{parts[2]}")
        if len(parts) == 3 and parts[0] == "resolve":
            return self._get_resolve(f"urid:{parts[1]}/{parts[2]}")
        if parts == ["harvest"]:
            return self._get_harvest(query)
        if parts == ["search"]:
            return self._get_search(query)
        if len(parts) == 2 and parts[0] == "export":
            return self._get_export(parts[1])
        raise NotFound(f"no such endpoint: GET {parsed.path}")

    def _get_object(self, urid: str):
        _, attributes = self._assertion_context()
        decision = self.node.decide(attributes, urid, AccessLevel.READ)
        if decision.effect != PERMIT:
            raise NotAuthorized(f"read on {urid} denied ({decision.reason})")
        content = self.node.read(urid)
        media_type = "application/octet-stream"
        if self.node.store.has_object(urid):
            media_type = self.node.store.get_object(urid).media_type
        self._send(200, content, media_type)

    def _get_resolve(self, urid: str):
        record = self.node.resolve(urid)
        payload = record.to_dict()
        payload["replica"] = self.node.resolver.is_replica(urid)
        self._json(payload)

    def _get_harvest(self, query: dict):
        records, next_token = self.node.harvest(
            query.get("from", "1970-01-01T00:00:00Z"),
            set_id=query.get("set"),
            token=query.get("token"),
        )
        self._json({"records": records, "nextToken": next_token})

    def _get_search(self, query: dict):
        expand = query.pop("expand", "").lower() in ("1", "true", "yes")
        results = self.node.search_catalog(query, expand=expand)
        self._json({"results": results})

    def _get_export(self, root_id: str):
        _, attributes = self._assertion_context()
        bundle = self.node.export_subarchive(root_id, attributes)
        self._send(200, bundle.to_zip_bytes(), "application/zip")

    # -- POST routes ------------------------------------------------------------------------

    def _route_post(self):
        parsed = urlparse(self.path)
        parts = [p for p in parsed.path.split("/") if p]
        body = self._body()

        if parts == ["import"]:
            return self._post_import(body)
        if parts == ["sync"]:
            return self._post_sync(body)

        obj = json.loads(body.decode("utf-8")) if body else {}
        if parts == ["ingest"]:
            return self._post_ingest(obj)
        if parts == ["decide"]:
            return self._post_decide(obj)
        if parts == ["workspace"]:
            return self._post_workspace_open(obj)
        if len(parts) == 3 and parts[0] == "workspace" and parts[2] == "stage":
            return self._post_workspace_stage(parts[1], obj)
        if len(parts) == 3 and parts[0] == "workspace" and parts[2] == "commit":
            return self._post_workspace_commit(parts[1], obj)
        if parts == ["annotate"]:
            return self._post_annotate(obj)
        if parts == ["policy", "set"]:
            return self._post_policy_set(obj)
        if parts == ["policy", "delegate"]:
            return self._post_policy_delegate(obj)
        raise NotFound(f"no such endpoint: POST {parsed.path}")

    def _post_ingest(self, obj: dict):
        subject, _ = self._require_principal(obj)
        if subject not in self.node.principals:
            raise NotAuthorized(f"{subject!r} is not a known depositor here")
        content = base64.b64decode(obj["contentBase64"])
        archived = self.node.ingest(
            content, obj.get("mediaType", "application/octet-stream"),
            subject, obj.get("prefix", self.node.default_prefix),
        )
        self._json(archived.to_dict(), status=201)

    def _post_decide(self, obj: dict):
        _, attributes = self._assertion_context(obj)
        decision = self.node.decide(attributes, obj["urid"], obj["requested"])
        self._json(decision.to_dict())

    def _post_workspace_open(self, obj: dict):
        subject, _ = self._require_principal(obj)
        ws = self.node.open_workspace(subject)
        self._json(ws.summary(), status=201)

    def _post_workspace_stage(self, ws_id: str, obj: dict):
        subject, _ = self._require_principal(obj)
        ws = self.node.workspaces.get(ws_id)
        if subject != ws.depositor_id:
            raise NotAuthorized(f"{subject!r} is not the workspace depositor")
        item = StagedItem(
            local_name=obj["localName"],
            content=base64.b64decode(obj["contentBase64"]),
            media_type=obj.get("mediaType", "application/octet-stream"),
            metadata=MetadataRecord.from_dict(obj.get("metadata", {})),
            predecessor=obj.get("predecessor"),
        )
        self._json(self.node.stage(ws_id, item).summary())

    def _post_workspace_commit(self, ws_id: str, obj: dict):
        subject, _ = self._require_principal(obj)
        urids = self.node.commit_workspace(
            ws_id, subject,
            prefix=obj.get("prefix"),
            parent_node=obj.get("parent"),
        )
        self._json({"urids": [u.text for u in urids]})

    def _post_annotate(self, obj: dict):
        subject, attributes = self._require_principal(obj)
        fragment = (
            FragmentLocator.from_dict(obj["fragment"]) if obj.get("fragment") else None
        )
        enrichment = self.node.annotate(
            obj["target"], fragment, obj.get("body", ""), subject, attributes
        )
        self._json(enrichment.to_dict(), status=201)

    def _post_policy_set(self, obj: dict):
        subject, _ = self._require_principal(obj)
        policy = AccessPolicy.from_dict(obj["policy"])
        stored = self.node.set_policy(obj["target"], policy, subject)
        self._json(stored.to_dict())

    def _post_policy_delegate(self, obj: dict):
        subject, _ = self._require_principal(obj)
        delegation = self.node.delegate(obj["scope"], obj["grantee"], subject)
        self._json(delegation.to_dict(), status=201)

    def _post_import(self, body: bytes):
        subject, _ = self._require_principal()
        report = self.node.import_bundle(Bundle.from_zip_bytes(body), subject)
        self._json(report)

    def _post_sync(self, body: bytes):
        """Two modes: serve records to a signed peer, or (admin) trigger a
        pull from a peer named in the trust list."""
        obj = json.loads(body.decode("utf-8")) if body else {}
        if "peer" in obj:
            subject, _ = self._require_principal(obj)
            if subject != self.node.admin:
                raise NotAuthorized("sync trigger is an admin operation")
            from .client import RemoteNode

            identity = self.node.trust.get(obj["peer"])
            if identity is None or not identity.url:
                raise UntrustedPeer(f"no enrolled peer with a url: {obj['peer']!r}")
            peer = RemoteNode(
                identity.node_id,
                identity.url,
                signer=self.node.signing_key,
                signer_node_id=self.node.node_id,
            )
            applied = self.node.mirror_sync(peer, obj["prefix"], obj.get("sinceSeq"))
            return self._json({"applied": applied})
        requester = self._verify_peer(body)
        rows = self.node.pull_records(
            obj["prefix"], int(obj.get("sinceSeq", 0)), requester=requester
        )
        self._json(rows)

    # -- PUT routes ------------------------------------------------------------------------------

    def _route_put(self):
        parsed = urlparse(self.path)
        parts = [p for p in parsed.path.split("/") if p]
        if len(parts) == 3 and parts[0] == "replica":
            body = self._body()
            peer_id = self._verify_peer(body)
            expected = self.headers.get("X-Content-Sha256", "")
            path = self.node.receive_replica(
                f"urid:{parts[1]}/{parts[2]}", body, expected, from_node=peer_id
            )
            return self._json({"path": path}, status=201)
        raise NotFound(f"no such endpoint: PUT {parsed.path}")


class GatewayServer:
    """A threading HTTP server bound to one archive node."""

    def __init__(self, node: ArchiveNode, host: str = "127.0.0.1", port: int = 0):
        handler = type("BoundHandler", (_Handler,), {"node": node})
        self.node = node
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "GatewayServer":
        self._thread = threading.Thread(
            target=self.httpd.serve_forever, kwargs={"poll_interval": 0.05},
            daemon=True,
        )
        self._thread.start()
        return self

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread:
            self._thread.join(timeout=5)

    def serve_forever(self) -> None:
        self.httpd.serve_forever()
