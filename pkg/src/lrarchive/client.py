"""HTTP client side: a remote peer handle and small request helpers.

:class:`RemoteNode` makes a gateway look exactly like an in-process
node to the federation machinery (same ``pull_records`` /
``receive_replica`` / ``search_catalog`` surface), signing node-to-node
calls with the local node's key.
"""

from __future__ import annotations

import base64

import requests

from .errors import (
    ArchiveError,
    BadSignature,
    BadToken,
    EmptyContent,
    Expired,
    ImportCorrupt,
    NotAuthorized,
    NotFound,
    NotOwner,
    PeerUnreachable,
    TransferCorrupt,
    UnknownPrefix,
    UntrustedIssuer,
    UntrustedPeer,
    VersionConflict,
)
from .util import canonical_json

_ERRORS = {
    cls.__name__: cls
    for cls in (
        BadSignature, BadToken, EmptyContent, Expired, ImportCorrupt,
        NotAuthorized, NotFound, NotOwner, TransferCorrupt, UnknownPrefix,
        UntrustedIssuer, UntrustedPeer, VersionConflict,
    )
}


def raise_for_error(response: requests.Response) -> requests.Response:
    """Translate a gateway error envelope back into the matching exception."""
    if response.status_code < 400:
        return response
    try:
        payload = response.json()
        code = payload.get("error", "")
        detail = payload.get("detail", response.text)
    except ValueError:
        code, detail = "", response.text
    raise _ERRORS.get(code, ArchiveError)(f"{code or response.status_code}: {detail}")


class RemoteNode:
    """A peer handle over HTTP, authenticated with the local node's key."""

    def __init__(
        self,
        node_id: str,
        url: str,
        signer=None,
        signer_node_id: str | None = None,
        timeout: float = 10.0,
    ):
        self.node_id = node_id
        self.url = url.rstrip("/")
        self.signer = signer
        self.signer_node_id = signer_node_id
        self.timeout = timeout
        self.session = requests.Session()

    def _signed_headers(self, body: bytes) -> dict:
        if self.signer is None or self.signer_node_id is None:
            return {}
        return {
            "X-Archive-Node": self.signer_node_id,
            "X-Archive-Signature": base64.b64encode(self.signer.sign(body)).decode(),
        }

    def _request(self, method: str, path: str, body: bytes, headers: dict):
        try:
            response = self.session.request(
                method,
                f"{self.url}{path}",
                data=body,
                headers=headers,
                timeout=self.timeout,
            )
        except requests.ConnectionError as exc:
            raise PeerUnreachable(f"{self.node_id} at {self.url}: {exc}") from exc
        return raise_for_error(response)

    # -- peer handle surface -------------------------------------------------

    def pull_records(
        self, prefix: str, since_seq: int, requester: str | None = None
    ) -> list[dict]:
        body = canonical_json({"prefix": prefix, "sinceSeq": since_seq})
        headers = {"Content-Type": "application/json", **self._signed_headers(body)}
        response = self._request("POST", "/sync", body, headers)
        return response.json()

    def receive_replica(
        self, urid: str, content: bytes, expected_hash: str, from_node: str = ""
    ) -> str:
        prefix, _, suffix = urid[len("urid:"):].partition("/")
        headers = {
            "Content-Type": "application/octet-stream",
            "X-Content-Sha256": expected_hash,
            **self._signed_headers(content),
        }
        response = self._request("PUT", f"/replica/{prefix}/{suffix}", content, headers)
        return response.json()["path"]

    def search_catalog(self, query: dict, expand: bool = False) -> list[dict]:
        params = dict(query)
        if expand:
            params["expand"] = "1"
        try:
            response = self.session.get(
                f"{self.url}/search", params=params, timeout=self.timeout
            )
        except requests.ConnectionError as exc:
            raise PeerUnreachable(f"{self.node_id} at {self.url}: {exc}") from exc
        return raise_for_error(response).json()["results"]
