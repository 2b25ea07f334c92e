"""``archive``: operator and depositor CLI.

A thin client over a node's HTTP gateway: every state change goes
through the same endpoints (and the same access checks) as any other
client. Commands that act as a principal take ``--assertion FILE``,
a signed attribute assertion issued by the user's home institution
(see ``archive issue-assertion``).
"""

from __future__ import annotations

import argparse
import base64
import json
import os
import sys
from pathlib import Path

import requests

from .client import raise_for_error
from .errors import ArchiveError
from .federation import generate_signing_key, issue_assertion, public_key_bytes
from .util import SystemClock


def _assertion_header(path: str | None) -> dict:
    if not path:
        return {}
    wire = Path(path).read_bytes().strip()
    return {"X-Archive-Assertion": base64.b64encode(wire).decode("ascii")}


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _parse_attrs(pairs: list[str]) -> dict:
    attributes: dict[str, list[str]] = {}
    for pair in pairs:
        if "=" not in pair:
            raise SystemExit(f"expected key=value, got {pair!r}")
        key, _, value = pair.partition("=")
        attributes.setdefault(key, []).append(value)
    return attributes


def _parse_fragment(spec: str | None) -> dict | None:
    """``time:12.0-15.5`` or ``char:3-9`` -> fragment locator dict."""
    if not spec:
        return None
    kind_text, _, span = spec.partition(":")
    start_text, _, end_text = span.partition("-")
    kind = {"time": "TIME", "char": "CHARSPAN"}.get(kind_text.lower())
    if kind is None or not end_text:
        raise SystemExit(f"bad fragment spec {spec!r} (want time:A-B or char:A-B)")
    return {"kind": kind, "start": float(start_text), "end": float(end_text)}


def _read_content(path: str) -> bytes:
    if path == "-":
        return sys.stdin.buffer.read()
    return Path(path).read_bytes()


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="archive", description="Federated language resource archive client."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def node_command(name: str, help_text: str):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--node", required=True, help="gateway base url")
        cmd.add_argument("--assertion", help="signed assertion file")
        return cmd

    serve = sub.add_parser("serve", help="run a node's HTTP gateway")
    serve.add_argument("--config", required=True, help="node config JSON")
    serve.add_argument("--host")
    serve.add_argument("--port", type=int)

    keygen = sub.add_parser("keygen", help="generate a node signing key")
    keygen.add_argument("-o", "--out", required=True, help="key file to write")

    issue = sub.add_parser(
        "issue-assertion", help="sign an attribute assertion for a user"
    )
    issue.add_argument("--key", required=True, help="issuer signing key file")
    issue.add_argument("--issuer", required=True, help="issuer node/institution id")
    issue.add_argument("--subject", required=True)
    issue.add_argument(
        "--attr", action="append", default=[], metavar="NAME=VALUE",
        help="attribute (repeatable)",
    )
    issue.add_argument("--ttl", type=int, default=3600, help="lifetime in seconds")
    issue.add_argument("-o", "--out", help="write wire bytes here (default stdout)")

    ingest = node_command("ingest", "archive new content")
    ingest.add_argument("--prefix", required=True)
    ingest.add_argument("--media-type", default="application/octet-stream")
    ingest.add_argument("file", help="content file, or - for stdin")

    get = node_command("get", "fetch archived bytes by URID")
    get.add_argument("urid")
    get.add_argument("-o", "--out", help="output file (default stdout)")

    resolve = node_command("resolve", "show the handle record behind a URID")
    resolve.add_argument("urid")

    search = node_command("search", "search the catalog by metadata predicates")
    search.add_argument("--expand", action="store_true",
                        help="match term-map equivalents too")
    search.add_argument("predicates", nargs="+", metavar="KEY=VALUE")

    harvest = node_command("harvest", "incrementally harvest catalog records")
    harvest.add_argument("--from", dest="from_ts", default="1970-01-01T00:00:00Z")
    harvest.add_argument("--set", dest="set_id", help="restrict to one subtree")

    deposit = node_command("deposit", "stage files and commit them atomically")
    deposit.add_argument("--title", required=True)
    deposit.add_argument("--language", action="append", required=True,
                         help="ISO 639-3 code (repeatable)")
    deposit.add_argument("--media-type", default="application/octet-stream")
    deposit.add_argument("--parent", help="catalog node to file the sessions under")
    deposit.add_argument("files", nargs="+")

    annotate = node_command("annotate", "attach a stand-off comment to a resource")
    annotate.add_argument("--target", required=True)
    annotate.add_argument("--body", required=True)
    annotate.add_argument("--fragment", help="time:A-B or char:A-B")

    export = node_command("export", "download a sub-archive bundle")
    export.add_argument("node_id", help="catalog subtree root")
    export.add_argument("-o", "--out", required=True, help="bundle zip path")

    imp = node_command("import", "install a bundle as replicas (admin)")
    imp.add_argument("bundle", help="bundle zip path")

    sync = node_command("sync", "trigger a mirror pull from a peer (admin)")
    sync.add_argument("--peer", required=True, help="owning node id")
    sync.add_argument("--prefix", required=True)
    sync.add_argument("--since", type=int, help="override the stored watermark")

    policy = sub.add_parser("policy", help="manage access policies")
    policy_sub = policy.add_subparsers(dest="policy_command", required=True)
    pset = policy_sub.add_parser("set", help="bind a policy to an object or node")
    pset.add_argument("--node", required=True)
    pset.add_argument("--assertion", required=True)
    pset.add_argument("--target", required=True)
    pset.add_argument("policy_file", help="policy JSON file")
    pdel = policy_sub.add_parser("delegate", help="delegate manage rights")
    pdel.add_argument("--node", required=True)
    pdel.add_argument("--assertion", required=True)
    pdel.add_argument("--scope", required=True)
    pdel.add_argument("--grantee", required=True)
    return parser


def _cmd_serve(args) -> int:
    from .config import NodeConfig, build_node
    from .gateway import GatewayServer

    config = NodeConfig.load(args.config)
    node = build_node(config)
    host = args.host or config.host
    port = args.port if args.port is not None else config.port
    server = GatewayServer(node, host=host, port=port)
    print(f"{node.node_id}: serving prefixes {node.resolver.owned_prefixes} "
          f"at {server.url}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


def _cmd_keygen(args) -> int:
    seed = os.urandom(32)
    key = generate_signing_key(seed)
    Path(args.out).write_text(seed.hex() + "\n", encoding="utf-8")
    public = base64.b64encode(public_key_bytes(key)).decode("ascii")
    print(f"wrote {args.out}")
    print(f"publicKey: {public}")
    return 0


def _cmd_issue(args) -> int:
    seed = bytes.fromhex(Path(args.key).read_text(encoding="utf-8").strip())
    assertion = issue_assertion(
        generate_signing_key(seed),
        args.issuer,
        args.subject,
        _parse_attrs(args.attr),
        args.ttl,
        now=SystemClock().now(),
    )
    wire = assertion.to_wire()
    if args.out:
        Path(args.out).write_bytes(wire + b"\n")
        print(f"wrote {args.out}")
    else:
        sys.stdout.buffer.write(wire + b"\n")
    return 0


def _request(method: str, url: str, **kwargs) -> requests.Response:
    response = requests.request(method, url, timeout=30, **kwargs)
    return raise_for_error(response)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ArchiveError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return 1
    except requests.RequestException as exc:
        print(f"error: cannot reach node: {exc}", file=sys.stderr)
        return 1


def _dispatch(args) -> int:
    if args.command == "serve":
        return _cmd_serve(args)
    if args.command == "keygen":
        return _cmd_keygen(args)
    if args.command == "issue-assertion":
        return _cmd_issue(args)

    if args.command == "policy":
        headers = _assertion_header(args.assertion)
        if args.policy_command == "set":
            policy = json.loads(Path(args.policy_file).read_text(encoding="utf-8"))
            response = _request(
                "POST", f"{args.node}/policy/set", headers=headers,
                json={"target": args.target, "policy": policy},
            )
        else:
            response = _request(
                "POST", f"{args.node}/policy/delegate", headers=headers,
                json={"scope": args.scope, "grantee": args.grantee},
            )
        _print_json(response.json())
        return 0

    headers = _assertion_header(getattr(args, "assertion", None))

    if args.command == "ingest":
        content = _read_content(args.file)
        response = _request(
            "POST", f"{args.node}/ingest", headers=headers,
            json={
                "contentBase64": base64.b64encode(content).decode("ascii"),
                "mediaType": args.media_type,
                "prefix": args.prefix,
            },
        )
        _print_json(response.json())
        return 0

    if args.command == "get":
        prefix, _, suffix = args.urid[len("urid:"):].partition("/")
        response = _request(
            "GET", f"{args.node}/object/{prefix}/{suffix}", headers=headers
        )
        if args.out:
            Path(args.out).write_bytes(response.content)
            print(f"wrote {args.out} ({len(response.content)} bytes)")
        else:
            sys.stdout.buffer.write(response.content)
        return 0

    if args.command == "resolve":
        prefix, _, suffix = args.urid[len("urid:"):].partition("/")
        response = _request(
            "GET", f"{args.node}/resolve/{prefix}/{suffix}", headers=headers
        )
        _print_json(response.json())
        return 0

    if args.command == "search":
        params = {}
        for pair in args.predicates:
            key, _, value = pair.partition("=")
            params[key] = value
        if args.expand:
            params["expand"] = "1"
        response = _request("GET", f"{args.node}/search", params=params)
        _print_json(response.json())
        return 0

    if args.command == "harvest":
        token = None
        total = 0
        while True:
            params = {"from": args.from_ts}
            if args.set_id:
                params["set"] = args.set_id
            if token:
                params["token"] = token
            payload = _request(
                "GET", f"{args.node}/harvest", params=params
            ).json()
            for record in payload["records"]:
                print(json.dumps(record, sort_keys=True))
                total += 1
            token = payload.get("nextToken")
            if not token:
                break
        print(f"# {total} record(s)", file=sys.stderr)
        return 0

    if args.command == "deposit":
        ws = _request(
            "POST", f"{args.node}/workspace", headers=headers, json={}
        ).json()
        metadata = {"title": args.title, "languages": args.language}
        for path in args.files:
            _request(
                "POST", f"{args.node}/workspace/{ws['wsId']}/stage",
                headers=headers,
                json={
                    "localName": Path(path).name,
                    "contentBase64": base64.b64encode(
                        _read_content(path)
                    ).decode("ascii"),
                    "mediaType": args.media_type,
                    "metadata": metadata,
                },
            )
        response = _request(
            "POST", f"{args.node}/workspace/{ws['wsId']}/commit",
            headers=headers, json={"parent": args.parent},
        )
        _print_json(response.json())
        return 0

    if args.command == "annotate":
        response = _request(
            "POST", f"{args.node}/annotate", headers=headers,
            json={
                "target": args.target,
                "body": args.body,
                "fragment": _parse_fragment(args.fragment),
            },
        )
        _print_json(response.json())
        return 0

    if args.command == "export":
        response = _request(
            "GET", f"{args.node}/export/{args.node_id}", headers=headers
        )
        Path(args.out).write_bytes(response.content)
        print(f"wrote {args.out} ({len(response.content)} bytes)")
        return 0

    if args.command == "import":
        response = _request(
            "POST", f"{args.node}/import", headers=headers,
            data=Path(args.bundle).read_bytes(),
        )
        _print_json(response.json())
        return 0

    if args.command == "sync":
        body = {"peer": args.peer, "prefix": args.prefix}
        if args.since is not None:
            body["sinceSeq"] = args.since
        response = _request(
            "POST", f"{args.node}/sync", headers=headers, json=body
        )
        _print_json(response.json())
        return 0

    raise SystemExit(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    raise SystemExit(main())
