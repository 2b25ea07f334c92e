"""The ``archive`` CLI as a thin client over a live gateway."""

import json
import zipfile

import pytest

from lrarchive import (
    AccessLevel,
    AccessPolicy,
    ArchiveNode,
    MetadataRecord,
    Rule,
)
from lrarchive.catalog import CORPUS, SESSION
from lrarchive.cli import main
from lrarchive.gateway import GatewayServer


@pytest.fixture
def served(clock, tmp_path):
    owner = ArchiveNode("mpi", ["mpi"], principals=["dep1"], clock=clock)
    server = GatewayServer(owner).start()
    yield owner, server, tmp_path
    server.stop()


def write_assertion(node, tmp_path, subject, attributes, name="user.assert"):
    assertion = node.issue_assertion(subject, attributes, ttl_seconds=3600)
    path = tmp_path / name
    path.write_bytes(assertion.to_wire())
    return str(path)


def test_keygen_and_issue_assertion(tmp_path, capsys):
    key_path = tmp_path / "node.key"
    assert main(["keygen", "-o", str(key_path)]) == 0
    out = capsys.readouterr().out
    assert "publicKey:" in out
    assert len(bytes.fromhex(key_path.read_text().strip())) == 32

    out_path = tmp_path / "a.assert"
    code = main([
        "issue-assertion", "--key", str(key_path), "--issuer", "mpi",
        "--subject", "dep1", "--attr", "org=mpi", "--attr", "role=researcher",
        "--ttl", "60", "-o", str(out_path),
    ])
    assert code == 0
    wire = json.loads(out_path.read_text())
    assert wire["subject"] == "dep1"
    assert wire["attributes"] == {"org": ["mpi"], "role": ["researcher"]}


def test_ingest_get_resolve_cycle(served, capsys):
    owner, server, tmp_path = served
    assertion = write_assertion(owner, tmp_path, "dep1", {"org": ["mpi"]})
    content = tmp_path / "story.txt"
    content.write_bytes(b"er was eens")

    code = main([
        "ingest", "--node", server.url, "--assertion", assertion,
        "--prefix", "mpi", "--media-type", "text/plain", str(content),
    ])
    assert code == 0
    urid = json.loads(capsys.readouterr().out)["urid"]

    owner.set_policy(
        urid,
        AccessPolicy(
            owner="dep1",
            rules=(Rule(predicates={"org": ["mpi"]}, grant=AccessLevel.READ),),
            default=AccessLevel.DISCOVER,
        ),
        actor="dep1",
    )
    out_file = tmp_path / "fetched.txt"
    code = main([
        "get", "--node", server.url, "--assertion", assertion,
        urid, "-o", str(out_file),
    ])
    assert code == 0
    assert out_file.read_bytes() == b"er was eens"
    capsys.readouterr()

    code = main(["resolve", "--node", server.url, urid])
    assert code == 0
    record = json.loads(capsys.readouterr().out)
    assert record["owner"] == "mpi"


def test_get_denied_without_rights(served, capsys):
    owner, server, tmp_path = served
    assertion = write_assertion(owner, tmp_path, "dep1", {})
    content = tmp_path / "c.bin"
    content.write_bytes(b"secret")
    main(["ingest", "--node", server.url, "--assertion", assertion,
          "--prefix", "mpi", str(content)])
    urid = json.loads(capsys.readouterr().out)["urid"]
    code = main(["get", "--node", server.url, urid])
    assert code == 1
    assert "NotAuthorized" in capsys.readouterr().err


def test_search_and_harvest(served, capsys):
    owner, server, tmp_path = served
    owner.create_node(
        None, SESSION, MetadataRecord(title="frogs", languages=["nld"])
    )
    code = main(["search", "--node", server.url, "language=nld"])
    assert code == 0
    results = json.loads(capsys.readouterr().out)["results"]
    assert len(results) == 1

    code = main(["harvest", "--node", server.url, "--from", "1970-01-01T00:00:00Z"])
    assert code == 0
    captured = capsys.readouterr()
    lines = [json.loads(l) for l in captured.out.strip().splitlines()]
    assert len(lines) == 1
    assert lines[0]["record"]["title"] == "frogs"


def test_deposit_and_annotate(served, capsys):
    owner, server, tmp_path = served
    assertion = write_assertion(owner, tmp_path, "dep1", {"org": ["mpi"]})
    first = tmp_path / "take1.wav"
    first.write_bytes(b"audio one")
    second = tmp_path / "take2.wav"
    second.write_bytes(b"audio two")

    code = main([
        "deposit", "--node", server.url, "--assertion", assertion,
        "--title", "elicitation", "--language", "nld",
        str(first), str(second),
    ])
    assert code == 0
    urids = json.loads(capsys.readouterr().out)["urids"]
    assert len(urids) == 2

    owner.set_policy(
        urids[0],
        AccessPolicy(
            owner="dep1",
            rules=(Rule(predicates={"org": ["mpi"]}, grant=AccessLevel.ANNOTATE),),
            default=AccessLevel.DISCOVER,
        ),
        actor="dep1",
    )
    code = main([
        "annotate", "--node", server.url, "--assertion", assertion,
        "--target", urids[0], "--body", "false start",
        "--fragment", "time:0.0-1.5",
    ])
    assert code == 0
    enrichment = json.loads(capsys.readouterr().out)
    assert enrichment["kind"] == "COMMENT"
    assert enrichment["fragment"] == {"kind": "TIME", "start": 0.0, "end": 1.5}


def test_policy_set_and_delegate_via_cli(served, capsys):
    owner, server, tmp_path = served
    dep = write_assertion(owner, tmp_path, "dep1", {}, name="dep1.assert")
    content = tmp_path / "c.txt"
    content.write_bytes(b"policed")
    main(["ingest", "--node", server.url, "--assertion", dep,
          "--prefix", "mpi", str(content)])
    urid = json.loads(capsys.readouterr().out)["urid"]

    policy_file = tmp_path / "policy.json"
    policy_file.write_text(json.dumps({
        "owner": "dep1",
        "rules": [{"predicates": {"org": ["mpi"]}, "grant": "read"}],
        "default": "discover",
    }))
    code = main([
        "policy", "set", "--node", server.url, "--assertion", dep,
        "--target", urid, str(policy_file),
    ])
    assert code == 0
    assert owner.resolve(urid).policy is not None
    capsys.readouterr()

    code = main([
        "policy", "delegate", "--node", server.url, "--assertion", dep,
        "--scope", urid, "--grantee", "dep2",
    ])
    assert code == 0
    delegation = json.loads(capsys.readouterr().out)
    assert delegation["grantee"] == "dep2"


def test_export_import_sync_via_cli(served, capsys, clock):
    owner, server, tmp_path = served
    root = owner.create_node(None, CORPUS, MetadataRecord(title="corpus"))
    session = owner.create_node(
        root.node_id, SESSION, MetadataRecord(title="s", languages=["nld"])
    )
    obj = owner.ingest(b"cli bundle", "text/plain", "dep1", "mpi")
    owner.link_object(session.node_id, obj.urid)
    owner.set_policy(
        root.node_id,
        AccessPolicy(
            owner="admin",
            rules=(Rule(predicates={"org": ["mpi"]}, grant=AccessLevel.READ),),
            default=AccessLevel.DISCOVER,
        ),
        actor="admin",
    )
    reader = write_assertion(owner, tmp_path, "reader", {"org": ["mpi"]})
    bundle_path = tmp_path / "corpus.zip"
    code = main([
        "export", "--node", server.url, "--assertion", reader,
        root.node_id, "-o", str(bundle_path),
    ])
    assert code == 0
    assert zipfile.is_zipfile(bundle_path)

    peer = ArchiveNode("lund", ["lund"], clock=clock)
    peer.enroll(owner.identity(), actor="admin")
    owner.enroll(peer.identity(), actor="admin")
    peer_server = GatewayServer(peer).start()
    try:
        admin = write_assertion(peer, tmp_path, "admin", {}, name="admin.assert")
        capsys.readouterr()
        code = main([
            "import", "--node", peer_server.url, "--assertion", admin,
            str(bundle_path),
        ])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["imported"] == 1
        assert peer.read(obj.urid) == b"cli bundle"

        # Mirror the handle records too, via the sync trigger. The bundle
        # already installed the current records, so only fresh owner
        # mutations arrive.
        peer.trust._members["mpi"] = owner.identity().__class__(
            node_id="mpi",
            public_key=owner.identity().public_key,
            owned_prefixes=("mpi",),
            url=server.url,
        )
        owner.ingest(b"post-bundle addition", "text/plain", "dep1", "mpi")
        code = main([
            "sync", "--node", peer_server.url, "--assertion", admin,
            "--peer", "mpi", "--prefix", "mpi",
        ])
        assert code == 0
        applied = json.loads(capsys.readouterr().out)
        assert applied["applied"] >= 1
    finally:
        peer_server.stop()
