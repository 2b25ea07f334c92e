"""URID allocation, handle records, and watermark mirror sync."""

import pytest

from lrarchive import URID, HandleRecord, InstanceLocation
from lrarchive.errors import (
    AlreadyRegistered,
    HashMismatch,
    NotFound,
    NotOwner,
    UnknownPrefix,
    UntrustedPeer,
)
from lrarchive.util import canonical_json


def test_urid_text_form_and_parse():
    urid = URID("mpi", "00000000000000ff")
    assert urid.text == "urid:mpi/00000000000000ff"
    assert URID.parse(urid.text) == urid
    with pytest.raises(ValueError):
        URID("MPI", "00000000000000ff")  # uppercase prefix
    with pytest.raises(ValueError):
        URID("mpi", "ff")  # short suffix


def test_allocate_monotonic_suffixes(node):
    first = node.resolver.allocate("mpi")
    second = node.resolver.allocate("mpi")
    assert first.suffix == "0000000000000001"
    assert second.suffix == "0000000000000002"


def test_allocate_unknown_prefix(node):
    with pytest.raises(UnknownPrefix):
        node.resolver.allocate("nonesuch")


def test_allocate_mirrored_prefix_is_not_owner(pair):
    owner, mirror = pair
    # lund knows about mpi through the trust list but does not own it.
    with pytest.raises(NotOwner):
        mirror.resolver.allocate("mpi")


def test_register_fresh_prefix_starts_at_seq_one(node):
    urid = node.resolver.allocate("mpi")
    record = node.resolver.register(
        HandleRecord(
            urid=urid,
            owner="mpi",
            instances=[InstanceLocation("mpi", "store/x", "00" * 32, True)],
        )
    )
    assert record.record_seq == 1
    with pytest.raises(AlreadyRegistered):
        node.resolver.register(record)


def test_register_foreign_prefix_rejected(pair):
    owner, mirror = pair
    urid = owner.resolver.allocate("mpi")
    record = HandleRecord(
        urid=urid,
        owner="mpi",
        instances=[InstanceLocation("mpi", "store/x", "00" * 32, True)],
    )
    with pytest.raises(NotOwner):
        mirror.resolver.register(record)


def test_resolve_owned_mirrored_unknown(pair):
    owner, mirror = pair
    obj = owner.ingest(b"content", "text/plain", "dep1", "mpi")
    record = owner.resolve(obj.urid)
    assert len(record.instances) >= 1
    assert not owner.resolver.is_replica(obj.urid)

    mirror.mirror_sync(owner, "mpi")
    replica = mirror.resolve(obj.urid)
    assert mirror.resolver.is_replica(obj.urid)
    assert replica.owner == "mpi"

    with pytest.raises(NotFound):
        owner.resolve("urid:mpi/00000000000000ee")


def test_add_instance_bumps_seq_and_is_idempotent(pair):
    owner, mirror = pair
    obj = owner.ingest(b"content", "text/plain", "dep1", "mpi")
    before = owner.resolve(obj.urid).record_seq
    location = InstanceLocation("lund", "store/y", obj.content_hash, False)
    record = owner.resolver.add_instance(obj.urid, location)
    assert len(record.instances) == 2
    assert record.record_seq > before

    again = owner.resolver.add_instance(obj.urid, location)
    assert len(again.instances) == 2
    assert again.record_seq == record.record_seq  # no-op, no bump

    with pytest.raises(HashMismatch):
        owner.resolver.add_instance(
            obj.urid, InstanceLocation("soas", "store/z", "11" * 32, False)
        )


def test_mirror_cannot_add_instance(pair):
    owner, mirror = pair
    obj = owner.ingest(b"content", "text/plain", "dep1", "mpi")
    mirror.mirror_sync(owner, "mpi")
    with pytest.raises(NotOwner):
        mirror.resolver.add_instance(
            obj.urid, InstanceLocation("lund", "store/y", obj.content_hash, False)
        )


def test_mirror_sync_full_incremental_idempotent(pair):
    owner, mirror = pair
    for index in range(5):
        owner.ingest(f"content {index}".encode(), "text/plain", "dep1", "mpi")

    applied = mirror.mirror_sync(owner, "mpi", since_seq=0)
    assert applied == 5
    assert mirror.mirror_sync(owner, "mpi") == 0  # idempotent

    # One more owner mutation; the mirror applies exactly that one.
    # Oracle: a full copy of the owner's state says only one record moved.
    before = {r.urid.text: r.to_dict() for r in owner.resolver.owned_records()}
    owner.ingest(b"the sixth", "text/plain", "dep1", "mpi")
    after = {r.urid.text: r.to_dict() for r in owner.resolver.owned_records()}
    changed = [k for k in after if before.get(k) != after[k]]
    assert len(changed) == 1
    assert mirror.mirror_sync(owner, "mpi") == 1


def test_mirror_sync_untrusted_peer(clock):
    from lrarchive import ArchiveNode

    owner = ArchiveNode("mpi", ["mpi"], clock=clock)
    stranger = ArchiveNode("rogue", ["rogue"], clock=clock)
    with pytest.raises(UntrustedPeer):
        stranger.mirror_sync(owner, "mpi")


def test_mirror_sync_unknown_prefix(pair):
    owner, mirror = pair
    with pytest.raises(UnknownPrefix):
        mirror.mirror_sync(owner, "nonesuch")
    # Known prefix, wrong peer: lund does not own mpi's prefix.
    with pytest.raises(UnknownPrefix):
        owner.mirror_sync(mirror, "mpi")


def test_serving_records_requires_trust(pair):
    owner, _ = pair
    owner.ingest(b"content", "text/plain", "dep1", "mpi")
    with pytest.raises(UntrustedPeer):
        owner.pull_records("mpi", 0, requester="rogue")


def test_convergence_replicas_byte_equal_owner(pair):
    owner, mirror = pair
    objects = [
        owner.ingest(f"item {i}".encode(), "text/plain", "dep1", "mpi")
        for i in range(4)
    ]
    owner.commit_version(objects[0].urid, b"item 0 v2", "text/plain", "dep1")
    mirror.mirror_sync(owner, "mpi")

    owned = [r.to_dict() for r in owner.resolver.owned_records()]
    replicas = [r.to_dict() for r in mirror.resolver.replica_records("mpi")]
    assert canonical_json(owned) == canonical_json(replicas)
    assert owner.resolver.prefix_digest("mpi") == mirror.resolver.prefix_digest("mpi")


def test_replica_matches_some_owner_history(pair):
    """Replay the owner's mutation log; every replica state must appear."""
    owner, mirror = pair
    history: dict[str, list[dict]] = {}
    for index in range(6):
        obj = owner.ingest(f"item {index}".encode(), "text/plain", "dep1", "mpi")
        for record in owner.resolver.owned_records():
            history.setdefault(record.urid.text, [])
            snapshot = record.to_dict()
            if not history[record.urid.text] or history[record.urid.text][-1] != snapshot:
                history[record.urid.text].append(snapshot)
        if index == 3:
            mirror.mirror_sync(owner, "mpi")
    for replica in mirror.resolver.replica_records("mpi"):
        assert replica.to_dict() in history[replica.urid.text]


def test_resolution_stability(pair):
    owner, mirror = pair
    obj = owner.ingest(b"stable", "text/plain", "dep1", "mpi")
    mirror.mirror_sync(owner, "mpi")
    for archive in (owner, mirror):
        assert archive.resolve(obj.urid).urid == obj.urid
    owner.commit_version(obj.urid, b"stable v2", "text/plain", "dep1")
    owner.ingest(b"unrelated", "text/plain", "dep1", "mpi")
    mirror.mirror_sync(owner, "mpi")
    for archive in (owner, mirror):
        assert archive.resolve(obj.urid).urid == obj.urid


def test_suffixes_never_reissued_even_after_rollback(node):
    first = node.resolver.allocate("mpi")
    node.resolver.discard_record(first)  # rollback path
    second = node.resolver.allocate("mpi")
    assert second.suffix != first.suffix


def test_record_serialization_round_trip(node):
    obj = node.ingest(b"content", "text/plain", "dep1", "mpi")
    record = node.resolve(obj.urid)
    clone = HandleRecord.from_dict(record.to_dict())
    assert clone.to_dict() == record.to_dict()
    raw = record.canonical_bytes().decode("utf-8")
    assert raw.startswith('{"instances":')  # key-sorted, compact
