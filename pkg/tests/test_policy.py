"""Access levels, rule evaluation, delegation, hierarchy and mirrors."""

import random

import pytest

from lrarchive import AccessLevel, AccessPolicy, MetadataRecord, Rule
from lrarchive.catalog import CORPUS, SESSION
from lrarchive.errors import NotAuthorized, NotFound, TargetNotFound
from lrarchive.policy import DENY, PERMIT
from lrarchive.util import canonical_json


def read_policy(owner="dep1", org="mpi"):
    return AccessPolicy(
        owner=owner,
        rules=(
            Rule(
                predicates={"role": ["researcher"], "org": [org]},
                grant=AccessLevel.READ,
            ),
        ),
        default=AccessLevel.DISCOVER,
    )


def test_level_ladder_totally_ordered():
    ladder = [
        AccessLevel.NONE,
        AccessLevel.DISCOVER,
        AccessLevel.READ,
        AccessLevel.ANNOTATE,
        AccessLevel.VERSION,
        AccessLevel.MANAGE,
    ]
    assert ladder == sorted(ladder)
    assert AccessLevel.parse("read") is AccessLevel.READ
    assert AccessLevel.parse(AccessLevel.MANAGE) is AccessLevel.MANAGE


def test_anonymous_default_denies_read(node):
    obj = node.ingest(b"abc", "text/plain", "dep1", "mpi")
    decision = node.decide({}, obj.urid, AccessLevel.READ)
    assert decision.effect == DENY
    assert decision.granted_level == AccessLevel.DISCOVER
    assert decision.reason == "no-policy"
    # ...but discover itself is openly granted.
    assert node.decide({}, obj.urid, AccessLevel.DISCOVER).effect == PERMIT


def test_rule_match_grants_level(node):
    obj = node.ingest(b"abc", "text/plain", "dep1", "mpi")
    node.set_policy(obj.urid.text, read_policy(), actor="dep1")
    attrs = {"role": ["researcher"], "org": ["mpi"]}
    decision = node.decide(attrs, obj.urid, AccessLevel.READ)
    assert decision.effect == PERMIT
    assert decision.reason == "0"
    # Missing one predicate key falls through to the policy default.
    partial = node.decide({"role": ["researcher"]}, obj.urid, AccessLevel.READ)
    assert partial.effect == DENY
    assert partial.reason == "default"


def test_first_match_wins_over_later_rules(node):
    obj = node.ingest(b"abc", "text/plain", "dep1", "mpi")
    policy = AccessPolicy(
        owner="dep1",
        rules=(
            Rule(predicates={"org": ["mpi"]}, grant=AccessLevel.DISCOVER),
            Rule(predicates={"org": ["mpi"]}, grant=AccessLevel.MANAGE),
        ),
        default=AccessLevel.NONE,
    )
    node.set_policy(obj.urid.text, policy, actor="dep1")
    decision = node.decide({"org": ["mpi"]}, obj.urid, AccessLevel.READ)
    assert decision.effect == DENY  # first rule granted only discover
    assert decision.reason == "0"


def test_set_policy_bumps_record_seq(node):
    obj = node.ingest(b"abc", "text/plain", "dep1", "mpi")
    before = node.resolve(obj.urid).record_seq
    node.set_policy(obj.urid.text, read_policy(), actor="dep1")
    record = node.resolve(obj.urid)
    assert record.record_seq > before
    assert record.policy is not None


def test_set_policy_requires_authority(node):
    obj = node.ingest(b"abc", "text/plain", "dep1", "mpi")
    with pytest.raises(NotAuthorized):
        node.set_policy(obj.urid.text, read_policy(), actor="stranger")
    with pytest.raises(TargetNotFound):
        node.set_policy("urid:mpi/00000000000000ff", read_policy(), actor="dep1")


def test_manage_delegate_can_set_policy(node):
    obj = node.ingest(b"abc", "text/plain", "dep1", "mpi")
    node.delegate(obj.urid.text, "dep2", actor="dep1")
    node.set_policy(obj.urid.text, read_policy(owner="dep2"), actor="dep2")


def test_delegation_subtree_covers_descendants(node):
    root = node.create_node(None, CORPUS, MetadataRecord(title="corpus"))
    child = node.create_node(
        root.node_id, SESSION, MetadataRecord(title="s", languages=["nld"])
    )
    obj = node.ingest(b"abc", "text/plain", "dep1", "mpi")
    node.link_object(child.node_id, obj.urid)

    node.delegate(root.node_id, "dep2", actor="admin")
    # dep2 now manages the subtree: descendant node and linked object.
    node.set_policy(child.node_id, read_policy(owner="dep2"), actor="dep2")
    node.set_policy(obj.urid.text, read_policy(owner="dep2"), actor="dep2")


def test_non_manager_cannot_delegate(node):
    obj = node.ingest(b"abc", "text/plain", "dep1", "mpi")
    with pytest.raises(NotAuthorized):
        node.delegate(obj.urid.text, "dep2", actor="stranger")


def test_revoked_delegation_stops_working(node):
    obj = node.ingest(b"abc", "text/plain", "dep1", "mpi")
    delegation = node.delegate(obj.urid.text, "dep2", actor="dep1")
    node.policy.revoke(delegation)
    with pytest.raises(NotAuthorized):
        node.set_policy(obj.urid.text, read_policy(), actor="dep2")


def test_effective_policy_own_beats_ancestors(node):
    root = node.create_node(None, CORPUS, MetadataRecord(title="corpus"))
    child = node.create_node(
        root.node_id, SESSION, MetadataRecord(title="s", languages=["nld"])
    )
    obj = node.ingest(b"abc", "text/plain", "dep1", "mpi")
    node.link_object(child.node_id, obj.urid)

    corpus_policy = AccessPolicy(
        owner="admin",
        rules=(Rule(predicates={"org": ["mpi"]}, grant=AccessLevel.READ),),
        default=AccessLevel.DISCOVER,
    )
    node.set_policy(root.node_id, corpus_policy, actor="admin")
    assert node.policy.effective_policy(obj.urid.text) == corpus_policy

    own = read_policy()
    node.set_policy(obj.urid.text, own, actor="dep1")
    assert node.policy.effective_policy(obj.urid.text) == own


def test_effective_policy_default_when_nothing_set(node):
    obj = node.ingest(b"abc", "text/plain", "dep1", "mpi")
    policy = node.policy.effective_policy(obj.urid.text)
    assert policy.default == AccessLevel.DISCOVER
    assert policy.rules == ()
    with pytest.raises(NotFound):
        node.policy.effective_policy("urid:mpi/00000000000000ff")


def test_owner_supremacy_depositor_always_manages(node):
    for index in range(5):
        obj = node.ingest(f"obj {index}".encode(), "text/plain", "dep2", "mpi")
        assert node.policy.holds_manage("dep2", obj.urid.text)
        node.set_policy(obj.urid.text, read_policy(owner="dep2"), actor="dep2")


def test_mirror_decision_equals_owner_decision(pair):
    owner, mirror = pair
    obj = owner.ingest(b"shared", "text/plain", "dep1", "mpi")
    owner.set_policy(obj.urid.text, read_policy(), actor="dep1")
    mirror.mirror_sync(owner, "mpi")

    for attrs in (
        {},
        {"role": ["researcher"], "org": ["mpi"]},
        {"role": ["student"], "org": ["mpi"]},
        {"role": ["researcher"], "org": ["lund"]},
    ):
        for level in (AccessLevel.DISCOVER, AccessLevel.READ, AccessLevel.MANAGE):
            at_owner = owner.decide(attrs, obj.urid, level)
            at_mirror = mirror.decide(attrs, obj.urid, level)
            assert at_owner == at_mirror


def test_mirror_policy_bytes_equal_owner(pair):
    owner, mirror = pair
    obj = owner.ingest(b"shared", "text/plain", "dep1", "mpi")
    owner.set_policy(obj.urid.text, read_policy(), actor="dep1")
    mirror.mirror_sync(owner, "mpi")
    owner_record = owner.resolve(obj.urid)
    mirror_record = mirror.resolve(obj.urid)
    assert mirror_record.record_seq == owner_record.record_seq
    assert canonical_json(mirror_record.policy) == canonical_json(owner_record.policy)


def test_inherited_policy_rides_to_mirror(pair):
    """Corpus-level policy materializes into records, so mirrors agree."""
    owner, mirror = pair
    root = owner.create_node(None, CORPUS, MetadataRecord(title="c"))
    obj = owner.ingest(b"inherit me", "text/plain", "dep1", "mpi")
    owner.link_object(root.node_id, obj.urid)
    corpus_policy = AccessPolicy(
        owner="admin",
        rules=(Rule(predicates={"community": ["nl"]}, grant=AccessLevel.READ),),
        default=AccessLevel.NONE,
    )
    owner.set_policy(root.node_id, corpus_policy, actor="admin")
    mirror.mirror_sync(owner, "mpi")
    for attrs in ({}, {"community": ["nl"]}, {"community": ["de"]}):
        for level in (AccessLevel.DISCOVER, AccessLevel.READ):
            assert owner.decide(attrs, obj.urid, level) == mirror.decide(
                attrs, obj.urid, level
            )


def brute_force_decide(policy: AccessPolicy, attributes: dict, requested: AccessLevel):
    """Independent oracle: linear scan, no shared code with the engine."""
    granted = None
    for rule in policy.rules:
        hit = True
        for key, accepted in rule.predicates.items():
            values = attributes.get(key, [])
            if not any(v in accepted for v in values):
                hit = False
                break
        if hit:
            granted = rule.grant
            break
    if granted is None:
        granted = policy.default
    return "PERMIT" if granted >= requested else "DENY", granted


def random_policy(rng: random.Random) -> AccessPolicy:
    levels = list(AccessLevel)
    names = ["org", "role", "project", "community"]
    values = ["a", "b", "c"]
    rules = []
    for _ in range(rng.randrange(4)):
        predicates = {
            name: rng.sample(values, rng.randint(1, 2))
            for name in rng.sample(names, rng.randint(1, 2))
        }
        rules.append(Rule(predicates=predicates, grant=rng.choice(levels)))
    return AccessPolicy(
        owner="dep1", rules=tuple(rules), default=rng.choice(levels)
    )


def random_attributes(rng: random.Random) -> dict:
    names = ["org", "role", "project", "community"]
    values = ["a", "b", "c", "d"]
    return {
        name: rng.sample(values, rng.randint(1, 2))
        for name in rng.sample(names, rng.randrange(len(names) + 1))
    }


def test_decide_matches_brute_force_oracle(node):
    rng = random.Random(31)
    obj = node.ingest(b"target", "text/plain", "dep1", "mpi")
    for _ in range(500):
        policy = random_policy(rng)
        node.set_policy(obj.urid.text, policy, actor="dep1")
        attrs = random_attributes(rng)
        requested = rng.choice(list(AccessLevel))
        decision = node.decide(attrs, obj.urid, requested)
        effect, granted = brute_force_decide(policy, attrs, requested)
        assert (decision.effect, decision.granted_level) == (effect, granted)


def test_permit_is_monotonic_down_the_ladder(node):
    rng = random.Random(99)
    obj = node.ingest(b"target", "text/plain", "dep1", "mpi")
    for _ in range(200):
        node.set_policy(obj.urid.text, random_policy(rng), actor="dep1")
        attrs = random_attributes(rng)
        granted_at = [
            level
            for level in AccessLevel
            if node.decide(attrs, obj.urid, level).effect == PERMIT
        ]
        if granted_at:
            top = max(granted_at)
            assert granted_at == [lvl for lvl in AccessLevel if lvl <= top]
