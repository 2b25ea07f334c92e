"""Depositor-controlled, attribute-based access decisions with delegation.

Access levels form a ladder (none < discover < read < annotate <
version < manage); granting a level grants everything below it. A
policy is an ordered rule list evaluated first-match, falling back to
the policy default, falling back to the archive default when nothing
applies at all. The archive default deliberately permits discover and
nothing more: metadata stays openly harvestable while content stays
protected until its depositor says otherwise.

Policies bind to URIDs or to catalog nodes. A URID's effective policy
is its own if set, otherwise the nearest policied ancestor of the
first catalog node that linked it, otherwise the archive default. The
effective policy is also materialized into the handle record, so a
mirror holding the record decides exactly as the owner would.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Mapping, Sequence

from .errors import NotAuthorized, NotFound, TargetNotFound
from .resolver import URID


class AccessLevel(IntEnum):
    NONE = 0
    DISCOVER = 1
    READ = 2
    ANNOTATE = 3
    VERSION = 4
    MANAGE = 5

    @property
    def text(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, value: "AccessLevel | str") -> "AccessLevel":
        if isinstance(value, AccessLevel):
            return value
        try:
            return cls[value.upper()]
        except KeyError:
            raise ValueError(f"unknown access level: {value!r}") from None


PERMIT = "PERMIT"
DENY = "DENY"


@dataclass(frozen=True)
class Rule:
    """Grant a level to principals whose attributes satisfy every predicate.

    A predicate maps a canonical attribute name to the set of accepted
    values; the rule matches when each named attribute is present with
    at least one accepted value.
    """

    predicates: dict
    grant: AccessLevel

    def matches(self, attributes: Mapping[str, Sequence[str]]) -> bool:
        for name, accepted in self.predicates.items():
            held = attributes.get(name)
            if not held:
                return False
            if not set(held) & set(accepted):
                return False
        return True

    def to_dict(self) -> dict:
        return {
            "predicates": {k: sorted(v) for k, v in sorted(self.predicates.items())},
            "grant": self.grant.text,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Rule":
        return cls(
            predicates={k: list(v) for k, v in data["predicates"].items()},
            grant=AccessLevel.parse(data["grant"]),
        )


@dataclass(frozen=True)
class AccessPolicy:
    owner: str
    rules: tuple = ()
    default: AccessLevel = AccessLevel.NONE

    def evaluate(self, attributes: Mapping[str, Sequence[str]]) -> tuple[AccessLevel, str]:
        """First matching rule wins; the reason names the rule index."""
        for index, rule in enumerate(self.rules):
            if rule.matches(attributes):
                return rule.grant, str(index)
        return self.default, "default"

    def to_dict(self) -> dict:
        return {
            "owner": self.owner,
            "rules": [r.to_dict() for r in self.rules],
            "default": self.default.text,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AccessPolicy":
        return cls(
            owner=data.get("owner", ""),
            rules=tuple(Rule.from_dict(r) for r in data.get("rules", [])),
            default=AccessLevel.parse(data.get("default", "none")),
        )


ARCHIVE_DEFAULT = AccessPolicy(owner="", rules=(), default=AccessLevel.DISCOVER)


@dataclass
class Delegation:
    grantor: str
    grantee: str
    scope: str  # URID text or catalog node id
    revoked: bool = False

    def to_dict(self) -> dict:
        return {
            "grantor": self.grantor,
            "grantee": self.grantee,
            "scope": self.scope,
            "revoked": self.revoked,
        }


@dataclass(frozen=True)
class Decision:
    effect: str  # PERMIT | DENY
    granted_level: AccessLevel
    reason: str

    def to_dict(self) -> dict:
        return {
            "effect": self.effect,
            "grantedLevel": self.granted_level.text,
            "reason": self.reason,
        }


def _looks_like_urid(target: str) -> bool:
    return target.startswith("urid:")


class PolicyEngine:
    """Policy storage, hierarchy resolution and decision making for one node."""

    def __init__(self, node_id: str, resolver, catalog, store, admin: str):
        self.node_id = node_id
        self.resolver = resolver
        self.catalog = catalog
        self.store = store
        self.admin = admin
        self._object_policies: dict[str, AccessPolicy] = {}
        self._node_policies: dict[str, AccessPolicy] = {}
        self._delegations: list[Delegation] = []

    # -- authority checks --------------------------------------------------------

    def _target_exists(self, target: str) -> bool:
        if _looks_like_urid(target):
            return self.resolver.has(target)
        return self.catalog.has(target)

    def _delegation_covers(self, scope: str, target: str) -> bool:
        if scope == target:
            return True
        if _looks_like_urid(scope):
            return False
        # A catalog-node scope covers its descendant nodes and every
        # object whose first-linking node sits inside the subtree.
        if _looks_like_urid(target):
            anchor = self.catalog.first_link(target)
            if anchor is None:
                return False
            return scope in self.catalog.ancestors(anchor)
        if not self.catalog.has(target):
            return False
        return scope in self.catalog.ancestors(target)

    def holds_manage(self, actor: str, target: str) -> bool:
        """Depositors manage their own deposits; the node admin manages
        catalog structure; everyone else needs an unrevoked delegation."""
        if actor == self.admin:
            return True
        if _looks_like_urid(target) and self.store.has_object(target):
            if self.store.get_object(target).depositor_id == actor:
                return True
        for delegation in self._delegations:
            if delegation.revoked or delegation.grantee != actor:
                continue
            if self._delegation_covers(delegation.scope, target):
                return True
        return False

    # -- policy mutation ------------------------------------------------------------

    def set_policy(self, target: str, policy: AccessPolicy, actor: str) -> AccessPolicy:
        """Bind a policy to an object or catalog node.

        For objects the policy payload is written into the owning handle
        record, so mirrors carry it; for catalog nodes the payload of
        every owned object inheriting from the subtree is refreshed.
        """
        if not self._target_exists(target):
            raise TargetNotFound(target)
        if not self.holds_manage(actor, target):
            raise NotAuthorized(f"{actor!r} may not set policy on {target}")
        if _looks_like_urid(target):
            if not self.resolver.owns(URID.parse(target).prefix):
                raise NotAuthorized(
                    f"{target} is mirrored here; policies are set at the owner"
                )
            self._object_policies[target] = policy
            self.refresh_record_policy(target)
        else:
            self._node_policies[target] = policy
            self.refresh_all_record_policies()
        return policy

    def delegate(self, scope: str, grantee: str, actor: str) -> Delegation:
        if not self._target_exists(scope):
            raise TargetNotFound(scope)
        if not self.holds_manage(actor, scope):
            raise NotAuthorized(f"{actor!r} does not hold manage over {scope}")
        delegation = Delegation(grantor=actor, grantee=grantee, scope=scope)
        self._delegations.append(delegation)
        return delegation

    def revoke(self, delegation: Delegation) -> Delegation:
        delegation.revoked = True
        return delegation

    # -- hierarchy resolution ----------------------------------------------------------

    def node_effective_policy(self, node_id: str) -> AccessPolicy:
        for ancestor in self.catalog.ancestors(node_id):
            policy = self._node_policies.get(ancestor)
            if policy is not None:
                return policy
        return ARCHIVE_DEFAULT

    def effective_policy(self, urid: str) -> AccessPolicy:
        """The policy governing one object, walking own -> ancestors -> default."""
        if not self.resolver.has(urid):
            raise NotFound(urid)
        if self.resolver.owns(URID.parse(urid).prefix):
            own = self._object_policies.get(urid)
            if own is not None:
                return own
            anchor = self.catalog.first_link(urid)
            if anchor is not None:
                return self.node_effective_policy(anchor)
            return ARCHIVE_DEFAULT
        # Mirrored foreign object: the owner's policy rides in the record.
        record = self.resolver.resolve(urid)
        if record.policy is not None:
            return AccessPolicy.from_dict(record.policy)
        return ARCHIVE_DEFAULT

    def _effective_payload(self, urid: str) -> dict | None:
        """What the handle record should carry: the materialized effective
        policy, or nothing when only the archive default applies."""
        policy = self.effective_policy(urid)
        return None if policy is ARCHIVE_DEFAULT else policy.to_dict()

    def refresh_record_policy(self, urid: str) -> None:
        if self.resolver.owns(URID.parse(urid).prefix) and not self.resolver.is_replica(urid):
            self.resolver.set_record_policy(urid, self._effective_payload(urid))

    def refresh_all_record_policies(self) -> None:
        for record in self.resolver.owned_records():
            self.refresh_record_policy(record.urid.text)

    # -- decisions ------------------------------------------------------------------------

    def decide(
        self,
        attributes: Mapping[str, Sequence[str]],
        urid: str,
        requested: AccessLevel | str,
    ) -> Decision:
        """Evaluate the effective policy against canonical attributes."""
        wanted = AccessLevel.parse(requested)
        policy = self.effective_policy(urid)
        if policy is ARCHIVE_DEFAULT:
            granted, reason = policy.default, "no-policy"
        else:
            granted, reason = policy.evaluate(attributes)
        effect = PERMIT if granted >= wanted else DENY
        return Decision(effect=effect, granted_level=granted, reason=reason)

    def decide_node(
        self,
        attributes: Mapping[str, Sequence[str]],
        node_id: str,
        requested: AccessLevel | str,
    ) -> Decision:
        wanted = AccessLevel.parse(requested)
        policy = self.node_effective_policy(node_id)
        if policy is ARCHIVE_DEFAULT:
            granted, reason = policy.default, "no-policy"
        else:
            granted, reason = policy.evaluate(attributes)
        effect = PERMIT if granted >= wanted else DENY
        return Decision(effect=effect, granted_level=granted, reason=reason)

    # -- introspection ------------------------------------------------------------------------

    def delegations(self) -> list[Delegation]:
        return list(self._delegations)

    def snapshot(self) -> dict:
        return {
            "objectPolicies": {
                k: self._object_policies[k].to_dict()
                for k in sorted(self._object_policies)
            },
            "nodePolicies": {
                k: self._node_policies[k].to_dict()
                for k in sorted(self._node_policies)
            },
            "delegations": [d.to_dict() for d in self._delegations],
        }
