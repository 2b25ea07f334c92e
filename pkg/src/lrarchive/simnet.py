"""Deterministic in-process multi-node harness.

Several archive nodes are wired through scripted scenarios with a
seeded scheduler: no wall clock, no real network, no OS randomness.
Identical configurations therefore produce byte-identical traces,
which is what makes federation protocols testable under partitions,
crashes and corruption.

Faults are step-windowed. A PARTITION isolates its participants from
all other nodes for the window; a CRASH takes its participants down
entirely; a CORRUPT fault flips one byte of stored content at its first
participant (single participant) or corrupts transfers between its two
participants while the window is open.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from typing import Callable

from .errors import ArchiveError, PeerUnreachable, UnknownScenario
from .federation import AttributeFilter, generate_signing_key, issue_assertion
from .node import ArchiveNode
from .policy import AccessLevel, AccessPolicy, Rule
from .store import ArchivalObject, FixityReport
from .util import LogicalClock, canonical_json, sha256_hex

PARTITION = "PARTITION"
CRASH = "CRASH"
CORRUPT = "CORRUPT"


@dataclass(frozen=True)
class Fault:
    kind: str  # PARTITION | CRASH | CORRUPT
    at_step: int
    participants: tuple
    duration: int = 1

    def active(self, step: int) -> bool:
        return self.at_step <= step < self.at_step + self.duration

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "atStep": self.at_step,
            "participants": list(self.participants),
            "duration": self.duration,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Fault":
        return cls(
            kind=data["kind"],
            at_step=int(data["atStep"]),
            participants=tuple(data["participants"]),
            duration=int(data.get("duration", 1)),
        )


@dataclass(frozen=True)
class SimConfig:
    node_count: int
    seed: int
    scenario: str
    faults: tuple = ()

    def __post_init__(self):
        if self.node_count < 2:
            raise ValueError("a federation needs at least 2 nodes")

    def to_dict(self) -> dict:
        return {
            "nodeCount": self.node_count,
            "seed": self.seed,
            "scenario": self.scenario,
            "faults": [f.to_dict() for f in self.faults],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        return cls(
            node_count=int(data["nodeCount"]),
            seed=int(data["seed"]),
            scenario=data["scenario"],
            faults=tuple(Fault.from_dict(f) for f in data.get("faults", [])),
        )


@dataclass
class Trace:
    config: dict
    steps: list[dict] = field(default_factory=list)
    final_state: dict = field(default_factory=dict)

    def to_ndjson(self) -> bytes:
        lines = [canonical_json({"type": "config", **self.config})]
        lines.extend(canonical_json({"type": "step", **s}) for s in self.steps)
        lines.append(canonical_json({"type": "final", "nodes": self.final_state}))
        return b"\n".join(lines) + b"\n"

    @classmethod
    def from_ndjson(cls, data: bytes) -> "Trace":
        config: dict = {}
        steps: list[dict] = []
        final: dict = {}
        for line in data.splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            kind = obj.pop("type")
            if kind == "config":
                config = obj
            elif kind == "step":
                steps.append(obj)
            elif kind == "final":
                final = obj["nodes"]
        return cls(config=config, steps=steps, final_state=final)


# -- scenario registry ---------------------------------------------------------

SCENARIOS: dict[str, Callable] = {}


def scenario(name: str):
    def register(fn):
        SCENARIOS[name] = fn
        return fn

    return register


def scenario_names() -> list[str]:
    return sorted(SCENARIOS)


# -- network fabric -------------------------------------------------------------


class _Fabric:
    """Step-windowed reachability and transfer corruption between nodes."""

    def __init__(self, faults: tuple):
        self.faults = faults
        self.healed = False

    def heal(self) -> None:
        self.healed = True

    def _crashed(self, node_id: str, step: int) -> bool:
        if self.healed:
            return False
        return any(
            f.kind == CRASH and f.active(step) and node_id in f.participants
            for f in self.faults
        )

    def reachable(self, src: str, dst: str, step: int) -> bool:
        if self.healed:
            return True
        if self._crashed(src, step) or self._crashed(dst, step):
            return False
        for f in self.faults:
            if f.kind != PARTITION or not f.active(step):
                continue
            inside = set(f.participants)
            if (src in inside) != (dst in inside):
                return False
        return True

    def corrupts_transfer(self, src: str, dst: str, step: int) -> bool:
        if self.healed:
            return False
        return any(
            f.kind == CORRUPT
            and f.active(step)
            and len(f.participants) >= 2
            and {src, dst} <= set(f.participants)
            for f in self.faults
        )


class _SimLink:
    """A peer handle routed through the simulated fabric."""

    def __init__(self, sim: "Simulation", src: ArchiveNode, dst: ArchiveNode):
        self.sim = sim
        self.src = src
        self.dst = dst

    @property
    def node_id(self) -> str:
        return self.dst.node_id

    def _check(self) -> None:
        if not self.sim.fabric.reachable(
            self.src.node_id, self.dst.node_id, self.sim.step
        ):
            raise PeerUnreachable(
                f"{self.src.node_id} cannot reach {self.dst.node_id}"
            )

    def pull_records(self, prefix, since_seq, requester=None):
        self._check()
        return self.dst.pull_records(prefix, since_seq, requester=requester)

    def receive_replica(self, urid, content, expected_hash, from_node=""):
        self._check()
        if self.sim.fabric.corrupts_transfer(
            self.src.node_id, self.dst.node_id, self.sim.step
        ):
            damaged = bytearray(content)
            damaged[0] ^= 0x01
            content = bytes(damaged)
        return self.dst.receive_replica(
            urid, content, expected_hash, from_node=from_node
        )

    def search_catalog(self, query, expand=False):
        self._check()
        return self.dst.search_catalog(query, expand=expand)


def _describe(result) -> dict:
    """A deterministic, JSON-safe summary of an operation result."""
    if result is None:
        return {"ok": True}
    if isinstance(result, ArchivalObject):
        return {"urid": result.urid.text, "hash": result.content_hash}
    if isinstance(result, FixityReport):
        return {"urid": result.urid, "status": result.status}
    if isinstance(result, int):
        return {"applied": result}
    if isinstance(result, dict):
        return {"attributes": sorted(result)}
    if isinstance(result, list):
        return {"count": len(result)}
    if hasattr(result, "to_dict"):
        summary = result.to_dict()
        for key in ("instances", "rules", "record"):
            summary.pop(key, None)
        return {
            k: v
            for k, v in summary.items()
            if isinstance(v, (str, int, bool)) or v is None
        }
    if hasattr(result, "version"):
        return {"trustVersion": result.version}
    return {"ok": True}


class Simulation:
    """One scripted run over a fresh set of in-memory nodes."""

    def __init__(self, config: SimConfig):
        if config.scenario not in SCENARIOS:
            raise UnknownScenario(config.scenario)
        self.config = config
        self.rng = random.Random(config.seed)
        self.clock = LogicalClock()
        self.fabric = _Fabric(config.faults)
        self.step = 0
        self.steps: list[dict] = []
        self.nodes: list[ArchiveNode] = []
        self._corrupted: dict[str, int] = {}  # node id -> fault step
        for index in range(config.node_count):
            node_id = f"node{index}"
            seed = hashlib.sha256(
                f"sim:{config.seed}:{node_id}".encode("utf-8")
            ).digest()
            self.nodes.append(
                ArchiveNode(
                    node_id,
                    [f"p{index}"],
                    admin="admin",
                    principals=[f"user{index}"],
                    clock=self.clock,
                    signing_key=generate_signing_key(seed),
                )
            )

    # -- scheduling ------------------------------------------------------------

    def node(self, index: int) -> ArchiveNode:
        return self.nodes[index]

    def link(self, src: ArchiveNode, dst: ArchiveNode) -> _SimLink:
        return _SimLink(self, src, dst)

    def _apply_storage_faults(self) -> None:
        for fault in self.config.faults:
            if fault.kind != CORRUPT or len(fault.participants) != 1:
                continue
            if fault.at_step != self.step:
                continue
            victim_id = fault.participants[0]
            victim = next((n for n in self.nodes if n.node_id == victim_id), None)
            if victim is None:
                continue
            targets = sorted(
                o.urid.text for o in victim.store.objects()
                if victim.store.holds_content(o.urid.text)
            )
            if targets:
                victim.store.corrupt_stored_bytes(targets[0])
                self._corrupted[victim_id] = self.step

    def do(self, node_id: str, op: str, action: Callable, untrusted: bool = False):
        """Execute one scheduled operation and record its outcome.

        Returns the action's result, or ``None`` when it failed with an
        archive error (the error code lands in the trace).
        """
        self._apply_storage_faults()
        entry = {"step": self.step, "nodeId": node_id, "op": op}
        if untrusted:
            entry["untrusted"] = True
        result = None
        if self.fabric._crashed(node_id, self.step):
            entry["outcome"] = {"error": "Crashed"}
        else:
            try:
                result = action()
                entry["outcome"] = _describe(result)
            except ArchiveError as exc:
                entry["outcome"] = {"error": exc.code}
        self.steps.append(entry)
        self.step += 1
        return result

    # -- state capture --------------------------------------------------------------

    def capture_final_state(self) -> dict:
        state: dict[str, dict] = {}
        all_prefixes = sorted(
            {p for node in self.nodes for p in node.resolver.owned_prefixes}
        )
        for node in self.nodes:
            prefixes: dict[str, dict] = {}
            for prefix in all_prefixes:
                if node.resolver.owns(prefix):
                    prefixes[prefix] = {
                        "role": "owner",
                        "digest": node.resolver.prefix_digest(prefix),
                    }
                elif (
                    prefix in node.resolver.watermarks
                    or node.resolver.replica_records(prefix)
                ):
                    prefixes[prefix] = {
                        "role": "mirror",
                        "digest": node.resolver.prefix_digest(prefix),
                    }
            state[node.node_id] = {
                "stateDigest": node.state_digest(),
                "prefixes": prefixes,
                "fixity": node.store.fixity_map(),
                "ownedPrefixes": list(node.resolver.owned_prefixes),
                "trustVersion": node.trust.version,
            }
        return state

    def run(self) -> Trace:
        SCENARIOS[self.config.scenario](self)
        return Trace(
            config=self.config.to_dict(),
            steps=self.steps,
            final_state=self.capture_final_state(),
        )


def run_scenario(config: SimConfig) -> Trace:
    """Run one scenario deterministically and return its trace."""
    return Simulation(config).run()


# -- invariant checking ----------------------------------------------------------------


def check_invariants(trace: Trace) -> list[dict]:
    """Evaluate the federation invariant suite over a finished trace.

    Returns one entry per violation: convergence (mirror record sets
    must equal the owner's), immutability (stored bytes must still hash
    to their recorded fixity), prefix ownership (exactly one owner per
    prefix), and no-unsigned-trust (operations marked untrusted must
    have failed).
    """
    violations: list[dict] = []
    final = trace.final_state
    last_step = trace.steps[-1]["step"] if trace.steps else 0

    owner_digest: dict[str, str] = {}
    owners: dict[str, list[str]] = {}
    for node_id in sorted(final):
        for prefix in final[node_id]["ownedPrefixes"]:
            owners.setdefault(prefix, []).append(node_id)
        for prefix, info in final[node_id]["prefixes"].items():
            if info["role"] == "owner":
                owner_digest[prefix] = info["digest"]

    for prefix in sorted(owners):
        if len(owners[prefix]) != 1:
            violations.append(
                {
                    "kind": "prefix-ownership",
                    "prefix": prefix,
                    "nodes": owners[prefix],
                    "step": last_step,
                }
            )

    corrupt_steps = {
        tuple(f["participants"])[0]: f["atStep"]
        for f in trace.config.get("faults", [])
        if f["kind"] == CORRUPT and len(f["participants"]) == 1
    }

    for node_id in sorted(final):
        info = final[node_id]
        for prefix, view in sorted(info["prefixes"].items()):
            if view["role"] != "mirror":
                continue
            expected = owner_digest.get(prefix)
            if expected is not None and view["digest"] != expected:
                violations.append(
                    {
                        "kind": "convergence",
                        "prefix": prefix,
                        "node": node_id,
                        "step": last_step,
                    }
                )
        for urid, fixity in sorted(info["fixity"].items()):
            if fixity["expected"] != fixity["observed"]:
                violations.append(
                    {
                        "kind": "immutability",
                        "urid": urid,
                        "node": node_id,
                        "step": corrupt_steps.get(node_id, last_step),
                    }
                )

    for entry in trace.steps:
        if entry.get("untrusted") and "error" not in entry["outcome"]:
            violations.append(
                {
                    "kind": "unsigned-trust",
                    "node": entry["nodeId"],
                    "op": entry["op"],
                    "step": entry["step"],
                }
            )
    return violations


# -- scenarios ------------------------------------------------------------------------------


def _enroll_everyone(sim: Simulation) -> None:
    for node in sim.nodes:
        for other in sim.nodes:
            if other.node_id == node.node_id:
                continue
            sim.do(
                node.node_id,
                "enroll",
                lambda n=node, o=other: n.enroll(o.identity(), actor="admin"),
            )


def _random_bytes(sim: Simulation, size_range=(4, 24)) -> bytes:
    size = sim.rng.randint(*size_range)
    return bytes(sim.rng.randrange(256) for _ in range(size))


def _final_sync_round(sim: Simulation) -> None:
    """Heal the fabric and give every mirror one pull per foreign prefix."""
    sim.fabric.heal()
    for node in sim.nodes:
        for other in sim.nodes:
            if other.node_id == node.node_id:
                continue
            for prefix in other.resolver.owned_prefixes:
                sim.do(
                    node.node_id,
                    "mirror_sync",
                    lambda n=node, o=other, p=prefix: n.mirror_sync(
                        sim.link(n, o), p
                    ),
                )


@scenario("mirror-convergence")
def _mirror_convergence(sim: Simulation) -> None:
    """Randomized owner mutations racing mirror pulls under partitions."""
    _enroll_everyone(sim)
    heads: dict[str, list[str]] = {n.node_id: [] for n in sim.nodes}

    for node in sim.nodes:
        obj = sim.do(
            node.node_id,
            "ingest",
            lambda n=node: n.ingest(
                _random_bytes(sim), "text/plain", f"user{sim.nodes.index(n)}", n.default_prefix
            ),
        )
        if obj is not None:
            heads[node.node_id].append(obj.urid.text)

    op_count = 24 + 6 * sim.config.node_count
    for _ in range(op_count):
        op = sim.rng.choice(
            ["ingest", "version", "policy", "sync", "sync", "ingest"]
        )
        node = sim.rng.choice(sim.nodes)
        user = f"user{sim.nodes.index(node)}"
        if op == "ingest":
            obj = sim.do(
                node.node_id,
                "ingest",
                lambda n=node, u=user: n.ingest(
                    _random_bytes(sim), "text/plain", u, n.default_prefix
                ),
            )
            if obj is not None:
                heads[node.node_id].append(obj.urid.text)
        elif op == "version" and heads[node.node_id]:
            index = sim.rng.randrange(len(heads[node.node_id]))
            target = heads[node.node_id][index]
            obj = sim.do(
                node.node_id,
                "commit_version",
                lambda n=node, t=target, u=user: n.commit_version(
                    t, _random_bytes(sim), "text/plain", u
                ),
            )
            if obj is not None:
                heads[node.node_id][index] = obj.urid.text
        elif op == "policy" and heads[node.node_id]:
            target = sim.rng.choice(heads[node.node_id])
            level = sim.rng.choice(
                [AccessLevel.READ, AccessLevel.ANNOTATE, AccessLevel.VERSION]
            )
            org = f"org{sim.rng.randrange(sim.config.node_count)}"
            policy = AccessPolicy(
                owner=user,
                rules=(Rule(predicates={"org": [org]}, grant=level),),
                default=AccessLevel.DISCOVER,
            )
            sim.do(
                node.node_id,
                "set_policy",
                lambda n=node, t=target, p=policy, u=user: n.set_policy(t, p, u),
            )
        elif op == "sync":
            other = sim.rng.choice([n for n in sim.nodes if n is not node])
            prefix = other.default_prefix
            sim.do(
                node.node_id,
                "mirror_sync",
                lambda n=node, o=other, p=prefix: n.mirror_sync(sim.link(n, o), p),
            )
    _final_sync_round(sim)


@scenario("federated-access")
def _federated_access(sim: Simulation) -> None:
    """Per-node assertion issuers; cross-archive reads decided at owner
    and mirror alike, from mirrored records carrying owner policy."""
    _enroll_everyone(sim)
    for node in sim.nodes:
        for other in sim.nodes:
            node.set_attribute_filter(
                AttributeFilter(
                    issuer=other.node_id, mapping={"staffCategory": "role"}
                )
            )

    stored: list[tuple[str, str]] = []  # (owner node id, urid)
    for index, node in enumerate(sim.nodes):
        user = f"user{index}"
        obj = sim.do(
            node.node_id,
            "ingest",
            lambda n=node, u=user: n.ingest(
                _random_bytes(sim), "text/plain", u, n.default_prefix
            ),
        )
        if obj is None:
            continue
        stored.append((node.node_id, obj.urid.text))
        reader_org = f"org{(index + 1) % sim.config.node_count}"
        policy = AccessPolicy(
            owner=user,
            rules=(
                Rule(predicates={"org": [reader_org]}, grant=AccessLevel.READ),
            ),
            default=AccessLevel.DISCOVER,
        )
        sim.do(
            node.node_id,
            "set_policy",
            lambda n=node, t=obj.urid.text, p=policy, u=user: n.set_policy(t, p, u),
        )

    _final_sync_round(sim)

    if stored:
        for _ in range(4 * sim.config.node_count):
            home_index = sim.rng.randrange(sim.config.node_count)
            home = sim.nodes[home_index]
            subject = f"user{home_index}"
            raw = {
                "org": [f"org{home_index}"],
                "staffCategory": ["researcher"],
                "shoeSize": ["42"],
            }
            assertion = home.issue_assertion(subject, raw, ttl_seconds=3600)
            owner_id, urid = stored[sim.rng.randrange(len(stored))]
            owner = next(n for n in sim.nodes if n.node_id == owner_id)
            mirror = sim.rng.choice(
                [n for n in sim.nodes if n.node_id != owner_id]
            )

            def decide_at(archive, a=None, u=None):
                attrs = archive.verify_assertion(a)
                return archive.decide(attrs, u, AccessLevel.READ)

            sim.do(
                owner.node_id,
                "decide@owner",
                lambda n=owner, a=assertion, u=urid: decide_at(n, a, u),
            )
            sim.do(
                mirror.node_id,
                "decide@mirror",
                lambda n=mirror, a=assertion, u=urid: decide_at(n, a, u),
            )

    rogue_key = generate_signing_key(
        hashlib.sha256(f"rogue:{sim.config.seed}".encode()).digest()
    )
    rogue_assertion = issue_assertion(
        rogue_key, "rogue-institute", "intruder", {"org": ["org0"]},
        ttl_seconds=3600, now=sim.clock.now(),
    )
    sim.do(
        sim.nodes[0].node_id,
        "verify_assertion",
        lambda: sim.nodes[0].verify_assertion(rogue_assertion),
        untrusted=True,
    )


@scenario("content-replication")
def _content_replication(sim: Simulation) -> None:
    """Distribution-plan copies under faults, with fixity audits."""
    _enroll_everyone(sim)
    owned: dict[str, list[str]] = {n.node_id: [] for n in sim.nodes}
    for node in sim.nodes:
        for _ in range(2):
            obj = sim.do(
                node.node_id,
                "ingest",
                lambda n=node: n.ingest(
                    _random_bytes(sim), "application/octet-stream",
                    f"user{sim.nodes.index(n)}", n.default_prefix,
                ),
            )
            if obj is not None:
                owned[node.node_id].append(obj.urid.text)

    for _ in range(10 + 4 * sim.config.node_count):
        src = sim.rng.choice(sim.nodes)
        dst = sim.rng.choice([n for n in sim.nodes if n is not src])
        if not owned[src.node_id]:
            continue
        urid = sim.rng.choice(owned[src.node_id])
        location = sim.do(
            src.node_id,
            "replicate_content",
            lambda s=src, d=dst, u=urid: s.replicate_content(u, sim.link(s, d)),
        )
        if location is not None:
            sim.do(
                dst.node_id,
                "verify_fixity",
                lambda d=dst, u=urid: d.verify_fixity(u),
            )

    first_prefix = sim.nodes[0].default_prefix
    sim.do(
        "rogue",
        "pull_records",
        lambda: sim.nodes[0].pull_records(first_prefix, 0, requester="rogue"),
        untrusted=True,
    )
    if owned[sim.nodes[0].node_id]:
        sim.do(
            "rogue",
            "receive_replica",
            lambda: sim.nodes[0].receive_replica(
                owned[sim.nodes[0].node_id][0], b"payload", sha256_hex(b"payload"),
                from_node="rogue",
            ),
            untrusted=True,
        )

    sim.fabric.heal()
    for node in sim.nodes:
        for urid in sorted(owned[node.node_id]):
            sim.do(
                node.node_id,
                "verify_fixity",
                lambda n=node, u=urid: n.verify_fixity(u),
            )
    _final_sync_round(sim)
