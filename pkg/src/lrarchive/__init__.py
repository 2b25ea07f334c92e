"""Federated language resource archive node and federation toolkit.

Immutable versioned storage behind stable resource identifiers,
mirrored handle resolution, a storage-agnostic metadata catalog with
incremental harvesting, depositor-controlled attribute-based access,
signed cross-institution attribute assertions, stand-off enrichment,
sub-archive bundles, and a deterministic multi-node simulation harness.
"""

from .catalog import Catalog, CatalogNode, DCRecord, MetadataRecord, TermMap
from .errors import ArchiveError
from .federation import (
    AttributeAssertion,
    AttributeFilter,
    NodeIdentity,
    TrustList,
    federated_search,
    filter_attributes,
    generate_signing_key,
    issue_assertion,
    replicate_content,
    verify_assertion,
)
from .node import ArchiveNode
from .policy import AccessLevel, AccessPolicy, Decision, Delegation, PolicyEngine, Rule
from .resolver import HandleRecord, HandleResolver, InstanceLocation, URID
from .simnet import Fault, SimConfig, Simulation, Trace, check_invariants, run_scenario
from .store import ArchivalObject, FixityReport, ObjectStore
from .util import LogicalClock, SystemClock
from .workspace import Enrichment, FragmentLocator, StagedItem, Workspace

__version__ = "0.1.0"

__all__ = [
    "AccessLevel",
    "AccessPolicy",
    "ArchivalObject",
    "ArchiveError",
    "ArchiveNode",
    "AttributeAssertion",
    "AttributeFilter",
    "Catalog",
    "CatalogNode",
    "DCRecord",
    "Decision",
    "Delegation",
    "Enrichment",
    "Fault",
    "FixityReport",
    "FragmentLocator",
    "HandleRecord",
    "HandleResolver",
    "InstanceLocation",
    "LogicalClock",
    "MetadataRecord",
    "NodeIdentity",
    "ObjectStore",
    "PolicyEngine",
    "Rule",
    "SimConfig",
    "Simulation",
    "StagedItem",
    "SystemClock",
    "TermMap",
    "Trace",
    "TrustList",
    "URID",
    "Workspace",
    "check_invariants",
    "federated_search",
    "filter_attributes",
    "generate_signing_key",
    "issue_assertion",
    "replicate_content",
    "run_scenario",
    "verify_assertion",
]
