"""Exception taxonomy for the archive node and federation toolkit.

Every operational failure surfaces as a subclass of :class:`ArchiveError`
so callers (gateway, CLI, simulation harness) can map errors uniformly.
The class name is the stable error code used on the wire.
"""

from __future__ import annotations


class ArchiveError(Exception):
    """Base class for all archive errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


# --- object store ---------------------------------------------------------

class EmptyContent(ArchiveError):
    """Content payload is empty."""


class NotFound(ArchiveError):
    """Identifier does not resolve to anything known here."""


class VersionConflict(ArchiveError):
    """Predecessor already has a successor; version chains are linear."""


class IdenticalContent(ArchiveError):
    """New version bytes equal the predecessor's bytes."""


class WriteOnceViolation(ArchiveError):
    """Internal guard: an attempt was made to rewrite stored bytes."""


# --- identifier resolution -------------------------------------------------

class UnknownPrefix(ArchiveError):
    """Prefix is not registered anywhere in this node's view."""


class NotOwner(ArchiveError):
    """Prefix or record is owned by a different node."""


class AlreadyRegistered(ArchiveError):
    """A handle record for this identifier already exists."""


class HashMismatch(ArchiveError):
    """Instance content hash disagrees with the record."""


# --- catalog ---------------------------------------------------------------

class ParentNotFound(ArchiveError):
    """Referenced parent catalog node does not exist."""


class CycleDetected(ArchiveError):
    """Operation would make a catalog node its own ancestor."""


class MissingLanguage(ArchiveError):
    """Session metadata must name at least one language."""


class NodeNotFound(ArchiveError):
    """Catalog node id does not exist."""


class UridNotFound(ArchiveError):
    """Linked identifier does not resolve."""


class EmptyQuery(ArchiveError):
    """Search predicates must not be empty."""


class BadToken(ArchiveError):
    """Harvest continuation token was never issued or is stale."""


# --- access policy ---------------------------------------------------------

class NotAuthorized(ArchiveError):
    """Actor lacks the rights required for this operation."""


class TargetNotFound(ArchiveError):
    """Policy target (identifier or catalog node) does not exist."""


# --- federation ------------------------------------------------------------

class BadTtl(ArchiveError):
    """Assertion lifetime must be positive."""


class UntrustedIssuer(ArchiveError):
    """Assertion issuer is not in the trust list."""


class Expired(ArchiveError):
    """Assertion validity window has passed."""


class BadSignature(ArchiveError):
    """Signature does not verify over the canonical bytes."""


class DuplicateNode(ArchiveError):
    """Node id already enrolled in the trust list."""


class PrefixConflict(ArchiveError):
    """Prefix already owned by an enrolled node."""


class UntrustedPeer(ArchiveError):
    """Remote node is not in the trust list."""


class TransferCorrupt(ArchiveError):
    """Replicated bytes failed the fixity check at the receiver."""


class PeerUnreachable(ArchiveError):
    """Remote node could not be contacted."""


# --- workspaces and enrichment ----------------------------------------------

class UnknownPrincipal(ArchiveError):
    """Depositor id is not a known principal at this node."""


class WorkspaceClosed(ArchiveError):
    """Workspace is not in the OPEN state."""


class DuplicateName(ArchiveError):
    """Staged item name already used within the workspace."""


class EmptyWorkspace(ArchiveError):
    """Nothing staged; cannot commit."""


class ValidationFailed(ArchiveError):
    """Strict commit-time validation failed for one or more items.

    ``items`` holds ``(local_name, reason)`` pairs for every offender.
    """

    def __init__(self, items: list[tuple[str, str]]):
        self.items = list(items)
        detail = "; ".join(f"{name}: {reason}" for name, reason in self.items)
        super().__init__(f"validation failed: {detail}")


class InvalidFragment(ArchiveError):
    """Fragment locator is syntactically invalid."""


class SelfRelation(ArchiveError):
    """A relation must link two distinct resources."""


# --- gateway ----------------------------------------------------------------

class ImportCorrupt(ArchiveError):
    """A bundle entry failed its hash check; nothing was imported."""


# --- simulation harness ------------------------------------------------------

class UnknownScenario(ArchiveError):
    """Scenario name is not registered."""
