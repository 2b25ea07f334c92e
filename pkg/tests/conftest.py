"""Shared fixtures: deterministic clocks and pre-wired nodes."""

import pytest

from lrarchive import ArchiveNode, LogicalClock


@pytest.fixture
def clock():
    return LogicalClock()


@pytest.fixture
def node(clock):
    """A standalone archive node owning the ``mpi`` prefix."""
    return ArchiveNode(
        "mpi", ["mpi"], principals=["dep1", "dep2", "ann1"], clock=clock
    )


def make_federation(clock, count=2, prefix_names=None):
    """``count`` mutually enrolled in-memory nodes sharing one clock."""
    names = prefix_names or ["mpi", "lund", "soas", "dobes"][:count]
    nodes = [
        ArchiveNode(
            name,
            [name],
            principals=[f"dep-{name}", "dep1", "dep2"],
            clock=clock,
        )
        for name in names
    ]
    for node in nodes:
        for other in nodes:
            if other is not node:
                node.enroll(other.identity(), actor="admin")
    return nodes


@pytest.fixture
def pair(clock):
    """Two enrolled nodes: (owner ``mpi``, mirror ``lund``)."""
    return make_federation(clock, 2)


@pytest.fixture
def quad(clock):
    """Four enrolled nodes, one per partner archive."""
    return make_federation(clock, 4)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the acceptance criteria verdicts after the run summary."""
    import sys

    module = sys.modules.get("test_acceptance")
    results = getattr(module, "CRITERION_RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for line in results:
            terminalreporter.write_line(line)
