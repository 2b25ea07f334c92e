"""Render a simulation trace into figures and a delimited summary.

Given a trace (NDJSON or in-memory), this writes a ``summary.csv`` of
per-node operation outcomes plus two PNG figures: the step timeline
(who did what, and whether it succeeded) and the operation mix. Handy
for eyeballing a fault schedule before trusting the invariant checker.
"""

from __future__ import annotations

import csv
from collections import Counter
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402 - backend must be set first

from .simnet import Trace

__all__ = ["load_trace", "write_summary_csv", "render_figures", "render_report"]


def load_trace(path: str | Path) -> Trace:
    return Trace.from_ndjson(Path(path).read_bytes())


def _outcome_label(step: dict) -> str:
    outcome = step.get("outcome", {})
    return outcome.get("error", "ok") if isinstance(outcome, dict) else "ok"


def write_summary_csv(trace: Trace, path: Path) -> Path:
    """One row per (node, operation, outcome) with its count."""
    counts = Counter(
        (step["nodeId"], step["op"], _outcome_label(step)) for step in trace.steps
    )
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["nodeId", "operation", "outcome", "count"])
        for (node_id, op, outcome), count in sorted(counts.items()):
            writer.writerow([node_id, op, outcome, count])
    return path


def render_figures(trace: Trace, out_dir: Path) -> list[Path]:
    node_ids = sorted({step["nodeId"] for step in trace.steps})
    node_index = {node_id: i for i, node_id in enumerate(node_ids)}
    written: list[Path] = []

    # Timeline: every step as a point, split by success vs failure.
    fig, ax = plt.subplots(figsize=(10, 0.6 * max(len(node_ids), 4) + 1.5))
    for failed, (marker, color, label) in {
        False: ("o", "tab:blue", "ok"),
        True: ("x", "tab:red", "error"),
    }.items():
        xs = [
            s["step"]
            for s in trace.steps
            if (_outcome_label(s) != "ok") == failed
        ]
        ys = [
            node_index[s["nodeId"]]
            for s in trace.steps
            if (_outcome_label(s) != "ok") == failed
        ]
        if xs:
            ax.scatter(xs, ys, marker=marker, color=color, s=24, label=label)
    ax.set_yticks(range(len(node_ids)))
    ax.set_yticklabels(node_ids)
    ax.set_xlabel("step")
    ax.set_title(f"scenario {trace.config.get('scenario', '?')} "
                 f"(seed {trace.config.get('seed', '?')})")
    ax.legend(loc="upper right")
    fig.tight_layout()
    timeline = out_dir / "timeline.png"
    fig.savefig(timeline, dpi=120)
    plt.close(fig)
    written.append(timeline)

    # Operation mix: how often each operation ran, by outcome.
    ops = sorted({step["op"] for step in trace.steps})
    ok_counts = Counter(s["op"] for s in trace.steps if _outcome_label(s) == "ok")
    err_counts = Counter(s["op"] for s in trace.steps if _outcome_label(s) != "ok")
    fig, ax = plt.subplots(figsize=(10, 4))
    positions = range(len(ops))
    ax.bar(positions, [ok_counts.get(op, 0) for op in ops],
           color="tab:blue", label="ok")
    ax.bar(positions, [err_counts.get(op, 0) for op in ops],
           bottom=[ok_counts.get(op, 0) for op in ops],
           color="tab:red", label="error")
    ax.set_xticks(list(positions))
    ax.set_xticklabels(ops, rotation=30, ha="right")
    ax.set_ylabel("operations")
    ax.legend()
    fig.tight_layout()
    operations = out_dir / "operations.png"
    fig.savefig(operations, dpi=120)
    plt.close(fig)
    written.append(operations)
    return written


def render_report(trace: Trace, out_dir: str | Path) -> dict:
    """Write the CSV summary and both figures; returns the output paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = write_summary_csv(trace, out_dir / "summary.csv")
    figures = render_figures(trace, out_dir)
    return {"summary": summary, "figures": figures}
