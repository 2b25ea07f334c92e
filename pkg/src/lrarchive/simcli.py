"""``archive-sim``: run scripted federation scenarios and inspect traces."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ArchiveError
from .simnet import Fault, SimConfig, check_invariants, run_scenario, scenario_names


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="archive-sim",
        description="Deterministic multi-node federation simulation harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and write its trace")
    run.add_argument("--scenario", required=True, help="registered scenario name")
    run.add_argument("--nodes", type=int, default=4, help="node count (default 4)")
    run.add_argument("--seed", type=int, default=0, help="scheduler seed")
    run.add_argument("--faults", help="JSON file with a fault schedule")
    run.add_argument(
        "--out", default="-", help="trace output path (NDJSON, default stdout)"
    )
    run.add_argument(
        "--check", action="store_true", help="also run the invariant checker"
    )

    check = sub.add_parser("check", help="evaluate invariants over a trace file")
    check.add_argument("--trace", required=True)

    sub.add_parser("scenarios", help="list registered scenario names")

    report = sub.add_parser(
        "report", help="render figures and a CSV summary from a trace"
    )
    report.add_argument("--trace", required=True)
    report.add_argument("--out-dir", default="sim-report")
    return parser


def _load_faults(path: str | None) -> tuple:
    if not path:
        return ()
    rows = json.loads(Path(path).read_text(encoding="utf-8"))
    return tuple(Fault.from_dict(row) for row in rows)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            config = SimConfig(
                node_count=args.nodes,
                seed=args.seed,
                scenario=args.scenario,
                faults=_load_faults(args.faults),
            )
            trace = run_scenario(config)
            payload = trace.to_ndjson()
            if args.out == "-":
                sys.stdout.buffer.write(payload)
            else:
                Path(args.out).write_bytes(payload)
                print(f"trace written to {args.out} ({len(trace.steps)} steps)")
            if args.check:
                violations = check_invariants(trace)
                for violation in violations:
                    print(json.dumps(violation, sort_keys=True))
                print(f"{len(violations)} violation(s)")
                return 1 if violations else 0
            return 0

        if args.command == "check":
            from .report import load_trace

            violations = check_invariants(load_trace(args.trace))
            for violation in violations:
                print(json.dumps(violation, sort_keys=True))
            print(f"{len(violations)} violation(s)")
            return 1 if violations else 0

        if args.command == "scenarios":
            for name in scenario_names():
                print(name)
            return 0

        if args.command == "report":
            from .report import load_trace, render_report

            outputs = render_report(load_trace(args.trace), args.out_dir)
            print(f"summary: {outputs['summary']}")
            for figure in outputs["figures"]:
                print(f"figure:  {figure}")
            return 0
    except ArchiveError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
