"""Command-line front end: run, explore, and check orchestrations.

Exit codes are a stable contract:
  0  success
  1  input error (missing or malformed file)
  2  engine error
  3  state-space bound exceeded
  4  conformance violations found
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import conformance, engine, formats
from .model import InstanceState
from .registry import RegistryError, load_registry

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_ENGINE = 2
EXIT_BOUND = 3
EXIT_VIOLATION = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qosorch",
        description="Run, explore, and check QoS-aware service orchestrations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_inputs(p: argparse.ArgumentParser) -> None:
        p.add_argument("--workflow", required=True, help="workflow definition file (JSONL)")
        p.add_argument("--registry", required=True, help="service registry file (JSONL)")
        p.add_argument("--requests", required=True, help="client requests file (JSONL)")
        p.add_argument("--trace-out", help="write traces (and violations) to this file")

    run_p = sub.add_parser("run", help="execute one seeded run to termination")
    add_inputs(run_p)
    run_p.add_argument("--seed", type=int, default=0, help="scheduler seed (default 0)")

    explore_p = sub.add_parser(
        "explore", help="enumerate all interleavings and check conformance"
    )
    add_inputs(explore_p)
    explore_p.add_argument(
        "--max-transitions",
        type=int,
        default=10_000,
        help="per-trace transition bound (default 10000)",
    )
    explore_p.add_argument(
        "--max-traces",
        type=int,
        default=engine.DEFAULT_MAX_TRACES,
        help=f"total trace bound (default {engine.DEFAULT_MAX_TRACES})",
    )

    check_p = sub.add_parser("check", help="replay and check a written trace file")
    check_p.add_argument("trace_file", help="trace file produced by run or explore")
    return parser


def _load_inputs(args):
    workflow = formats.load_workflow(args.workflow)
    registry = load_registry(args.registry)
    requests = formats.load_requests(args.requests)
    return workflow, registry, requests


def _aggregate_of(instance) -> tuple[int, int]:
    bound = [aa.ws.advertised_qos for aa in instance.activities if aa.ws.bound]
    if not bound:
        return (0, 0)
    return (max(q.response_time_ms for q in bound), sum(q.cost_cents for q in bound))


def _print_outcomes(trace) -> None:
    for _, instance in sorted(trace.final.instances()):
        cid = instance.client_id
        if instance.state is InstanceState.COMPLETED:
            worst, total = _aggregate_of(instance)
            budget = instance.request.qos
            print(
                f"{cid}: Completed qos=({worst}ms<={budget.response_time_ms}ms, "
                f"{total}c<={budget.cost_cents}c)"
            )
        else:
            print(f"{cid}: {instance.state.value}")


def _print_violations(violations) -> None:
    for violation in violations:
        where = (
            "" if violation.transition_index is None else f" transition={violation.transition_index}"
        )
        print(
            f"violation {violation.property_id} trace={violation.trace_index}{where}: "
            f"{violation.witness}",
            file=sys.stderr,
        )


def cmd_run(args) -> int:
    try:
        workflow, registry, requests = _load_inputs(args)
    except (formats.FormatError, RegistryError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        trace = engine.run(workflow, registry, requests, args.seed)
    except (engine.EngineError, ValueError) as exc:
        print(f"engine error: {exc}", file=sys.stderr)
        return EXIT_ENGINE
    if args.trace_out:
        formats.write_traces([trace], args.trace_out)
    _print_outcomes(trace)
    return EXIT_OK


def cmd_explore(args) -> int:
    try:
        workflow, registry, requests = _load_inputs(args)
    except (formats.FormatError, RegistryError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        traces = engine.explore(
            workflow,
            registry,
            requests,
            args.max_transitions,
            max_traces=args.max_traces,
        )
    except engine.StateSpaceLimitError as exc:
        print(f"state-space limit: {exc}", file=sys.stderr)
        return EXIT_BOUND
    except (engine.EngineError, ValueError) as exc:
        print(f"engine error: {exc}", file=sys.stderr)
        return EXIT_ENGINE
    verdict = conformance.check_pyramid(traces)
    print(f"traces: {len(traces)}")
    for layer, layer_verdict in (
        ("behavior", verdict.behavior),
        ("system", verdict.system),
        ("service", verdict.service),
    ):
        print(f"{layer}: {'pass' if layer_verdict.passed else 'fail'}")
    if args.trace_out:
        formats.write_traces(traces, args.trace_out)
        if verdict.violations:
            formats.append_violations(verdict.violations, args.trace_out)
    if not verdict.passed:
        _print_violations(verdict.violations)
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_check(args) -> int:
    path = Path(args.trace_file)
    try:
        traces = formats.read_traces(path)
    except (formats.FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if not traces:
        print("traces: 0")
        print("conformant (vacuous)")
        return EXIT_OK
    # Traces sharing an initial configuration are checked together so that
    # set-level properties see the whole set.
    groups: list[list] = []
    for trace in traces:
        for group in groups:
            if group[0].initial == trace.initial:
                group.append(trace)
                break
        else:
            groups.append([trace])
    all_violations = []
    for group in groups:
        verdict = conformance.check_pyramid(group)
        all_violations.extend(verdict.violations)
    print(f"traces: {len(traces)}")
    if all_violations:
        _print_violations(all_violations)
        return EXIT_VIOLATION
    print("conformant")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args)
    if args.command == "explore":
        return cmd_explore(args)
    return cmd_check(args)


if __name__ == "__main__":
    raise SystemExit(main())
