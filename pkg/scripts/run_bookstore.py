"""Run the bookshop fixture end to end and report what happened.

Executes one seeded run under the feasible budget and one under the
infeasible budget, prints the rule sequence and the terminal outcome of
each, then exhaustively explores the one-activity fixture and checks the
explored set against all three conformance layers.
"""

from __future__ import annotations

from collections import Counter
from pathlib import Path

import qosorch
from qosorch import engine, formats
from qosorch.conformance import check_pyramid
from qosorch.model import InstanceState, get_wses
from qosorch.registry import load_registry

FIXTURES = Path(qosorch.__file__).parent / "fixtures"


def load(name: str, requests_file: str):
    return (
        formats.load_workflow(FIXTURES / f"{name}_workflow.jsonl"),
        load_registry(FIXTURES / f"{name}_registry.jsonl"),
        formats.load_requests(FIXTURES / requests_file),
    )


def describe_run(title: str, workflow, registry, requests, seed: int) -> None:
    trace = engine.run(workflow, registry, requests, seed)
    print(f"== {title} (seed {seed}, {len(trace)} transitions)")
    counts = Counter(t.rule.value for t in trace.steps)
    for rule, count in sorted(counts.items()):
        print(f"   {rule}: {count}")
    for _, instance in trace.final.instances():
        print(f"   {instance.client_id}: {instance.state.value}")
        if instance.state is InstanceState.COMPLETED:
            for binding in get_wses(instance):
                qos = binding.advertised_qos
                print(
                    f"     {binding.aa_name} -> {binding.endpoint} "
                    f"({qos.response_time_ms}ms, {qos.cost_cents}c)"
                )
    print()


def main() -> None:
    describe_run(
        "bookshop, feasible budget",
        *load("bookstore", "bookstore_requests_feasible.jsonl"),
        seed=0,
    )
    describe_run(
        "bookshop, infeasible budget",
        *load("bookstore", "bookstore_requests_infeasible.jsonl"),
        seed=0,
    )

    workflow, registry, requests = load("minimal", "minimal_requests_one.jsonl")
    traces = engine.explore(workflow, registry, requests, max_transitions=100)
    verdict = check_pyramid(traces)
    print(f"== one-activity fixture: {len(traces)} interleavings explored")
    for layer, layer_verdict in (
        ("behavior", verdict.behavior),
        ("system", verdict.system),
        ("service", verdict.service),
    ):
        print(f"   {layer}: {'pass' if layer_verdict.passed else 'fail'}")


if __name__ == "__main__":
    main()
