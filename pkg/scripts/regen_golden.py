"""Regenerate the frozen golden trace for the six-activity bookshop fixture.

The golden file pins the byte-exact output of a seed-0 run; the acceptance
suite re-runs the fixture and compares bytes.  Regenerate only after a
deliberate format or rule change, and re-review the diff.
"""

from __future__ import annotations

from pathlib import Path

import qosorch
from qosorch import engine, formats
from qosorch.registry import load_registry

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = Path(qosorch.__file__).parent / "fixtures"
GOLDEN = ROOT / "tests" / "golden" / "bookstore_seed0.jsonl"


def main() -> None:
    workflow = formats.load_workflow(FIXTURES / "bookstore_workflow.jsonl")
    registry = load_registry(FIXTURES / "bookstore_registry.jsonl")
    requests = formats.load_requests(FIXTURES / "bookstore_requests_feasible.jsonl")
    trace = engine.run(workflow, registry, requests, seed=0)
    GOLDEN.parent.mkdir(parents=True, exist_ok=True)
    formats.write_traces([trace], GOLDEN)
    print(f"golden trace written to {GOLDEN} ({len(trace)} transitions)")


if __name__ == "__main__":
    main()
