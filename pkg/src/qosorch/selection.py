"""QoS aggregation, budget-constrained service selection, parameter routing.

An instance that fans out to n component services in parallel costs the sum
of the component costs and responds in the worst component response time:

    cost(instance)          = sum_i cost(service_i)
    response_time(instance) = max_i response_time(service_i)

Selection chooses one candidate per activity so the aggregate stays within
the requested budget, componentwise and inclusively.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Sequence

from .model import Params, QoSSpec, freeze_params, params_dict

# Above this many candidate combinations the selector switches from exact
# enumeration to a greedy minimum-cost pick with a feasibility re-check.
EXHAUSTIVE_LIMIT = 4096


class UnknownOntologyError(LookupError):
    """An activity requires an ontology no registry candidate advertises."""


class IncompleteOutputsError(ValueError):
    """Instance outputs were requested before every activity returned."""


@dataclass(frozen=True)
class CandidateService:
    """A registered component service: id, ontology, advertised QoS."""

    candidate_id: str
    ontology: str
    qos: QoSSpec

    def __post_init__(self) -> None:
        if not self.candidate_id:
            raise ValueError("candidate_id must be non-empty")
        if not self.ontology:
            raise ValueError("ontology must be non-empty")


@dataclass(frozen=True)
class AllocationResult:
    """Outcome of a selection: granted with per-activity picks, or denied."""

    granted: bool
    per_activity: tuple[tuple[str, CandidateService, QoSSpec], ...] | None = None

    def __post_init__(self) -> None:
        if self.granted and self.per_activity is None:
            raise ValueError("a granted allocation must carry per-activity picks")
        if not self.granted and self.per_activity is not None:
            raise ValueError("a denied allocation carries no picks")
        if self.per_activity is not None:
            object.__setattr__(self, "per_activity", tuple(self.per_activity))

    def aggregate(self) -> QoSSpec:
        if not self.granted or self.per_activity is None:
            raise ValueError("denied allocations have no aggregate")
        return aggregate_qos([qos for _, _, qos in self.per_activity])


def aggregate_qos(bindings: Sequence[QoSSpec]) -> QoSSpec:
    """Fold component QoS couples into the instance couple (max time, total cost)."""
    if not bindings:
        return QoSSpec(0, 0)
    return QoSSpec(
        response_time_ms=max(b.response_time_ms for b in bindings),
        cost_cents=sum(b.cost_cents for b in bindings),
    )


def _grouped(candidates: Sequence[CandidateService]) -> dict[str, list[CandidateService]]:
    groups: dict[str, list[CandidateService]] = {}
    for candidate in candidates:
        groups.setdefault(candidate.ontology, []).append(candidate)
    for ontology in groups:
        groups[ontology].sort(key=lambda c: c.candidate_id)
    return groups


def qos_allocate(
    request_qos: QoSSpec,
    activities: Sequence[tuple[str, str]],
    registry: Sequence[CandidateService],
) -> AllocationResult:
    """Pick one candidate per (activity, ontology) pair within the budget.

    Exact search is used while the combination count stays at desk scale
    (<= EXHAUSTIVE_LIMIT); ties break toward minimal total cost, then minimal
    worst response time, then lexicographic candidate ids, so the result is
    deterministic.  Beyond the limit a greedy minimum-cost pick per activity
    is used and re-checked for feasibility, denying on failure.

    Unknown ontologies are an error, distinct from denial: denial means the
    ontologies are known but no combination fits the budget.
    """
    if not activities:
        raise ValueError("at least one activity is required")
    groups = _grouped(registry)
    slots: list[list[CandidateService]] = []
    for aa_name, ontology in activities:
        if ontology not in groups:
            raise UnknownOntologyError(
                f"activity {aa_name!r} requires ontology {ontology!r} "
                f"with no registered candidates"
            )
        slots.append(groups[ontology])

    combinations = 1
    for slot in slots:
        combinations *= len(slot)

    if combinations <= EXHAUSTIVE_LIMIT:
        chosen = _allocate_exhaustive(request_qos, slots)
    else:
        chosen = _allocate_greedy(request_qos, slots)
    if chosen is None:
        return AllocationResult(granted=False)
    per_activity = tuple(
        (aa_name, candidate, candidate.qos)
        for (aa_name, _), candidate in zip(activities, chosen)
    )
    return AllocationResult(granted=True, per_activity=per_activity)


def _allocate_exhaustive(
    request_qos: QoSSpec, slots: Sequence[Sequence[CandidateService]]
) -> tuple[CandidateService, ...] | None:
    best: tuple[tuple[int, int, tuple[str, ...]], tuple[CandidateService, ...]] | None = None
    for combo in itertools.product(*slots):
        aggregate = aggregate_qos([c.qos for c in combo])
        if not aggregate.fits_within(request_qos):
            continue
        key = (
            aggregate.cost_cents,
            aggregate.response_time_ms,
            tuple(c.candidate_id for c in combo),
        )
        if best is None or key < best[0]:
            best = (key, combo)
    return None if best is None else best[1]


def _allocate_greedy(
    request_qos: QoSSpec, slots: Sequence[Sequence[CandidateService]]
) -> tuple[CandidateService, ...] | None:
    chosen = tuple(
        min(slot, key=lambda c: (c.qos.cost_cents, c.qos.response_time_ms, c.candidate_id))
        for slot in slots
    )
    if aggregate_qos([c.qos for c in chosen]).fits_within(request_qos):
        return chosen
    return None


def map_input_parameters(
    instance_inputs: Params, activity_names: Sequence[str]
) -> dict[str, Params]:
    """Split instance inputs across activities.

    A key prefixed with an activity name plus '.' routes the suffix to that
    activity (longest matching name wins); unprefixed keys broadcast to every
    activity.
    """
    routed: dict[str, dict[str, str]] = {name: {} for name in activity_names}
    broadcast: dict[str, str] = {}
    for key, value in instance_inputs:
        matches = [name for name in activity_names if key.startswith(name + ".")]
        if matches:
            target = max(matches, key=len)
            routed[target][key[len(target) + 1 :]] = value
        else:
            broadcast[key] = value
    result: dict[str, Params] = {}
    for name in activity_names:
        merged = dict(broadcast)
        merged.update(routed[name])
        result[name] = freeze_params(merged)
    return result


def map_output_parameters(activity_outputs: Mapping[str, Params | None]) -> Params:
    """Join per-activity outputs into instance outputs, prefixing each key
    with the producing activity's name.  The prefixing is injective, so no
    output value is lost or collides."""
    merged: dict[str, str] = {}
    for aa_name in sorted(activity_outputs):
        outputs = activity_outputs[aa_name]
        if outputs is None:
            raise IncompleteOutputsError(f"activity {aa_name!r} has not returned outputs")
        for key, value in params_dict(outputs).items():
            merged[f"{aa_name}.{key}"] = value
    return freeze_params(merged)
