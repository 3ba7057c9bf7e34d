"""Three-layer trace conformance checking.

The layers refine each other:

* behavior  -- every configuration is well-formed, every message belongs to
               the closed vocabulary, and every transition is reproducible
               by re-applying the rule engine;
* system    -- instance creation snapshots are field-exact, requests and
               activity sets stay constant, states move monotonically,
               denied instances stay unbound, bindings imply a grant, and
               every instance eventually reaches a terminal state;
* service   -- per client and per trace, exactly one of acceptance (with the
               final bound services aggregating within the requested budget)
               or rejection happens, and every rejection agrees with an
               independent brute-force selection oracle.

Checkers re-derive everything from the configurations themselves; they never
trust engine annotations.  The selection oracle here is intentionally a
separate implementation from the selector the engine uses.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

from . import engine as engine_mod
from .model import (
    ActivityState,
    Configuration,
    InstanceState,
    ManagerState,
    Message,
    MessageKind,
    QoSSpec,
    RuleId,
    SS_ADDRESS,
    SelectorState,
    Trace,
    WSOIM_ADDRESS,
    WorkflowDef,
    activity_state_can_follow,
    configuration_errors,
    get_wsoi,
    instance_state_can_follow,
    message_schema_error,
)
from .registry import Registry
from .selection import AllocationResult, CandidateService

# Property identifiers cited by violations.
P_STATE_DOMAIN = "state-domain"
P_MESSAGE_VOCABULARY = "message-vocabulary"
P_DELIVERY_ORDER = "delivery-order"
P_RULE_REPLAY = "rule-replay"
P_UNIQUE_CREATION = "unique-creation"
P_CREATION_SNAPSHOT = "creation-snapshot"
P_REQUEST_CONSTANCY = "request-constancy"
P_STATE_MONOTONICITY = "state-monotonicity"
P_WAITING_PROGRESS = "waiting-progress"
P_GRANTED_PROGRESS = "granted-progress"
P_DENIED_UNBOUND = "denied-unbound"
P_BINDING_REQUIRES_GRANT = "binding-requires-grant"
P_REPLY_DICHOTOMY = "reply-dichotomy"
P_GRANT_FEASIBILITY = "grant-feasibility"
P_DENIAL_ORACLE = "denial-oracle"
P_PYRAMID_CHAIN = "pyramid-chain"


@dataclass(frozen=True)
class Violation:
    property_id: str
    trace_index: int
    transition_index: int | None
    witness: str


@dataclass(frozen=True)
class Verdict:
    passed: bool
    violations: tuple[Violation, ...]

    @classmethod
    def from_violations(cls, violations: Sequence[Violation]) -> Verdict:
        ordered = tuple(violations)
        return cls(passed=not ordered, violations=ordered)


@dataclass(frozen=True)
class PyramidVerdict(Verdict):
    behavior: Verdict
    system: Verdict
    service: Verdict

    @property
    def first_failed(self) -> str | None:
        for name, verdict in (
            ("behavior", self.behavior),
            ("system", self.system),
            ("service", self.service),
        ):
            if not verdict.passed:
                return name
        return None


# ---------------------------------------------------------------------------
# Behavior layer

def _replay_selector(recorded: list[Message], workflow: WorkflowDef):
    """A selector that reproduces a recorded selection decision."""

    def selector(request, _workflow, _registry) -> AllocationResult:
        reply = recorded[0]
        if reply.kind is MessageKind.SELECT_REPLY_DENIED:
            return AllocationResult(granted=False)
        ontology_of = dict(workflow.activities)
        per_activity = tuple(
            (
                binding.aa_name,
                CandidateService(
                    candidate_id=binding.candidate_id,
                    ontology=ontology_of.get(binding.aa_name, "unknown"),
                    qos=binding.qos,
                ),
                binding.qos,
            )
            for binding in (reply.assignment or ())
        )
        return AllocationResult(granted=True, per_activity=per_activity)

    return selector


def _state_domain_errors(config: Configuration) -> list[str]:
    errors: list[str] = []
    for _, instance in config.instances():
        if not isinstance(instance.state, InstanceState):
            errors.append(f"instance {instance.client_id!r} has state {instance.state!r}")
        for aa in instance.activities:
            if not isinstance(aa.state, ActivityState):
                errors.append(f"activity {aa.aa_name!r} has state {aa.state!r}")
    return errors


def _all_messages(transition) -> list[Message]:
    return (
        list(transition.source.undelivered)
        + [transition.message]
        + list(transition.emitted)
    )


def check_behavior(trace: Trace, trace_index: int = 0) -> Verdict:
    """Check one trace against the transition rules by replaying every step.

    The selection decision itself is taken as recorded (the selector is free
    to grant or deny at this layer); everything downstream of the decision
    must be reproducible mechanically.
    """
    violations: list[Violation] = []

    def note(property_id: str, index: int | None, witness: str) -> None:
        violations.append(Violation(property_id, trace_index, index, witness))

    for error in configuration_errors(trace.initial):
        note(P_MESSAGE_VOCABULARY, None, error)
    for error in _state_domain_errors(trace.initial):
        note(P_STATE_DOMAIN, None, error)

    for index, transition in enumerate(trace.steps):
        for error in _state_domain_errors(transition.target):
            note(P_STATE_DOMAIN, index, error)
        for error in configuration_errors(transition.target):
            note(P_MESSAGE_VOCABULARY, index, error)
        for message in _all_messages(transition):
            schema_error = message_schema_error(message)
            if schema_error is not None:
                note(P_MESSAGE_VOCABULARY, index, schema_error)

        if transition.message not in transition.source.undelivered:
            note(P_RULE_REPLAY, index, "consumed message was not pending")
            continue
        if transition.message not in engine_mod.deliverable(transition.source):
            note(
                P_DELIVERY_ORDER,
                index,
                "consumed message overtook an older one on its channel",
            )
            continue

        manager = transition.source.actor(WSOIM_ADDRESS)
        workflow = manager.workflow if isinstance(manager, ManagerState) else None
        selector = None
        if transition.rule is RuleId.R5_SS_SELECT:
            if len(transition.emitted) != 1 or transition.emitted[0].kind not in (
                MessageKind.SELECT_REPLY_GRANTED,
                MessageKind.SELECT_REPLY_DENIED,
            ):
                note(P_RULE_REPLAY, index, "selection must emit exactly one reply")
                continue
            if workflow is None:
                note(P_RULE_REPLAY, index, "configuration is missing the instance manager")
                continue
            selector = _replay_selector(list(transition.emitted), workflow)

        try:
            replayed = engine_mod.step(
                transition.source, transition.message, selector=selector
            )
        except Exception as exc:  # corrupted data can break replay anywhere
            note(P_RULE_REPLAY, index, f"replay failed: {exc}")
            continue
        if replayed.rule is not transition.rule:
            note(
                P_RULE_REPLAY,
                index,
                f"recorded rule {transition.rule.value}, replay fired {replayed.rule.value}",
            )
        if replayed.emitted != transition.emitted:
            note(P_RULE_REPLAY, index, "emitted messages differ from replay")
        if replayed.target != transition.target:
            note(P_RULE_REPLAY, index, "target configuration differs from replay")

    return Verdict.from_violations(violations)


# ---------------------------------------------------------------------------
# System layer

def _require_shared_initial(traces: Sequence[Trace]) -> None:
    if not traces:
        return
    first = traces[0].initial
    for trace in traces[1:]:
        if trace.initial != first:
            raise ValueError("trace sets must share one initial configuration")


def _seeded_requests(config: Configuration) -> list[Message]:
    return [m for m in config.undelivered if m.kind is MessageKind.WSO_REQUEST]


def _check_creation(trace, note) -> None:
    for request_msg in _seeded_requests(trace.initial):
        creations = [
            (index, t)
            for index, t in enumerate(trace.steps)
            if t.rule is RuleId.R1_WSOIM_CREATE and t.message == request_msg
        ]
        if len(creations) != 1:
            note(
                P_UNIQUE_CREATION,
                None,
                f"request {request_msg.client_id!r} processed at "
                f"{len(creations)} stages, expected exactly one",
            )
            continue
        index, transition = creations[0]
        instance = get_wsoi(transition.target, request_msg.client_id)
        if instance is None:
            note(P_CREATION_SNAPSHOT, index, "creation produced no instance")
            continue
        problems: list[str] = []
        request = instance.request
        if (
            request.client_id != request_msg.client_id
            or request.ontology != request_msg.ontology
            or request.qos != request_msg.qos
            or request.input_parameters != (request_msg.params or ())
        ):
            problems.append("stored request differs from the incoming request")
        if instance.state is not InstanceState.WAITING:
            problems.append(f"state is {instance.state.value}, expected Waiting")
        if instance.output_parameters is not None:
            problems.append("outputs are set at creation")
        if not instance.activities:
            problems.append("instance has no activities")
        for aa in instance.activities:
            if aa.qos is not None or aa.input_parameters is not None or aa.output_parameters is not None:
                problems.append(f"activity {aa.aa_name!r} carries data at creation")
            if aa.state is not ActivityState.PREPARING:
                problems.append(f"activity {aa.aa_name!r} is {aa.state.value}, expected Preparing")
            if aa.ws.bound:
                problems.append(f"activity {aa.aa_name!r} is bound at creation")
            if aa.wsoi_id != request_msg.client_id:
                problems.append(f"activity {aa.aa_name!r} names owner {aa.wsoi_id!r}")
        for problem in problems:
            note(P_CREATION_SNAPSHOT, index, problem)


def _check_constancy_and_monotonicity(trace, note) -> None:
    configs = trace.configurations()
    for index in range(len(trace.steps)):
        before, after = configs[index], configs[index + 1]
        for _, prior in before.instances():
            cid = prior.client_id
            current = get_wsoi(after, cid)
            if current is None:
                note(P_REQUEST_CONSTANCY, index, f"instance {cid!r} disappeared")
                continue
            if current.request != prior.request:
                note(P_REQUEST_CONSTANCY, index, f"request of {cid!r} changed")
            if set(current.activity_names()) != set(prior.activity_names()):
                note(P_REQUEST_CONSTANCY, index, f"activity set of {cid!r} changed")
            if not instance_state_can_follow(prior.state, current.state):
                note(
                    P_STATE_MONOTONICITY,
                    index,
                    f"instance {cid!r} moved {prior.state.value} -> {current.state.value}",
                )
            for prior_aa in prior.activities:
                for current_aa in current.activities:
                    if current_aa.aa_name != prior_aa.aa_name:
                        continue
                    if not activity_state_can_follow(prior_aa.state, current_aa.state):
                        note(
                            P_STATE_MONOTONICITY,
                            index,
                            f"activity {prior_aa.aa_name!r} of {cid!r} moved "
                            f"{prior_aa.state.value} -> {current_aa.state.value}",
                        )


def _check_snapshot_constraints(trace, note) -> None:
    configs = trace.configurations()
    for index, config in enumerate(configs):
        position = None if index == 0 else index - 1
        for _, instance in config.instances():
            cid = instance.client_id
            bound = [aa.aa_name for aa in instance.activities if aa.ws.bound]
            if instance.state is InstanceState.DENIED and bound:
                note(
                    P_DENIED_UNBOUND,
                    position,
                    f"denied instance {cid!r} holds bindings {bound}",
                )
            if bound and instance.state not in (
                InstanceState.GRANTED,
                InstanceState.SERVICING,
                InstanceState.COMPLETED,
            ):
                note(
                    P_BINDING_REQUIRES_GRANT,
                    position,
                    f"instance {cid!r} is {instance.state.value} with bindings {bound}",
                )


def _check_progress(trace, note) -> None:
    final = trace.final
    ever_granted: set[str] = set()
    ever_servicing: set[str] = set()
    for config in trace.configurations():
        for _, instance in config.instances():
            if instance.state is InstanceState.GRANTED:
                ever_granted.add(instance.client_id)
            if instance.state is InstanceState.SERVICING:
                ever_servicing.add(instance.client_id)
    for _, instance in final.instances():
        cid = instance.client_id
        if instance.state is InstanceState.WAITING:
            note(P_WAITING_PROGRESS, None, f"instance {cid!r} never left Waiting")
        if cid in ever_granted:
            if instance.state is not InstanceState.COMPLETED:
                note(
                    P_GRANTED_PROGRESS,
                    None,
                    f"granted instance {cid!r} ended {instance.state.value}",
                )
            elif cid not in ever_servicing:
                note(P_GRANTED_PROGRESS, None, f"instance {cid!r} completed without servicing")


def check_system(traces: Sequence[Trace]) -> Verdict:
    """Check instance-lifecycle and binding-state constraints over a trace set.

    All traces must start from the same initial configuration.
    """
    _require_shared_initial(traces)
    violations: list[Violation] = []
    for trace_index, trace in enumerate(traces):
        def note(property_id: str, transition_index: int | None, witness: str) -> None:
            violations.append(Violation(property_id, trace_index, transition_index, witness))

        _check_creation(trace, note)
        _check_constancy_and_monotonicity(trace, note)
        _check_snapshot_constraints(trace, note)
        _check_progress(trace, note)
    return Verdict.from_violations(violations)


# ---------------------------------------------------------------------------
# Service layer

def _oracle_feasible(
    request_qos: QoSSpec, ontologies: Sequence[str], registry: Registry
) -> bool:
    """Independent brute-force feasibility check over all candidate combos."""
    slots = [registry.query(ontology) for ontology in ontologies]
    if any(not slot for slot in slots):
        return False
    for combo in itertools.product(*slots):
        worst = max(c.qos.response_time_ms for c in combo)
        total = sum(c.qos.cost_cents for c in combo)
        if worst <= request_qos.response_time_ms and total <= request_qos.cost_cents:
            return True
    return False


def _client_replies(trace: Trace, client_id: str) -> dict[MessageKind, list[int]]:
    replies: dict[MessageKind, list[int]] = {
        MessageKind.GRANTED_REPLY: [],
        MessageKind.COMPLETED_REPLY: [],
        MessageKind.DENIED_REPLY: [],
    }
    for index, transition in enumerate(trace.steps):
        for message in transition.emitted:
            if message.kind in replies and message.client_id == client_id:
                replies[message.kind].append(index)
    return replies


def check_service(traces: Sequence[Trace]) -> Verdict:
    """Check the acceptance/rejection dichotomy and its QoS obligations.

    Every seeded request must, in every trace, be either accepted exactly once
    (granted and later completed, with the final bound services aggregating
    within the requested budget) or rejected exactly once (with the rejection
    re-verified against the brute-force selection oracle).
    """
    _require_shared_initial(traces)
    violations: list[Violation] = []
    for trace_index, trace in enumerate(traces):
        def note(property_id: str, transition_index: int | None, witness: str) -> None:
            violations.append(Violation(property_id, trace_index, transition_index, witness))

        manager = trace.initial.actor(WSOIM_ADDRESS)
        selector_state = trace.initial.actor(SS_ADDRESS)
        workflow = manager.workflow if isinstance(manager, ManagerState) else None
        registry = selector_state.registry if isinstance(selector_state, SelectorState) else None

        for request_msg in _seeded_requests(trace.initial):
            cid = request_msg.client_id
            replies = _client_replies(trace, cid)
            granted = len(replies[MessageKind.GRANTED_REPLY])
            completed = len(replies[MessageKind.COMPLETED_REPLY])
            denied = len(replies[MessageKind.DENIED_REPLY])
            accepted = (granted, completed, denied) == (1, 1, 0)
            rejected = (granted, completed, denied) == (0, 0, 1)
            if not (accepted ^ rejected):
                note(
                    P_REPLY_DICHOTOMY,
                    None,
                    f"client {cid!r} saw granted={granted} completed={completed} "
                    f"denied={denied}; expected one acceptance xor one rejection",
                )
                continue
            if accepted:
                instance = get_wsoi(trace.final, cid)
                if instance is None:
                    note(P_GRANT_FEASIBILITY, None, f"no final instance for {cid!r}")
                    continue
                bound = [aa.ws.advertised_qos for aa in instance.activities if aa.ws.bound]
                if len(bound) != len(instance.activities):
                    note(
                        P_GRANT_FEASIBILITY,
                        None,
                        f"accepted instance {cid!r} has unbound activities",
                    )
                    continue
                worst = max(q.response_time_ms for q in bound)
                total = sum(q.cost_cents for q in bound)
                budget = request_msg.qos
                if worst > budget.response_time_ms or total > budget.cost_cents:
                    note(
                        P_GRANT_FEASIBILITY,
                        replies[MessageKind.COMPLETED_REPLY][0],
                        f"client {cid!r} accepted with aggregate ({worst}ms,{total}c) "
                        f"over budget ({budget.response_time_ms}ms,{budget.cost_cents}c)",
                    )
            else:
                rejection_index = replies[MessageKind.DENIED_REPLY][0]
                if workflow is None or registry is None:
                    note(P_DENIAL_ORACLE, rejection_index, "missing manager or selector state")
                    continue
                ontologies = [ontology for _, ontology in workflow.activities]
                if _oracle_feasible(request_msg.qos, ontologies, registry):
                    note(
                        P_DENIAL_ORACLE,
                        rejection_index,
                        f"client {cid!r} was rejected although a feasible "
                        f"assignment exists",
                    )
    return Verdict.from_violations(violations)


# ---------------------------------------------------------------------------
# Pyramid

def check_pyramid(traces: Sequence[Trace]) -> PyramidVerdict:
    """Run all three layers and report whether the refinement chain holds.

    A lower layer passing while a higher one fails is itself reported: it
    witnesses that the trace set breaks one of the refinement implications.
    """
    behavior_violations: list[Violation] = []
    for trace_index, trace in enumerate(traces):
        behavior_violations.extend(check_behavior(trace, trace_index).violations)
    behavior = Verdict.from_violations(behavior_violations)
    system = check_system(traces)
    service = check_service(traces)

    chain: list[Violation] = []
    if behavior.passed and not system.passed:
        chain.append(
            Violation(
                P_PYRAMID_CHAIN,
                0,
                None,
                "behavior holds but the system constraints fail",
            )
        )
    if system.passed and not service.passed:
        chain.append(
            Violation(
                P_PYRAMID_CHAIN,
                0,
                None,
                "system constraints hold but the service guarantee fails",
            )
        )
    combined = behavior.violations + system.violations + service.violations + tuple(chain)
    return PyramidVerdict(
        passed=behavior.passed and system.passed and service.passed,
        violations=combined,
        behavior=behavior,
        system=system,
        service=service,
    )
