"""Transition rules, seeded execution, and exhaustive interleaving exploration.

Each transition consumes exactly one undelivered message under exactly one
rule.  Delivery is asynchronous with one causal constraint: messages between
the same (sender, receiver) pair are delivered in emission order, which is
what keeps late acknowledgements from outliving a completed instance.
Replies addressed to a client are delivered synchronously into the client's
record, so terminal configurations always drain the message pool.

The manager and selector are stateless service actors; their constant
snapshots carry the workflow definition and the registry, which makes every
configuration self-contained for replay.
"""

from __future__ import annotations

import hashlib
import json
import random
from typing import Callable, Iterator, Sequence

from .model import (
    ActivityActor,
    ActivityState,
    AllocatedBinding,
    ClientRecord,
    Configuration,
    InstanceState,
    ManagerState,
    Message,
    MessageKind,
    Params,
    Role,
    RuleId,
    SelectorState,
    SS_ADDRESS,
    Trace,
    Transition,
    WSOIM_ADDRESS,
    WorkflowDef,
    WsBinding,
    WsoInstance,
    WsoRequest,
    activity_address,
    address_aa_name,
    address_role,
    client_address,
    get_aa,
    get_wsoi,
    instance_address,
    message_schema_error,
    params_dict,
    service_address,
)
from .registry import Registry
from .selection import AllocationResult, map_input_parameters, map_output_parameters, qos_allocate

DEFAULT_MAX_TRACES = 100_000

# How the selector resolves one selection request.  Injected so that replay
# can reproduce a recorded decision and tests can install faulty selectors.
Selector = Callable[[WsoRequest, WorkflowDef, Registry], AllocationResult]


class EngineError(Exception):
    """Base class for rule-engine failures."""


class MessageNotPendingError(EngineError):
    """The message to consume is not in the configuration's pool."""


class NotDeliverableError(EngineError):
    """An older message for the same sender/receiver pair is still pending."""


class NoRuleError(EngineError):
    """No transition rule matches the message/state pair."""


class AmbiguousRuleError(EngineError):
    """More than one rule matched; rule determinism is broken."""


class StateSpaceLimitError(EngineError):
    """Exploration exceeded its transition or trace budget."""


def default_selector(request: WsoRequest, workflow: WorkflowDef, registry: Registry) -> AllocationResult:
    return qos_allocate(request.qos, workflow.activities, registry.candidates())


# ---------------------------------------------------------------------------
# Rule triggers
#
# Static trigger table: (rule, receiver role, message kind, receiver states).
# R4a and R4b share a trigger and are split by a complementary runtime
# condition (all activities returned and no other notification pending).

RULE_TRIGGERS: tuple[tuple[RuleId, Role, MessageKind, frozenset | None], ...] = (
    (RuleId.R1_WSOIM_CREATE, Role.MANAGER, MessageKind.WSO_REQUEST, None),
    (RuleId.R5_SS_SELECT, Role.SELECTOR, MessageKind.SELECT, None),
    (
        RuleId.R2A_SELECT_DENIED,
        Role.INSTANCE,
        MessageKind.SELECT_REPLY_DENIED,
        frozenset({InstanceState.WAITING}),
    ),
    (
        RuleId.R2B_SELECT_GRANTED,
        Role.INSTANCE,
        MessageKind.SELECT_REPLY_GRANTED,
        frozenset({InstanceState.WAITING}),
    ),
    (
        RuleId.R3_INVOKE_ACK,
        Role.INSTANCE,
        MessageKind.INVOKE_ACK,
        frozenset({InstanceState.GRANTED, InstanceState.SERVICING}),
    ),
    (
        RuleId.R4A_NOTIFY_ALL_RETURNED,
        Role.INSTANCE,
        MessageKind.NOTIFY,
        frozenset({InstanceState.SERVICING}),
    ),
    (
        RuleId.R4B_NOTIFY_SOME_PENDING,
        Role.INSTANCE,
        MessageKind.NOTIFY,
        frozenset({InstanceState.SERVICING}),
    ),
    (
        RuleId.R6_AA_INVOKE,
        Role.ACTIVITY,
        MessageKind.INVOKE,
        frozenset({ActivityState.PREPARING}),
    ),
    (
        RuleId.R7_AA_RETURN,
        Role.ACTIVITY,
        MessageKind.INVOKE_REPLY,
        frozenset({ActivityState.INVOKING}),
    ),
    (RuleId.R8_WS_INVOKE, Role.SERVICE, MessageKind.INVOKE_WS, None),
)


def _receiver_state(config: Configuration, message: Message):
    role = address_role(message.receiver)
    if role is Role.INSTANCE:
        instance = get_wsoi(config, message.client_id)
        return None if instance is None else instance.state
    if role is Role.ACTIVITY:
        instance = get_wsoi(config, message.client_id)
        if instance is None:
            return None
        aa_name = address_aa_name(message.receiver)
        for aa in instance.activities:
            if aa.aa_name == aa_name:
                return aa.state
        return None
    return None


def _completion_ready(config: Configuration, message: Message) -> bool:
    """True when this notification is the one that completes the instance:
    every activity has returned and no other notification for the instance
    is still pending."""
    instance = get_wsoi(config, message.client_id)
    if instance is None:
        return False
    if any(aa.state is not ActivityState.RETURNED for aa in instance.activities):
        return False
    receiver = instance_address(message.client_id)
    others = [
        m
        for m in config.undelivered
        if m.kind is MessageKind.NOTIFY and m.receiver == receiver and m != message
    ]
    return not others


def matching_rules(config: Configuration, message: Message) -> list[RuleId]:
    """All rules whose trigger and condition match; at most one by design."""
    role = address_role(message.receiver)
    state = _receiver_state(config, message)
    matched: list[RuleId] = []
    for rule, trigger_role, kind, states in RULE_TRIGGERS:
        if trigger_role is not role or kind is not message.kind:
            continue
        if states is not None and state not in states:
            continue
        if rule is RuleId.R4A_NOTIFY_ALL_RETURNED and not _completion_ready(config, message):
            continue
        if rule is RuleId.R4B_NOTIFY_SOME_PENDING and _completion_ready(config, message):
            continue
        matched.append(rule)
    return matched


def rule_for(config: Configuration, message: Message) -> RuleId:
    matched = matching_rules(config, message)
    if not matched:
        state = _receiver_state(config, message)
        raise NoRuleError(
            f"no rule consumes {message.kind.value} at {message.receiver!r} "
            f"(state {getattr(state, 'value', state)})"
        )
    if len(matched) > 1:
        raise AmbiguousRuleError(f"rules {matched} all match {message.kind.value}")
    return matched[0]


def deliverable(config: Configuration) -> list[Message]:
    """Pool messages whose (sender, receiver) channel has nothing older pending."""
    seen: set[tuple[str, str]] = set()
    ready: list[Message] = []
    for message in config.undelivered:
        channel = (message.sender, message.receiver)
        if channel not in seen:
            ready.append(message)
            seen.add(channel)
    return ready


def enabled(config: Configuration) -> list[tuple[Message, RuleId]]:
    """Every deliverable message paired with the unique rule it would fire,
    in deterministic order."""
    pairs = [(message, rule_for(config, message)) for message in deliverable(config)]
    pairs.sort(key=lambda pair: pair[0].sort_key())
    return pairs


# ---------------------------------------------------------------------------
# Rule application

def _ws_output_digest(inputs: Params | None) -> str:
    payload = json.dumps(params_dict(inputs or ()), sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


def _manager_workflow(config: Configuration) -> WorkflowDef:
    snapshot = config.actor(WSOIM_ADDRESS)
    if not isinstance(snapshot, ManagerState):
        raise EngineError("configuration is missing the instance manager")
    return snapshot.workflow


def _selector_registry(config: Configuration) -> Registry:
    snapshot = config.actor(SS_ADDRESS)
    if not isinstance(snapshot, SelectorState):
        raise EngineError("configuration is missing the service selector")
    return snapshot.registry


def _apply_r1(config: Configuration, message: Message, selector: Selector):
    workflow = _manager_workflow(config)
    if message.ontology != workflow.ontology:
        raise NoRuleError(
            f"manager instantiates {workflow.ontology!r}, request asks for {message.ontology!r}"
        )
    if get_wsoi(config, message.client_id) is not None:
        raise NoRuleError(f"instance for client {message.client_id!r} already exists")
    request = WsoRequest(
        client_id=message.client_id,
        ontology=message.ontology,
        input_parameters=message.params or (),
        qos=message.qos,
    )
    instance = WsoInstance.create(request, workflow.activity_names())
    select = Message(
        kind=MessageKind.SELECT,
        sender=instance_address(request.client_id),
        receiver=SS_ADDRESS,
        client_id=request.client_id,
        ontology=request.ontology,
        qos=request.qos,
    )
    changed = {instance_address(request.client_id): instance}
    return changed, [select]


def _apply_r5(config: Configuration, message: Message, selector: Selector):
    instance = get_wsoi(config, message.client_id)
    if instance is None:
        raise NoRuleError(f"selection requested for unknown client {message.client_id!r}")
    result = selector(instance.request, _manager_workflow(config), _selector_registry(config))
    receiver = instance_address(message.client_id)
    if result.granted:
        assignment = tuple(
            AllocatedBinding(aa_name=aa_name, candidate_id=candidate.candidate_id, qos=qos)
            for aa_name, candidate, qos in result.per_activity
        )
        reply = Message(
            kind=MessageKind.SELECT_REPLY_GRANTED,
            sender=SS_ADDRESS,
            receiver=receiver,
            client_id=message.client_id,
            assignment=assignment,
        )
    else:
        reply = Message(
            kind=MessageKind.SELECT_REPLY_DENIED,
            sender=SS_ADDRESS,
            receiver=receiver,
            client_id=message.client_id,
        )
    return {}, [reply]


def _apply_r2a(config: Configuration, message: Message, selector: Selector):
    instance = get_wsoi(config, message.client_id)
    denied = WsoInstance(
        request=instance.request,
        state=InstanceState.DENIED,
        activities=instance.activities,
        output_parameters=None,
    )
    reply = Message(
        kind=MessageKind.DENIED_REPLY,
        sender=instance_address(message.client_id),
        receiver=client_address(message.client_id),
        client_id=message.client_id,
        ontology=instance.request.ontology,
        qos=instance.request.qos,
    )
    return {instance_address(message.client_id): denied}, [reply]


def _apply_r2b(config: Configuration, message: Message, selector: Selector):
    instance = get_wsoi(config, message.client_id)
    allocated = {binding.aa_name: binding for binding in message.assignment}
    if len(allocated) != len(message.assignment) or set(allocated) != set(
        instance.activity_names()
    ):
        raise NoRuleError(
            f"selection reply for {message.client_id!r} does not cover the activity set"
        )
    inputs = map_input_parameters(
        instance.request.input_parameters, instance.activity_names()
    )
    activities = tuple(
        ActivityActor(
            aa_name=aa.aa_name,
            wsoi_id=aa.wsoi_id,
            qos=allocated[aa.aa_name].qos,
            input_parameters=inputs[aa.aa_name],
            output_parameters=None,
            state=ActivityState.PREPARING,
            ws=WsBinding(
                wsoi_id=aa.wsoi_id,
                aa_name=aa.aa_name,
                endpoint=allocated[aa.aa_name].candidate_id,
                advertised_qos=allocated[aa.aa_name].qos,
            ),
        )
        for aa in instance.activities
    )
    granted = WsoInstance(
        request=instance.request,
        state=InstanceState.GRANTED,
        activities=activities,
        output_parameters=None,
    )
    cid = message.client_id
    emitted = [
        Message(
            kind=MessageKind.GRANTED_REPLY,
            sender=instance_address(cid),
            receiver=client_address(cid),
            client_id=cid,
            ontology=instance.request.ontology,
            qos=instance.request.qos,
        )
    ]
    emitted.extend(
        Message(
            kind=MessageKind.INVOKE,
            sender=instance_address(cid),
            receiver=activity_address(cid, aa.aa_name),
            client_id=cid,
        )
        for aa in granted.activities
    )
    return {instance_address(cid): granted}, emitted


def _apply_r3(config: Configuration, message: Message, selector: Selector):
    instance = get_wsoi(config, message.client_id)
    servicing = WsoInstance(
        request=instance.request,
        state=InstanceState.SERVICING,
        activities=instance.activities,
        output_parameters=None,
    )
    return {instance_address(message.client_id): servicing}, []


def _apply_r4a(config: Configuration, message: Message, selector: Selector):
    instance = get_wsoi(config, message.client_id)
    outputs = map_output_parameters(
        {aa.aa_name: aa.output_parameters for aa in instance.activities}
    )
    completed = WsoInstance(
        request=instance.request,
        state=InstanceState.COMPLETED,
        activities=instance.activities,
        output_parameters=outputs,
    )
    reply = Message(
        kind=MessageKind.COMPLETED_REPLY,
        sender=instance_address(message.client_id),
        receiver=client_address(message.client_id),
        client_id=message.client_id,
        ontology=instance.request.ontology,
        qos=instance.request.qos,
        params=outputs,
    )
    return {instance_address(message.client_id): completed}, [reply]


def _apply_r4b(config: Configuration, message: Message, selector: Selector):
    return {}, []


def _apply_r6(config: Configuration, message: Message, selector: Selector):
    instance = get_wsoi(config, message.client_id)
    aa = get_aa(instance, address_aa_name(message.receiver))
    invoking = ActivityActor(
        aa_name=aa.aa_name,
        wsoi_id=aa.wsoi_id,
        qos=aa.qos,
        input_parameters=aa.input_parameters,
        output_parameters=None,
        state=ActivityState.INVOKING,
        ws=aa.ws,
    )
    cid = message.client_id
    ack = Message(
        kind=MessageKind.INVOKE_ACK,
        sender=activity_address(cid, aa.aa_name),
        receiver=instance_address(cid),
        client_id=cid,
    )
    invoke_ws = Message(
        kind=MessageKind.INVOKE_WS,
        sender=activity_address(cid, aa.aa_name),
        receiver=service_address(cid, aa.aa_name),
        client_id=cid,
        params=aa.input_parameters or (),
    )
    return {instance_address(cid): instance.with_activity(invoking)}, [ack, invoke_ws]


def _apply_r7(config: Configuration, message: Message, selector: Selector):
    instance = get_wsoi(config, message.client_id)
    aa = get_aa(instance, address_aa_name(message.receiver))
    returned = ActivityActor(
        aa_name=aa.aa_name,
        wsoi_id=aa.wsoi_id,
        qos=aa.qos,
        input_parameters=aa.input_parameters,
        output_parameters=message.params,
        state=ActivityState.RETURNED,
        ws=aa.ws,
    )
    cid = message.client_id
    notify = Message(
        kind=MessageKind.NOTIFY,
        sender=activity_address(cid, aa.aa_name),
        receiver=instance_address(cid),
        client_id=cid,
        aa_name=aa.aa_name,
        aa_state=ActivityState.RETURNED,
    )
    return {instance_address(cid): instance.with_activity(returned)}, [notify]


def _apply_r8(config: Configuration, message: Message, selector: Selector):
    instance = get_wsoi(config, message.client_id)
    if instance is None:
        raise NoRuleError(f"service invoked for unknown client {message.client_id!r}")
    aa = get_aa(instance, address_aa_name(message.receiver))
    if not aa.ws.bound:
        raise NoRuleError(f"activity {aa.aa_name!r} has no bound service")
    outputs = (("result", f"{aa.ws.endpoint}:{_ws_output_digest(message.params)}"),)
    reply = Message(
        kind=MessageKind.INVOKE_REPLY,
        sender=service_address(message.client_id, aa.aa_name),
        receiver=activity_address(message.client_id, aa.aa_name),
        client_id=message.client_id,
        params=outputs,
    )
    return {}, [reply]


_RULE_APPLIERS = {
    RuleId.R1_WSOIM_CREATE: _apply_r1,
    RuleId.R5_SS_SELECT: _apply_r5,
    RuleId.R2A_SELECT_DENIED: _apply_r2a,
    RuleId.R2B_SELECT_GRANTED: _apply_r2b,
    RuleId.R3_INVOKE_ACK: _apply_r3,
    RuleId.R4A_NOTIFY_ALL_RETURNED: _apply_r4a,
    RuleId.R4B_NOTIFY_SOME_PENDING: _apply_r4b,
    RuleId.R6_AA_INVOKE: _apply_r6,
    RuleId.R7_AA_RETURN: _apply_r7,
    RuleId.R8_WS_INVOKE: _apply_r8,
}


def _remove_first(pool: tuple[Message, ...], message: Message) -> tuple[Message, ...]:
    for index, candidate in enumerate(pool):
        if candidate == message:
            return pool[:index] + pool[index + 1 :]
    raise MessageNotPendingError(f"{message.kind.value} is not in the undelivered pool")


def step(config: Configuration, message: Message, *, selector: Selector | None = None) -> Transition:
    """Consume one message under the unique matching rule.

    Returns the transition to the new configuration.  Client-bound replies in
    the rule's emissions are delivered synchronously into the client record;
    everything else joins the pool in emission order.
    """
    if selector is None:
        selector = default_selector
    if message not in config.undelivered:
        raise MessageNotPendingError(f"{message.kind.value} is not in the undelivered pool")
    if message not in deliverable(config):
        raise NotDeliverableError(
            f"an older message on channel {message.sender!r}->{message.receiver!r} is pending"
        )
    rule = rule_for(config, message)
    changed, emitted = _RULE_APPLIERS[rule](config, message, selector)

    for out in emitted:
        schema_error = message_schema_error(out)
        if schema_error is not None:
            raise EngineError(f"rule {rule.value} emitted a bad message: {schema_error}")

    target = config
    for address, snapshot in changed.items():
        target = target.with_actor(address, snapshot)
    pool = _remove_first(target.undelivered, message)
    for out in emitted:
        if address_role(out.receiver) is Role.CLIENT:
            record = target.actor(out.receiver)
            if not isinstance(record, ClientRecord):
                raise EngineError(f"no client record at {out.receiver!r}")
            target = target.with_actor(out.receiver, record.with_received(out))
        else:
            pool = pool + (out,)
    target = Configuration(actors=target.actors, undelivered=pool)
    return Transition(source=config, rule=rule, message=message, target=target, emitted=tuple(emitted))


# ---------------------------------------------------------------------------
# Execution

def initial_configuration(
    workflow: WorkflowDef, registry: Registry, requests: Sequence[WsoRequest]
) -> Configuration:
    """Seed a configuration with the service actors, one client record per
    request, and the undelivered request messages (ordered by client id)."""
    ids = [request.client_id for request in requests]
    if len(ids) != len(set(ids)):
        raise ValueError("client ids must be unique across requests")
    for request in requests:
        if request.ontology != workflow.ontology:
            raise ValueError(
                f"request {request.client_id!r} asks for {request.ontology!r}, "
                f"workflow defines {workflow.ontology!r}"
            )
    actors: list[tuple[str, object]] = [
        (WSOIM_ADDRESS, ManagerState(workflow)),
        (SS_ADDRESS, SelectorState(registry)),
    ]
    actors.extend(
        (client_address(request.client_id), ClientRecord(request.client_id))
        for request in requests
    )
    pool = tuple(
        Message(
            kind=MessageKind.WSO_REQUEST,
            sender=client_address(request.client_id),
            receiver=WSOIM_ADDRESS,
            client_id=request.client_id,
            ontology=request.ontology,
            qos=request.qos,
            params=request.input_parameters,
        )
        for request in sorted(requests, key=lambda r: r.client_id)
    )
    return Configuration(actors=tuple(actors), undelivered=pool)


def _check_terminal(config: Configuration) -> None:
    if config.undelivered:
        raise EngineError("run ended with undelivered messages")
    for _, instance in config.instances():
        if instance.state not in (InstanceState.COMPLETED, InstanceState.DENIED):
            raise EngineError(
                f"run ended with instance {instance.client_id!r} in {instance.state.value}"
            )


def run(
    workflow: WorkflowDef,
    registry: Registry,
    requests: Sequence[WsoRequest],
    seed: int,
    *,
    selector: Selector | None = None,
) -> Trace:
    """Drive one execution to termination, picking among enabled messages
    pseudo-randomly by seed.  Equal inputs and seed give identical traces."""
    rng = random.Random(seed)
    initial = initial_configuration(workflow, registry, requests)
    config = initial
    steps: list[Transition] = []
    while True:
        options = enabled(config)
        if not options:
            break
        message, _ = options[rng.randrange(len(options))]
        transition = step(config, message, selector=selector)
        steps.append(transition)
        config = transition.target
    _check_terminal(config)
    return Trace(initial=initial, steps=steps)


def explore(
    workflow: WorkflowDef,
    registry: Registry,
    requests: Sequence[WsoRequest],
    max_transitions: int,
    *,
    max_traces: int = DEFAULT_MAX_TRACES,
    selector: Selector | None = None,
) -> tuple[Trace, ...]:
    """All maximal traces reachable by any interleaving of enabled messages.

    Traces are deduplicated by their (rule, message) label sequence and
    returned in deterministic order.  Exceeding max_transitions on any path,
    or max_traces overall, raises StateSpaceLimitError.
    """
    if max_transitions < 1:
        raise ValueError("max_transitions must be positive")
    initial = initial_configuration(workflow, registry, requests)
    collected: dict[tuple, Trace] = {}

    def collect(prefix: list[Transition]) -> None:
        trace = Trace(initial=initial, steps=tuple(prefix))
        collected.setdefault(trace.labels(), trace)
        if len(collected) > max_traces:
            raise StateSpaceLimitError(f"more than {max_traces} maximal traces")

    # Depth-first search with an explicit stack; prefix mirrors the path to
    # the configuration on top of the stack.
    prefix: list[Transition] = []
    options = enabled(initial)
    if not options:
        collect(prefix)
        return tuple(collected.values())
    stack: list[tuple[Configuration, Iterator[tuple[Message, RuleId]]]] = [
        (initial, iter(options))
    ]
    while stack:
        config, pending = stack[-1]
        entry = next(pending, None)
        if entry is None:
            stack.pop()
            if prefix:
                prefix.pop()
            continue
        message, _ = entry
        transition = step(config, message, selector=selector)
        prefix.append(transition)
        child_options = enabled(transition.target)
        if not child_options:
            collect(prefix)
            prefix.pop()
        elif len(prefix) >= max_transitions:
            raise StateSpaceLimitError(
                f"a path exceeded {max_transitions} transitions without terminating"
            )
        else:
            stack.append((transition.target, iter(child_options)))
    for trace in collected.values():
        _check_terminal(trace.final)
    return tuple(collected.values())
