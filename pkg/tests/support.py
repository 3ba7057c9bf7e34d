"""Independent oracles and mutation builders used by the test suite.

Everything here deliberately re-implements logic the library also contains:
the oracles must stay independent of the paths they check.
"""

from __future__ import annotations

import itertools
from functools import lru_cache

from qosorch import engine
from qosorch.model import (
    ActivityActor,
    ActivityState,
    AllocatedBinding,
    ClientRecord,
    Configuration,
    InstanceState,
    Message,
    MessageKind,
    QoSSpec,
    RuleId,
    SS_ADDRESS,
    Trace,
    Transition,
    WsBinding,
    WsoInstance,
    activity_address,
    client_address,
    get_wsoi,
    instance_address,
)
from qosorch.selection import AllocationResult, map_input_parameters


# ---------------------------------------------------------------------------
# Selection oracle: plain exhaustive search, no tie-breaking cleverness.

def oracle_feasible_combos(budget: QoSSpec, slots):
    """Yield every candidate combination that fits the budget."""
    for combo in itertools.product(*slots):
        worst = max(c.qos.response_time_ms for c in combo)
        total = sum(c.qos.cost_cents for c in combo)
        if worst <= budget.response_time_ms and total <= budget.cost_cents:
            yield combo, (total, worst)


def oracle_any_feasible(budget: QoSSpec, slots) -> bool:
    for _ in oracle_feasible_combos(budget, slots):
        return True
    return False


def oracle_min_cost(budget: QoSSpec, slots) -> int | None:
    costs = [cost for _, (cost, _) in oracle_feasible_combos(budget, slots)]
    return min(costs) if costs else None


# ---------------------------------------------------------------------------
# Interleaving oracle: count linear extensions of the per-request event posets.
#
# A feasible request contributes the chain create < select < grant followed,
# per activity, by events invoke(I) < ws-call(W) < ws-reply(P) plus ack(A) and
# notify(N) with I < A, P < N, and A < N (same-channel delivery order).  A
# denied request contributes only the chain create < select < deny.

def count_interleavings(request_shapes: list[tuple[int, bool]]) -> int:
    events: list[str] = []
    edges: list[tuple[str, str]] = []
    for idx, (n_activities, feasible) in enumerate(request_shapes):
        r1, r5, r2 = f"{idx}.r1", f"{idx}.r5", f"{idx}.r2"
        events += [r1, r5, r2]
        edges += [(r1, r5), (r5, r2)]
        if feasible:
            for k in range(n_activities):
                i, w, p, a, n = (f"{idx}.{k}.{tag}" for tag in "IWPAN")
                events += [i, w, p, a, n]
                edges += [(r2, i), (i, w), (w, p), (i, a), (p, n), (a, n)]
    bit = {event: 1 << j for j, event in enumerate(events)}
    preds: dict[str, int] = {event: 0 for event in events}
    for x, y in edges:
        preds[y] |= bit[x]
    full = (1 << len(events)) - 1

    @lru_cache(maxsize=None)
    def extensions(done: int) -> int:
        if done == full:
            return 1
        total = 0
        for event in events:
            b = bit[event]
            if done & b or (preds[event] & done) != preds[event]:
                continue
            total += extensions(done | b)
        return total

    count = extensions(0)
    extensions.cache_clear()
    return count


# ---------------------------------------------------------------------------
# Mutant selectors

def always_grant_selector(request, workflow, registry) -> AllocationResult:
    """Grant with the first candidate per ontology, ignoring the budget."""
    per_activity = []
    for aa_name, ontology in workflow.activities:
        candidate = registry.query(ontology)[0]
        per_activity.append((aa_name, candidate, candidate.qos))
    return AllocationResult(granted=True, per_activity=tuple(per_activity))


def always_deny_selector(request, workflow, registry) -> AllocationResult:
    return AllocationResult(granted=False)


# ---------------------------------------------------------------------------
# A forged trace in which a denied instance is later granted and serviced.

def denied_then_granted_trace(workflow, registry, requests) -> Trace:
    base = engine.run(workflow, registry, requests, seed=0)
    assert [t.rule for t in base.steps] == [
        RuleId.R1_WSOIM_CREATE,
        RuleId.R5_SS_SELECT,
        RuleId.R2A_SELECT_DENIED,
    ], "the base run must deny"
    t1, t2, t3 = base.steps
    cid = requests[0].client_id

    assignment = tuple(
        AllocatedBinding(
            aa_name=aa_name,
            candidate_id=registry.query(ontology)[0].candidate_id,
            qos=registry.query(ontology)[0].qos,
        )
        for aa_name, ontology in workflow.activities
    )
    reply = Message(
        kind=MessageKind.SELECT_REPLY_GRANTED,
        sender=SS_ADDRESS,
        receiver=instance_address(cid),
        client_id=cid,
        assignment=assignment,
    )

    # Rebuild the denial transition so the forged reply sits in its target pool.
    spliced_target = Configuration(
        actors=t3.target.actors, undelivered=t3.target.undelivered + (reply,)
    )
    t3_spliced = Transition(
        source=t3.source,
        rule=t3.rule,
        message=t3.message,
        target=spliced_target,
        emitted=t3.emitted,
    )

    # Forge the grant from the Denied state.
    denied = get_wsoi(spliced_target, cid)
    allocated = {binding.aa_name: binding for binding in assignment}
    inputs = map_input_parameters(denied.request.input_parameters, denied.activity_names())
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
        for aa in denied.activities
    )
    granted = WsoInstance(
        request=denied.request, state=InstanceState.GRANTED, activities=activities
    )
    granted_reply = Message(
        kind=MessageKind.GRANTED_REPLY,
        sender=instance_address(cid),
        receiver=client_address(cid),
        client_id=cid,
        ontology=denied.request.ontology,
        qos=denied.request.qos,
    )
    invokes = tuple(
        Message(
            kind=MessageKind.INVOKE,
            sender=instance_address(cid),
            receiver=activity_address(cid, aa.aa_name),
            client_id=cid,
        )
        for aa in activities
    )
    record = spliced_target.actor(client_address(cid))
    assert isinstance(record, ClientRecord)
    forged_target = (
        spliced_target.with_actor(instance_address(cid), granted)
        .with_actor(client_address(cid), record.with_received(granted_reply))
    )
    pool = tuple(m for m in forged_target.undelivered if m != reply) + invokes
    forged_target = Configuration(actors=forged_target.actors, undelivered=pool)
    t4 = Transition(
        source=spliced_target,
        rule=RuleId.R2B_SELECT_GRANTED,
        message=reply,
        target=forged_target,
        emitted=(granted_reply,) + invokes,
    )

    # From the forged grant onwards the real rules drive the run to completion.
    steps = [t1, t2, t3_spliced, t4]
    config = forged_target
    while True:
        options = engine.enabled(config)
        if not options:
            break
        transition = engine.step(config, options[0][0])
        steps.append(transition)
        config = transition.target
    return Trace(initial=base.initial, steps=tuple(steps))
