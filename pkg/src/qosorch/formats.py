"""JSONL serialization for workflows, requests, traces, and verdicts.

Every artifact file is line-delimited JSON: one record per line, keys sorted,
integers decimal, times in milliseconds, costs in cents.  Trace files are
self-contained: the trace record carries the full initial configuration
(including the manager's workflow and the selector's registry), and each
transition record carries the consumed message, the emitted messages, and
the changed actors with their before/after snapshots.  Field names are
frozen in docs/FORMATS.md.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Sequence

from .conformance import Violation
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
    QoSSpec,
    Role,
    RuleId,
    SelectorState,
    Trace,
    Transition,
    WorkflowDef,
    WsBinding,
    WsoInstance,
    WsoRequest,
    address_role,
    freeze_params,
    params_dict,
)
from .registry import Registry, candidate_from_record, candidate_to_record


class FormatError(ValueError):
    """An artifact file failed to parse or reassemble."""


def _dump_line(record: dict) -> str:
    return json.dumps(record, sort_keys=True)


def _read_records(path: str | Path) -> list[dict]:
    records = []
    text = Path(path).read_text(encoding="utf-8")
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
        if not isinstance(record, dict) or "record" not in record:
            raise FormatError(f"{path}:{line_no}: expected a record object")
        records.append(record)
    return records


# ---------------------------------------------------------------------------
# Scalars

def qos_to_record(qos: QoSSpec) -> dict:
    return {"response_time_ms": qos.response_time_ms, "cost_cents": qos.cost_cents}


def qos_from_record(record: dict) -> QoSSpec:
    return QoSSpec(
        response_time_ms=record["response_time_ms"], cost_cents=record["cost_cents"]
    )


def _params_record(params: Params | None) -> dict | None:
    return None if params is None else params_dict(params)


def _params_value(value: dict | None) -> Params | None:
    return None if value is None else freeze_params(value)


# ---------------------------------------------------------------------------
# Messages

def message_to_record(message: Message) -> dict:
    record: dict = {
        "kind": message.kind.value,
        "sender": message.sender,
        "receiver": message.receiver,
        "client_id": message.client_id,
    }
    if message.ontology is not None:
        record["ontology"] = message.ontology
    if message.qos is not None:
        record["qos"] = qos_to_record(message.qos)
    if message.params is not None:
        record["params"] = params_dict(message.params)
    if message.assignment is not None:
        record["assignment"] = [
            {
                "aa_name": binding.aa_name,
                "candidate_id": binding.candidate_id,
                "qos": qos_to_record(binding.qos),
            }
            for binding in message.assignment
        ]
    if message.aa_name is not None:
        record["aa_name"] = message.aa_name
    if message.aa_state is not None:
        record["aa_state"] = message.aa_state.value
    return record


def message_from_record(record: dict) -> Message:
    try:
        assignment = None
        if "assignment" in record:
            assignment = tuple(
                AllocatedBinding(
                    aa_name=item["aa_name"],
                    candidate_id=item["candidate_id"],
                    qos=qos_from_record(item["qos"]),
                )
                for item in record["assignment"]
            )
        return Message(
            kind=MessageKind(record["kind"]),
            sender=record["sender"],
            receiver=record["receiver"],
            client_id=record["client_id"],
            ontology=record.get("ontology"),
            qos=qos_from_record(record["qos"]) if "qos" in record else None,
            params=_params_value(record.get("params")),
            assignment=assignment,
            aa_name=record.get("aa_name"),
            aa_state=ActivityState(record["aa_state"]) if "aa_state" in record else None,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad message record: {exc}") from exc


# ---------------------------------------------------------------------------
# Workflows and requests

def workflow_to_record(workflow: WorkflowDef) -> dict:
    return {
        "record": "workflow",
        "ontology": workflow.ontology,
        "activities": [
            {"name": name, "ontology": ontology} for name, ontology in workflow.activities
        ],
    }


def workflow_from_record(record: dict) -> WorkflowDef:
    try:
        return WorkflowDef(
            ontology=record["ontology"],
            activities=tuple(
                (item["name"], item["ontology"]) for item in record["activities"]
            ),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad workflow record: {exc}") from exc


def load_workflow(path: str | Path) -> WorkflowDef:
    records = [r for r in _read_records(path) if r["record"] == "workflow"]
    if len(records) != 1:
        raise FormatError(f"{path}: expected exactly one workflow record, got {len(records)}")
    return workflow_from_record(records[0])


def dump_workflow(workflow: WorkflowDef, path: str | Path) -> None:
    Path(path).write_text(_dump_line(workflow_to_record(workflow)) + "\n", encoding="utf-8")


def request_to_record(request: WsoRequest) -> dict:
    return {
        "record": "request",
        "client_id": request.client_id,
        "ontology": request.ontology,
        "input_parameters": params_dict(request.input_parameters),
        "qos": qos_to_record(request.qos),
    }


def request_from_record(record: dict) -> WsoRequest:
    try:
        return WsoRequest(
            client_id=record["client_id"],
            ontology=record["ontology"],
            input_parameters=freeze_params(record["input_parameters"]),
            qos=qos_from_record(record["qos"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad request record: {exc}") from exc


def load_requests(path: str | Path) -> list[WsoRequest]:
    return [
        request_from_record(record)
        for record in _read_records(path)
        if record["record"] == "request"
    ]


def dump_requests(requests: Iterable[WsoRequest], path: str | Path) -> None:
    lines = [_dump_line(request_to_record(r)) for r in requests]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


# ---------------------------------------------------------------------------
# Actor snapshots

def _binding_record(binding: WsBinding) -> dict:
    return {
        "endpoint": binding.endpoint,
        "advertised_qos": None
        if binding.advertised_qos is None
        else qos_to_record(binding.advertised_qos),
    }


def _activity_record(aa: ActivityActor) -> dict:
    return {
        "aa_name": aa.aa_name,
        "wsoi_id": aa.wsoi_id,
        "qos": None if aa.qos is None else qos_to_record(aa.qos),
        "input_parameters": _params_record(aa.input_parameters),
        "output_parameters": _params_record(aa.output_parameters),
        "state": aa.state.value,
        "ws": _binding_record(aa.ws),
    }


def _activity_from_record(record: dict) -> ActivityActor:
    ws = record["ws"]
    return ActivityActor(
        aa_name=record["aa_name"],
        wsoi_id=record["wsoi_id"],
        qos=None if record["qos"] is None else qos_from_record(record["qos"]),
        input_parameters=_params_value(record["input_parameters"]),
        output_parameters=_params_value(record["output_parameters"]),
        state=ActivityState(record["state"]),
        ws=WsBinding(
            wsoi_id=record["wsoi_id"],
            aa_name=record["aa_name"],
            endpoint=ws["endpoint"],
            advertised_qos=None
            if ws["advertised_qos"] is None
            else qos_from_record(ws["advertised_qos"]),
        ),
    )


def actor_to_record(address: str, snapshot) -> dict:
    if isinstance(snapshot, ManagerState):
        return {
            "address": address,
            "type": "manager",
            "workflow": workflow_to_record(snapshot.workflow),
        }
    if isinstance(snapshot, SelectorState):
        return {
            "address": address,
            "type": "selector",
            "registry": [candidate_to_record(c) for c in snapshot.registry.candidates()],
        }
    if isinstance(snapshot, WsoInstance):
        return {
            "address": address,
            "type": "instance",
            "request": request_to_record(snapshot.request),
            "state": snapshot.state.value,
            "output_parameters": _params_record(snapshot.output_parameters),
            "activities": [_activity_record(aa) for aa in snapshot.activities],
        }
    if isinstance(snapshot, ClientRecord):
        return {
            "address": address,
            "type": "client",
            "client_id": snapshot.client_id,
            "received": [message_to_record(m) for m in snapshot.received],
        }
    raise FormatError(f"cannot serialize actor snapshot {type(snapshot).__name__}")


def actor_from_record(record: dict):
    kind = record.get("type")
    try:
        if kind == "manager":
            return record["address"], ManagerState(workflow_from_record(record["workflow"]))
        if kind == "selector":
            registry = Registry.from_candidates(
                candidate_from_record(item) for item in record["registry"]
            )
            return record["address"], SelectorState(registry)
        if kind == "instance":
            instance = WsoInstance(
                request=request_from_record(record["request"]),
                state=InstanceState(record["state"]),
                activities=tuple(
                    _activity_from_record(item) for item in record["activities"]
                ),
                output_parameters=_params_value(record["output_parameters"]),
            )
            return record["address"], instance
        if kind == "client":
            return record["address"], ClientRecord(
                client_id=record["client_id"],
                received=tuple(message_from_record(m) for m in record["received"]),
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad actor record: {exc}") from exc
    raise FormatError(f"unknown actor type {kind!r}")


def config_to_record(config: Configuration) -> dict:
    return {
        "actors": [actor_to_record(address, snapshot) for address, snapshot in config.actors],
        "undelivered": [message_to_record(m) for m in config.undelivered],
    }


def config_from_record(record: dict) -> Configuration:
    try:
        actors = tuple(actor_from_record(item) for item in record["actors"])
        pool = tuple(message_from_record(item) for item in record["undelivered"])
    except (KeyError, TypeError) as exc:
        raise FormatError(f"bad configuration record: {exc}") from exc
    return Configuration(actors=actors, undelivered=pool)


# ---------------------------------------------------------------------------
# Traces
#
# A trace serializes as a trace record carrying the initial configuration,
# followed by one transition record per step.  Transition records are deltas:
# target configurations are reassembled by applying the changed actors and
# the pool update to the running configuration.

def _changed_actors(source: Configuration, target: Configuration) -> list[dict]:
    before = dict(source.actors)
    after = dict(target.actors)
    changed = []
    for address in sorted(set(before) | set(after)):
        if before.get(address) != after.get(address):
            changed.append(
                {
                    "address": address,
                    "before": None
                    if address not in before
                    else actor_to_record(address, before[address]),
                    "after": None
                    if address not in after
                    else actor_to_record(address, after[address]),
                }
            )
    return changed


def transition_to_record(trace_index: int, index: int, transition: Transition) -> dict:
    return {
        "record": "transition",
        "trace": trace_index,
        "index": index,
        "rule": transition.rule.value,
        "consumed": message_to_record(transition.message),
        "emitted": [message_to_record(m) for m in transition.emitted],
        "changed": _changed_actors(transition.source, transition.target),
    }


def trace_to_records(trace: Trace, trace_index: int = 0) -> list[dict]:
    records = [
        {
            "record": "trace",
            "trace": trace_index,
            "initial": config_to_record(trace.initial),
        }
    ]
    records.extend(
        transition_to_record(trace_index, index, transition)
        for index, transition in enumerate(trace.steps)
    )
    return records


def _apply_transition_record(config: Configuration, record: dict) -> Transition:
    consumed = message_from_record(record["consumed"])
    emitted = tuple(message_from_record(item) for item in record["emitted"])
    try:
        rule = RuleId(record["rule"])
    except ValueError as exc:
        raise FormatError(f"unknown rule {record.get('rule')!r}") from exc

    actors = dict(config.actors)
    for change in record["changed"]:
        if change["after"] is None:
            actors.pop(change["address"], None)
        else:
            address, snapshot = actor_from_record(change["after"])
            actors[address] = snapshot
    pool = list(config.undelivered)
    if consumed in pool:
        pool.remove(consumed)
    for message in emitted:
        if address_role(message.receiver) is not Role.CLIENT:
            pool.append(message)
    target = Configuration(actors=tuple(actors.items()), undelivered=tuple(pool))
    return Transition(source=config, rule=rule, message=consumed, target=target, emitted=emitted)


def traces_from_records(records: Sequence[dict]) -> list[Trace]:
    by_trace: dict[int, dict] = {}
    for record in records:
        if record["record"] == "trace":
            index = record.get("trace", 0)
            if index in by_trace:
                raise FormatError(f"duplicate trace record {index}")
            by_trace[index] = {"initial": record["initial"], "transitions": []}
        elif record["record"] == "transition":
            index = record.get("trace", 0)
            if index not in by_trace:
                raise FormatError(f"transition for unknown trace {index}")
            by_trace[index]["transitions"].append(record)

    traces = []
    for index in sorted(by_trace):
        entry = by_trace[index]
        config = config_from_record(entry["initial"])
        initial = config
        steps = []
        expected = 0
        for record in sorted(entry["transitions"], key=lambda r: r["index"]):
            if record["index"] != expected:
                raise FormatError(
                    f"trace {index}: expected transition {expected}, got {record['index']}"
                )
            expected += 1
            transition = _apply_transition_record(config, record)
            steps.append(transition)
            config = transition.target
        traces.append(Trace(initial=initial, steps=tuple(steps)))
    return traces


def write_traces(traces: Sequence[Trace], path: str | Path) -> None:
    lines = []
    for trace_index, trace in enumerate(traces):
        lines.extend(_dump_line(record) for record in trace_to_records(trace, trace_index))
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_traces(path: str | Path) -> list[Trace]:
    return traces_from_records(_read_records(path))


# ---------------------------------------------------------------------------
# Violations

def violation_to_record(violation: Violation) -> dict:
    return {
        "record": "violation",
        "property": violation.property_id,
        "trace": violation.trace_index,
        "transition": violation.transition_index,
        "witness": violation.witness,
    }


def write_violations(violations: Sequence[Violation], path: str | Path) -> None:
    lines = [_dump_line(violation_to_record(v)) for v in violations]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def append_violations(violations: Sequence[Violation], path: str | Path) -> None:
    lines = [_dump_line(violation_to_record(v)) for v in violations]
    with open(path, "a", encoding="utf-8") as handle:
        handle.writelines(line + "\n" for line in lines)
