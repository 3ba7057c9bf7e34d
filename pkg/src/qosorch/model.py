"""Core domain model for QoS-aware service orchestration.

The model is a labelled transition system over immutable configurations.  A
configuration snapshots every actor (the instance manager, the service
selector, one orchestration instance per client request, and one record per
client) together with the pool of undelivered messages.  The rule engine
consumes one message per transition and never mutates a configuration in
place, so traces can be serialized, replayed, and checked independently of
the code that produced them.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Iterable, Iterator, Mapping, Union

if TYPE_CHECKING:
    from .registry import Registry


class UnknownActivityError(KeyError):
    """Raised when an activity name is not part of an instance."""


# ---------------------------------------------------------------------------
# Parameter maps
#
# All request/activity parameters are ordered name->value string maps, frozen
# into key-sorted tuples so that equality, hashing, and serialization are
# deterministic.

Params = tuple[tuple[str, str], ...]


def freeze_params(values: Mapping[str, str] | Iterable[tuple[str, str]]) -> Params:
    """Canonicalize a parameter mapping into a key-sorted tuple of pairs."""
    items = list(values.items()) if isinstance(values, Mapping) else list(values)
    seen: dict[str, str] = {}
    for key, value in items:
        if not isinstance(key, str) or not isinstance(value, str):
            raise TypeError(f"parameter entries must be str pairs, got ({key!r}, {value!r})")
        if key in seen:
            raise ValueError(f"duplicate parameter key {key!r}")
        seen[key] = value
    return tuple(sorted(seen.items()))


def params_dict(params: Params) -> dict[str, str]:
    return dict(params)


# ---------------------------------------------------------------------------
# QoS

@dataclass(frozen=True)
class QoSSpec:
    """A response-time bound (milliseconds) paired with a cost budget (cents)."""

    response_time_ms: int
    cost_cents: int

    def __post_init__(self) -> None:
        for label, value in (
            ("response_time_ms", self.response_time_ms),
            ("cost_cents", self.cost_cents),
        ):
            if not isinstance(value, int) or isinstance(value, bool):
                raise TypeError(f"{label} must be an integer, got {value!r}")
            if value < 0:
                raise ValueError(f"{label} must be >= 0, got {value}")

    def fits_within(self, bound: QoSSpec) -> bool:
        """Componentwise comparison; bounds are inclusive."""
        return (
            self.response_time_ms <= bound.response_time_ms
            and self.cost_cents <= bound.cost_cents
        )


# ---------------------------------------------------------------------------
# State machines

class InstanceState(enum.Enum):
    WAITING = "Waiting"
    GRANTED = "Granted"
    DENIED = "Denied"
    SERVICING = "Servicing"
    COMPLETED = "Completed"


INSTANCE_SUCCESSORS: dict[InstanceState, frozenset[InstanceState]] = {
    InstanceState.WAITING: frozenset(
        {InstanceState.WAITING, InstanceState.GRANTED, InstanceState.DENIED}
    ),
    InstanceState.GRANTED: frozenset({InstanceState.GRANTED, InstanceState.SERVICING}),
    InstanceState.SERVICING: frozenset(
        {InstanceState.SERVICING, InstanceState.COMPLETED}
    ),
    InstanceState.DENIED: frozenset({InstanceState.DENIED}),
    InstanceState.COMPLETED: frozenset({InstanceState.COMPLETED}),
}


class ActivityState(enum.Enum):
    PREPARING = "Preparing"
    INVOKING = "Invoking"
    RETURNED = "Returned"


ACTIVITY_SUCCESSORS: dict[ActivityState, frozenset[ActivityState]] = {
    ActivityState.PREPARING: frozenset({ActivityState.PREPARING, ActivityState.INVOKING}),
    ActivityState.INVOKING: frozenset({ActivityState.INVOKING, ActivityState.RETURNED}),
    ActivityState.RETURNED: frozenset({ActivityState.RETURNED}),
}


def instance_state_can_follow(current: InstanceState, nxt: InstanceState) -> bool:
    return nxt in INSTANCE_SUCCESSORS[current]


def activity_state_can_follow(current: ActivityState, nxt: ActivityState) -> bool:
    return nxt in ACTIVITY_SUCCESSORS[current]


# ---------------------------------------------------------------------------
# Requests, activities, instances

@dataclass(frozen=True)
class WsoRequest:
    """A client's 4-tuple request: who, which orchestration, inputs, budget."""

    client_id: str
    ontology: str
    input_parameters: Params
    qos: QoSSpec

    def __post_init__(self) -> None:
        if not self.client_id or not isinstance(self.client_id, str):
            raise ValueError("client_id must be a non-empty string")
        if ":" in self.client_id:
            raise ValueError("client_id must not contain ':'")
        if not self.ontology:
            raise ValueError("ontology must be a non-empty string")
        object.__setattr__(self, "input_parameters", freeze_params(self.input_parameters))


@dataclass(frozen=True)
class WsBinding:
    """The component service selected for one activity, or unbound.

    The endpoint is a registry candidate id; it is present exactly when the
    advertised QoS of the selected candidate is.
    """

    wsoi_id: str
    aa_name: str
    endpoint: str | None = None
    advertised_qos: QoSSpec | None = None

    def __post_init__(self) -> None:
        if (self.endpoint is None) != (self.advertised_qos is None):
            raise ValueError("endpoint and advertised_qos must be both set or both nil")

    @property
    def bound(self) -> bool:
        return self.endpoint is not None


@dataclass(frozen=True)
class ActivityActor:
    """One activity of an instance; invokes exactly one bound component service."""

    aa_name: str
    wsoi_id: str
    qos: QoSSpec | None
    input_parameters: Params | None
    output_parameters: Params | None
    state: ActivityState
    ws: WsBinding

    def __post_init__(self) -> None:
        if self.input_parameters is not None:
            object.__setattr__(self, "input_parameters", freeze_params(self.input_parameters))
        if self.output_parameters is not None:
            object.__setattr__(self, "output_parameters", freeze_params(self.output_parameters))

    @classmethod
    def initial(cls, aa_name: str, wsoi_id: str) -> ActivityActor:
        """A freshly created activity: Preparing, everything nil, unbound."""
        return cls(
            aa_name=aa_name,
            wsoi_id=wsoi_id,
            qos=None,
            input_parameters=None,
            output_parameters=None,
            state=ActivityState.PREPARING,
            ws=WsBinding(wsoi_id=wsoi_id, aa_name=aa_name),
        )


@dataclass(frozen=True)
class WsoInstance:
    """A running orchestration instance: the request, its state, its activities."""

    request: WsoRequest
    state: InstanceState
    activities: tuple[ActivityActor, ...]
    output_parameters: Params | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "activities", tuple(self.activities))
        if self.output_parameters is not None:
            object.__setattr__(self, "output_parameters", freeze_params(self.output_parameters))
        names = [aa.aa_name for aa in self.activities]
        if len(names) != len(set(names)):
            raise ValueError("activity names must be unique within an instance")

    @classmethod
    def create(cls, request: WsoRequest, activity_names: Iterable[str]) -> WsoInstance:
        """A newly created instance: Waiting, outputs nil, all activities initial."""
        return cls(
            request=request,
            state=InstanceState.WAITING,
            activities=tuple(
                ActivityActor.initial(name, request.client_id) for name in activity_names
            ),
            output_parameters=None,
        )

    @property
    def client_id(self) -> str:
        return self.request.client_id

    def activity_names(self) -> tuple[str, ...]:
        return tuple(aa.aa_name for aa in self.activities)

    def with_activity(self, updated: ActivityActor) -> WsoInstance:
        activities = tuple(
            updated if aa.aa_name == updated.aa_name else aa for aa in self.activities
        )
        return replace(self, activities=activities)


def instance_errors(instance: WsoInstance) -> list[str]:
    """Structural constraint violations of one instance snapshot.

    These are checked (not enforced at construction) so that conformance
    checkers can examine corrupted traces that contain violating snapshots.
    """
    errors: list[str] = []
    cid = instance.request.client_id
    for aa in instance.activities:
        if aa.wsoi_id != cid:
            errors.append(f"activity {aa.aa_name!r} carries owner {aa.wsoi_id!r}, expected {cid!r}")
        if aa.ws.wsoi_id != cid or aa.ws.aa_name != aa.aa_name:
            errors.append(f"binding of activity {aa.aa_name!r} is mislabelled")
        if instance.state is InstanceState.DENIED and aa.ws.bound:
            errors.append(f"denied instance {cid!r} holds a binding for {aa.aa_name!r}")
        if aa.ws.bound and instance.state not in (
            InstanceState.GRANTED,
            InstanceState.SERVICING,
            InstanceState.COMPLETED,
        ):
            errors.append(
                f"activity {aa.aa_name!r} is bound while instance {cid!r} is {instance.state.value}"
            )
    if instance.output_parameters is not None and instance.state is not InstanceState.COMPLETED:
        errors.append(f"instance {cid!r} has outputs while {instance.state.value}")
    return errors


# ---------------------------------------------------------------------------
# Workflow definitions

@dataclass(frozen=True)
class WorkflowDef:
    """An orchestration ontology plus its ordered (activity, ontology) list."""

    ontology: str
    activities: tuple[tuple[str, str], ...]

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "activities", tuple((str(n), str(o)) for n, o in self.activities)
        )
        if not self.ontology:
            raise ValueError("workflow ontology must be non-empty")
        if not self.activities:
            raise ValueError("workflow must declare at least one activity")
        names = [name for name, _ in self.activities]
        if len(names) != len(set(names)):
            raise ValueError("workflow activity names must be unique")
        for name, component in self.activities:
            if not name or not component:
                raise ValueError("activity names and ontologies must be non-empty")
            if "." in name:
                raise ValueError(f"activity name {name!r} must not contain '.'")

    def activity_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.activities)

    def component_ontology(self, aa_name: str) -> str:
        for name, component in self.activities:
            if name == aa_name:
                return component
        raise UnknownActivityError(aa_name)


# ---------------------------------------------------------------------------
# Actor addresses

WSOIM_ADDRESS = "wsoim"
SS_ADDRESS = "ss"


class Role(enum.Enum):
    MANAGER = "manager"
    SELECTOR = "selector"
    CLIENT = "client"
    INSTANCE = "instance"
    ACTIVITY = "activity"
    SERVICE = "service"


def client_address(client_id: str) -> str:
    return f"ca:{client_id}"


def instance_address(client_id: str) -> str:
    return f"wsoi:{client_id}"


def activity_address(client_id: str, aa_name: str) -> str:
    return f"aa:{client_id}:{aa_name}"


def service_address(client_id: str, aa_name: str) -> str:
    return f"ws:{client_id}:{aa_name}"


_ROLE_PREFIXES = {
    "ca": Role.CLIENT,
    "wsoi": Role.INSTANCE,
    "aa": Role.ACTIVITY,
    "ws": Role.SERVICE,
}


def address_role(address: str) -> Role | None:
    if address == WSOIM_ADDRESS:
        return Role.MANAGER
    if address == SS_ADDRESS:
        return Role.SELECTOR
    prefix = address.split(":", 1)[0]
    return _ROLE_PREFIXES.get(prefix)


def address_client_id(address: str) -> str | None:
    """The client id embedded in a client/instance/activity/service address."""
    role = address_role(address)
    if role in (Role.CLIENT, Role.INSTANCE):
        return address.split(":", 1)[1]
    if role in (Role.ACTIVITY, Role.SERVICE):
        return address.split(":", 2)[1]
    return None


def address_aa_name(address: str) -> str | None:
    role = address_role(address)
    if role in (Role.ACTIVITY, Role.SERVICE):
        parts = address.split(":", 2)
        return parts[2] if len(parts) == 3 else None
    return None


# ---------------------------------------------------------------------------
# Messages

class MessageKind(enum.Enum):
    WSO_REQUEST = "wsoReq"
    SELECT = "select"
    SELECT_REPLY_GRANTED = "selectReplyGranted"
    SELECT_REPLY_DENIED = "selectReplyDenied"
    INVOKE = "invoke"
    INVOKE_ACK = "invokeAck"
    INVOKE_WS = "invokeWs"
    INVOKE_REPLY = "invokeReply"
    NOTIFY = "notify"
    GRANTED_REPLY = "grantedReply"
    COMPLETED_REPLY = "completedReply"
    DENIED_REPLY = "deniedReply"


@dataclass(frozen=True)
class AllocatedBinding:
    """One activity's selected candidate, carried in a granted selection reply."""

    aa_name: str
    candidate_id: str
    qos: QoSSpec


@dataclass(frozen=True)
class Message:
    """One message of the closed request/reply/notification vocabulary.

    Payload fields are kind-specific; the vocabulary checker
    (:func:`message_schema_error`) knows which fields each kind requires.
    """

    kind: MessageKind
    sender: str
    receiver: str
    client_id: str
    ontology: str | None = None
    qos: QoSSpec | None = None
    params: Params | None = None
    assignment: tuple[AllocatedBinding, ...] | None = None
    aa_name: str | None = None
    aa_state: ActivityState | None = None

    def __post_init__(self) -> None:
        if self.params is not None:
            object.__setattr__(self, "params", freeze_params(self.params))
        if self.assignment is not None:
            ordered = tuple(sorted(self.assignment, key=lambda b: b.aa_name))
            object.__setattr__(self, "assignment", ordered)

    def sort_key(self) -> tuple[str, str, str, str]:
        return (self.kind.value, self.sender, self.receiver, self.client_id)


# kind -> (sender role, receiver role, required payload fields)
_MESSAGE_SCHEMA: dict[MessageKind, tuple[Role, Role, frozenset[str]]] = {
    MessageKind.WSO_REQUEST: (Role.CLIENT, Role.MANAGER, frozenset({"ontology", "qos", "params"})),
    MessageKind.SELECT: (Role.INSTANCE, Role.SELECTOR, frozenset({"ontology", "qos"})),
    MessageKind.SELECT_REPLY_GRANTED: (Role.SELECTOR, Role.INSTANCE, frozenset({"assignment"})),
    MessageKind.SELECT_REPLY_DENIED: (Role.SELECTOR, Role.INSTANCE, frozenset()),
    MessageKind.INVOKE: (Role.INSTANCE, Role.ACTIVITY, frozenset()),
    MessageKind.INVOKE_ACK: (Role.ACTIVITY, Role.INSTANCE, frozenset()),
    MessageKind.INVOKE_WS: (Role.ACTIVITY, Role.SERVICE, frozenset({"params"})),
    MessageKind.INVOKE_REPLY: (Role.SERVICE, Role.ACTIVITY, frozenset({"params"})),
    MessageKind.NOTIFY: (Role.ACTIVITY, Role.INSTANCE, frozenset({"aa_name", "aa_state"})),
    MessageKind.GRANTED_REPLY: (Role.INSTANCE, Role.CLIENT, frozenset({"ontology", "qos"})),
    MessageKind.COMPLETED_REPLY: (Role.INSTANCE, Role.CLIENT, frozenset({"ontology", "qos", "params"})),
    MessageKind.DENIED_REPLY: (Role.INSTANCE, Role.CLIENT, frozenset({"ontology", "qos"})),
}

_PAYLOAD_FIELDS = ("ontology", "qos", "params", "assignment", "aa_name", "aa_state")


def message_schema_error(message: Message) -> str | None:
    """Check one message against the vocabulary; return a description or None.

    A message conforms when its sender/receiver roles match its kind's unique
    row, exactly the row's payload fields are present, and any embedded
    client/activity identities agree with the addresses.
    """
    schema = _MESSAGE_SCHEMA.get(message.kind)
    if schema is None:
        return f"unknown message kind {message.kind!r}"
    sender_role, receiver_role, required = schema
    if address_role(message.sender) is not sender_role:
        return (
            f"{message.kind.value} must be sent by a {sender_role.value} actor, "
            f"got sender {message.sender!r}"
        )
    if address_role(message.receiver) is not receiver_role:
        return (
            f"{message.kind.value} must be received by a {receiver_role.value} actor, "
            f"got receiver {message.receiver!r}"
        )
    for field_name in _PAYLOAD_FIELDS:
        value = getattr(message, field_name)
        if field_name in required and value is None:
            return f"{message.kind.value} requires payload field {field_name!r}"
        if field_name not in required and value is not None:
            return f"{message.kind.value} must not carry payload field {field_name!r}"
    for address in (message.sender, message.receiver):
        embedded = address_client_id(address)
        if embedded is not None and embedded != message.client_id:
            return (
                f"{message.kind.value} client_id {message.client_id!r} does not match "
                f"address {address!r}"
            )
    if message.kind is MessageKind.NOTIFY:
        if message.aa_state is not ActivityState.RETURNED:
            return "notify must report state Returned"
        if address_aa_name(message.sender) != message.aa_name:
            return f"notify names activity {message.aa_name!r} but was sent by {message.sender!r}"
    if message.kind is MessageKind.INVOKE_WS:
        if address_aa_name(message.sender) != address_aa_name(message.receiver):
            return "service invocation must target the sender activity's own service"
    return None


# ---------------------------------------------------------------------------
# Configurations

@dataclass(frozen=True)
class ManagerState:
    """Constant state of the instance manager: the workflow it instantiates."""

    workflow: WorkflowDef


@dataclass(frozen=True)
class SelectorState:
    """Constant state of the service selector: the registry it consults."""

    registry: "Registry"


@dataclass(frozen=True)
class ClientRecord:
    """An external client and the terminal replies delivered to it."""

    client_id: str
    received: tuple[Message, ...] = ()

    def with_received(self, message: Message) -> ClientRecord:
        return replace(self, received=self.received + (message,))


ActorSnapshot = Union[ManagerState, SelectorState, WsoInstance, ClientRecord]

_ROLE_SNAPSHOT_TYPES: dict[Role, type] = {
    Role.MANAGER: ManagerState,
    Role.SELECTOR: SelectorState,
    Role.CLIENT: ClientRecord,
    Role.INSTANCE: WsoInstance,
}


@dataclass(frozen=True)
class Configuration:
    """A snapshot of all actors plus the pool of undelivered messages.

    The pool keeps emission order (oldest first); listings that need a sorted
    view sort by (kind, sender, receiver, client_id).
    """

    actors: tuple[tuple[str, ActorSnapshot], ...]
    undelivered: tuple[Message, ...] = ()

    def __post_init__(self) -> None:
        ordered = tuple(sorted(self.actors, key=lambda pair: pair[0]))
        object.__setattr__(self, "actors", ordered)
        object.__setattr__(self, "undelivered", tuple(self.undelivered))
        addresses = [address for address, _ in ordered]
        if len(addresses) != len(set(addresses)):
            raise ValueError("actor addresses must be unique")

    def actor(self, address: str) -> ActorSnapshot | None:
        for candidate, snapshot in self.actors:
            if candidate == address:
                return snapshot
        return None

    def with_actor(self, address: str, snapshot: ActorSnapshot) -> Configuration:
        remaining = tuple(pair for pair in self.actors if pair[0] != address)
        return replace(self, actors=remaining + ((address, snapshot),))

    def instances(self) -> Iterator[tuple[str, WsoInstance]]:
        for address, snapshot in self.actors:
            if isinstance(snapshot, WsoInstance):
                yield address, snapshot


def get_wsoi(config: Configuration, client_id: str) -> WsoInstance | None:
    """The unique instance created for client_id, or None if none exists yet."""
    snapshot = config.actor(instance_address(client_id))
    return snapshot if isinstance(snapshot, WsoInstance) else None


def get_aa(instance: WsoInstance, aa_name: str) -> ActivityActor:
    """The named activity of an instance; unknown names are an error."""
    for aa in instance.activities:
        if aa.aa_name == aa_name:
            return aa
    raise UnknownActivityError(
        f"instance {instance.client_id!r} has no activity named {aa_name!r}"
    )


def get_wses(instance: WsoInstance) -> list[WsBinding]:
    """All activity bindings of an instance, sorted by activity name."""
    return [aa.ws for aa in sorted(instance.activities, key=lambda aa: aa.aa_name)]


def undelivered_requests(config: Configuration) -> list[Message]:
    """All undelivered client requests, ordered by client id."""
    pending = [m for m in config.undelivered if m.kind is MessageKind.WSO_REQUEST]
    return sorted(pending, key=lambda m: m.client_id)


def _address_resolvable(config: Configuration, address: str) -> bool:
    role = address_role(address)
    if role is None:
        return False
    if role in (Role.MANAGER, Role.SELECTOR, Role.CLIENT, Role.INSTANCE):
        return config.actor(address) is not None
    # Activity and service addresses resolve through the owning instance.
    client_id = address_client_id(address)
    aa_name = address_aa_name(address)
    if client_id is None or aa_name is None:
        return False
    instance = get_wsoi(config, client_id)
    if instance is None or aa_name not in instance.activity_names():
        return False
    if role is Role.SERVICE:
        return get_aa(instance, aa_name).ws.bound
    return True


def configuration_errors(config: Configuration) -> list[str]:
    """Address, snapshot-type, and message-vocabulary violations of one
    configuration.  Instance lifecycle constraints are a separate concern;
    see :func:`instance_errors`."""
    errors: list[str] = []
    for address, snapshot in config.actors:
        role = address_role(address)
        expected = _ROLE_SNAPSHOT_TYPES.get(role) if role is not None else None
        if expected is None or not isinstance(snapshot, expected):
            errors.append(f"address {address!r} holds a {type(snapshot).__name__} snapshot")
            continue
        if isinstance(snapshot, WsoInstance) and address != instance_address(snapshot.client_id):
            errors.append(f"instance at {address!r} labelled {snapshot.client_id!r}")
        if isinstance(snapshot, ClientRecord) and address != client_address(snapshot.client_id):
            errors.append(f"client record at {address!r} labelled {snapshot.client_id!r}")
    for message in config.undelivered:
        schema_error = message_schema_error(message)
        if schema_error is not None:
            errors.append(schema_error)
        for address in (message.sender, message.receiver):
            if not _address_resolvable(config, address):
                errors.append(
                    f"{message.kind.value} references unresolvable address {address!r}"
                )
    return errors


# ---------------------------------------------------------------------------
# Transitions and traces

class RuleId(enum.Enum):
    R1_WSOIM_CREATE = "R1_WsoimCreate"
    R2A_SELECT_DENIED = "R2a_SelectDenied"
    R2B_SELECT_GRANTED = "R2b_SelectGranted"
    R3_INVOKE_ACK = "R3_InvokeAck"
    R4A_NOTIFY_ALL_RETURNED = "R4a_NotifyAllReturned"
    R4B_NOTIFY_SOME_PENDING = "R4b_NotifySomePending"
    R5_SS_SELECT = "R5_SsSelect"
    R6_AA_INVOKE = "R6_AaInvoke"
    R7_AA_RETURN = "R7_AaReturn"
    R8_WS_INVOKE = "R8_WsInvoke"


@dataclass(frozen=True)
class Transition:
    """One rule application: source -(rule, consumed message)-> target."""

    source: Configuration
    rule: RuleId
    message: Message
    target: Configuration
    emitted: tuple[Message, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "emitted", tuple(self.emitted))

    @property
    def label(self) -> tuple[RuleId, Message]:
        return (self.rule, self.message)


@dataclass(frozen=True)
class Trace:
    """A finite computation path: adjacent transitions chain source to target."""

    initial: Configuration
    steps: tuple[Transition, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple(self.steps))
        previous = self.initial
        for index, step in enumerate(self.steps):
            if step.source != previous:
                raise ValueError(f"transition {index} does not chain from its predecessor")
            previous = step.target

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def final(self) -> Configuration:
        return self.steps[-1].target if self.steps else self.initial

    def configurations(self) -> list[Configuration]:
        return [self.initial] + [step.target for step in self.steps]

    def labels(self) -> tuple[tuple[RuleId, Message], ...]:
        return tuple(step.label for step in self.steps)
