import dataclasses

import pytest
from hypothesis import given
from hypothesis import strategies as st

from qosorch.model import (
    ACTIVITY_SUCCESSORS,
    ActivityActor,
    ActivityState,
    Configuration,
    INSTANCE_SUCCESSORS,
    InstanceState,
    Message,
    MessageKind,
    QoSSpec,
    RuleId,
    Trace,
    Transition,
    UnknownActivityError,
    WorkflowDef,
    WsBinding,
    WsoInstance,
    WsoRequest,
    activity_address,
    activity_state_can_follow,
    address_aa_name,
    address_client_id,
    address_role,
    client_address,
    freeze_params,
    get_aa,
    get_wses,
    get_wsoi,
    instance_address,
    instance_errors,
    instance_state_can_follow,
    message_schema_error,
    params_dict,
    Role,
    service_address,
    SS_ADDRESS,
    undelivered_requests,
    WSOIM_ADDRESS,
)

short_text = st.text(
    alphabet=st.characters(whitelist_categories=("L", "N"), max_codepoint=0x017F),
    min_size=1,
    max_size=8,
)


class TestQoSSpec:
    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            QoSSpec(-1, 0)
        with pytest.raises(ValueError):
            QoSSpec(0, -5)

    def test_rejects_non_integers(self):
        with pytest.raises(TypeError):
            QoSSpec(1.5, 0)
        with pytest.raises(TypeError):
            QoSSpec(True, 0)

    def test_fits_within_is_inclusive(self):
        assert QoSSpec(10, 1).fits_within(QoSSpec(10, 1))
        assert not QoSSpec(11, 1).fits_within(QoSSpec(10, 1))
        assert not QoSSpec(10, 2).fits_within(QoSSpec(10, 1))


class TestParams:
    def test_sorted_and_deduplicated(self):
        assert freeze_params({"b": "2", "a": "1"}) == (("a", "1"), ("b", "2"))
        with pytest.raises(ValueError):
            freeze_params([("a", "1"), ("a", "2")])
        with pytest.raises(TypeError):
            freeze_params({"a": 1})

    @given(st.dictionaries(short_text, short_text, max_size=6))
    def test_round_trip(self, mapping):
        assert params_dict(freeze_params(mapping)) == mapping


class TestStateMachines:
    @pytest.mark.parametrize(
        "state,successors",
        [
            (InstanceState.WAITING, {InstanceState.WAITING, InstanceState.GRANTED, InstanceState.DENIED}),
            (InstanceState.GRANTED, {InstanceState.GRANTED, InstanceState.SERVICING}),
            (InstanceState.SERVICING, {InstanceState.SERVICING, InstanceState.COMPLETED}),
            (InstanceState.DENIED, {InstanceState.DENIED}),
            (InstanceState.COMPLETED, {InstanceState.COMPLETED}),
        ],
    )
    def test_instance_successors(self, state, successors):
        assert INSTANCE_SUCCESSORS[state] == successors
        for nxt in InstanceState:
            assert instance_state_can_follow(state, nxt) == (nxt in successors)

    @pytest.mark.parametrize(
        "state,successors",
        [
            (ActivityState.PREPARING, {ActivityState.PREPARING, ActivityState.INVOKING}),
            (ActivityState.INVOKING, {ActivityState.INVOKING, ActivityState.RETURNED}),
            (ActivityState.RETURNED, {ActivityState.RETURNED}),
        ],
    )
    def test_activity_successors(self, state, successors):
        assert ACTIVITY_SUCCESSORS[state] == successors
        for nxt in ActivityState:
            assert activity_state_can_follow(state, nxt) == (nxt in successors)


def make_request(cid="c1", ontology="Shop", qos=QoSSpec(100, 10), inputs=()):
    return WsoRequest(client_id=cid, ontology=ontology, input_parameters=inputs, qos=qos)


class TestRequest:
    def test_immutable(self):
        request = make_request()
        with pytest.raises(dataclasses.FrozenInstanceError):
            request.client_id = "c2"

    def test_validation(self):
        with pytest.raises(ValueError):
            make_request(cid="")
        with pytest.raises(ValueError):
            make_request(cid="a:b")
        with pytest.raises(ValueError):
            make_request(ontology="")


class TestBinding:
    def test_endpoint_and_qos_go_together(self):
        WsBinding("c1", "A")  # unbound is fine
        WsBinding("c1", "A", "svc-1", QoSSpec(5, 5))
        with pytest.raises(ValueError):
            WsBinding("c1", "A", "svc-1", None)
        with pytest.raises(ValueError):
            WsBinding("c1", "A", None, QoSSpec(5, 5))


class TestInstance:
    def test_create_is_field_exact(self):
        request = make_request()
        instance = WsoInstance.create(request, ["A", "B"])
        assert instance.state is InstanceState.WAITING
        assert instance.output_parameters is None
        assert instance.activity_names() == ("A", "B")
        for aa in instance.activities:
            assert aa.state is ActivityState.PREPARING
            assert aa.qos is None and aa.input_parameters is None
            assert aa.output_parameters is None
            assert not aa.ws.bound
            assert aa.wsoi_id == "c1"

    def test_duplicate_activity_names_rejected(self):
        with pytest.raises(ValueError):
            WsoInstance.create(make_request(), ["A", "A"])

    def test_with_activity_replaces_in_place(self):
        instance = WsoInstance.create(make_request(), ["A", "B"])
        updated = dataclasses.replace(get_aa(instance, "B"), state=ActivityState.INVOKING)
        bumped = instance.with_activity(updated)
        assert get_aa(bumped, "B").state is ActivityState.INVOKING
        assert get_aa(bumped, "A").state is ActivityState.PREPARING
        assert bumped.activity_names() == ("A", "B")

    def test_instance_errors_flag_denied_with_binding(self):
        request = make_request()
        bound = ActivityActor(
            aa_name="A",
            wsoi_id="c1",
            qos=None,
            input_parameters=None,
            output_parameters=None,
            state=ActivityState.PREPARING,
            ws=WsBinding("c1", "A", "svc-1", QoSSpec(5, 5)),
        )
        denied = WsoInstance(request=request, state=InstanceState.DENIED, activities=(bound,))
        messages = instance_errors(denied)
        assert any("denied" in m for m in messages)

    def test_instance_errors_flag_early_outputs(self):
        instance = WsoInstance(
            request=make_request(),
            state=InstanceState.WAITING,
            activities=(ActivityActor.initial("A", "c1"),),
            output_parameters=(("x", "1"),),
        )
        assert any("outputs" in m for m in instance_errors(instance))


class TestWorkflowDef:
    def test_validation(self):
        with pytest.raises(ValueError):
            WorkflowDef(ontology="Shop", activities=())
        with pytest.raises(ValueError):
            WorkflowDef(ontology="Shop", activities=(("A", "X"), ("A", "Y")))
        with pytest.raises(ValueError):
            WorkflowDef(ontology="Shop", activities=(("A.B", "X"),))
        workflow = WorkflowDef(ontology="Shop", activities=(("A", "X"), ("B", "Y")))
        assert workflow.activity_names() == ("A", "B")
        assert workflow.component_ontology("B") == "Y"
        with pytest.raises(UnknownActivityError):
            workflow.component_ontology("missing")


class TestAddresses:
    def test_roles(self):
        assert address_role(WSOIM_ADDRESS) is Role.MANAGER
        assert address_role(SS_ADDRESS) is Role.SELECTOR
        assert address_role(client_address("c1")) is Role.CLIENT
        assert address_role(instance_address("c1")) is Role.INSTANCE
        assert address_role(activity_address("c1", "Get Pays")) is Role.ACTIVITY
        assert address_role(service_address("c1", "Get Pays")) is Role.SERVICE
        assert address_role("bogus:x") is None

    def test_embedded_identities(self):
        assert address_client_id(activity_address("c1", "A:B")) == "c1"
        assert address_aa_name(activity_address("c1", "A:B")) == "A:B"
        assert address_client_id(client_address("c1")) == "c1"
        assert address_aa_name(instance_address("c1")) is None


def sample_message(kind: MessageKind) -> Message:
    cid = "c1"
    qos = QoSSpec(100, 10)
    samples = {
        MessageKind.WSO_REQUEST: Message(
            kind, client_address(cid), WSOIM_ADDRESS, cid, ontology="Shop", qos=qos, params=()
        ),
        MessageKind.SELECT: Message(
            kind, instance_address(cid), SS_ADDRESS, cid, ontology="Shop", qos=qos
        ),
        MessageKind.SELECT_REPLY_GRANTED: Message(
            kind, SS_ADDRESS, instance_address(cid), cid, assignment=()
        ),
        MessageKind.SELECT_REPLY_DENIED: Message(kind, SS_ADDRESS, instance_address(cid), cid),
        MessageKind.INVOKE: Message(kind, instance_address(cid), activity_address(cid, "A"), cid),
        MessageKind.INVOKE_ACK: Message(kind, activity_address(cid, "A"), instance_address(cid), cid),
        MessageKind.INVOKE_WS: Message(
            kind, activity_address(cid, "A"), service_address(cid, "A"), cid, params=()
        ),
        MessageKind.INVOKE_REPLY: Message(
            kind, service_address(cid, "A"), activity_address(cid, "A"), cid, params=()
        ),
        MessageKind.NOTIFY: Message(
            kind,
            activity_address(cid, "A"),
            instance_address(cid),
            cid,
            aa_name="A",
            aa_state=ActivityState.RETURNED,
        ),
        MessageKind.GRANTED_REPLY: Message(
            kind, instance_address(cid), client_address(cid), cid, ontology="Shop", qos=qos
        ),
        MessageKind.COMPLETED_REPLY: Message(
            kind, instance_address(cid), client_address(cid), cid, ontology="Shop", qos=qos, params=()
        ),
        MessageKind.DENIED_REPLY: Message(
            kind, instance_address(cid), client_address(cid), cid, ontology="Shop", qos=qos
        ),
    }
    return samples[kind]


class TestMessageVocabulary:
    @pytest.mark.parametrize("kind", list(MessageKind))
    def test_every_kind_has_a_conforming_shape(self, kind):
        assert message_schema_error(sample_message(kind)) is None

    def test_inverted_notify_direction_is_rejected(self):
        bad = Message(
            MessageKind.NOTIFY,
            instance_address("c1"),
            activity_address("c1", "A"),
            "c1",
            aa_name="A",
            aa_state=ActivityState.RETURNED,
        )
        error = message_schema_error(bad)
        assert error is not None and "sent by" in error

    def test_missing_payload_is_rejected(self):
        bad = Message(MessageKind.SELECT, instance_address("c1"), SS_ADDRESS, "c1")
        assert "requires payload" in message_schema_error(bad)

    def test_extra_payload_is_rejected(self):
        bad = Message(
            MessageKind.INVOKE,
            instance_address("c1"),
            activity_address("c1", "A"),
            "c1",
            params=(),
        )
        assert "must not carry" in message_schema_error(bad)

    def test_client_id_must_match_addresses(self):
        bad = Message(MessageKind.SELECT, instance_address("c1"), SS_ADDRESS, "c2",
                      ontology="Shop", qos=QoSSpec(1, 1))
        assert "does not match" in message_schema_error(bad)

    def test_notify_must_report_returned(self):
        bad = Message(
            MessageKind.NOTIFY,
            activity_address("c1", "A"),
            instance_address("c1"),
            "c1",
            aa_name="A",
            aa_state=ActivityState.INVOKING,
        )
        assert "Returned" in message_schema_error(bad)


class TestConfigurationAccessors:
    def make_config(self, *instances: WsoInstance, pool=()):
        actors = [(instance_address(i.client_id), i) for i in instances]
        return Configuration(actors=tuple(actors), undelivered=pool)

    def test_get_wsoi_absent_and_present(self):
        empty = Configuration(actors=())
        assert get_wsoi(empty, "c1") is None
        one = WsoInstance.create(make_request("c1"), ["A"])
        two = WsoInstance.create(make_request("c2"), ["A"])
        config = self.make_config(one, two)
        assert get_wsoi(config, "c2") == two
        assert get_wsoi(config, "c3") is None

    def test_get_aa(self):
        instance = WsoInstance.create(make_request(), ["Get Pays", "Send Price of Books"])
        assert get_aa(instance, "Get Pays").aa_name == "Get Pays"
        with pytest.raises(UnknownActivityError):
            get_aa(instance, "missing")

    def test_get_wses_sorted_and_nil_when_fresh(self):
        instance = WsoInstance.create(make_request(), ["B", "A", "C"])
        bindings = get_wses(instance)
        assert [b.aa_name for b in bindings] == ["A", "B", "C"]
        assert all(not b.bound for b in bindings)

    def test_undelivered_requests_ordering(self):
        m1 = sample_message(MessageKind.WSO_REQUEST)
        m2 = dataclasses.replace(
            m1, client_id="c0", sender=client_address("c0")
        )
        notify = sample_message(MessageKind.NOTIFY)
        config = Configuration(actors=(), undelivered=(m1, notify, m2))
        assert [m.client_id for m in undelivered_requests(config)] == ["c0", "c1"]
        assert undelivered_requests(Configuration(actors=())) == []

    def test_duplicate_addresses_rejected(self):
        instance = WsoInstance.create(make_request(), ["A"])
        with pytest.raises(ValueError):
            Configuration(
                actors=(
                    (instance_address("c1"), instance),
                    (instance_address("c1"), instance),
                )
            )


class TestTrace:
    def test_adjacency_enforced(self):
        instance = WsoInstance.create(make_request(), ["A"])
        config_a = Configuration(actors=((instance_address("c1"), instance),))
        config_b = Configuration(actors=())
        message = sample_message(MessageKind.INVOKE_ACK)
        transition = Transition(
            source=config_a, rule=RuleId.R3_INVOKE_ACK, message=message, target=config_a
        )
        with pytest.raises(ValueError):
            Trace(initial=config_b, steps=(transition,))
        trace = Trace(initial=config_a, steps=(transition,))
        assert trace.final == config_a
        assert len(trace) == 1
