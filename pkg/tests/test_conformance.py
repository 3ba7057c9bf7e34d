import copy

import pytest

import support
from qosorch import engine, formats
from qosorch.conformance import (
    P_DENIAL_ORACLE,
    P_DENIED_UNBOUND,
    P_GRANT_FEASIBILITY,
    P_MESSAGE_VOCABULARY,
    P_PYRAMID_CHAIN,
    P_REPLY_DICHOTOMY,
    P_RULE_REPLAY,
    P_STATE_MONOTONICITY,
    check_behavior,
    check_pyramid,
    check_service,
    check_system,
)
from qosorch.model import RuleId


def properties(verdict):
    return {v.property_id for v in verdict.violations}


def reload_with_edit(trace, edit):
    """Serialize a trace, let `edit` rewrite the records, and reassemble."""
    records = [copy.deepcopy(r) for r in formats.trace_to_records(trace)]
    edit(records)
    return formats.traces_from_records(records)[0]


@pytest.fixture(scope="module")
def minimal_run(minimal_one):
    return engine.run(minimal_one.workflow, minimal_one.registry, minimal_one.requests, seed=3)


@pytest.fixture(scope="module")
def infeasible_run(bookstore_infeasible):
    return engine.run(
        bookstore_infeasible.workflow,
        bookstore_infeasible.registry,
        bookstore_infeasible.requests,
        seed=3,
    )


class TestBehavior:
    def test_engine_output_conforms(self, minimal_run, explored_corpora):
        assert check_behavior(minimal_run).passed
        for trace in explored_corpora.sets["pair-2req-denied"]:
            assert check_behavior(trace).passed

    def test_inverted_notify_direction_is_flagged(self, minimal_run):
        def invert_notify(records):
            for record in records:
                if record.get("rule") == RuleId.R7_AA_RETURN.value:
                    notify = record["emitted"][0]
                    notify["sender"], notify["receiver"] = (
                        notify["receiver"],
                        notify["sender"],
                    )
                    return
            raise AssertionError("no returning transition found")

        corrupted = reload_with_edit(minimal_run, invert_notify)
        verdict = check_behavior(corrupted)
        assert not verdict.passed
        assert P_MESSAGE_VOCABULARY in properties(verdict)
        assert any("sent by" in v.witness for v in verdict.violations)

    def test_edited_state_breaks_replay(self, minimal_run):
        def jump_state(records):
            for record in records:
                if record.get("rule") == RuleId.R2B_SELECT_GRANTED.value:
                    for change in record["changed"]:
                        after = change["after"]
                        if after and after.get("type") == "instance":
                            after["state"] = "Servicing"
                            return
            raise AssertionError("no grant transition found")

        corrupted = reload_with_edit(minimal_run, jump_state)
        verdict = check_behavior(corrupted)
        assert not verdict.passed
        assert P_RULE_REPLAY in properties(verdict)
        # The illegal Waiting -> Servicing move is a system-layer violation.
        system = check_system([corrupted])
        assert P_STATE_MONOTONICITY in properties(system)
        assert any(
            "Waiting -> Servicing" in v.witness for v in system.violations
        )


class TestSystem:
    def test_explored_sets_conform(self, explored_corpora):
        for traces in explored_corpora.sets.values():
            assert check_system(traces).passed

    def test_all_denied_set_conforms(self, explored_corpora, infeasible_run):
        assert check_system(explored_corpora.sets["pair-2req-denied"]).passed
        assert check_system([infeasible_run]).passed

    def test_denied_instance_holding_binding_is_flagged(self, infeasible_run):
        def bind_denied(records):
            for record in records:
                if record.get("rule") == RuleId.R2A_SELECT_DENIED.value:
                    for change in record["changed"]:
                        after = change["after"]
                        if after and after.get("type") == "instance":
                            after["activities"][0]["ws"] = {
                                "endpoint": "shipment-rail",
                                "advertised_qos": {"response_time_ms": 200, "cost_cents": 5},
                            }
                            return
            raise AssertionError("no denial transition found")

        corrupted = reload_with_edit(infeasible_run, bind_denied)
        verdict = check_system([corrupted])
        assert not verdict.passed
        assert P_DENIED_UNBOUND in properties(verdict)

    def test_mixed_initial_configurations_rejected(self, minimal_run, infeasible_run):
        with pytest.raises(ValueError):
            check_system([minimal_run, infeasible_run])


class TestService:
    def test_accepted_and_rejected_sets_conform(self, explored_corpora, infeasible_run):
        for traces in explored_corpora.sets.values():
            assert check_service(traces).passed
        assert check_service([infeasible_run]).passed

    def test_double_reply_breaks_dichotomy(self, minimal_run):
        def duplicate_reply(records):
            last = records[-1]
            assert last["record"] == "transition"
            completed = last["emitted"][0]
            denied = copy.deepcopy(completed)
            denied["kind"] = "deniedReply"
            del denied["params"]
            last["emitted"].append(denied)

        corrupted = reload_with_edit(minimal_run, duplicate_reply)
        verdict = check_service([corrupted])
        assert not verdict.passed
        assert P_REPLY_DICHOTOMY in properties(verdict)

    def test_unjustified_denial_is_flagged(self, minimal_one):
        trace = engine.run(
            minimal_one.workflow,
            minimal_one.registry,
            minimal_one.requests,
            seed=0,
            selector=support.always_deny_selector,
        )
        verdict = check_service([trace])
        assert not verdict.passed
        assert P_DENIAL_ORACLE in properties(verdict)


class TestPyramid:
    def test_engine_corpora_pass_all_layers(self, explored_corpora, minimal_run):
        verdict = check_pyramid(explored_corpora.sets["minimal-2req"])
        assert verdict.passed
        assert verdict.first_failed is None
        assert check_pyramid([minimal_run]).passed

    def test_empty_set_is_vacuously_conformant(self):
        verdict = check_pyramid([])
        assert verdict.passed
        assert verdict.violations == ()

    def test_infeasible_grant_fails_only_the_service_layer(self, bookstore_infeasible):
        trace = engine.run(
            bookstore_infeasible.workflow,
            bookstore_infeasible.registry,
            bookstore_infeasible.requests,
            seed=0,
            selector=support.always_grant_selector,
        )
        verdict = check_pyramid([trace])
        assert verdict.behavior.passed
        assert verdict.system.passed
        assert not verdict.service.passed
        assert P_GRANT_FEASIBILITY in properties(verdict.service)
        assert verdict.first_failed == "service"
        assert P_PYRAMID_CHAIN in properties(verdict)

    def test_denied_then_granted_fails_the_system_layer(self, bookstore_infeasible):
        trace = support.denied_then_granted_trace(
            bookstore_infeasible.workflow,
            bookstore_infeasible.registry,
            bookstore_infeasible.requests,
        )
        verdict = check_pyramid([trace])
        system = verdict.system
        assert not system.passed
        assert P_STATE_MONOTONICITY in properties(system)
        assert any("Denied -> Granted" in v.witness for v in system.violations)
        # The forged grant is no legal rule application either, so the chain
        # breaks at the bottom layer first.
        assert not verdict.behavior.passed
        assert verdict.first_failed == "behavior"
        # Dichotomy breaks too: the client saw both a denial and a completion.
        assert P_REPLY_DICHOTOMY in properties(verdict.service)
