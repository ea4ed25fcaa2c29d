import json

import pytest

from sfcdb import errors
from sfcdb.model import (
    AccessKind,
    AccessScope,
    SFCJob,
    StateKey,
    job_from_dict,
    load_job,
)


def example_chain_job() -> SFCJob:
    """The four-VNF example chain: firewall -> lb -> {trojan, portscan}."""
    job = SFCJob("example_chain")
    job.define_state("security_policy", key_kind="flow", fields=["policy"])
    job.define_state("host_load", fields=["h1", "h2", "h3"])
    job.define_state("request_history", key_kind="host", fields=["events"], defaults={"events": ()})
    job.define_state("portscan_likelihood", key_kind="src", fields=["score"])
    job.define_access("update_policy", ["security_policy"], AccessKind.WRITE)
    job.define_access("update_least_loaded_host", ["host_load"], AccessKind.WRITE)
    job.define_access("evaluate_traffic", ["request_history"], AccessKind.READ)
    job.define_access("record_activity", ["request_history"], AccessKind.WRITE)
    job.define_access("check_likelihood", ["portscan_likelihood"], AccessKind.READ)
    job.define_access("update_likelihood", ["portscan_likelihood"], AccessKind.WRITE)
    job.define_transaction("lb_txn", ["update_least_loaded_host"])
    job.define_transaction("td_txn", ["evaluate_traffic", "record_activity"])
    job.define_transaction("ps_txn", ["check_likelihood", "update_likelihood"])
    job.define_vnf("firewall", [], per_flow_udf="firewall")
    job.define_vnf("load balancer", ["lb_txn"], per_flow_udf="lb", cross_flow_udf="lb")
    job.define_vnf("trojan detector", ["td_txn"], per_flow_udf="trojan", cross_flow_udf="trojan")
    job.define_vnf("portscan detector", ["ps_txn"], per_flow_udf="portscan", cross_flow_udf="portscan")
    job.define_topology("firewall", None, stage=1, parallelism=8)
    job.define_topology("load balancer", "firewall", stage=2, parallelism=8)
    job.define_topology("trojan detector", "load balancer", stage=3, parallelism=4)
    job.define_topology("portscan detector", "load balancer", stage=3, parallelism=4)
    return job


def test_define_state_records_schema():
    job = SFCJob("t")
    job.define_state("host_load", key_kind="host", fields=["load"], access_scope=AccessScope.CROSS_FLOW)
    assert job.schemas["host_load"].fields == ("load",)


def test_duplicate_state_id_rejected():
    job = SFCJob("t")
    job.define_state("host_load", key_kind="host", fields=["load"])
    with pytest.raises(errors.DuplicateStateId):
        job.define_state("host_load", key_kind="host", fields=["load"])


def test_empty_fields_rejected():
    with pytest.raises(errors.EmptyFields):
        SFCJob("t").define_state("s", fields=[])


def test_table_spellings_are_aliases():
    job = SFCJob("t")
    job.register_state("a", key_kind="host", fields=["x"])
    job.add_state_object("b", key_kind="host", fields=["y"], tag="counter")
    assert job.schemas["b"].tag == "counter"


def test_read_access_with_two_states_rejected():
    job = SFCJob("t")
    job.define_state("a", fields=["x"])
    job.define_state("b", fields=["x"])
    with pytest.raises(errors.ReadWithMultipleStates):
        job.define_access("r", ["a", "b"], AccessKind.READ)


def test_write_access_with_conditional_reads():
    job = SFCJob("t")
    job.define_state("a", fields=["x"])
    job.define_state("b", fields=["x"])
    job.define_access("w", ["a", "b"], AccessKind.WRITE)
    tmpl = job.accesses["w"]
    assert tmpl.write_target == "a"
    assert tmpl.conditional_reads == ("b",)


def test_access_unknown_state_rejected():
    with pytest.raises(errors.UnknownStateId):
        SFCJob("t").define_access("r", ["missing"], AccessKind.READ)


def test_empty_transaction_rejected():
    with pytest.raises(errors.EmptyTransaction):
        SFCJob("t").define_transaction("empty", [])


def test_transaction_unknown_access_rejected():
    with pytest.raises(errors.UnknownAccessId):
        SFCJob("t").define_transaction("t1", ["nope"])


def test_txn_ownership_is_exclusive():
    job = example_chain_job()
    with pytest.raises(errors.TxnAlreadyOwned):
        job.define_vnf("imposter", ["td_txn"], per_flow_udf="x", cross_flow_udf="x")


def test_vnf_with_txns_requires_cross_flow_udf():
    job = example_chain_job()
    job.define_transaction("spare", ["update_policy"])
    with pytest.raises(errors.MissingCrossFlowUdf):
        job.define_vnf("v", ["spare"], per_flow_udf="x", cross_flow_udf=None)


def test_topology_unknown_parent_rejected():
    job = example_chain_job()
    with pytest.raises(errors.UnknownParent):
        job.define_topology("x", "ghost", stage=2, parallelism=1)


def test_topology_bad_stage_rejected():
    job = SFCJob("t")
    job.define_state("a", fields=["x"])
    job.define_vnf("fw", [], per_flow_udf="firewall")
    job.define_vnf("lb", [], per_flow_udf="firewall")
    job.define_topology("fw", None, stage=1, parallelism=1)
    with pytest.raises(errors.BadStage):
        job.define_topology("lb", "fw", stage=3, parallelism=1)


def test_example_chain_validates():
    validated = example_chain_job().validate()
    assert len(validated.vnfs) == 4
    assert sorted(n.stage for n in validated.topology) == [1, 2, 3, 3]
    assert validated.children["load balancer"] == ["trojan detector", "portscan detector"]


def test_job_frozen_after_validate():
    job = example_chain_job()
    job.validate()
    with pytest.raises(errors.JobFrozen):
        job.define_state("late", fields=["x"])


def test_scope_violation_detected_at_validation():
    job = SFCJob("t")
    job.define_state("priv", key_kind="flow", fields=["x"], access_scope=AccessScope.PER_FLOW)
    job.define_state("pub", fields=["x"])
    job.define_access("w", ["priv"], AccessKind.WRITE)
    job.define_transaction("t1", ["w"])
    job.define_vnf("v", ["t1"], per_flow_udf="x", cross_flow_udf="x")
    job.define_topology("v", None, stage=1, parallelism=1)
    with pytest.raises(errors.JobValidationError) as exc:
        job.validate()
    assert any(code == "ScopeViolation" for code, _ in exc.value.violations)


def test_multiple_roots_rejected():
    job = SFCJob("t")
    job.define_state("a", fields=["x"])
    job.define_vnf("v1", [], per_flow_udf="x")
    job.define_vnf("v2", [], per_flow_udf="x")
    job.define_topology("v1", None, stage=1, parallelism=1)
    job.define_topology("v2", None, stage=1, parallelism=1)
    with pytest.raises(errors.JobValidationError) as exc:
        job.validate()
    assert any(code == "MultipleRoots" for code, _ in exc.value.violations)


def test_validation_report_aggregates_all_violations():
    job = SFCJob("t")
    job.define_state("priv", key_kind="flow", fields=["x"], access_scope=AccessScope.PER_FLOW)
    job.define_access("w", ["priv"], AccessKind.WRITE)
    job.define_transaction("t1", ["w"])
    job.define_vnf("v", ["t1"], per_flow_udf="x", cross_flow_udf="x")
    job.define_vnf("stray", [], per_flow_udf="x")
    job.define_topology("v", None, stage=1, parallelism=1)
    with pytest.raises(errors.JobValidationError) as exc:
        job.validate()
    codes = {code for code, _ in exc.value.violations}
    assert {"ScopeViolation", "UnplacedVnf"} <= codes


def test_validation_deterministic_byte_identical():
    a = example_chain_job().validate().canonical_json()
    b = example_chain_job().validate().canonical_json()
    assert a == b
    assert isinstance(json.loads(a), dict)


def test_json_round_trip():
    validated = example_chain_job().validate()
    doc = validated.to_dict()
    rebuilt = job_from_dict(doc).validate()
    assert rebuilt.canonical_json() == validated.canonical_json()


def test_load_job_from_text():
    validated = example_chain_job().validate()
    text = json.dumps(validated.to_dict())
    loaded = load_job(text)
    assert loaded.name == "example_chain"


def test_target_keys_resolution():
    validated = example_chain_job().validate()
    keys = validated.target_keys_for("td_txn", {"host": "h7", "src": "s1"})
    assert keys["evaluate_traffic"] == (StateKey("request_history", "h7"),)
    assert keys["record_activity"] == (StateKey("request_history", "h7"),)
    lb = validated.target_keys_for("lb_txn", {"host": "h7"})
    assert lb["update_least_loaded_host"] == (StateKey("host_load", ""),)


def test_target_keys_missing_packet_field():
    validated = example_chain_job().validate()
    with pytest.raises(errors.MissingTargetKey):
        validated.target_keys_for("td_txn", {"src": "s1"})
