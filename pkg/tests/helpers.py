"""Shared job builders and request factories for the test suite."""

from __future__ import annotations

from sfcdb.model import AccessKind, SFCJob, ValidatedJob
from sfcdb.tpg import RequestBatch, TransactionRequest, make_seq


def rw_job(extra_templates: bool = False) -> ValidatedJob:
    """Single-VNF job with read-only, write-only and read-modify-write txns
    over one host-keyed counter state."""
    job = SFCJob("rw")
    job.define_state("kv", key_kind="host", fields=["v"])
    job.define_access("read_kv", ["kv"], AccessKind.READ)
    job.define_access("write_kv", ["kv"], AccessKind.WRITE)
    job.define_transaction("r_txn", ["read_kv"])
    job.define_transaction("w_txn", ["write_kv"])
    job.define_transaction("rw_txn", ["read_kv", "write_kv"])
    txns = ["r_txn", "w_txn", "rw_txn"]
    if extra_templates:
        # exercises conditional reads and intra-txn parametric flow
        job.define_state("aux", key_kind="host", fields=["v"])
        job.define_access("write_aux", ["aux"], AccessKind.WRITE)
        job.define_access("write_kv_from_aux", ["kv", "aux"], AccessKind.WRITE)
        job.define_transaction("pd_txn", ["write_aux", "write_kv_from_aux"])
        txns.append("pd_txn")
    job.define_vnf("worker", txns, per_flow_udf="rw", cross_flow_udf="rw")
    job.define_topology("worker", None, stage=1, parallelism=4)
    return job.validate()


def make_request(
    job: ValidatedJob,
    txn_id: str,
    seq: int,
    host: str,
    vnf_id: str = "worker",
    instance_id: int = 0,
    **packet_fields,
) -> TransactionRequest:
    packet = {"host": host, **packet_fields}
    return TransactionRequest(
        seq=seq,
        vnf_id=vnf_id,
        instance_id=instance_id,
        txn_id=txn_id,
        packet_data=packet,
        target_keys=job.target_keys_for(txn_id, packet),
    )


def batch_of(job: ValidatedJob, specs, stage: int = 1, batch_id: int = 1) -> RequestBatch:
    """specs: iterable of (txn_id, host) or (txn_id, host, packet_fields)."""
    batch = RequestBatch(job, stage=stage, batch_id=batch_id)
    for i, spec in enumerate(specs):
        txn_id, host = spec[0], spec[1]
        fields = spec[2] if len(spec) > 2 else {}
        batch.enqueue_request(
            make_request(job, txn_id, make_seq(batch_id, i), host, **fields)
        )
    return batch
