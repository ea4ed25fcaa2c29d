"""Task precedence graphs: one per stage per batch.

Nodes are state-access operations; edges come in three kinds:

* TD (time-based): consecutive operations touching the same state key,
  directed from lower to higher sequence number (the immediate-successor
  chain per key, not the transitive closure).
* PD (parametric): a write whose conditional-read set consumes a state
  written by an earlier access of the same transaction.
* LD (logical): consecutive accesses of one transaction, in template order.

Transactions execute atomically (a cross-flow UDF is a single function), so
readiness is tracked per transaction: a transaction can fire once every one
of its operations has all cross-transaction predecessors terminal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

from .errors import CycleDetected, MissingTargetKey, UnknownTemplate
from .model import AccessKind, StateKey, ValidatedJob


def make_seq(batch_id: int, index: int) -> int:
    """Global sequence number: arrival order pinned at ingestion."""
    return (batch_id << 32) | index


class OpStatus(Enum):
    BLOCKED = "Blocked"
    READY = "Ready"
    EXECUTED = "Executed"
    ABORTED = "Aborted"


class DepKind(Enum):
    TD = "TD"
    PD = "PD"
    LD = "LD"


@dataclass(frozen=True)
class TransactionRequest:
    seq: int
    vnf_id: str
    instance_id: int
    txn_id: str
    packet_data: dict[str, Any]
    target_keys: dict[str, tuple[StateKey, ...]]


@dataclass(slots=True)
class OpNode:
    op_id: int
    owner_seq: int
    txn_idx: int  # index of the owning request within the batch
    access_id: str
    kind: AccessKind
    write_key: Optional[StateKey]
    read_keys: tuple[StateKey, ...]
    status: OpStatus = OpStatus.BLOCKED
    depth: int = 0

    def touched_keys(self) -> tuple[StateKey, ...]:
        if self.write_key is None:
            return self.read_keys
        if self.write_key in self.read_keys:
            return (self.write_key,) + tuple(k for k in self.read_keys if k != self.write_key)
        return (self.write_key,) + self.read_keys


@dataclass(frozen=True)
class DepEdge:
    src: int
    dst: int
    kind: DepKind


class RequestBatch:
    """Accumulates one stage's transaction requests and their op nodes."""

    def __init__(self, job: ValidatedJob, stage: int, batch_id: int = 0):
        self.job = job
        self.stage = stage
        self.batch_id = batch_id
        self.requests: list[TransactionRequest] = []
        self.nodes: list[OpNode] = []
        self.edges: list[DepEdge] = []
        self.txn_ops: list[list[int]] = []
        self._seqs: set[int] = set()

    def enqueue_request(self, req: TransactionRequest) -> None:
        tmpl = self.job.transactions.get(req.txn_id)
        if tmpl is None:
            raise UnknownTemplate(req.txn_id)
        if self.job.txn_owner.get(req.txn_id) != req.vnf_id:
            raise UnknownTemplate(f"{req.txn_id} is not owned by {req.vnf_id}")
        if req.seq in self._seqs:
            raise UnknownTemplate(f"duplicate seq {req.seq}")
        op_ids: list[int] = []
        txn_idx = len(self.requests)
        for aid in tmpl.access_ids:
            access = self.job.accesses[aid]
            keys = req.target_keys.get(aid)
            if keys is None or len(keys) != len(access.state_ids):
                raise MissingTargetKey(f"{req.txn_id}/{aid}")
            if access.kind is AccessKind.WRITE:
                write_key, read_keys = keys[0], tuple(keys[1:])
            else:
                write_key, read_keys = None, (keys[0],)
            op_id = len(self.nodes)
            self.nodes.append(
                OpNode(
                    op_id=op_id,
                    owner_seq=req.seq,
                    txn_idx=txn_idx,
                    access_id=aid,
                    kind=access.kind,
                    write_key=write_key,
                    read_keys=read_keys,
                )
            )
            if op_ids:
                self.edges.append(DepEdge(op_ids[-1], op_id, DepKind.LD))
            op_ids.append(op_id)
        self._seqs.add(req.seq)
        self.requests.append(req)
        self.txn_ops.append(op_ids)


@dataclass
class WorkloadProfile:
    td_density: float = 0.0
    pd_density: float = 0.0
    ld_density: float = 0.0
    skew: float = 0.0
    complexity: float = 0.0


class TPG:
    def __init__(self, batch: RequestBatch):
        self.stage = batch.stage
        self.job = batch.job
        self.requests = batch.requests
        self.nodes = batch.nodes
        self.edges = list(batch.edges)
        self.txn_ops = batch.txn_ops
        self.key_chains: dict[StateKey, list[int]] = {}
        # per-txn count of cross-transaction predecessor edges still pending
        self.txn_ext_pending: list[int] = [0] * len(self.requests)
        # op -> transactions whose readiness waits on this op
        self.op_dependents: list[list[int]] = [[] for _ in self.nodes]
        self.txn_terminal: list[bool] = [False] * len(self.requests)
        self._build()

    # -- construction -------------------------------------------------

    def _build(self) -> None:
        nodes = self.nodes
        by_key: dict[StateKey, list[int]] = {}
        for node in nodes:
            for key in node.touched_keys():
                by_key.setdefault(key, []).append(node.op_id)

        # enqueue order == (owner_seq, template order), so per-key lists are
        # already sorted; sort defensively for externally built batches.
        for key, ops in by_key.items():
            ops.sort(key=lambda i: (nodes[i].owner_seq, i))
            self.key_chains[key] = ops
            for a, b in zip(ops, ops[1:]):
                self.edges.append(DepEdge(a, b, DepKind.TD))

        # PD: intra-transaction dataflow from a write into a later access
        # that conditionally reads the written state.
        for ops in self.txn_ops:
            written: dict[str, int] = {}
            for op_id in ops:
                node = nodes[op_id]
                if node.kind is AccessKind.WRITE:
                    for key in node.read_keys:
                        if key.state_id in written:
                            self.edges.append(
                                DepEdge(written[key.state_id], op_id, DepKind.PD)
                            )
                    assert node.write_key is not None
                    written[node.write_key.state_id] = op_id

        # Every edge must run forward in (owner_seq, op_id) order; op ids are
        # assigned in template order so this doubles as the acyclicity check.
        for e in self.edges:
            a, b = nodes[e.src], nodes[e.dst]
            if (a.owner_seq, a.op_id) >= (b.owner_seq, b.op_id):
                raise CycleDetected(f"{e.kind.value} edge {e.src}->{e.dst} is not seq-ordered")

        for e in self.edges:
            if e.kind is DepKind.LD:
                continue
            src_txn = nodes[e.src].txn_idx
            dst_txn = nodes[e.dst].txn_idx
            if src_txn != dst_txn:
                self.txn_ext_pending[dst_txn] += 1
                self.op_dependents[e.src].append(dst_txn)

        # node depth = longest edge path from any root (BFS exploration key);
        # (owner_seq, op_id) order is topological by the check above
        succs: dict[int, list[int]] = {}
        for e in self.edges:
            succs.setdefault(e.src, []).append(e.dst)
        for node in sorted(nodes, key=lambda n: (n.owner_seq, n.op_id)):
            for dst in succs.get(node.op_id, ()):
                if node.depth + 1 > nodes[dst].depth:
                    nodes[dst].depth = node.depth + 1

        for txn_idx, pending in enumerate(self.txn_ext_pending):
            if pending == 0:
                for op_id in self.txn_ops[txn_idx]:
                    nodes[op_id].status = OpStatus.READY

    # -- runtime bookkeeping ------------------------------------------

    def txn_ready(self, txn_idx: int) -> bool:
        return self.txn_ext_pending[txn_idx] == 0 and not self.txn_terminal[txn_idx]

    def complete_txn(self, txn_idx: int, aborted: bool) -> list[int]:
        """Mark a fired transaction terminal; return transactions unblocked."""
        status = OpStatus.ABORTED if aborted else OpStatus.EXECUTED
        self.txn_terminal[txn_idx] = True
        unblocked: list[int] = []
        for op_id in self.txn_ops[txn_idx]:
            self.nodes[op_id].status = status
            for dep_txn in self.op_dependents[op_id]:
                self.txn_ext_pending[dep_txn] -= 1
                if self.txn_ext_pending[dep_txn] == 0:
                    unblocked.append(dep_txn)
        for dep_txn in unblocked:
            for op_id in self.txn_ops[dep_txn]:
                self.nodes[op_id].status = OpStatus.READY
        return unblocked

    def all_terminal(self) -> bool:
        return all(self.txn_terminal)

    # -- introspection --------------------------------------------------

    def stats(self) -> WorkloadProfile:
        n = len(self.nodes)
        if n == 0:
            return WorkloadProfile()
        counts = {DepKind.TD: 0, DepKind.PD: 0, DepKind.LD: 0}
        for e in self.edges:
            counts[e.kind] += 1
        max_per_key = max((len(ops) for ops in self.key_chains.values()), default=0)
        complexity = sum(len(node.touched_keys()) for node in self.nodes) / n
        return WorkloadProfile(
            td_density=counts[DepKind.TD] / n,
            pd_density=counts[DepKind.PD] / n,
            ld_density=counts[DepKind.LD] / n,
            skew=max_per_key / n,
            complexity=complexity,
        )

    def export_edges(self) -> str:
        lines = sorted(
            f"{e.src} -{e.kind.value}-> {e.dst}" for e in self.edges
        )
        return "\n".join(lines)


def build_tpg(batch: RequestBatch) -> TPG:
    return TPG(batch)


def tpg_stats(tpg: TPG) -> WorkloadProfile:
    return tpg.stats()
