"""Declarative job model: states, access templates, transactions, VNFs, topology.

A chain is declared through the builder on :class:`SFCJob` and frozen into a
:class:`ValidatedJob` whose template tables are the static description shared
by every executor at runtime.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, NamedTuple, Optional

from .errors import (
    BadStage,
    DuplicateStateId,
    EmptyFields,
    EmptyTransaction,
    JobFrozen,
    JobValidationError,
    MissingCrossFlowUdf,
    MissingTargetKey,
    ReadWithMultipleStates,
    TxnAlreadyOwned,
    UnknownAccessId,
    UnknownParent,
    UnknownStateId,
    UnknownTxnId,
)

GLOBAL_KEY_KIND = "global"

# Field values are flat scalars or ordered token tuples; no nesting.
Scalar = Any  # int | str | tuple[int | str, ...]


class AccessScope(Enum):
    PER_FLOW = "PerFlow"
    CROSS_FLOW = "CrossFlow"


class Consistency(Enum):
    STRONG = "Strong"
    EVENTUAL = "Eventual"


class AccessKind(Enum):
    READ = "Read"
    WRITE = "Write"


class StateKey(NamedTuple):
    """Identifies one instance of a state, e.g. ("request_history", "h003")."""

    state_id: str
    key: str


@dataclass(frozen=True)
class StateSchema:
    state_id: str
    key_kind: str
    fields: tuple[str, ...]
    access_scope: AccessScope = AccessScope.CROSS_FLOW
    consistency: Consistency = Consistency.STRONG
    defaults: dict[str, Scalar] = field(default_factory=dict)
    tag: str = ""  # opaque object-type tag, stored verbatim

    def default_value(self) -> dict[str, Scalar]:
        """Initial value of any key of this state: declared defaults, else zero."""
        return {f: self.defaults.get(f, 0) for f in self.fields}


@dataclass(frozen=True)
class StateAccessTemplate:
    access_id: str
    state_ids: tuple[str, ...]
    kind: AccessKind

    @property
    def write_target(self) -> Optional[str]:
        return self.state_ids[0] if self.kind is AccessKind.WRITE else None

    @property
    def conditional_reads(self) -> tuple[str, ...]:
        return self.state_ids[1:] if self.kind is AccessKind.WRITE else ()


@dataclass(frozen=True)
class TransactionTemplate:
    txn_id: str
    access_ids: tuple[str, ...]


@dataclass(frozen=True)
class VNFDefinition:
    vnf_id: str
    txn_ids: tuple[str, ...]
    per_flow_udf: str
    cross_flow_udf: Optional[str] = None
    config: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class TopologyNode:
    vnf_id: str
    parent_id: Optional[str]
    stage: int
    parallelism: int


@dataclass(frozen=True)
class Endpoint:
    address: str = "0.0.0.0"
    port: int = 0
    protocol: str = "udp"


class SFCJob:
    """Mutable builder. Declaration order is preserved and significant."""

    def __init__(self, name: str):
        self.name = name
        self.schemas: dict[str, StateSchema] = {}
        self.accesses: dict[str, StateAccessTemplate] = {}
        self.transactions: dict[str, TransactionTemplate] = {}
        self.vnfs: dict[str, VNFDefinition] = {}
        self.topology: list[TopologyNode] = []
        self.input_source = Endpoint()
        self.output_target = Endpoint()
        self._txn_owner: dict[str, str] = {}
        self._started = False

    def _check_open(self) -> None:
        if self._started:
            raise JobFrozen(f"job {self.name!r} already started")

    # -- declarations -------------------------------------------------

    def define_state(
        self,
        state_id: str,
        key_kind: str = GLOBAL_KEY_KIND,
        fields: tuple[str, ...] | list[str] = (),
        access_scope: AccessScope = AccessScope.CROSS_FLOW,
        consistency: Consistency = Consistency.STRONG,
        defaults: Optional[dict[str, Scalar]] = None,
        tag: str = "",
    ) -> "SFCJob":
        self._check_open()
        if state_id in self.schemas:
            raise DuplicateStateId(state_id)
        if not fields:
            raise EmptyFields(state_id)
        self.schemas[state_id] = StateSchema(
            state_id=state_id,
            key_kind=key_kind,
            fields=tuple(fields),
            access_scope=access_scope,
            consistency=consistency,
            defaults=dict(defaults or {}),
            tag=tag,
        )
        return self

    # Table-1 spellings accepted as aliases of define_state.
    register_state = define_state
    add_state_object = define_state

    def define_access(
        self, access_id: str, state_ids: list[str] | tuple[str, ...], kind: AccessKind
    ) -> "SFCJob":
        self._check_open()
        state_ids = tuple(state_ids)
        for sid in state_ids:
            if sid not in self.schemas:
                raise UnknownStateId(f"{access_id}: {sid}")
        if kind is AccessKind.READ and len(state_ids) != 1:
            raise ReadWithMultipleStates(access_id)
        if not state_ids:
            raise UnknownStateId(f"{access_id}: no states listed")
        self.accesses[access_id] = StateAccessTemplate(access_id, state_ids, kind)
        return self

    add_state_access = define_access

    def define_transaction(self, txn_id: str, access_ids: list[str] | tuple[str, ...]) -> "SFCJob":
        self._check_open()
        access_ids = tuple(access_ids)
        if not access_ids:
            raise EmptyTransaction(txn_id)
        for aid in access_ids:
            if aid not in self.accesses:
                raise UnknownAccessId(f"{txn_id}: {aid}")
        self.transactions[txn_id] = TransactionTemplate(txn_id, access_ids)
        return self

    add_transaction = define_transaction

    def define_vnf(
        self,
        vnf_id: str,
        txn_ids: list[str] | tuple[str, ...] = (),
        per_flow_udf: str = "",
        cross_flow_udf: Optional[str] = None,
        config: Optional[dict[str, Any]] = None,
    ) -> "SFCJob":
        self._check_open()
        txn_ids = tuple(txn_ids)
        for tid in txn_ids:
            if tid not in self.transactions:
                raise UnknownTxnId(f"{vnf_id}: {tid}")
            owner = self._txn_owner.get(tid)
            if owner is not None:
                raise TxnAlreadyOwned(f"{tid} already owned by {owner}")
        if txn_ids and cross_flow_udf is None:
            raise MissingCrossFlowUdf(vnf_id)
        for tid in txn_ids:
            self._txn_owner[tid] = vnf_id
        self.vnfs[vnf_id] = VNFDefinition(
            vnf_id, txn_ids, per_flow_udf, cross_flow_udf, dict(config or {})
        )
        return self

    add_vnf = define_vnf

    def define_topology(
        self, vnf_id: str, parent_id: Optional[str], stage: int, parallelism: int
    ) -> "SFCJob":
        self._check_open()
        declared = {n.vnf_id for n in self.topology}
        if parent_id is not None and parent_id not in declared:
            raise UnknownParent(f"{vnf_id}: parent {parent_id}")
        if parent_id is None:
            if stage != 1:
                raise BadStage(f"{vnf_id}: root must be stage 1, got {stage}")
        else:
            parent_stage = next(n.stage for n in self.topology if n.vnf_id == parent_id)
            if stage != parent_stage + 1:
                raise BadStage(f"{vnf_id}: stage {stage} under stage-{parent_stage} parent")
        if stage < 1 or parallelism < 1:
            raise BadStage(f"{vnf_id}: stage and parallelism must be positive")
        self.topology.append(TopologyNode(vnf_id, parent_id, stage, parallelism))
        return self

    add_topo_node = define_topology

    def assign_input_source(self, address: str, port: int, protocol: str) -> "SFCJob":
        self._check_open()
        self.input_source = Endpoint(address, port, protocol)
        return self

    def assign_output_target(self, address: str, port: int, protocol: str) -> "SFCJob":
        self._check_open()
        self.output_target = Endpoint(address, port, protocol)
        return self

    # -- close-out ----------------------------------------------------

    def validate(self) -> "ValidatedJob":
        """Run all cross-cutting checks and freeze the template set.

        Raises JobValidationError carrying every violation found, not just
        the first one.
        """
        violations: list[tuple[str, str]] = []

        roots = [n for n in self.topology if n.parent_id is None]
        if not self.topology:
            violations.append(("EmptyTopology", "no topology nodes declared"))
        elif len(roots) != 1:
            violations.append(("MultipleRoots", f"{len(roots)} roots declared, need exactly 1"))

        seen: dict[str, TopologyNode] = {}
        for node in self.topology:
            if node.vnf_id in seen:
                violations.append(("DuplicateTopoNode", node.vnf_id))
            seen[node.vnf_id] = node
            if node.vnf_id not in self.vnfs:
                violations.append(("UnknownVnf", node.vnf_id))
            if node.parent_id == node.vnf_id:
                violations.append(("CycleDetected", f"{node.vnf_id} is its own parent"))

        # Cycle check by walking parent links; stage monotonicity makes real
        # cycles unreachable through the builder, but JSON input may bypass it.
        for node in self.topology:
            hops, cur = 0, node.parent_id
            while cur is not None and hops <= len(self.topology):
                cur = seen[cur].parent_id if cur in seen else None
                hops += 1
            if hops > len(self.topology):
                violations.append(("CycleDetected", f"walk from {node.vnf_id} does not terminate"))

        stages = sorted({n.stage for n in self.topology})
        if stages and stages != list(range(1, len(stages) + 1)):
            violations.append(("SparseStages", f"stages {stages} are not dense from 1"))

        placed = {n.vnf_id for n in self.topology}
        for vnf_id in self.vnfs:
            if vnf_id not in placed:
                violations.append(("UnplacedVnf", vnf_id))

        for tmpl in self.accesses.values():
            for sid in tmpl.state_ids:
                schema = self.schemas.get(sid)
                if schema and schema.access_scope is AccessScope.PER_FLOW:
                    violations.append(
                        ("ScopeViolation", f"access {tmpl.access_id} references PerFlow state {sid}")
                    )

        for vnf in self.vnfs.values():
            if vnf.txn_ids and not vnf.cross_flow_udf:
                violations.append(("MissingCrossFlowUdf", vnf.vnf_id))
            if vnf.cross_flow_udf and not vnf.txn_ids:
                violations.append(("CrossFlowUdfWithoutTxns", vnf.vnf_id))

        if violations:
            raise JobValidationError(violations)

        self._started = True
        return ValidatedJob(self)

    start = validate


class ValidatedJob:
    """Immutable template set plus the index tables used on the wire."""

    def __init__(self, job: SFCJob):
        self.name = job.name
        self.schemas = dict(job.schemas)
        self.accesses = dict(job.accesses)
        self.transactions = dict(job.transactions)
        self.vnfs = dict(job.vnfs)
        self.topology = tuple(job.topology)
        self.input_source = job.input_source
        self.output_target = job.output_target
        self.txn_owner = dict(job._txn_owner)

        # Dense ids in declaration order; the byte codec ships these indices
        # instead of strings.
        self.vnf_index = {v: i for i, v in enumerate(self.vnfs)}
        self.vnf_by_index = dict(enumerate(self.vnfs))
        self.txn_index = {t: i for i, t in enumerate(self.transactions)}
        self.txn_by_index = dict(enumerate(self.transactions))

        self.stages: dict[int, list[TopologyNode]] = {}
        for node in self.topology:
            self.stages.setdefault(node.stage, []).append(node)
        self.children: dict[str, list[str]] = {n.vnf_id: [] for n in self.topology}
        for node in self.topology:
            if node.parent_id is not None:
                self.children[node.parent_id].append(node.vnf_id)
        self.node_of = {n.vnf_id: n for n in self.topology}

    def stage_of(self, vnf_id: str) -> int:
        return self.node_of[vnf_id].stage

    def target_keys_for(self, txn_id: str, packet_data: dict[str, Any]) -> dict[str, tuple[StateKey, ...]]:
        """Resolve the concrete state keys an instance of `txn_id` touches.

        A state's key_kind names the packet field carrying its instance key;
        the "global" kind maps to the empty key.
        """
        out: dict[str, tuple[StateKey, ...]] = {}
        for aid in self.transactions[txn_id].access_ids:
            keys = []
            for sid in self.accesses[aid].state_ids:
                kind = self.schemas[sid].key_kind
                if kind == GLOBAL_KEY_KIND:
                    keys.append(StateKey(sid, ""))
                else:
                    if kind not in packet_data:
                        raise MissingTargetKey(f"{txn_id}/{aid}: packet lacks field {kind!r}")
                    keys.append(StateKey(sid, str(packet_data[kind])))
            out[aid] = tuple(keys)
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "states": [
                {
                    "id": s.state_id,
                    "key": s.key_kind,
                    "fields": list(s.fields),
                    "scope": s.access_scope.value,
                    "consistency": s.consistency.value,
                    "defaults": {k: list(v) if isinstance(v, tuple) else v for k, v in s.defaults.items()},
                    "tag": s.tag,
                }
                for s in self.schemas.values()
            ],
            "accesses": [
                {"id": a.access_id, "states": list(a.state_ids), "kind": a.kind.value}
                for a in self.accesses.values()
            ],
            "transactions": [
                {"id": t.txn_id, "accesses": list(t.access_ids)} for t in self.transactions.values()
            ],
            "vnfs": [
                {
                    "id": v.vnf_id,
                    "txns": list(v.txn_ids),
                    "per_flow_udf": v.per_flow_udf,
                    "cross_flow_udf": v.cross_flow_udf,
                    "config": v.config,
                }
                for v in self.vnfs.values()
            ],
            "topology": [
                {"vnf": n.vnf_id, "parent": n.parent_id, "stage": n.stage, "parallelism": n.parallelism}
                for n in self.topology
            ],
            "input": {"address": self.input_source.address, "port": self.input_source.port, "protocol": self.input_source.protocol},
            "output": {"address": self.output_target.address, "port": self.output_target.port, "protocol": self.output_target.protocol},
        }

    def canonical_json(self) -> str:
        """Deterministic byte-stable rendering of the template set."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def job_from_dict(doc: dict[str, Any]) -> SFCJob:
    """Build an (unvalidated) job from the JSON document form."""
    job = SFCJob(doc.get("name", "job"))
    for s in doc.get("states", []):
        defaults = {
            k: tuple(v) if isinstance(v, list) else v for k, v in s.get("defaults", {}).items()
        }
        job.define_state(
            s["id"],
            key_kind=s.get("key", GLOBAL_KEY_KIND),
            fields=s["fields"],
            access_scope=AccessScope(s.get("scope", "CrossFlow")),
            consistency=Consistency(s.get("consistency", "Strong")),
            defaults=defaults,
            tag=s.get("tag", ""),
        )
    for a in doc.get("accesses", []):
        job.define_access(a["id"], a["states"], AccessKind(a["kind"]))
    for t in doc.get("transactions", []):
        job.define_transaction(t["id"], t["accesses"])
    for v in doc.get("vnfs", []):
        job.define_vnf(
            v["id"],
            txn_ids=v.get("txns", []),
            per_flow_udf=v.get("per_flow_udf", ""),
            cross_flow_udf=v.get("cross_flow_udf"),
            config=v.get("config", {}),
        )
    for n in doc.get("topology", []):
        job.define_topology(n["vnf"], n.get("parent"), n["stage"], n["parallelism"])
    if "input" in doc:
        ep = doc["input"]
        job.assign_input_source(ep.get("address", "0.0.0.0"), ep.get("port", 0), ep.get("protocol", "udp"))
    if "output" in doc:
        ep = doc["output"]
        job.assign_output_target(ep.get("address", "0.0.0.0"), ep.get("port", 0), ep.get("protocol", "udp"))
    return job


def load_job(path_or_text: str) -> ValidatedJob:
    """Load and validate a job from a JSON file path or a JSON string."""
    text = path_or_text
    if not path_or_text.lstrip().startswith("{"):
        with open(path_or_text, "r", encoding="utf-8") as fh:
            text = fh.read()
    return job_from_dict(json.loads(text)).validate()
