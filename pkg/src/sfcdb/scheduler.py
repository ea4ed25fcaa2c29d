"""Batch scheduling: strategy selection, work partitioning, ready-unit serving.

The heuristic picks an exploration order (BFS by dependency depth, DFS along
per-key chains, or non-structured draining) and a granularity (one unit per
operation, or per-key chains fused into one unit). Work is hash-partitioned
across executors by each operation's primary state key, so any choice of
strategy and executor count drains the same graph to the same result.
"""

from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .model import StateKey
from .tpg import TPG, WorkloadProfile


def stable_hash(text: str) -> int:
    """Process-independent hash used for all partitioning decisions."""
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "little")


def key_hash(key: StateKey) -> int:
    return stable_hash(f"{key.state_id}\x00{key.key}")


class Exploration(Enum):
    BFS = "bfs"
    DFS = "dfs"
    NON_STRUCTURED = "ns"


class Granularity(Enum):
    FINE = "fine"
    GROUPED = "grouped"


@dataclass(frozen=True)
class ScheduleStrategy:
    exploration: Exploration
    granularity: Granularity

    def label(self) -> str:
        return f"{self.exploration.value}/{self.granularity.value}"


ALL_STRATEGIES = tuple(
    ScheduleStrategy(e, g) for e in Exploration for g in Granularity
)


@dataclass(frozen=True)
class HeuristicThresholds:
    skew: float = 0.5
    td_density: float = 1.0
    pd_density: float = 0.3


def select_strategy(
    profile: WorkloadProfile,
    override: Optional[ScheduleStrategy] = None,
    thresholds: HeuristicThresholds = HeuristicThresholds(),
) -> ScheduleStrategy:
    """Heuristic decision model; an explicit override always wins."""
    if override is not None:
        return override
    if profile.skew > thresholds.skew and profile.td_density > thresholds.td_density:
        return ScheduleStrategy(Exploration.DFS, Granularity.GROUPED)
    if profile.pd_density > thresholds.pd_density:
        return ScheduleStrategy(Exploration.BFS, Granularity.FINE)
    return ScheduleStrategy(Exploration.NON_STRUCTURED, Granularity.FINE)


@dataclass
class Unit:
    """A schedulable unit: one op, or a fused per-key chain of ops."""

    unit_id: int
    executor_id: int
    op_ids: tuple[int, ...]
    primary_key: StateKey
    cursor: int = 0


@dataclass
class WorkAssignment:
    executor_count: int
    units: list[list[Unit]]  # executor_id -> units ordered by min owner_seq
    unit_of_op: dict[int, Unit] = field(default_factory=dict)

    def all_op_ids(self) -> list[int]:
        return [op for ex_units in self.units for u in ex_units for op in u.op_ids]


def primary_key_of(tpg: TPG, op_id: int) -> StateKey:
    node = tpg.nodes[op_id]
    return node.write_key if node.write_key is not None else node.read_keys[0]


def assign_work(tpg: TPG, strategy: ScheduleStrategy, executor_count: int) -> WorkAssignment:
    assert executor_count >= 1
    assignment = WorkAssignment(executor_count, [[] for _ in range(executor_count)])
    next_id = 0
    if strategy.granularity is Granularity.GROUPED:
        chains: dict[StateKey, list[int]] = {}
        for node in tpg.nodes:
            chains.setdefault(primary_key_of(tpg, node.op_id), []).append(node.op_id)
        for key in sorted(chains):
            ops = sorted(chains[key], key=lambda i: (tpg.nodes[i].owner_seq, i))
            unit = Unit(next_id, key_hash(key) % executor_count, tuple(ops), key)
            next_id += 1
            assignment.units[unit.executor_id].append(unit)
            for op in ops:
                assignment.unit_of_op[op] = unit
    else:
        for node in tpg.nodes:
            key = primary_key_of(tpg, node.op_id)
            unit = Unit(next_id, key_hash(key) % executor_count, (node.op_id,), key)
            next_id += 1
            assignment.units[unit.executor_id].append(unit)
            assignment.unit_of_op[node.op_id] = unit
    for ex_units in assignment.units:
        ex_units.sort(key=lambda u: (tpg.nodes[u.op_ids[0]].owner_seq, u.op_ids[0]))
    return assignment


class ScheduleRun:
    """Serves ready units to executors for one batch.

    Ready units sit in per-executor heaps keyed by the exploration order;
    entries are validated lazily on pop because a unit's transaction may have
    been fired remotely through a sibling operation.
    """

    def __init__(self, tpg: TPG, assignment: WorkAssignment, strategy: ScheduleStrategy):
        self.tpg = tpg
        self.assignment = assignment
        self.strategy = strategy
        self._heaps: list[list[tuple]] = [[] for _ in range(assignment.executor_count)]
        self._counter = 0
        self._last_op: list[Optional[int]] = [None] * assignment.executor_count
        self._chain_next: dict[int, int] = {}
        if strategy.exploration is Exploration.DFS:
            for chain in tpg.key_chains.values():
                for a, b in zip(chain, chain[1:]):
                    self._chain_next.setdefault(a, b)
        for txn_idx, pending in enumerate(tpg.txn_ext_pending):
            if pending == 0 and not tpg.txn_terminal[txn_idx]:
                self._offer_txn(txn_idx)

    # -- heap bookkeeping ---------------------------------------------

    def _rank(self, op_id: int) -> tuple:
        node = self.tpg.nodes[op_id]
        if self.strategy.exploration is Exploration.BFS:
            return (node.depth, node.owner_seq, op_id)
        return (node.owner_seq, op_id)

    def _head_op(self, unit: Unit) -> Optional[int]:
        """First op in the unit whose transaction is not terminal."""
        while unit.cursor < len(unit.op_ids):
            op_id = unit.op_ids[unit.cursor]
            if not self.tpg.txn_terminal[self.tpg.nodes[op_id].txn_idx]:
                return op_id
            unit.cursor += 1
        return None

    def _offer_unit(self, unit: Unit) -> None:
        op_id = self._head_op(unit)
        if op_id is not None and self.tpg.txn_ready(self.tpg.nodes[op_id].txn_idx):
            self._counter += 1
            heapq.heappush(
                self._heaps[unit.executor_id], (self._rank(op_id), self._counter, unit.unit_id, unit)
            )

    def _offer_txn(self, txn_idx: int) -> None:
        for op_id in self.tpg.txn_ops[txn_idx]:
            unit = self.assignment.unit_of_op[op_id]
            head = self._head_op(unit)
            if head is not None and self.tpg.nodes[head].txn_idx == txn_idx:
                self._offer_unit(unit)

    # -- executor-facing API ----------------------------------------------

    def next_ready(self, executor_id: int) -> Optional[Unit]:
        """Next unit this executor may fire, per the exploration order.

        Returns None when nothing owned by this executor is currently ready;
        the caller retries after other executors make progress.
        """
        tpg = self.tpg
        if self.strategy.exploration is Exploration.DFS:
            # follow the chain of the op we just executed when possible
            last = self._last_op[executor_id]
            if last is not None:
                nxt = self._chain_successor(last)
                if nxt is not None:
                    unit = self.assignment.unit_of_op[nxt]
                    if unit.executor_id == executor_id:
                        head = self._head_op(unit)
                        if (
                            head == nxt
                            and tpg.txn_ready(tpg.nodes[head].txn_idx)
                        ):
                            return unit
        heap = self._heaps[executor_id]
        while heap:
            _, _, _, unit = heapq.heappop(heap)
            head = self._head_op(unit)
            if head is not None and tpg.txn_ready(tpg.nodes[head].txn_idx):
                return unit
        return None

    def _chain_successor(self, op_id: int) -> Optional[int]:
        return self._chain_next.get(op_id)

    def head_op(self, unit: Unit) -> Optional[int]:
        return self._head_op(unit)

    def record_fired(self, executor_id: int, unit: Unit, fired_op: int, unblocked: list[int]) -> None:
        """Bookkeeping after the executor fired the unit's head transaction."""
        self._last_op[executor_id] = fired_op
        for txn_idx in unblocked:
            self._offer_txn(txn_idx)
        # the unit may hold further ops that are already fireable
        self._offer_unit(unit)
