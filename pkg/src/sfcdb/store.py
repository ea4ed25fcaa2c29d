"""Centralized multi-version key-value store for cross-flow state.

Versions are installed at the writing transaction's global sequence number;
a read at seq s observes the greatest committed version strictly below s, or
the schema's default value when no such version exists. Snapshots capture the
materialized map at an epoch boundary and double as rollback anchors.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Optional

from .errors import DuplicateSeq, EpochNotQuiesced, UnknownKey, WouldBreakSnapshot
from .model import StateKey, StateSchema

DEFAULT_CACHE_THRESHOLD = 0.9


class CacheClassKind(Enum):
    CACHED_READ_MOSTLY = "CachedReadMostly"
    CENTRALIZED = "Centralized"


@dataclass(frozen=True)
class CacheClass:
    state_id: str
    kind: CacheClassKind
    read_ratio: float


@dataclass
class Snapshot:
    epoch: int
    state: dict[StateKey, dict[str, Any]]
    high_seq: int

    def to_json(self) -> str:
        """Deterministic export: keys sorted lexicographically."""
        doc = {
            "epoch": self.epoch,
            "high_seq": self.high_seq,
            "state": {
                f"{k.state_id}/{k.key}": {
                    f: list(v) if isinstance(v, tuple) else v for f, v in sorted(fields.items())
                }
                for k, fields in sorted(self.state.items())
            },
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "Snapshot":
        doc = json.loads(text)
        state: dict[StateKey, dict[str, Any]] = {}
        for label, fields in doc["state"].items():
            state_id, _, key = label.partition("/")
            state[StateKey(state_id, key)] = {
                f: tuple(v) if isinstance(v, list) else v for f, v in fields.items()
            }
        return cls(epoch=doc["epoch"], state=state, high_seq=doc["high_seq"])


class VersionedStore:
    def __init__(self, schemas: dict[str, StateSchema]):
        self.schemas = dict(schemas)
        # key -> parallel arrays (seqs ascending, values aligned)
        self._seqs: dict[StateKey, list[int]] = {}
        self._values: dict[StateKey, list[dict[str, Any]]] = {}
        self._quiesced = True
        self._snapshots: list[Snapshot] = []

    # -- epoch gating ---------------------------------------------------

    def begin_epoch(self) -> None:
        self._quiesced = False

    def end_epoch(self) -> None:
        self._quiesced = True

    # -- core reads/writes ------------------------------------------------

    def _check_key(self, key: StateKey) -> StateSchema:
        schema = self.schemas.get(key.state_id)
        if schema is None:
            raise UnknownKey(key.state_id)
        return schema

    def read_at(self, key: StateKey, seq: int) -> dict[str, Any]:
        schema = self._check_key(key)
        seqs = self._seqs.get(key)
        if seqs:
            i = bisect.bisect_left(seqs, seq)
            if i > 0:
                return self._values[key][i - 1]
        return schema.default_value()

    def write_at(self, key: StateKey, seq: int, value: dict[str, Any]) -> None:
        self._check_key(key)
        seqs = self._seqs.get(key)
        if seqs is None:
            seqs = self._seqs[key] = []
            self._values[key] = []
        i = bisect.bisect_left(seqs, seq)
        if i < len(seqs) and seqs[i] == seq:
            raise DuplicateSeq(f"{key}: seq {seq}")
        seqs.insert(i, seq)
        self._values[key].insert(i, value)

    def latest(self, key: StateKey) -> dict[str, Any]:
        seqs = self._seqs.get(key)
        if seqs:
            return self._values[key][-1]
        return self._check_key(key).default_value()

    def high_seq(self) -> int:
        return max((s[-1] for s in self._seqs.values() if s), default=0)

    def keys(self) -> Iterable[StateKey]:
        return self._seqs.keys()

    # -- snapshots ----------------------------------------------------------

    def take_snapshot(self, epoch: int) -> Snapshot:
        if not self._quiesced:
            raise EpochNotQuiesced(f"epoch {epoch} still executing")
        state = {k: dict(self._values[k][-1]) for k in self._seqs if self._seqs[k]}
        snap = Snapshot(epoch=epoch, state=state, high_seq=self.high_seq())
        self._snapshots.append(snap)
        return snap

    def restore_snapshot(self, snapshot: Optional[Snapshot]) -> None:
        """Discard every version above the snapshot's high_seq.

        Passing None rewinds to the empty store (recovery with no snapshot
        available replays from batch zero).
        """
        if not self._quiesced:
            raise EpochNotQuiesced("restore requires a quiesced store")
        cutoff = snapshot.high_seq if snapshot is not None else 0
        for key in list(self._seqs):
            seqs = self._seqs[key]
            i = bisect.bisect_right(seqs, cutoff)
            if i == 0:
                del self._seqs[key]
                del self._values[key]
            else:
                del seqs[i:]
                del self._values[key][i:]

    def snapshots(self) -> list[Snapshot]:
        return list(self._snapshots)

    def latest_snapshot(self) -> Optional[Snapshot]:
        return self._snapshots[-1] if self._snapshots else None

    # -- garbage collection ---------------------------------------------

    def gc(self, before_seq: int) -> int:
        """Drop all but the newest version below `before_seq` for each key."""
        if self._snapshots:
            floor = min(s.high_seq for s in self._snapshots)
            if before_seq > floor:
                raise WouldBreakSnapshot(f"cutoff {before_seq} above retained snapshot {floor}")
        removed = 0
        for key, seqs in self._seqs.items():
            i = bisect.bisect_left(seqs, before_seq)
            if i > 1:
                # keep seqs[i-1], the newest version still visible at the cutoff
                removed += i - 1
                del seqs[: i - 1]
                del self._values[key][: i - 1]
        return removed

    def drop_snapshots_before(self, epoch: int) -> None:
        self._snapshots = [s for s in self._snapshots if s.epoch >= epoch]

    # -- export ------------------------------------------------------------

    def materialized(self) -> dict[StateKey, dict[str, Any]]:
        return {k: dict(self._values[k][-1]) for k in self._seqs if self._seqs[k]}


def classify_cacheability(
    batch_stats: dict[str, tuple[int, int]],
    threshold: float = DEFAULT_CACHE_THRESHOLD,
) -> list[CacheClass]:
    """Classify states by read share of the batch: (reads, writes) per state.

    States read at least `threshold` of the time are flagged for executor-local
    caching; everything else, including untouched states, stays centralized.
    """
    out = []
    for state_id in sorted(batch_stats):
        reads, writes = batch_stats[state_id]
        total = reads + writes
        ratio = (reads / total) if total else 0.0
        kind = (
            CacheClassKind.CACHED_READ_MOSTLY
            if total and ratio >= threshold
            else CacheClassKind.CENTRALIZED
        )
        out.append(CacheClass(state_id=state_id, kind=kind, read_ratio=ratio))
    return out
