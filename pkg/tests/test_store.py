import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sfcdb import errors
from sfcdb.model import StateKey, StateSchema
from sfcdb.store import (
    CacheClassKind,
    Snapshot,
    VersionedStore,
    classify_cacheability,
)


def make_store(state_ids=("s",)):
    schemas = {
        sid: StateSchema(state_id=sid, key_kind="host", fields=("v",)) for sid in state_ids
    }
    return VersionedStore(schemas)


K = StateKey("s", "k0")


def test_strict_visibility():
    store = make_store()
    store.write_at(K, 5, {"v": 1})
    store.write_at(K, 9, {"v": 2})
    assert store.read_at(K, 9) == {"v": 1}
    assert store.read_at(K, 10) == {"v": 2}
    assert store.read_at(K, 5) == {"v": 0}


def test_read_before_any_write_returns_default():
    store = make_store()
    assert store.read_at(K, 3) == {"v": 0}


def test_default_honours_schema_defaults():
    schemas = {
        "hist": StateSchema("hist", "host", ("events",), defaults={"events": ()}),
    }
    store = VersionedStore(schemas)
    assert store.read_at(StateKey("hist", "h1"), 1) == {"events": ()}


def test_unknown_state_rejected():
    store = make_store()
    with pytest.raises(errors.UnknownKey):
        store.read_at(StateKey("ghost", "k"), 1)


def test_read_your_write_at_next_seq():
    store = make_store()
    store.write_at(K, 7, {"v": 42})
    assert store.read_at(K, 8) == {"v": 42}


def test_duplicate_seq_rejected():
    store = make_store()
    store.write_at(K, 7, {"v": 1})
    with pytest.raises(errors.DuplicateSeq):
        store.write_at(K, 7, {"v": 2})


class ReplayOracle:
    """Brute-force reference: keeps every (seq, value) pair and scans."""

    def __init__(self):
        self.writes = {}

    def write(self, key, seq, value):
        self.writes.setdefault(key, []).append((seq, value))

    def read(self, key, seq, default):
        best = None
        for s, v in self.writes.get(key, []):
            if s < seq and (best is None or s > best[0]):
                best = (s, v)
        return best[1] if best else default


def test_random_history_matches_replay_oracle():
    rng = random.Random(1234)
    store = make_store()
    oracle = ReplayOracle()
    keys = [StateKey("s", f"k{i}") for i in range(10)]
    used = set()
    for _ in range(100):
        seq = rng.randrange(1, 10_000)
        key = rng.choice(keys)
        if (key, seq) in used:
            continue
        used.add((key, seq))
        value = {"v": rng.randrange(1000)}
        store.write_at(key, seq, value)
        oracle.write(key, seq, value)
    for _ in range(500):
        seq = rng.randrange(0, 11_000)
        key = rng.choice(keys)
        assert store.read_at(key, seq) == oracle.read(key, seq, {"v": 0})


@settings(max_examples=50, deadline=None)
@given(
    st.lists(
        st.tuples(st.integers(0, 5), st.integers(1, 200), st.integers(0, 99)),
        max_size=60,
    ),
    st.lists(st.tuples(st.integers(0, 5), st.integers(0, 220)), max_size=30),
)
def test_visibility_property(writes, reads):
    store = make_store()
    oracle = ReplayOracle()
    seen = set()
    for ki, seq, val in writes:
        key = StateKey("s", f"k{ki}")
        if (key, seq) in seen:
            continue
        seen.add((key, seq))
        store.write_at(key, seq, {"v": val})
        oracle.write(key, seq, {"v": val})
    for ki, seq in reads:
        key = StateKey("s", f"k{ki}")
        assert store.read_at(key, seq) == oracle.read(key, seq, {"v": 0})


def test_snapshot_restore_identity():
    store = make_store()
    rng = random.Random(7)
    for seq in range(1, 30):
        store.write_at(StateKey("s", f"k{seq % 3}"), seq, {"v": rng.randrange(100)})
    snap = store.take_snapshot(epoch=2)
    before = {k: store.latest(k) for k in list(store.keys())}
    for seq in range(100, 150):
        store.write_at(StateKey("s", f"k{seq % 5}"), seq, {"v": rng.randrange(100)})
    store.restore_snapshot(snap)
    assert {k: store.latest(k) for k in list(store.keys())} == before
    assert store.materialized() == snap.state


def test_restore_then_reapply_is_deterministic():
    def run():
        store = make_store()
        rng = random.Random(99)
        for seq in range(1, 51):
            store.write_at(StateKey("s", f"k{seq % 4}"), seq, {"v": rng.randrange(100)})
        return store.materialized()

    store = make_store()
    snap = store.take_snapshot(epoch=0)
    rng = random.Random(99)
    writes = [(StateKey("s", f"k{seq % 4}"), seq, {"v": rng.randrange(100)}) for seq in range(1, 51)]
    for k, s, v in writes:
        store.write_at(k, s, v)
    store.restore_snapshot(snap)
    for k, s, v in writes:
        store.write_at(k, s, v)
    assert store.materialized() == run()


def test_snapshot_requires_quiesced_store():
    store = make_store()
    store.begin_epoch()
    with pytest.raises(errors.EpochNotQuiesced):
        store.take_snapshot(epoch=1)
    store.end_epoch()
    store.take_snapshot(epoch=1)


def test_gc_keeps_newest_below_cutoff():
    store = make_store()
    for seq in (1, 4, 9):
        store.write_at(K, seq, {"v": seq})
    removed = store.gc(5)
    assert removed == 1
    assert store.read_at(K, 5) == {"v": 4}
    assert store.read_at(K, 10) == {"v": 9}


def test_gc_zero_is_noop():
    store = make_store()
    store.write_at(K, 3, {"v": 1})
    assert store.gc(0) == 0


def test_gc_preserves_reads_at_or_above_cutoff():
    rng = random.Random(5)
    store = make_store()
    shadow = make_store()
    for _ in range(200):
        key = StateKey("s", f"k{rng.randrange(8)}")
        seq = rng.randrange(1, 500)
        try:
            store.write_at(key, seq, {"v": seq})
            shadow.write_at(key, seq, {"v": seq})
        except errors.DuplicateSeq:
            continue
    cutoff = 250
    store.gc(cutoff)
    for _ in range(300):
        key = StateKey("s", f"k{rng.randrange(8)}")
        seq = rng.randrange(cutoff, 600)
        assert store.read_at(key, seq) == shadow.read_at(key, seq)


def test_gc_respects_retained_snapshots():
    store = make_store()
    store.write_at(K, 3, {"v": 1})
    store.take_snapshot(epoch=1)  # high_seq 3
    store.write_at(K, 8, {"v": 2})
    with pytest.raises(errors.WouldBreakSnapshot):
        store.gc(5)
    store.drop_snapshots_before(epoch=2)
    assert store.gc(5) == 0


def test_snapshot_json_round_trip_sorted():
    store = make_store(("b", "a"))
    store.write_at(StateKey("b", "k2"), 1, {"v": 2})
    store.write_at(StateKey("a", "k1"), 2, {"v": (1, "x")})
    snap = store.take_snapshot(epoch=3)
    text = snap.to_json()
    assert text.index('"a/k1"') < text.index('"b/k2"')
    back = Snapshot.from_json(text)
    assert back.state == snap.state
    assert back.high_seq == snap.high_seq
    assert back.epoch == 3


def test_classifier_examples():
    out = classify_cacheability({"s": (95, 5)})
    assert out[0].kind is CacheClassKind.CACHED_READ_MOSTLY
    assert out[0].read_ratio == pytest.approx(0.95)

    out = classify_cacheability({"s": (0, 0)})
    assert out[0].kind is CacheClassKind.CENTRALIZED

    out = classify_cacheability({"s": (9, 1)}, threshold=0.9)
    assert out[0].kind is CacheClassKind.CACHED_READ_MOSTLY  # boundary inclusive

    out = classify_cacheability({"s": (8, 2)}, threshold=0.9)
    assert out[0].kind is CacheClassKind.CENTRALIZED
