import random

import pytest

from medledger.errors import (
    InvalidFilterError,
    OutOfOrderDispatchError,
    UnknownSubscriberError,
    UnknownSubscriptionError,
)
from medledger.ledger import Event, Receipt
from medledger.pubsub import Dispatcher, PollingWatcher, SubscriptionFilter


A, B, C = "0x" + "aa" * 20, "0x" + "bb" * 20, "0x" + "cc" * 20


def receipt_with(events, height, index=0):
    return Receipt("00" * 32, "success", None, 10, None, events, height, index)


def block_of(height, *topic_emitter_pairs):
    events = [
        Event(emitter, topic, {"n": i}, i) for i, (topic, emitter) in enumerate(topic_emitter_pairs)
    ]
    return [receipt_with(events, height)]


def fresh(dedup=True) -> Dispatcher:
    d = Dispatcher(dedup_per_subscriber=dedup)
    for sub in ("d1", "d2", "d3"):
        d.register_subscriber(sub)
    return d


# --- subscribe/unsubscribe -----------------------------------------------------

def test_account_filter_matches_only_that_account():
    d = fresh()
    d.subscribe("d1", SubscriptionFilter(account_address=A), 0)
    d.dispatch_block(0, block_of(0, ("X", A), ("X", B)))
    notes = d.poll("d1", -1)
    assert [n.event.emitter for n in notes] == [A]


def test_topic_filter_matches_all_accounts():
    d = fresh()
    d.subscribe("d1", SubscriptionFilter(topic="PrescriptionRequested"), 0)
    d.dispatch_block(0, block_of(0, ("PrescriptionRequested", A), ("PrescriptionRequested", B), ("Other", A)))
    notes = d.poll("d1", -1)
    assert len(notes) == 2
    assert {n.event.emitter for n in notes} == {A, B}


def test_combined_filter_needs_both():
    d = fresh()
    d.subscribe("d1", SubscriptionFilter(account_address=A, topic="T"), 0)
    d.dispatch_block(0, block_of(0, ("T", A), ("T", B), ("U", A)))
    assert len(d.poll("d1", -1)) == 1


def test_wildcard_matches_everything():
    d = fresh()
    d.subscribe("d1", SubscriptionFilter(wildcard=True), 0)
    d.dispatch_block(0, block_of(0, ("T", A), ("U", B)))
    assert len(d.poll("d1", -1)) == 2


def test_empty_filter_invalid():
    d = fresh()
    with pytest.raises(InvalidFilterError):
        d.subscribe("d1", SubscriptionFilter(), 0)


def test_unknown_subscriber_rejected():
    d = fresh()
    with pytest.raises(UnknownSubscriberError):
        d.subscribe("ghost", SubscriptionFilter(wildcard=True), 0)
    with pytest.raises(UnknownSubscriberError):
        d.poll("ghost", -1)


def test_duplicate_subscriptions_deduplicated_per_subscriber():
    d = fresh()
    first = d.subscribe("d1", SubscriptionFilter(account_address=A), 0)
    second = d.subscribe("d1", SubscriptionFilter(account_address=A), 0)
    assert first != second
    d.subscribe("d1", SubscriptionFilter(wildcard=True), 0)  # overlapping too
    d.dispatch_block(0, block_of(0, ("T", A)))
    assert len(d.poll("d1", -1)) == 1  # one delivery despite three matches


def test_dedup_disabled_delivers_per_subscription():
    d = fresh(dedup=False)
    d.subscribe("d1", SubscriptionFilter(account_address=A), 0)
    d.subscribe("d1", SubscriptionFilter(topic="T"), 0)
    d.dispatch_block(0, block_of(0, ("T", A)))
    assert len(d.poll("d1", -1)) == 2


def test_unsubscribe_stops_new_keeps_old():
    d = fresh()
    sub = d.subscribe("d1", SubscriptionFilter(account_address=A), 0)
    d.dispatch_block(0, block_of(0, ("T", A)))
    d.unsubscribe(sub)
    d.dispatch_block(1, block_of(1, ("T", A)))
    notes = d.poll("d1", -1)
    assert len(notes) == 1  # delivered history retained, no new deliveries
    with pytest.raises(UnknownSubscriptionError):
        d.unsubscribe(sub)


# --- dispatch ---------------------------------------------------------------------

def test_block_with_no_events_zero_deliveries():
    d = fresh()
    d.subscribe("d1", SubscriptionFilter(wildcard=True), 0)
    assert d.dispatch_block(0, [receipt_with([], 0)]) == 0


def test_out_of_order_dispatch_rejected():
    d = fresh()
    d.dispatch_block(0, [])
    with pytest.raises(OutOfOrderDispatchError):
        d.dispatch_block(2, [])
    with pytest.raises(OutOfOrderDispatchError):
        d.dispatch_block(0, [])


def test_work_counter_counts_matches_only():
    d = fresh()
    d.subscribe("d1", SubscriptionFilter(account_address=A), 0)
    d.subscribe("d2", SubscriptionFilter(account_address=A), 0)
    d.subscribe("d3", SubscriptionFilter(account_address=B), 0)
    delivered = d.dispatch_block(0, block_of(0, ("PrescriptionRequested", A)))
    assert delivered == 2
    assert d.work_counter == 2


def test_polling_baseline_scans_all_watchlists():
    w = PollingWatcher()
    for i in range(50):
        w.watch(f"d{i}", A if i < 2 else B)
    w.poll_block(block_of(0, ("PrescriptionRequested", A)))
    assert w.scan_counter == 50
    assert len(w.feeds["d0"]) == 1
    assert len(w.feeds["d49"]) == 0


# --- poll ------------------------------------------------------------------------------

def test_poll_after_latest_empty():
    d = fresh()
    d.subscribe("d1", SubscriptionFilter(wildcard=True), 0)
    d.dispatch_block(0, block_of(0, ("T", A)))
    latest = d.poll("d1", -1)[-1].delivery_seq
    assert d.poll("d1", latest) == []


def test_poll_idempotent():
    d = fresh()
    d.subscribe("d1", SubscriptionFilter(wildcard=True), 0)
    d.dispatch_block(0, block_of(0, ("T", A), ("T", B)))
    assert [n.to_dict() for n in d.poll("d1", -1)] == [n.to_dict() for n in d.poll("d1", -1)]


def test_delivery_seq_gapless_and_ordered():
    d = fresh()
    d.subscribe("d1", SubscriptionFilter(wildcard=True), 0)
    for h in range(5):
        d.dispatch_block(h, block_of(h, ("T", A), ("U", B)))
    notes = d.poll("d1", -1)
    assert [n.delivery_seq for n in notes] == list(range(10))
    keys = [(n.block_height, n.index_in_block, n.event.sequence) for n in notes]
    assert keys == sorted(keys)


# --- exactly-once over a random workload ----------------------------------------------------

def test_exactly_once_randomized():
    rng = random.Random(99)
    d = Dispatcher()
    accounts = [A, B, C]
    topics = ["RecordAppended", "PrescriptionRequested"]
    subs = []
    for i in range(12):
        sid = f"d{i}"
        d.register_subscriber(sid)
        filt = rng.choice(
            [
                SubscriptionFilter(account_address=rng.choice(accounts)),
                SubscriptionFilter(topic=rng.choice(topics)),
                SubscriptionFilter(account_address=rng.choice(accounts), topic=rng.choice(topics)),
                SubscriptionFilter(wildcard=True),
            ]
        )
        d.subscribe(sid, filt, -1)
        subs.append((sid, filt))

    all_events = []
    for h in range(30):
        pairs = [(rng.choice(topics), rng.choice(accounts)) for _ in range(rng.randint(0, 3))]
        receipts = block_of(h, *pairs)
        d.dispatch_block(h, receipts)
        for r in receipts:
            for e in r.events:
                all_events.append((h, r.index_in_block, e))

    # independent oracle: brute-force matching over (subscriber, event)
    for i in range(12):
        sid = f"d{i}"
        expected = []
        matching = [f for s, f in subs if s == sid]
        for h, idx, event in all_events:
            if any(f.matches(event) for f in matching):
                expected.append((h, idx, event.sequence, event.topic, event.emitter))
        got = [
            (n.block_height, n.index_in_block, n.event.sequence, n.event.topic, n.event.emitter)
            for n in d.poll(sid, -1)
        ]
        assert got == expected
        assert [n.delivery_seq for n in d.poll(sid, -1)] == list(range(len(expected)))


# --- persistence and crash recovery -----------------------------------------------------------

def persistent_dispatcher(tmp_path, dedup=True) -> Dispatcher:
    return Dispatcher(
        feeds_dir=tmp_path / "feeds",
        subscriptions_path=tmp_path / "subscriptions.json",
        cursor_path=tmp_path / "cursor.json",
        dedup_per_subscriber=dedup,
    )


def test_state_survives_restart(tmp_path):
    d = persistent_dispatcher(tmp_path)
    d.register_subscriber("d1")
    d.subscribe("d1", SubscriptionFilter(wildcard=True), 0)
    d.dispatch_block(0, block_of(0, ("T", A)))

    reloaded = persistent_dispatcher(tmp_path)
    assert reloaded.cursor == 0
    assert len(reloaded.poll("d1", -1)) == 1
    reloaded.dispatch_block(1, block_of(1, ("T", B)))
    assert [n.delivery_seq for n in reloaded.poll("d1", -1)] == [0, 1]


class CrashingDispatcher(Dispatcher):
    """Simulates dying between the feed append and the cursor commit."""

    crash_at: int = -1

    def _persist_round(self, block_height, appended):
        if block_height == self.crash_at:
            saved_cursor_path = self.cursor_path
            self.cursor_path = None  # feeds written, cursor not: a torn round
            try:
                super()._persist_round(block_height, appended)
            finally:
                self.cursor_path = saved_cursor_path
            raise RuntimeError("simulated crash")
        super()._persist_round(block_height, appended)


def test_crash_and_replay_no_duplicates_no_gaps(tmp_path):
    blocks = [block_of(h, ("T", A), ("U", B)) for h in range(8)]

    # the uninterrupted reference run
    ref = persistent_dispatcher(tmp_path / "ref")
    ref.register_subscriber("d1")
    ref.subscribe("d1", SubscriptionFilter(wildcard=True), -1)
    for h in range(8):
        ref.dispatch_block(h, blocks[h])
    expected = [n.to_dict() for n in ref.poll("d1", -1)]

    # the crashing run: dies mid-round at block 4
    crash_dir = tmp_path / "crash"
    d = CrashingDispatcher(
        feeds_dir=crash_dir / "feeds",
        subscriptions_path=crash_dir / "subscriptions.json",
        cursor_path=crash_dir / "cursor.json",
    )
    d.crash_at = 4
    d.register_subscriber("d1")
    d.subscribe("d1", SubscriptionFilter(wildcard=True), -1)
    with pytest.raises(RuntimeError):
        for h in range(8):
            d.dispatch_block(h, blocks[h])

    recovered = Dispatcher(
        feeds_dir=crash_dir / "feeds",
        subscriptions_path=crash_dir / "subscriptions.json",
        cursor_path=crash_dir / "cursor.json",
    )
    assert recovered.cursor == 3  # the torn round did not commit
    for h in range(4, 8):
        recovered.dispatch_block(h, blocks[h])
    assert [n.to_dict() for n in recovered.poll("d1", -1)] == expected
