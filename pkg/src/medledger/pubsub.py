"""Server-side event dispatch: providers subscribe, committed blocks fan out.

The dispatcher is the back end's replacement for per-patient polling: after a
block commits, each of its events is routed to the subscribers whose filters
match, and only to them.  The work counter increments once per (event,
matching subscriber) pair, so dispatch cost is the number of matches, never a
scan over all providers; a ``PollingWatcher`` baseline with the opposite cost
profile exists for comparison.

Durability: per-subscriber feeds are append-only JSON-line files; the cursor
(last dispatched height) commits a dispatch round.  On startup, any feed tail
beyond the cursor is discarded and re-dispatched, which makes crash recovery
produce neither duplicates nor gaps.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .canonical import canonical_json
from .errors import (
    InvalidFilterError,
    OutOfOrderDispatchError,
    UnknownSubscriberError,
    UnknownSubscriptionError,
)
from .ledger import Event


@dataclass(frozen=True)
class SubscriptionFilter:
    account_address: Optional[str] = None
    topic: Optional[str] = None
    wildcard: bool = False

    def matches(self, event: Event) -> bool:
        if self.wildcard:
            return True
        if self.account_address is not None and event.emitter != self.account_address:
            return False
        if self.topic is not None and event.topic != self.topic:
            return False
        return True

    def to_dict(self) -> dict:
        return {"accountAddress": self.account_address, "topic": self.topic, "wildcard": self.wildcard}

    @staticmethod
    def from_dict(d: dict) -> "SubscriptionFilter":
        return SubscriptionFilter(d.get("accountAddress"), d.get("topic"), d.get("wildcard", False))


@dataclass
class Subscription:
    id: str
    subscriber_id: str
    filter: SubscriptionFilter
    created_at_height: int

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "subscriberId": self.subscriber_id,
            "filter": self.filter.to_dict(),
            "createdAtHeight": self.created_at_height,
        }

    @staticmethod
    def from_dict(d: dict) -> "Subscription":
        return Subscription(
            d["id"], d["subscriberId"], SubscriptionFilter.from_dict(d["filter"]), d["createdAtHeight"]
        )


@dataclass
class Notification:
    subscription_id: str
    event: Event
    block_height: int
    index_in_block: int
    delivery_seq: int

    def to_dict(self) -> dict:
        return {
            "subscriptionId": self.subscription_id,
            "event": self.event.to_dict(),
            "blockHeight": self.block_height,
            "indexInBlock": self.index_in_block,
            "deliverySeq": self.delivery_seq,
        }

    @staticmethod
    def from_dict(d: dict) -> "Notification":
        return Notification(
            d["subscriptionId"],
            Event.from_dict(d["event"]),
            d["blockHeight"],
            d["indexInBlock"],
            d["deliverySeq"],
        )


class Dispatcher:
    """Routes committed events to subscriber feeds exactly once, in order."""

    def __init__(
        self,
        feeds_dir: Optional[str | Path] = None,
        subscriptions_path: Optional[str | Path] = None,
        cursor_path: Optional[str | Path] = None,
        dedup_per_subscriber: bool = True,
    ):
        self.feeds_dir = Path(feeds_dir) if feeds_dir else None
        self.subscriptions_path = Path(subscriptions_path) if subscriptions_path else None
        self.cursor_path = Path(cursor_path) if cursor_path else None
        self.dedup_per_subscriber = dedup_per_subscriber

        self._lock = threading.RLock()
        self.known_subscribers: set[str] = set()
        self.subscriptions: dict[str, Subscription] = {}
        self.feeds: dict[str, list[Notification]] = {}
        self.cursor = -1  # height of the last dispatched block
        self.work_counter = 0
        self._next_sub_seq = 0
        # match buckets: (account or None, topic or None) -> subscription ids
        self._buckets: dict[tuple[Optional[str], Optional[str]], set[str]] = {}

        self._load_state()

    # -- subscriber/subscription management --------------------------------------

    def register_subscriber(self, subscriber_id: str) -> None:
        with self._lock:
            if subscriber_id not in self.known_subscribers:
                self.known_subscribers.add(subscriber_id)
                self._save_subscriptions()
            self.feeds.setdefault(subscriber_id, [])

    def subscribe(self, subscriber_id: str, filt: SubscriptionFilter, at_height: int) -> str:
        with self._lock:
            if subscriber_id not in self.known_subscribers:
                raise UnknownSubscriberError(f"unknown subscriber {subscriber_id}")
            if not filt.wildcard and filt.account_address is None and filt.topic is None:
                raise InvalidFilterError("filter needs accountAddress, topic, or the wildcard flag")
            sub = Subscription(f"sub-{self._next_sub_seq:06d}", subscriber_id, filt, at_height)
            self._next_sub_seq += 1
            self.subscriptions[sub.id] = sub
            self._buckets.setdefault(self._bucket_key(filt), set()).add(sub.id)
            self._save_subscriptions()
            return sub.id

    def unsubscribe(self, subscription_id: str) -> None:
        with self._lock:
            sub = self.subscriptions.pop(subscription_id, None)
            if sub is None:
                raise UnknownSubscriptionError(f"unknown subscription {subscription_id}")
            self._buckets[self._bucket_key(sub.filter)].discard(subscription_id)
            self._save_subscriptions()

    def get_subscription(self, subscription_id: str) -> Subscription:
        sub = self.subscriptions.get(subscription_id)
        if sub is None:
            raise UnknownSubscriptionError(f"unknown subscription {subscription_id}")
        return sub

    @staticmethod
    def _bucket_key(filt: SubscriptionFilter) -> tuple[Optional[str], Optional[str]]:
        if filt.wildcard:
            return (None, None)
        return (filt.account_address, filt.topic)

    def _matching_subscriptions(self, event: Event) -> list[Subscription]:
        keys = (
            (event.emitter, event.topic),
            (event.emitter, None),
            (None, event.topic),
            (None, None),
        )
        out = []
        for key in keys:
            for sub_id in self._buckets.get(key, ()):
                out.append(self.subscriptions[sub_id])
        # Dedup keeps the first match per subscriber, so ordering must be
        # deterministic across restarts for crash replay to rebuild feeds
        # byte-identically.
        out.sort(key=lambda s: s.id)
        return out

    # -- dispatch ----------------------------------------------------------------

    def dispatch_block(self, block_height: int, receipts) -> int:
        """Route one committed block's events; receipts must arrive in block order."""
        with self._lock:
            return self._dispatch_block_locked(block_height, receipts)

    def _dispatch_block_locked(self, block_height: int, receipts) -> int:
        if block_height != self.cursor + 1:
            raise OutOfOrderDispatchError(
                f"expected block {self.cursor + 1}, got {block_height}"
            )
        appended: dict[str, list[Notification]] = {}
        delivered = 0
        for receipt in receipts:
            for event in receipt.events:
                seen: set[str] = set()
                for sub in self._matching_subscriptions(event):
                    if self.dedup_per_subscriber and sub.subscriber_id in seen:
                        continue
                    seen.add(sub.subscriber_id)
                    feed = self.feeds.setdefault(sub.subscriber_id, [])
                    note = Notification(
                        subscription_id=sub.id,
                        event=event,
                        block_height=block_height,
                        index_in_block=receipt.index_in_block,
                        delivery_seq=len(feed),
                    )
                    feed.append(note)
                    appended.setdefault(sub.subscriber_id, []).append(note)
                    self.work_counter += 1
                    delivered += 1
        self._persist_round(block_height, appended)
        self.cursor = block_height
        return delivered

    def poll(self, subscriber_id: str, after_seq: int) -> list[Notification]:
        if subscriber_id not in self.known_subscribers:
            raise UnknownSubscriberError(f"unknown subscriber {subscriber_id}")
        feed = self.feeds.get(subscriber_id, [])
        if after_seq < -1:
            after_seq = -1
        return feed[after_seq + 1:]

    # -- persistence ----------------------------------------------------------------

    def _feed_path(self, subscriber_id: str) -> Path:
        return self.feeds_dir / f"{subscriber_id}.jsonl"

    def _persist_round(self, block_height: int, appended: dict[str, list[Notification]]) -> None:
        if self.feeds_dir is None:
            return
        self.feeds_dir.mkdir(parents=True, exist_ok=True)
        for subscriber_id, notes in appended.items():
            with open(self._feed_path(subscriber_id), "ab") as fh:
                for note in notes:
                    fh.write(canonical_json(note.to_dict()) + b"\n")
        # The cursor write commits the round: tmp file + atomic rename.
        if self.cursor_path is not None:
            tmp = self.cursor_path.with_suffix(".tmp")
            tmp.write_bytes(canonical_json({"lastDispatchedHeight": block_height}) + b"\n")
            tmp.rename(self.cursor_path)

    def _save_subscriptions(self) -> None:
        if self.subscriptions_path is None:
            return
        state = {
            "nextSeq": self._next_sub_seq,
            "subscribers": sorted(self.known_subscribers),
            "subscriptions": [s.to_dict() for s in self.subscriptions.values()],
        }
        tmp = self.subscriptions_path.with_suffix(".tmp")
        tmp.parent.mkdir(parents=True, exist_ok=True)
        tmp.write_bytes(canonical_json(state) + b"\n")
        tmp.rename(self.subscriptions_path)

    def _load_state(self) -> None:
        if self.subscriptions_path is not None and self.subscriptions_path.exists():
            state = json.loads(self.subscriptions_path.read_text("utf-8"))
            self._next_sub_seq = state["nextSeq"]
            self.known_subscribers = set(state["subscribers"])
            for d in state["subscriptions"]:
                sub = Subscription.from_dict(d)
                self.subscriptions[sub.id] = sub
                self._buckets.setdefault(self._bucket_key(sub.filter), set()).add(sub.id)
        if self.cursor_path is not None and self.cursor_path.exists():
            self.cursor = json.loads(self.cursor_path.read_text("utf-8"))["lastDispatchedHeight"]
        if self.feeds_dir is not None and self.feeds_dir.exists():
            for path in sorted(self.feeds_dir.glob("*.jsonl")):
                subscriber_id = path.stem
                notes = [
                    Notification.from_dict(json.loads(line))
                    for line in path.read_text("utf-8").splitlines()
                    if line.strip()
                ]
                # Drop anything past the committed cursor: those blocks will be
                # re-dispatched, so keeping them would duplicate deliveries.
                kept = [n for n in notes if n.block_height <= self.cursor]
                if len(kept) != len(notes):
                    with open(path, "wb") as fh:
                        for note in kept:
                            fh.write(canonical_json(note.to_dict()) + b"\n")
                self.feeds[subscriber_id] = kept
                self.known_subscribers.add(subscriber_id)


class PollingWatcher:
    """The cost baseline the dispatcher replaces: every provider scans every
    account it watches, on every block, whether or not anything happened."""

    def __init__(self):
        self.watchlists: dict[str, set[str]] = {}
        self.feeds: dict[str, list[Event]] = {}
        self.scan_counter = 0

    def watch(self, provider_id: str, account_address: str) -> None:
        self.watchlists.setdefault(provider_id, set()).add(account_address)
        self.feeds.setdefault(provider_id, [])

    def poll_block(self, receipts) -> None:
        events = [event for receipt in receipts for event in receipt.events]
        for provider_id, accounts in self.watchlists.items():
            for account in accounts:
                self.scan_counter += 1  # one scan per (provider, account, block)
                for event in events:
                    if event.emitter == account:
                        self.feeds[provider_id].append(event)
