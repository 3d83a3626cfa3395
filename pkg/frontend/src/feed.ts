/**
 * Notification feed state: dedupes on deliverySeq so re-opening the feed or
 * overlapping polls never duplicate entries, and tracks the cursor for the
 * next long-poll. One in-flight poll per session.
 */

import type { ApiClient } from "./api.js";
import type { Notification } from "./types.js";

export class FeedStore {
  private seen = new Set<number>();
  readonly entries: Notification[] = [];
  nextAfter = -1;

  /** Returns the notifications that were actually new. */
  apply(notifications: Notification[], nextAfter: number): Notification[] {
    const fresh: Notification[] = [];
    for (const note of notifications) {
      if (this.seen.has(note.deliverySeq)) continue;
      this.seen.add(note.deliverySeq);
      this.entries.push(note);
      fresh.push(note);
    }
    this.entries.sort((a, b) => a.deliverySeq - b.deliverySeq);
    if (nextAfter > this.nextAfter) this.nextAfter = nextAfter;
    return fresh;
  }
}

export interface FulfillAction {
  patientId: string;
  requestId: number;
  medicationCode: string;
  deliverySeq: number;
}

/** Open prescription requests visible in a feed, newest last; requests the
 * feed has also seen fulfilled are dropped. */
export function fulfillableRequests(entries: Notification[]): FulfillAction[] {
  const open = new Map<string, FulfillAction>();
  for (const note of entries) {
    const p = note.event.payload as Record<string, unknown>;
    const key = `${p.patientId}:${p.requestId}`;
    if (note.event.topic === "PrescriptionRequested") {
      open.set(key, {
        patientId: String(p.patientId),
        requestId: Number(p.requestId),
        medicationCode: String(p.medicationCode),
        deliverySeq: note.deliverySeq,
      });
    } else if (note.event.topic === "PrescriptionFulfilled") {
      open.delete(key);
    }
  }
  return [...open.values()].sort((a, b) => a.deliverySeq - b.deliverySeq);
}

export class FeedPoller {
  private stopped = false;
  private running: Promise<void> | null = null;

  constructor(
    private client: ApiClient,
    private store: FeedStore,
    private onUpdate: (fresh: Notification[]) => void,
    private waitSeconds = 20,
    private idleDelayMs = 250,
  ) {}

  start(): void {
    if (this.running) return;
    this.stopped = false;
    this.running = this.loop();
  }

  async stop(): Promise<void> {
    this.stopped = true;
    await this.running;
    this.running = null;
  }

  private async loop(): Promise<void> {
    while (!this.stopped) {
      try {
        const { notifications, nextAfter } = await this.client.pollNotifications(
          this.store.nextAfter,
          this.waitSeconds,
        );
        const fresh = this.store.apply(notifications, nextAfter);
        if (fresh.length) this.onUpdate(fresh);
        if (!notifications.length) await sleep(this.idleDelayMs);
      } catch {
        await sleep(1000); // transient error: back off and retry
      }
    }
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
