/** Provider dashboard: live notification feed, patient lookup, fulfillment. */

import { ApiClient } from "./api.js";
import { clear, el, receiptBadge } from "./dom.js";
import { FeedPoller, FeedStore, fulfillableRequests } from "./feed.js";
import { renderError } from "./patient.js";
import type { Notification, SessionView } from "./types.js";

export function renderProviderDashboard(root: HTMLElement, client: ApiClient, session: SessionView): void {
  const actionStatus = el("div");
  const feedPanel = el("div", { class: "panel" });
  const feedList = el("div", { id: "feed" });
  const fulfillPanel = el("div", { class: "panel" });
  const recordsPanel = el("div", { class: "panel" });
  const subscribePanel = el("div", { class: "panel" });

  root.append(
    el("h2", {}, [`Provider ${session.displayName}`]),
    el("p", { class: "muted" }, [`address ${session.address} (share with patients for grants)`]),
    actionStatus,
    subscribePanel,
    feedPanel,
    fulfillPanel,
    recordsPanel,
  );

  const store = new FeedStore();
  const poller = new FeedPoller(client, store, (fresh) => {
    for (const note of fresh) feedList.append(renderNote(note));
    renderFulfillable();
  });

  feedPanel.append(el("h3", {}, ["Notifications"]), feedList);
  poller.start();

  function renderNote(note: Notification): HTMLElement {
    const p = note.event.payload as Record<string, unknown>;
    const detail = Object.entries(p)
      .map(([k, v]) => `${k}=${v}`)
      .join(" ");
    return el("div", { class: "row", "data-seq": String(note.deliverySeq) }, [
      el("span", { class: "tag" }, [`#${note.deliverySeq}`]),
      el("span", { class: "topic" }, [note.event.topic]),
      el("span", { class: "muted" }, [detail]),
    ]);
  }

  function renderFulfillable(): void {
    clear(fulfillPanel);
    fulfillPanel.append(el("h3", {}, ["Open prescription requests"]));
    const actions = fulfillableRequests(store.entries);
    if (!actions.length) fulfillPanel.append(el("p", { class: "muted" }, ["none visible in the feed"]));
    for (const action of actions) {
      const button = el("button", { class: "small" }, ["fulfill"]);
      button.addEventListener("click", async () => {
        try {
          const result = await client.fulfillPrescription(
            action.patientId,
            action.requestId,
            action.medicationCode,
          );
          setStatus(el("span", {}, [`fulfilled #${action.requestId} `, receiptBadge(result.receipt)]));
          renderFulfillable();
        } catch (err) {
          setStatus(renderError(err)); // 403 renders as permission required
        }
      });
      fulfillPanel.append(
        el("div", { class: "row" }, [
          el("span", {}, [`${action.patientId} requests ${action.medicationCode} (#${action.requestId})`]),
          button,
        ]),
      );
    }
  }

  // subscriptions
  subscribePanel.append(el("h3", {}, ["Subscribe"]));
  const accountInput = el("input", { placeholder: "patient account address (optional)" });
  const topicInput = el("input", { placeholder: "topic (optional)" });
  const subscribeButton = el("button", {}, ["Subscribe"]);
  subscribeButton.addEventListener("click", async () => {
    const accountAddress = accountInput.value.trim() || undefined;
    const topic = topicInput.value.trim() || undefined;
    try {
      const result = await client.subscribe({
        accountAddress,
        topic,
        wildcard: !accountAddress && !topic,
      });
      setStatus(el("span", { class: "status status-ok" }, [`subscribed (${result.subscriptionId})`]));
    } catch (err) {
      setStatus(renderError(err));
    }
  });
  subscribePanel.append(el("div", { class: "row" }, [accountInput, topicInput, subscribeButton]));

  // per-patient record view
  recordsPanel.append(el("h3", {}, ["Patient records"]));
  const pidInput = el("input", { placeholder: "patient id" });
  const loadButton = el("button", {}, ["Load"]);
  const recordList = el("div");
  loadButton.addEventListener("click", async () => {
    clear(recordList);
    try {
      const rows = await client.listRecords(pidInput.value.trim());
      if (!rows.length) recordList.append(el("p", { class: "muted" }, ["no records"]));
      for (const row of rows) {
        const attrs = Object.entries(row.resource.attributes)
          .map(([k, v]) => `${k}=${v}`)
          .join("  ");
        recordList.append(
          el("div", { class: "row" }, [el("span", { class: "tag" }, [row.resource.resourceType]), el("span", {}, [attrs])]),
        );
      }
    } catch (err) {
      recordList.append(renderError(err)); // unpermissioned -> permission required state
    }
  });
  recordsPanel.append(el("div", { class: "row" }, [pidInput, loadButton]), recordList);

  function setStatus(node: HTMLElement): void {
    clear(actionStatus);
    actionStatus.append(node);
  }
}
