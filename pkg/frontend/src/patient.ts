/** Patient dashboard: records, provider permissions, prescription requests. */

import { ApiClient, ApiError } from "./api.js";
import { clear, el, receiptBadge, statusLine } from "./dom.js";
import type { SessionView } from "./types.js";

export function renderPatientDashboard(root: HTMLElement, client: ApiClient, session: SessionView): void {
  const patientId = session.patientId!;
  const records = el("div", { class: "panel" });
  const access = el("div", { class: "panel" });
  const prescriptions = el("div", { class: "panel" });
  const actionStatus = el("div");

  root.append(
    el("h2", {}, [`Patient ${session.displayName}`]),
    el("p", { class: "muted" }, [`account ${session.accountAddress ?? ""}`]),
    actionStatus,
    records,
    prescriptions,
    access,
  );

  async function refreshRecords(): Promise<void> {
    clear(records);
    records.append(el("h3", {}, ["My records"]));
    try {
      const rows = await client.listRecords(patientId);
      if (!rows.length) records.append(el("p", { class: "muted" }, ["no records yet"]));
      for (const row of rows) {
        const attrs = Object.entries(row.resource.attributes)
          .map(([k, v]) => `${k}=${v}`)
          .join("  ");
        records.append(
          el("div", { class: "row" }, [
            el("span", { class: "tag" }, [row.resource.resourceType]),
            el("span", {}, [attrs]),
            el("span", { class: "muted" }, [`by ${row.entry.addedBy.slice(0, 10)}… @ block ${row.entry.blockHeight}`]),
          ]),
        );
      }
    } catch (err) {
      records.append(renderError(err));
    }
  }

  async function refreshPrescriptions(): Promise<void> {
    clear(prescriptions);
    prescriptions.append(el("h3", {}, ["Prescription requests"]));
    try {
      const rows = await client.listPrescriptions(patientId);
      for (const rx of rows) {
        prescriptions.append(
          el("div", { class: "row" }, [
            el("span", { class: "tag" }, [`#${rx.requestId}`]),
            el("span", {}, [rx.medicationCode]),
            el("span", { class: rx.status === "open" ? "status-open" : "status-done" }, [rx.status]),
          ]),
        );
      }
    } catch (err) {
      prescriptions.append(renderError(err));
    }
    const input = el("input", { placeholder: "medication code", id: "rx-code" });
    const button = el("button", {}, ["Request prescription"]);
    button.addEventListener("click", async () => {
      try {
        const result = await client.requestPrescription(patientId, input.value.trim());
        setStatus(el("span", {}, [`request #${result.requestId} submitted `, receiptBadge(result.receipt)]));
        await refreshPrescriptions();
      } catch (err) {
        setStatus(renderError(err));
      }
    });
    prescriptions.append(el("div", { class: "row" }, [input, button]));
  }

  async function refreshAccess(): Promise<void> {
    clear(access);
    access.append(el("h3", {}, ["Provider access"]));
    try {
      const view = await client.getAccess(patientId);
      if (!view.providers.length) access.append(el("p", { class: "muted" }, ["no providers granted"]));
      for (const provider of view.providers) {
        const revoke = el("button", { class: "small" }, ["revoke"]);
        revoke.addEventListener("click", () => changeAccess(provider, "revoke"));
        access.append(el("div", { class: "row" }, [el("code", {}, [provider]), revoke]));
      }
    } catch (err) {
      access.append(renderError(err));
    }
    const input = el("input", { placeholder: "provider address (0x…)", id: "grant-addr" });
    const button = el("button", {}, ["Grant access"]);
    button.addEventListener("click", () => changeAccess(input.value.trim(), "grant"));
    access.append(el("div", { class: "row" }, [input, button]));
  }

  async function changeAccess(provider: string, action: "grant" | "revoke"): Promise<void> {
    try {
      const result = await client.changePermission(patientId, provider, action);
      setStatus(el("span", {}, [`${action} submitted `, receiptBadge(result.receipt)]));
      await refreshAccess();
    } catch (err) {
      setStatus(renderError(err));
    }
  }

  function setStatus(node: HTMLElement): void {
    clear(actionStatus);
    actionStatus.append(node);
  }

  const refresh = el("button", {}, ["Refresh"]);
  refresh.addEventListener("click", () => void refreshAll());
  root.insertBefore(refresh, actionStatus);

  async function refreshAll(): Promise<void> {
    await Promise.all([refreshRecords(), refreshPrescriptions(), refreshAccess()]);
  }
  void refreshAll();
}

export function renderError(err: unknown): HTMLElement {
  if (err instanceof ApiError) {
    const text = err.permissionRequired
      ? `permission required${err.revertReason ? ` (${err.revertReason})` : ""}`
      : `${err.code}: ${err.message}`;
    return statusLine("error", text);
  }
  return statusLine("error", String(err));
}
