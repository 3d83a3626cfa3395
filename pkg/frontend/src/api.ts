/**
 * API client: every state change in the UI goes through exactly one of these
 * documented endpoint calls. The fetch implementation is injectable so logic
 * tests run without a network.
 */

import type {
  AccessView,
  ApiErrorBody,
  Notification,
  Prescription,
  Receipt,
  RecordRow,
  Resource,
  SessionView,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
    public revertReason: string | null = null,
  ) {
    super(message);
  }

  get permissionRequired(): boolean {
    return this.status === 403;
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private apiKey: string,
    private fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = {
      method,
      headers: {
        Authorization: `Bearer ${this.apiKey}`,
        ...(body !== undefined ? { "Content-Type": "application/json" } : {}),
      },
      ...(body !== undefined ? { body: JSON.stringify(body) } : {}),
    };
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    if (response.status === 204) return undefined as T;
    let payload: unknown = null;
    try {
      payload = await response.json();
    } catch {
      payload = null;
    }
    if (!response.ok) {
      const err = (payload as ApiErrorBody)?.error;
      throw new ApiError(
        response.status,
        err?.code ?? `HTTP${response.status}`,
        err?.message ?? response.statusText,
        err?.revertReason ?? null,
      );
    }
    return payload as T;
  }

  // -- session --------------------------------------------------------------

  async whoami(): Promise<SessionView> {
    const me = await this.request<{
      role: SessionView["role"];
      eoaLabel: string;
      address: string;
      patientId: string | null;
      name: string | null;
      accountAddress: string | null;
    }>("GET", "/me");
    return {
      apiKey: this.apiKey,
      role: me.role,
      displayName: me.name ?? me.patientId ?? me.eoaLabel,
      address: me.address,
      patientId: me.patientId ?? undefined,
      accountAddress: me.accountAddress ?? undefined,
    };
  }

  // -- records ----------------------------------------------------------------

  listRecords(patientId: string): Promise<RecordRow[]> {
    return this.request<{ records: RecordRow[] }>("GET", `/patients/${patientId}/records`).then(
      (r) => r.records,
    );
  }

  writeRecord(patientId: string, resource: Resource): Promise<{ entryIndex: number; receipt: Receipt }> {
    return this.request("POST", `/patients/${patientId}/records`, resource);
  }

  // -- permissions ---------------------------------------------------------------

  changePermission(patientId: string, provider: string, action: "grant" | "revoke"): Promise<{ receipt: Receipt }> {
    return this.request("POST", `/patients/${patientId}/permissions`, { provider, action });
  }

  getAccess(patientId: string): Promise<AccessView> {
    return this.request("GET", `/patients/${patientId}/access`);
  }

  // -- prescriptions ----------------------------------------------------------------

  requestPrescription(patientId: string, medicationCode: string): Promise<{ requestId: number; receipt: Receipt }> {
    return this.request("POST", `/patients/${patientId}/prescriptions`, { medicationCode });
  }

  listPrescriptions(patientId: string): Promise<Prescription[]> {
    return this.request<{ prescriptions: Prescription[] }>(
      "GET",
      `/patients/${patientId}/prescriptions`,
    ).then((r) => r.prescriptions);
  }

  fulfillPrescription(
    patientId: string,
    requestId: number,
    medicationCode: string,
  ): Promise<{ entryIndex: number; receipt: Receipt }> {
    return this.request("POST", `/patients/${patientId}/prescriptions/${requestId}/fulfill`, {
      attributes: { medicationCode },
    });
  }

  // -- subscriptions -------------------------------------------------------------------

  subscribe(filter: { accountAddress?: string; topic?: string; wildcard?: boolean }): Promise<{ subscriptionId: string }> {
    return this.request("POST", "/providers/subscriptions", filter);
  }

  unsubscribe(subscriptionId: string): Promise<void> {
    return this.request("DELETE", `/providers/subscriptions/${subscriptionId}`);
  }

  pollNotifications(after: number, waitSeconds = 0): Promise<{ notifications: Notification[]; nextAfter: number }> {
    return this.request("GET", `/providers/notifications?after=${after}&wait=${waitSeconds}`);
  }

  // -- admin (used by the e2e harness, not rendered in the portal) ----------------------

  onboardPatient(body: {
    patientId: string;
    demographics: Record<string, string | number | boolean>;
    planDescriptor: { payerName: string; planCode: string; coverageTier: string };
  }): Promise<{ accountAddress: string; apiKey: string; address: string }> {
    return this.request("POST", "/admin/patients", body);
  }

  onboardProvider(name: string): Promise<{ apiKey: string; address: string; accountAddress: string }> {
    return this.request("POST", "/admin/providers", { name });
  }
}
