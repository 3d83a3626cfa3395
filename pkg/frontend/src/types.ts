/** Wire types for the ledger service API. */

export type Role = "patient" | "provider" | "admin";

export interface SessionView {
  apiKey: string;
  role: Role;
  displayName: string;
  address: string;
  patientId?: string;
  accountAddress?: string;
}

export interface ChainEvent {
  emitter: string;
  topic: string;
  payload: Record<string, unknown>;
  sequence: number;
}

export interface Receipt {
  txId: string;
  status: "success" | "reverted";
  revertReason: string | null;
  gasUsed: number;
  returnValue: unknown;
  events: ChainEvent[];
  blockHeight: number;
  indexInBlock: number;
}

export interface RecordEntry {
  recordHash: string;
  pointer: string;
  resourceType: string;
  addedBy: string;
  blockHeight: number;
  entryIndex: number;
}

export interface Resource {
  resourceType: string;
  id: string;
  subjectPatientId: string;
  attributes: Record<string, string | number | boolean>;
  authoredAt: number;
}

export interface RecordRow {
  entry: RecordEntry;
  resource: Resource;
}

export interface Prescription {
  requestId: number;
  medicationCode: string;
  status: "open" | "fulfilled";
  requestedAtHeight: number;
  fulfilledBy: string | null;
}

export interface Notification {
  subscriptionId: string;
  event: ChainEvent;
  blockHeight: number;
  indexInBlock: number;
  deliverySeq: number;
}

export interface AccessView {
  patientId: string;
  owner: string;
  providers: string[];
}

export interface ApiErrorBody {
  error: { code: string; message: string; revertReason: string | null };
}
