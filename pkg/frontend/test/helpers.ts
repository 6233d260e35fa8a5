import type { Snapshot, WireEvent } from "../src/types.js";

export function makeSnapshot(overrides: Partial<Snapshot> = {}): Snapshot {
  return {
    session_id: "s-test",
    recipe: "",
    available_subtasks: [],
    queues: { R2: [], R1: [], User: [] },
    current: { R2: "", R1: "" },
    status: { R2: "Idle", R1: "Idle" },
    completed: [],
    failed: [],
    subtasks: [],
    chat: [],
    tick: 0,
    t: 0,
    completion: 0,
    finished: false,
    next_seq: 0,
    ...overrides,
  };
}

export function event(seq: number, kind: string, payload: Record<string, unknown>): WireEvent {
  return { seq, kind, payload: { kind, ...payload } };
}

export function stateEvent(seq: number, overrides: Partial<Snapshot> = {}): WireEvent {
  const snapshot = makeSnapshot({ next_seq: seq + 1, ...overrides });
  return { seq, kind: "state", payload: snapshot as unknown as Record<string, unknown> };
}
