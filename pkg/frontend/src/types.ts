/** Wire schema of the session service.
 *
 * The console adopts `state` snapshots verbatim and folds every other event
 * kind. Fields it cannot derive without planning logic (available_subtasks,
 * simulated time, tick counter) come from snapshots only.
 */

export const ROBOTS = ["R2", "R1"] as const;
export type Robot = (typeof ROBOTS)[number];

export const LANES = ["R2", "R1", "User"] as const;
export type Lane = (typeof LANES)[number];

/** Agent status exactly as the service renders it. "Killed" is the wire
 * value for an interrupted robot; only the badge label translates it. */
export type WireStatus = "Idle" | "Running" | "Killed";

export interface SubtaskRow {
  id: string;
  label: string;
  done: boolean;
}

export interface Snapshot {
  session_id: string;
  recipe: string;
  available_subtasks: string[];
  queues: Record<Lane, string[]>;
  current: Record<Robot, string>;
  status: Record<Robot, WireStatus>;
  completed: string[];
  failed: string[];
  subtasks: SubtaskRow[];
  chat: [speaker: string, text: string][];
  tick: number;
  t: number;
  completion: number;
  finished: boolean;
  /** Event-log cursor: the first seq not reflected in this snapshot. */
  next_seq: number;
}

export type PlannerAction =
  | { kind: "say"; message: string }
  | { kind: "set_recipe"; name: string }
  | { kind: "assign"; agent: Lane; subtasks: string[] }
  | { kind: "mark_complete"; subtasks: string[] }
  | { kind: "interrupt"; agent: Robot }
  | { kind: "no_op" };

export interface WireEvent {
  seq: number;
  kind: string;
  payload: Record<string, unknown>;
}

/** Every event kind the service emits today, used to register stream
 * listeners. Unknown kinds stay safe: the poll-based gap repair fetches
 * them and the fold advances past what it does not understand. */
export const EVENT_KINDS = [
  "state",
  "user_msg",
  "assistant_msg",
  "tick",
  "recipe_switch",
  "assignment_dropped",
  "subtask_started",
  "subtask_done",
  "subtask_failed",
  "subtask_interrupted",
  "cancel_dropped",
  "budget_exceeded",
  "turn_budget_exceeded",
] as const;
