/** The console's single source of truth: a left-fold of the session event
 * stream.
 *
 * Snapshot (`state`) events are adopted verbatim; every other event mutates
 * the model the same way the engine mutates the session, so that at any
 * quiescent point the folded fields equal GET /state. The model never
 * invents planning state: the subtask board's membership and the available
 * list only ever come from snapshots.
 */

import type {
  Lane,
  PlannerAction,
  Robot,
  Snapshot,
  SubtaskRow,
  WireEvent,
  WireStatus,
} from "./types.js";

export const USER_SPEAKER = "User";
export const ASSISTANT_SPEAKER = "Mosaic";

export type Connection = "connecting" | "live" | "reconnecting" | "error";

export interface ChatBubble {
  speaker: string;
  text: string;
  /** Optimistic echo not yet confirmed by the server's user_msg event. */
  pending?: boolean;
  /** The POST failed; the bubble offers a retry affordance. */
  failed?: boolean;
}

function emptyQueues(): Record<Lane, string[]> {
  return { R2: [], R1: [], User: [] };
}

export class ConsoleViewModel {
  sessionId = "";
  recipe = "";
  chat: ChatBubble[] = [];
  subtasks: SubtaskRow[] = [];
  available: string[] = [];
  queues: Record<Lane, string[]> = emptyQueues();
  current: Record<Robot, string> = { R2: "", R1: "" };
  status: Record<Robot, WireStatus> = { R2: "Idle", R1: "Idle" };
  completed: string[] = [];
  failed: string[] = [];
  notices: string[] = [];
  tick = 0;
  t = 0;
  connection: Connection = "connecting";
  connectionDetail = "";
  /** Next event seq this model expects; doubles as the resume cursor. */
  cursor = 0;

  get finished(): boolean {
    return this.subtasks.length > 0 && this.subtasks.every((row) => row.done);
  }

  get completion(): number {
    if (this.subtasks.length === 0) {
      return 0;
    }
    const done = this.subtasks.filter((row) => row.done).length;
    return done / this.subtasks.length;
  }

  /** Fold one event. Events below the cursor are duplicates and are
   * dropped; gap repair is the client's job. */
  applyEvent(event: WireEvent): void {
    if (event.seq < this.cursor) {
      return;
    }
    this.cursor = event.seq + 1;
    const p = event.payload;
    switch (event.kind) {
      case "state":
        this.adoptSnapshot(p as unknown as Snapshot);
        break;
      case "user_msg":
        this.foldUserMessage(String(p.text ?? ""));
        break;
      case "assistant_msg":
        this.chat.push({ speaker: ASSISTANT_SPEAKER, text: String(p.text ?? "") });
        break;
      case "tick":
        for (const action of (p.actions ?? []) as PlannerAction[]) {
          this.foldAction(action);
        }
        break;
      case "recipe_switch":
        this.resetBoard(String(p.to ?? ""));
        break;
      case "subtask_started": {
        const agent = p.agent as Robot;
        const label = String(p.label ?? "");
        const queue = this.queues[agent];
        const at = queue.indexOf(label);
        if (at >= 0) {
          queue.splice(at, 1);
        }
        this.current[agent] = label;
        this.status[agent] = "Running";
        break;
      }
      case "subtask_done": {
        const agent = p.agent as Robot;
        this.current[agent] = "";
        this.status[agent] = "Idle";
        this.completeLabel(String(p.label ?? ""));
        break;
      }
      case "subtask_failed": {
        const agent = p.agent as Robot;
        const label = String(p.label ?? "");
        this.current[agent] = "";
        this.status[agent] = "Idle";
        if (label && !this.failed.includes(label)) {
          this.failed.push(label);
        }
        break;
      }
      case "subtask_interrupted": {
        const agent = p.agent as Robot;
        this.current[agent] = "";
        this.status[agent] = "Killed";
        break;
      }
      case "assignment_dropped":
        this.notices.push(`assignment dropped: ${p.agent} cannot ${p.label}`);
        break;
      case "cancel_dropped":
        this.notices.push(`cancel for ${p.agent} was dropped mid-skill (${p.label})`);
        break;
      case "budget_exceeded":
        this.notices.push(`run stopped: step budget exceeded at t=${p.t}`);
        break;
      case "turn_budget_exceeded":
        this.notices.push(`run stopped: turn budget exceeded (${p.turns} turns)`);
        break;
      default:
        // future kinds advance the cursor and change nothing
        break;
    }
  }

  /** Replace all server-owned fields with the snapshot; optimistic bubbles
   * the server has not echoed yet survive at the tail of the chat. */
  adoptSnapshot(snapshot: Snapshot): void {
    this.sessionId = snapshot.session_id;
    this.recipe = snapshot.recipe;
    this.available = [...snapshot.available_subtasks];
    this.queues = {
      R2: [...snapshot.queues.R2],
      R1: [...snapshot.queues.R1],
      User: [...snapshot.queues.User],
    };
    this.current = { ...snapshot.current };
    this.status = { ...snapshot.status };
    this.completed = [...snapshot.completed];
    this.failed = [...snapshot.failed];
    this.subtasks = snapshot.subtasks.map((row) => ({ ...row }));
    this.tick = snapshot.tick;
    this.t = snapshot.t;
    const unconfirmed = this.chat.filter((b) => b.pending || b.failed);
    this.chat = snapshot.chat.map(([speaker, text]) => ({ speaker, text }));
    this.chat.push(...unconfirmed);
    this.cursor = snapshot.next_seq;
  }

  /** Append an optimistic echo for a message just posted. */
  addPendingEcho(text: string): ChatBubble {
    const bubble: ChatBubble = { speaker: USER_SPEAKER, text, pending: true };
    this.chat.push(bubble);
    return bubble;
  }

  private foldUserMessage(text: string): void {
    const echo = this.chat.find((b) => b.pending && !b.failed && b.text === text);
    if (echo) {
      delete echo.pending;
      return;
    }
    this.chat.push({ speaker: USER_SPEAKER, text });
  }

  private foldAction(action: PlannerAction): void {
    switch (action.kind) {
      case "say":
        // the say's chat bubble arrives as its own assistant_msg event
        break;
      case "set_recipe":
        this.resetBoard(action.name);
        break;
      case "assign":
        for (const label of action.subtasks) {
          this.foldAssign(action.agent, label);
        }
        break;
      case "mark_complete":
        for (const label of action.subtasks) {
          this.completeLabel(label);
        }
        break;
      case "interrupt":
        this.current[action.agent] = "";
        this.status[action.agent] = "Killed";
        break;
      case "no_op":
        break;
    }
  }

  /** Mirror of the engine's assignment rules: labels resolve to board ids
   * case-insensitively, settled or already-queued labels are dropped, and
   * assigning a label queued elsewhere moves it between lanes. */
  private foldAssign(agent: Lane, label: string): void {
    const name = this.resolveId(label) ?? label;
    const settled = new Set([...this.completed, ...this.failed]);
    for (const running of Object.values(this.current)) {
      if (running) {
        settled.add(running);
      }
    }
    if (settled.has(name) || this.queues[agent].includes(name)) {
      return;
    }
    this.removeFromQueues(name);
    this.queues[agent].push(name);
  }

  /** Mirror of the engine's completion rules: remove from every lane, grow
   * the completed list once, and mark the board row done when the label is
   * a board subtask (anything else is user-added, off-recipe work). */
  private completeLabel(label: string): void {
    const resolved = this.resolveId(label);
    const name = resolved ?? label;
    this.removeFromQueues(name);
    if (!this.completed.includes(name)) {
      this.completed.push(name);
    }
    if (resolved !== null) {
      const row = this.subtasks.find((r) => r.id === resolved);
      if (row) {
        row.done = true;
      }
    }
  }

  private resolveId(label: string): string | null {
    if (this.subtasks.some((row) => row.id === label)) {
      return label;
    }
    const lowered = label.trim().toLowerCase();
    const match = this.subtasks.find((row) => row.id.toLowerCase() === lowered);
    return match ? match.id : null;
  }

  private removeFromQueues(name: string): void {
    for (const queue of Object.values(this.queues)) {
      const at = queue.indexOf(name);
      if (at >= 0) {
        queue.splice(at, 1);
      }
    }
  }

  private resetBoard(recipe: string): void {
    this.recipe = recipe;
    this.subtasks = [];
    this.available = [];
    this.queues = emptyQueues();
    this.current = { R2: "", R1: "" };
    this.status = { R2: "Idle", R1: "Idle" };
    this.completed = [];
    this.failed = [];
  }
}
