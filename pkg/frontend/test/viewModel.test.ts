/** The fold itself: every event kind, and full-session parity against the
 * recorded fixture's embedded snapshots. */
import { readFileSync } from "node:fs";

import { describe, expect, it } from "vitest";

import { ConsoleViewModel } from "../src/viewModel.js";
import type { Snapshot, WireEvent } from "../src/types.js";
import { event, stateEvent } from "./helpers.js";

interface FixtureFile {
  session: Record<string, unknown>;
  recipe: string;
  events: WireEvent[];
  final_state: Snapshot;
}

const fixture = JSON.parse(
  readFileSync(new URL("./fixtures/scripted_session.json", import.meta.url), "utf-8"),
) as FixtureFile;

/** The fields the console derives by folding, as opposed to adopting. */
function derived(model: ConsoleViewModel) {
  return {
    recipe: model.recipe,
    queues: model.queues,
    current: model.current,
    status: model.status,
    completed: model.completed,
    failed: model.failed,
    chat: model.chat.map((bubble) => [bubble.speaker, bubble.text]),
    finished: model.finished,
    completion: model.completion,
  };
}

function expected(snapshot: Snapshot) {
  return {
    recipe: snapshot.recipe,
    queues: snapshot.queues,
    current: snapshot.current,
    status: snapshot.status,
    completed: snapshot.completed,
    failed: snapshot.failed,
    chat: snapshot.chat,
    finished: snapshot.finished,
    completion: snapshot.completion,
  };
}

describe("fixture parity", () => {
  const events = fixture.events;
  const snapshots = events.filter((e) => e.kind === "state");

  it("is a long session with both robot states on display", () => {
    expect(events.length).toBeGreaterThanOrEqual(50);
    expect(snapshots.length).toBeGreaterThanOrEqual(10);
    const statuses = snapshots.map((e) => (e.payload as unknown as Snapshot).status);
    expect(statuses.some((s) => Object.values(s).includes("Running"))).toBe(true);
    expect(statuses.some((s) => Object.values(s).includes("Killed"))).toBe(true);
  });

  it("matches every embedded snapshot before adopting it", () => {
    const model = new ConsoleViewModel();
    let compared = 0;
    for (const wire of events) {
      if (wire.kind === "state") {
        const snapshot = wire.payload as unknown as Snapshot;
        expect(derived(model), `state event seq ${wire.seq}`).toEqual(expected(snapshot));
        if (model.subtasks.length > 0) {
          const markers = Object.fromEntries(model.subtasks.map((r) => [r.id, r.done]));
          const serverMarkers = Object.fromEntries(
            snapshot.subtasks.map((r) => [r.id, r.done]),
          );
          expect(markers, `board at seq ${wire.seq}`).toEqual(serverMarkers);
        }
        compared += 1;
      }
      model.applyEvent(wire);
      expect(model.cursor).toBe(wire.seq + 1);
    }
    expect(compared).toBe(snapshots.length);
    expect(derived(model)).toEqual(expected(fixture.final_state));
    expect(model.cursor).toBe(fixture.final_state.next_seq);
    expect(model.finished).toBe(true);
  });
});

describe("assignment folding", () => {
  const board = [
    { id: "get tomatoes", label: "get tomatoes", done: false },
    { id: "get salt", label: "get salt", done: false },
  ];

  it("moves a label already queued elsewhere instead of duplicating it", () => {
    const model = new ConsoleViewModel();
    model.applyEvent(stateEvent(0, { subtasks: board, queues: { R2: ["get salt"], R1: [], User: [] } }));
    model.applyEvent(
      event(1, "tick", { actions: [{ kind: "assign", agent: "User", subtasks: ["get salt"] }] }),
    );
    expect(model.queues.R2).toEqual([]);
    expect(model.queues.User).toEqual(["get salt"]);
  });

  it("skips labels that are already settled or running", () => {
    const model = new ConsoleViewModel();
    model.applyEvent(
      stateEvent(0, {
        subtasks: board,
        completed: ["get salt"],
        current: { R2: "get tomatoes", R1: "" },
        status: { R2: "Running", R1: "Idle" },
      }),
    );
    model.applyEvent(
      event(2, "tick", {
        actions: [{ kind: "assign", agent: "R2", subtasks: ["get salt", "get tomatoes"] }],
      }),
    );
    expect(model.queues.R2).toEqual([]);
  });

  it("resolves labels to board ids case-insensitively", () => {
    const model = new ConsoleViewModel();
    model.applyEvent(
      stateEvent(0, { subtasks: [{ id: "Get pepper", label: "Get pepper", done: false }] }),
    );
    model.applyEvent(
      event(1, "tick", { actions: [{ kind: "assign", agent: "R2", subtasks: ["get pepper"] }] }),
    );
    expect(model.queues.R2).toEqual(["Get pepper"]);
  });
});

describe("completion folding", () => {
  it("marks the board row done and clears the label from every lane", () => {
    const model = new ConsoleViewModel();
    model.applyEvent(
      stateEvent(0, {
        subtasks: [{ id: "stir pot", label: "stir pot", done: false }],
        queues: { R2: [], R1: ["stir pot"], User: [] },
      }),
    );
    model.applyEvent(
      event(1, "tick", { actions: [{ kind: "mark_complete", subtasks: ["stir pot"] }] }),
    );
    expect(model.queues.R1).toEqual([]);
    expect(model.completed).toEqual(["stir pot"]);
    expect(model.subtasks[0]?.done).toBe(true);
    expect(model.finished).toBe(true);
    expect(model.completion).toBe(1);
  });

  it("keeps off-recipe completions out of the board", () => {
    const model = new ConsoleViewModel();
    model.applyEvent(
      stateEvent(0, { subtasks: [{ id: "stir pot", label: "stir pot", done: false }] }),
    );
    model.applyEvent(
      event(1, "tick", { actions: [{ kind: "mark_complete", subtasks: ["get olive oil"] }] }),
    );
    expect(model.completed).toEqual(["get olive oil"]);
    expect(model.subtasks[0]?.done).toBe(false);
    expect(model.finished).toBe(false);
  });

  it("completes once even when reported twice", () => {
    const model = new ConsoleViewModel();
    model.applyEvent(
      stateEvent(0, { subtasks: [{ id: "stir pot", label: "stir pot", done: false }] }),
    );
    model.applyEvent(event(1, "tick", { actions: [{ kind: "mark_complete", subtasks: ["stir pot"] }] }));
    model.applyEvent(event(2, "tick", { actions: [{ kind: "mark_complete", subtasks: ["Stir Pot"] }] }));
    expect(model.completed).toEqual(["stir pot"]);
  });
});

describe("robot lifecycle folding", () => {
  function running(): ConsoleViewModel {
    const model = new ConsoleViewModel();
    model.applyEvent(
      stateEvent(0, {
        subtasks: [
          { id: "get tomatoes", label: "get tomatoes", done: false },
          { id: "get salt", label: "get salt", done: false },
        ],
        queues: { R2: ["get tomatoes", "get salt"], R1: [], User: [] },
      }),
    );
    model.applyEvent(event(1, "subtask_started", { agent: "R2", label: "get tomatoes", t: 0 }));
    return model;
  }

  it("starting a subtask pops the queue head and shows Running", () => {
    const model = running();
    expect(model.current.R2).toBe("get tomatoes");
    expect(model.status.R2).toBe("Running");
    expect(model.queues.R2).toEqual(["get salt"]);
  });

  it("finishing marks it done and idles the robot", () => {
    const model = running();
    model.applyEvent(event(2, "subtask_done", { agent: "R2", label: "get tomatoes", t: 5 }));
    expect(model.status.R2).toBe("Idle");
    expect(model.current.R2).toBe("");
    expect(model.completed).toEqual(["get tomatoes"]);
    expect(model.subtasks[0]?.done).toBe(true);
  });

  it("failing is terminal: the label lands in failed, not completed", () => {
    const model = running();
    model.applyEvent(
      event(2, "subtask_failed", { agent: "R2", label: "get tomatoes", t: 5, category: "A" }),
    );
    expect(model.status.R2).toBe("Idle");
    expect(model.failed).toEqual(["get tomatoes"]);
    expect(model.completed).toEqual([]);
    expect(model.subtasks[0]?.done).toBe(false);
  });

  it("an interrupt kills the badge until the next start", () => {
    const model = running();
    model.applyEvent(
      event(2, "tick", { actions: [{ kind: "interrupt", agent: "R2" }] }),
    );
    expect(model.status.R2).toBe("Killed");
    expect(model.current.R2).toBe("");
    model.applyEvent(event(3, "subtask_interrupted", { agent: "R2", label: "get tomatoes", t: 3 }));
    expect(model.status.R2).toBe("Killed");
    model.applyEvent(event(4, "subtask_started", { agent: "R2", label: "get salt", t: 3 }));
    expect(model.status.R2).toBe("Running");
    expect(model.current.R2).toBe("get salt");
  });
});

describe("chat folding", () => {
  it("reconciles the optimistic echo against the server's user_msg", () => {
    const model = new ConsoleViewModel();
    model.addPendingEcho("Ok, sounds good!");
    model.applyEvent(event(0, "user_msg", { text: "Ok, sounds good!", tick_id: 0 }));
    expect(model.chat).toEqual([{ speaker: "User", text: "Ok, sounds good!" }]);
  });

  it("appends foreign user messages unchanged", () => {
    const model = new ConsoleViewModel();
    model.applyEvent(event(0, "user_msg", { text: "hello there", tick_id: 0 }));
    expect(model.chat).toEqual([{ speaker: "User", text: "hello there" }]);
  });

  it("keeps unconfirmed echoes across snapshot adoption", () => {
    const model = new ConsoleViewModel();
    model.addPendingEcho("still in flight");
    model.applyEvent(stateEvent(0, { chat: [["User", "earlier"]] }));
    expect(model.chat).toEqual([
      { speaker: "User", text: "earlier" },
      { speaker: "User", text: "still in flight", pending: true },
    ]);
  });

  it("adds assistant bubbles from assistant_msg events only", () => {
    const model = new ConsoleViewModel();
    model.applyEvent(
      event(0, "tick", { actions: [{ kind: "say", message: "Great, let's cook!" }] }),
    );
    expect(model.chat).toEqual([]);
    model.applyEvent(event(1, "assistant_msg", { text: "Great, let's cook!", tick_id: 1 }));
    expect(model.chat).toEqual([{ speaker: "Mosaic", text: "Great, let's cook!" }]);
  });
});

describe("stream discipline", () => {
  it("drops duplicate deliveries", () => {
    const model = new ConsoleViewModel();
    const hello = event(0, "user_msg", { text: "hello", tick_id: 0 });
    model.applyEvent(hello);
    model.applyEvent(hello);
    expect(model.chat).toHaveLength(1);
    expect(model.cursor).toBe(1);
  });

  it("advances past unknown kinds without touching state", () => {
    const model = new ConsoleViewModel();
    model.applyEvent(event(0, "telemetry", { cpu: 0.5 }));
    expect(model.cursor).toBe(1);
    expect(model.chat).toEqual([]);
    expect(model.notices).toEqual([]);
  });

  it("a recipe switch resets the board but not the conversation", () => {
    const model = new ConsoleViewModel();
    model.applyEvent(event(0, "user_msg", { text: "Let's make Caesar Salad!", tick_id: 0 }));
    model.applyEvent(
      stateEvent(1, {
        recipe: "Caesar Salad",
        chat: [["User", "Let's make Caesar Salad!"]],
        subtasks: [{ id: "Get pepper", label: "Get pepper", done: true }],
        completed: ["Get pepper"],
      }),
    );
    model.applyEvent(event(2, "recipe_switch", { from: "Caesar Salad", to: "Tomato Soup", tick_id: 1 }));
    expect(model.recipe).toBe("Tomato Soup");
    expect(model.subtasks).toEqual([]);
    expect(model.completed).toEqual([]);
    expect(model.chat).toHaveLength(1);
  });

  it("turns runtime warnings into notices", () => {
    const model = new ConsoleViewModel();
    model.applyEvent(event(0, "cancel_dropped", { agent: "R2", label: "get salt", t: 4 }));
    model.applyEvent(event(1, "budget_exceeded", { t: 5000 }));
    model.applyEvent(event(2, "assignment_dropped", { agent: "R1", label: "get pepper" }));
    expect(model.notices).toHaveLength(3);
    expect(model.notices[0]).toContain("R2");
    expect(model.notices[1]).toContain("5000");
    expect(model.notices[2]).toContain("get pepper");
  });
});
