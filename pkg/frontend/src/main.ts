/** Browser entry point: wires the client to the DOM.
 *
 * Everything dynamic renders into #view from the view model; the chat form
 * stays static in index.html so typing survives re-renders. The service base
 * URL and session id come from the query string:
 *
 *   index.html?service=http://127.0.0.1:8080&session=<id>
 */

import { ConsoleClient, type EventSourceLike } from "./client.js";
import { renderConsole, renderPicker } from "./render.js";
import type { Robot, Snapshot } from "./types.js";

/** Adapt the browser's EventSource to the client's injectable shape. */
function wrapEventSource(url: string): EventSourceLike {
  const source = new EventSource(url);
  const wrapper: EventSourceLike = {
    addEventListener: (type, listener) =>
      source.addEventListener(type, (domEvent) => listener(domEvent as MessageEvent)),
    close: () => source.close(),
    onopen: null,
    onerror: null,
  };
  source.onopen = () => wrapper.onopen?.();
  source.onerror = () => wrapper.onerror?.();
  return wrapper;
}

const params = new URLSearchParams(window.location.search);
const baseUrl = (params.get("service") ?? "http://127.0.0.1:8080").replace(/\/$/, "");
const sessionId = params.get("session") ?? "";

const view = document.getElementById("view");
const form = document.getElementById("chat-form") as HTMLFormElement | null;
const input = document.getElementById("chat-text") as HTMLInputElement | null;
if (!view) {
  throw new Error("index.html must provide #view");
}

async function showPicker(): Promise<void> {
  if (form) {
    form.hidden = true;
  }
  try {
    const response = await fetch(`${baseUrl}/sessions`);
    const body = (await response.json()) as { sessions: { session_id: string; state: Snapshot }[] };
    const rows = body.sessions.map((s) => ({
      session_id: s.session_id,
      recipe: s.state.recipe,
    }));
    view!.innerHTML = renderPicker(rows);
  } catch {
    view!.innerHTML = renderPicker([], `cannot reach ${baseUrl}`);
  }
  view!.addEventListener("click", (domEvent) => {
    const target = (domEvent.target as HTMLElement).closest("[data-action]");
    if (target?.getAttribute("data-action") === "new-session") {
      void createSession();
    }
  });
}

async function createSession(): Promise<void> {
  const response = await fetch(`${baseUrl}/sessions`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify({}),
  });
  const body = (await response.json()) as { session_id: string };
  params.set("session", body.session_id);
  window.location.search = params.toString();
}

function showConsole(): void {
  const client = new ConsoleClient({
    baseUrl,
    sessionId,
    fetchFn: (url, init) => fetch(url, init),
    eventSource: wrapEventSource,
    onChange: (model) => {
      view!.innerHTML = renderConsole(model);
    },
  });

  view!.addEventListener("click", (domEvent) => {
    const target = (domEvent.target as HTMLElement).closest("[data-action]");
    if (!target) {
      return;
    }
    const action = target.getAttribute("data-action");
    if (action === "stop") {
      void client.interrupt(target.getAttribute("data-agent") as Robot);
    } else if (action === "advance") {
      void client.advance(1);
    } else if (action === "retry") {
      const bubble = client.model.chat[Number(target.getAttribute("data-index"))];
      if (bubble) {
        void client.retryChat(bubble);
      }
    }
  });

  form?.addEventListener("submit", (domEvent) => {
    domEvent.preventDefault();
    if (input && input.value.trim()) {
      void client.sendChat(input.value);
      input.value = "";
    }
  });

  window.addEventListener("beforeunload", () => client.close());
  void client.connect();
}

if (sessionId) {
  showConsole();
} else {
  void showPicker();
}
