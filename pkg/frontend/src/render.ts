/** Pure view: model in, HTML string out. No planning logic, no state.
 *
 * Interactive elements carry data-action attributes; the entry point wires
 * them through event delegation, so re-rendering never re-binds handlers.
 */

import type { ConsoleViewModel } from "./viewModel.js";
import { ROBOTS, type Robot, type WireStatus } from "./types.js";

export function escapeHtml(raw: string): string {
  return raw
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;")
    .replaceAll("'", "&#39;");
}

/** The wire says "Killed"; people read "Interrupted". */
export function statusLabel(status: WireStatus): string {
  return status === "Killed" ? "Interrupted" : status;
}

function badge(status: WireStatus): string {
  const label = statusLabel(status);
  return `<span class="badge badge-${label.toLowerCase()}">${label}</span>`;
}

function connectionBanner(model: ConsoleViewModel): string {
  if (model.connection === "live") {
    return "";
  }
  const detail = model.connectionDetail ? `: ${escapeHtml(model.connectionDetail)}` : "";
  return `<div class="banner banner-${model.connection}">${model.connection}${detail}</div>`;
}

function chatColumn(model: ConsoleViewModel): string {
  const bubbles = model.chat
    .map((bubble, index) => {
      const role = bubble.speaker === "User" ? "user" : "assistant";
      const flags = `${bubble.pending ? " pending" : ""}${bubble.failed ? " failed" : ""}`;
      const note = bubble.failed
        ? ` <button data-action="retry" data-index="${index}">retry</button>`
        : bubble.pending
          ? ' <span class="note">sending…</span>'
          : "";
      return (
        `<div class="bubble ${role}${flags}">` +
        `<span class="speaker">${escapeHtml(bubble.speaker)}</span>` +
        `${escapeHtml(bubble.text)}${note}</div>`
      );
    })
    .join("");
  return `<section class="chat"><h2>Chat</h2><div class="bubbles">${bubbles}</div></section>`;
}

function list(items: readonly string[], empty = "none"): string {
  if (items.length === 0) {
    return `<p class="empty">${empty}</p>`;
  }
  return `<ul>${items.map((item) => `<li>${escapeHtml(item)}</li>`).join("")}</ul>`;
}

function robotPanel(model: ConsoleViewModel, agent: Robot): string {
  const status = model.status[agent];
  const current = model.current[agent];
  const stop =
    `<button data-action="stop" data-agent="${agent}"` +
    `${status === "Running" ? "" : " disabled"}>Stop</button>`;
  return (
    `<div class="panel" data-agent="${agent}">` +
    `<h3>${agent} ${badge(status)} ${stop}</h3>` +
    `<p class="current">${current ? escapeHtml(current) : "<em>nothing running</em>"}</p>` +
    `<h4>Queue</h4>${list(model.queues[agent], "empty")}` +
    `</div>`
  );
}

function board(model: ConsoleViewModel): string {
  const rows = model.subtasks
    .map(
      (row) =>
        `<li class="${row.done ? "done" : "todo"}">` +
        `<span class="mark">${row.done ? "✓" : "•"}</span> ${escapeHtml(row.id)}</li>`,
    )
    .join("");
  const percent = Math.round(model.completion * 100);
  return (
    `<section class="board">` +
    `<h2>${model.recipe ? escapeHtml(model.recipe) : "No recipe yet"}` +
    `${model.finished ? ' <span class="chip">finished</span>' : ""}</h2>` +
    `<p class="meta">${percent}% done · tick ${model.tick} · t=${model.t}</p>` +
    (rows ? `<ul class="subtasks">${rows}</ul>` : `<p class="empty">propose a recipe to begin</p>`) +
    `<h4>Available</h4>${list(model.available)}` +
    `<h4>Completed</h4>${list(model.completed)}` +
    `<h4>Failed</h4>${list(model.failed)}` +
    `</section>`
  );
}

function notices(model: ConsoleViewModel): string {
  if (model.notices.length === 0) {
    return "";
  }
  const items = model.notices.map((n) => `<li>${escapeHtml(n)}</li>`).join("");
  return `<section class="notices"><ul>${items}</ul></section>`;
}

export function renderConsole(model: ConsoleViewModel): string {
  if (model.connection === "error") {
    return (
      `<div class="error-page"><h1>Session unavailable</h1>` +
      `<p>${escapeHtml(model.connectionDetail)}</p>` +
      `<p><a href="?">back to the session list</a></p></div>`
    );
  }
  const panels = ROBOTS.map((agent) => robotPanel(model, agent)).join("");
  const userPanel =
    `<div class="panel" data-agent="User"><h3>You</h3>` +
    `<h4>Queue</h4>${list(model.queues.User, "empty")}</div>`;
  return (
    connectionBanner(model) +
    notices(model) +
    `<main class="layout">` +
    chatColumn(model) +
    `<section class="side">${board(model)}` +
    `<div class="panels">${panels}${userPanel}</div>` +
    `<button data-action="advance">Step simulation</button>` +
    `</section></main>`
  );
}

/** Landing view when no session is selected. */
export function renderPicker(
  sessions: { session_id: string; recipe: string }[],
  detail = "",
): string {
  const rows = sessions
    .map(
      (s) =>
        `<li><a href="?session=${encodeURIComponent(s.session_id)}">` +
        `${escapeHtml(s.session_id)}</a>` +
        `${s.recipe ? ` · ${escapeHtml(s.recipe)}` : ""}</li>`,
    )
    .join("");
  return (
    `<div class="picker"><h1>Cooking sessions</h1>` +
    (detail ? `<p class="note">${escapeHtml(detail)}</p>` : "") +
    (rows ? `<ul>${rows}</ul>` : "<p>No sessions yet.</p>") +
    `<button data-action="new-session">New session</button></div>`
  );
}
