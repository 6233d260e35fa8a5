"""Record the scripted console fixture.

Drives one deterministic session through the real HTTP app (compliant
backend, manual run mode) and dumps the complete event log plus the final
snapshot to test/fixtures/scripted_session.json. The console tests replay
this log and check the folded view model against every embedded state
snapshot, so regenerate the fixture whenever the wire schema changes:

    python3 scripts/record_fixture.py
"""
from __future__ import annotations

import json
from pathlib import Path

from fastapi.testclient import TestClient

from souschef.service import SessionStore, create_app

RECIPE = "Tomato Soup"
CONFIG = {"planner": "tree", "backend": "compliant", "seed": 42, "auto_run": False}
MAX_INPUTS = 120

OUT_PATH = Path(__file__).resolve().parent.parent / "test" / "fixtures" / "scripted_session.json"


def robots_pending(state: dict) -> bool:
    return any(state["current"][a] or state["queues"][a] for a in ("R2", "R1"))


def main() -> None:
    client = TestClient(create_app(SessionStore()))
    session_id = client.post("/sessions", json=CONFIG).json()["session_id"]

    def chat(text: str, tag: str = "") -> dict:
        body: dict = {"text": text}
        if tag:
            body["tag"] = tag
        response = client.post(f"/sessions/{session_id}/chat", json=body)
        response.raise_for_status()
        return response.json()["state"]

    def advance(ticks: int) -> dict:
        response = client.post(f"/sessions/{session_id}/advance", json={"ticks": ticks})
        response.raise_for_status()
        return response.json()["state"]

    # change plans before any work starts: the console must reset its board
    # on the recipe_switch event
    chat("Let's make Caesar Salad!", tag="propose_recipe")
    state = chat(f"Actually, could we do {RECIPE} instead?", tag="propose_recipe")
    assert state["recipe"] == RECIPE, state["recipe"]

    state = chat("Ok, sounds good!", tag="approve")
    assert state["queues"]["R2"] or state["queues"]["R1"], "approval queued nothing"

    # queue a second step on R2, then claim it: the assign event must move it
    # between lanes without duplicating it
    state = chat("Can R2 get salt", tag="robot_request")
    assert "get salt" in state["queues"]["R2"], state["queues"]
    state = chat("I will handle get salt myself", tag="reassign")
    assert "get salt" in state["queues"]["User"], state["queues"]
    assert "get salt" not in state["queues"]["R2"], state["queues"]

    # catch a robot mid-skill, then stop it: the interrupt event must flip
    # its badge and clear its current subtask
    state = advance(2)
    running = [a for a in ("R2", "R1") if state["status"][a] == "Running"]
    assert running, state["status"]
    target = running[0]
    state = chat(f"{target}, stop!", tag="interrupt")
    assert state["status"][target] == "Killed", state["status"]

    inputs = 7
    while not state["finished"] and inputs < MAX_INPUTS:
        inputs += 1
        if robots_pending(state):
            state = advance(2)
        elif state["queues"]["User"]:
            state = chat(f"I finished {state['queues']['User'][0]}.", tag="report_done")
        else:
            state = chat("Ok, sounds good!", tag="approve")

    assert state["finished"], f"recipe unfinished after {inputs} inputs"

    events = client.get(f"/sessions/{session_id}/events").json()["events"]
    final_state = client.get(f"/sessions/{session_id}/state").json()
    assert events[-1]["payload"] == final_state
    assert len(events) >= 50, f"only {len(events)} events"
    kinds = {e["kind"] for e in events}
    for needed in ("user_msg", "assistant_msg", "tick", "state", "recipe_switch",
                   "subtask_started", "subtask_done", "subtask_interrupted"):
        assert needed in kinds, f"fixture never produced {needed}"

    OUT_PATH.parent.mkdir(parents=True, exist_ok=True)
    OUT_PATH.write_text(
        json.dumps(
            {"session": CONFIG, "recipe": RECIPE, "events": events, "final_state": final_state},
            indent=1,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    print(f"wrote {OUT_PATH} ({len(events)} events, {inputs} inputs)")


if __name__ == "__main__":
    main()
