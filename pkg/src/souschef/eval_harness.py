"""Persona-driven evaluation scenarios.

A persona is a deterministic scripted user: it proposes a recipe, approves
planner proposals, performs and reports its own subtasks, and injects
non-nominal turns per its plan (modes A vague recipe, B nonexistent recipe,
C reassignment, D out-of-recipe subtask). Turns are generated reactively from
the live session state and recorded with intent tags, so the resulting
transcript is self-contained for offline violation checking and unit scoring.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .behavior_tree import TreePlanner
from .capabilities import validate_assignment
from .gateway import Gateway
from .observation import R1, R2, USER
from .phrases import labels_match
from .planner import OnePromptPlanner, PlannerSession, RecipeLibrary
from .policy import pending_proposals, last_suggestions
from .runtime import FaultConfig, KitchenWorld, Simulation

MODES = ("A", "B", "C", "D")
EASY_INJECTIONS = 1
HARD_INJECTIONS = 6
HARD_PLAN = ("A", "B", "C", "D", "C", "D")

VAGUE_TEXT = "Hm, I am hungry. Could you cook something for me?"
NONEXISTENT_TEXT = "Let's make beef wellington!"
APPROVE_TEXT = "Ok, sounds good!"
NUDGE_TEXT = "What should we do next?"
EXTERNAL_OBJECTS = ("olives", "honey", "ketchup", "juice", "milk", "napkins")


class TurnBudgetExceeded(RuntimeError):
    pass


@dataclass
class PersonaScript:
    """Recipe target plus an ordered injection plan; turns are realized
    reactively against the running session and recorded with tags."""

    recipe_target: str
    injections: tuple[str, ...] = ()
    max_turns: int = 60

    def __post_init__(self):
        for mode in self.injections:
            if mode not in MODES:
                raise ValueError(f"unknown injection mode {mode!r}")

    @classmethod
    def easy(cls, recipe: str, mode: str) -> "PersonaScript":
        return cls(recipe, (mode,))

    @classmethod
    def hard(cls, recipe: str) -> "PersonaScript":
        return cls(recipe, HARD_PLAN, max_turns=90)

    @classmethod
    def nominal(cls, recipe: str) -> "PersonaScript":
        return cls(recipe, ())

    def to_dict(self) -> dict:
        return {
            "recipe_target": self.recipe_target,
            "injections": list(self.injections),
            "max_turns": self.max_turns,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "PersonaScript":
        return cls(
            raw["recipe_target"],
            tuple(raw.get("injections", ())),
            int(raw.get("max_turns", 60)),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "PersonaScript":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class ScenarioResult:
    transcript: list[dict]
    finished: bool
    budget_exceeded: bool
    injections: list[dict]  # realized: {mode, index, label, agent}
    session: PlannerSession
    sim: Simulation

    def transcript_text(self) -> str:
        return "\n".join(json.dumps(rec, sort_keys=True) for rec in self.transcript) + "\n"


def build_planner(kind: str, gateway: Gateway, recipes: tuple[str, ...]):
    if kind == "tree":
        return TreePlanner(gateway, recipes)
    if kind == "one-prompt":
        return OnePromptPlanner(gateway, recipes)
    raise ValueError(f"unknown planner kind {kind!r}")


class _PersonaDriver:
    def __init__(self, persona: PersonaScript, sim: Simulation, library: RecipeLibrary):
        self.persona = persona
        self.sim = sim
        self.session = sim.session
        self.library = library
        self.pending_modes = list(persona.injections)
        self.realized: list[dict] = []
        self.external_objects = list(EXTERNAL_OBJECTS)
        self.turns = 0

    def post(self, text: str, tag: str, meta: dict | None = None) -> None:
        self.turns += 1
        self.sim.post_user(text, tag=tag, meta=meta)
        self.sim.settle_planner()

    def exhausted(self) -> bool:
        return self.turns >= self.persona.max_turns

    def _realize(self, mode: str, label: str = "", agent: str = "") -> dict:
        entry = {
            "mode": mode,
            "index": len(self.session.transcript),  # the user_msg lands here
            "label": label,
            "agent": agent,
        }
        self.realized.append(entry)
        return entry

    # -- recipe phase -------------------------------------------------------

    def establish_recipe(self) -> None:
        while self.session.dag is None and not self.exhausted():
            mode = self.pending_modes[0] if self.pending_modes else ""
            if mode == "A":
                self.pending_modes.pop(0)
                self._realize("A")
                self.post(VAGUE_TEXT, "propose_recipe", {"mode": "A", "injection": "A"})
            elif mode == "B":
                self.pending_modes.pop(0)
                self._realize("B")
                self.post(
                    NONEXISTENT_TEXT, "propose_recipe", {"mode": "B", "injection": "B"}
                )
            elif last_suggestions(self.session.observation()):
                self.post(APPROVE_TEXT, "approve")
            else:
                self.post(
                    f"Let's make {self.persona.recipe_target}!",
                    "propose_recipe",
                    {"name": self.persona.recipe_target},
                )

    # -- cooking phase ------------------------------------------------------

    def _robot_lane_tasks(self) -> list[str]:
        observation = self.session.observation()
        tasks = [
            task
            for agent, task in pending_proposals(observation)
            if agent in (R2, R1)
        ]
        tasks += list(observation.r2.subtask_queue) + list(observation.r1.subtask_queue)
        return tasks

    def try_injection(self) -> bool:
        if not self.pending_modes:
            return False
        mode = self.pending_modes[0]
        if mode == "D":
            self.pending_modes.pop(0)
            obj = self.external_objects.pop(0)
            label = f"get {obj}"
            entry = self._realize("D", label=label)
            self.post(
                f"Can you also get me {obj}?",
                "add_subtask",
                {"label": label, "injection": "D"},
            )
            entry["index"] = entry["index"]  # settled; index already points at the turn
            return True
        if mode == "C":
            candidates = self._robot_lane_tasks()
            if not candidates:
                return False
            label = candidates[0]
            self.pending_modes.pop(0)
            self._realize("C", label=label, agent=USER)
            self.post(
                f"I will handle {label} myself.",
                "reassign",
                {"label": label, "agent": USER, "injection": "C"},
            )
            return True
        return False

    def cook(self) -> None:
        while not self.exhausted():
            self.sim.run_until_quiet()
            if self.session.dag is not None and self.session.dag.is_finished():
                return
            if self.try_injection():
                continue
            observation = self.session.observation()
            if pending_proposals(observation):
                self.post(APPROVE_TEXT, "approve")
            elif self.session.queues[USER]:
                label = self.session.queues[USER][0]
                self.post(f"I finished {label}.", "report_done", {"label": label})
            elif self.sim.robots_pending():
                continue
            else:
                self.post(NUDGE_TEXT, "smalltalk")


def run_scenario(
    recipe: str,
    persona: PersonaScript,
    planner_kind: str,
    backend,
    seed: int = 0,
    library: RecipeLibrary | None = None,
    world: KitchenWorld | None = None,
    faults: FaultConfig | None = None,
    transcript_path: Path | None = None,
) -> ScenarioResult:
    library = library or RecipeLibrary.packaged()
    gateway = Gateway(backend)
    session = PlannerSession(
        library,
        planner=build_planner(planner_kind, gateway, library.names),
        transcript_path=transcript_path,
    )
    sim = Simulation(session, gateway, world=world, faults=faults, seed=seed)
    driver = _PersonaDriver(persona, sim, library)
    driver.establish_recipe()
    if session.dag is not None:
        driver.cook()
    finished = session.dag is not None and session.dag.is_finished()
    budget_exceeded = driver.exhausted() and not finished
    if budget_exceeded:
        session.record({"kind": "turn_budget_exceeded", "turns": driver.turns})
    return ScenarioResult(
        transcript=session.transcript,
        finished=finished,
        budget_exceeded=budget_exceeded,
        injections=driver.realized,
        session=session,
        sim=sim,
    )


# -- unit-test scoring ----------------------------------------------------------


def _injection_turns(transcript: list[dict]) -> list[tuple[int, str, dict]]:
    turns = []
    for i, rec in enumerate(transcript):
        if rec.get("kind") != "user_msg":
            continue
        mode = rec.get("meta", {}).get("injection", "")
        if mode:
            turns.append((i, mode, rec.get("meta", {})))
    return turns


def _tick_actions(transcript: list[dict], start: int, kind: str):
    for i in range(start, len(transcript)):
        rec = transcript[i]
        if rec.get("kind") != "tick":
            continue
        for action in rec.get("actions", []):
            if action.get("kind") == kind:
                yield i, action


def _score_recipe_mode(transcript: list[dict], turn_idx: int, recipe_names) -> bool:
    """Modes A/B: a clarification or suggestion say must land before the next
    set_recipe, and the recipe finally set must come from the library."""
    set_tick = None
    for i, _action in _tick_actions(transcript, turn_idx + 1, "set_recipe"):
        set_tick = i
        break
    if set_tick is None:
        return False
    say_before = any(
        True for i, _a in _tick_actions(transcript, turn_idx + 1, "say") if i < set_tick
    )
    if not say_before:
        return False
    final_name = None
    for _i, action in _tick_actions(transcript, 0, "set_recipe"):
        final_name = action["name"]
    return final_name is not None and any(
        final_name.lower() == name.lower() for name in recipe_names
    )


def _score_reassign(transcript: list[dict], turn_idx: int, meta: dict) -> bool:
    label = meta.get("label", "")
    for _i, action in _tick_actions(transcript, turn_idx + 1, "assign"):
        if action["agent"] == meta.get("agent", USER) and any(
            labels_match(s, label) for s in action["subtasks"]
        ):
            return True
    return False


def _score_add_subtask(transcript: list[dict], turn_idx: int, meta: dict) -> bool:
    label = meta.get("label", "")
    for _i, action in _tick_actions(transcript, turn_idx + 1, "assign"):
        for assigned in action["subtasks"]:
            if labels_match(assigned, label):
                return validate_assignment(action["agent"], assigned) is None
    return False


def score_unit_tests(transcript: list[dict], recipe_names) -> tuple[float, list[dict]]:
    """Per-injection verdicts and the overall pass rate (1.0 when nothing was
    injected)."""
    verdicts = []
    for turn_idx, mode, meta in _injection_turns(transcript):
        if mode in ("A", "B"):
            passed = _score_recipe_mode(transcript, turn_idx, recipe_names)
        elif mode == "C":
            passed = _score_reassign(transcript, turn_idx, meta)
        elif mode == "D":
            passed = _score_add_subtask(transcript, turn_idx, meta)
        else:
            passed = False
        verdicts.append({"mode": mode, "turn_index": turn_idx, "passed": passed})
    if not verdicts:
        return 1.0, verdicts
    rate = sum(1 for v in verdicts if v["passed"]) / len(verdicts)
    return rate, verdicts


def render_score_table(verdicts: list[dict]) -> str:
    lines = ["mode  turn  passed"]
    for v in verdicts:
        lines.append(f"{v['mode']:<4}  {v['turn_index']:<4}  {'yes' if v['passed'] else 'no'}")
    return "\n".join(lines)
