"""Simulated robot agents over an action-service message protocol.

Each agent runs an executor that pops subtasks from its planner-side queue,
asks the gateway for a skill program, and executes the calls one at a time
against a shared kitchen world. Time is discrete simulated ticks; every
Request/Feedback/Result/Cancel message, agent state transition, and world
mutation is logged so property tests can re-check the protocol offline.

Fault injection mirrors an end-to-end failure taxonomy:
  A  pick failure            (visuomotor_skill)
  B  place failure           (visuomotor_skill)
  C  object dropped mid-skill (visuomotor_skill)
  D  cancel dropped, the interrupt never reaches the robot (interactive_task_planner)
  E  wrong program for the popped subtask (interactive_task_planner)
  F  user-interaction skill loses track of the handover (human_motion_forecasting)
"""
from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path

from .actions import Interrupt, MarkComplete
from .gateway import CompletionRequest, Gateway, GatewayError
from .observation import R1, R2
from .planner import PlannerSession
from .skill_codegen import (
    CodegenError,
    SkillCall,
    SkillCatalog,
    default_catalog,
    parse_skill_program,
    render_codegen_prompt,
    validate_program,
)

log = logging.getLogger(__name__)

FAULT_CATEGORIES = ("A", "B", "C", "D", "E", "F")
MODULE_TAGS = {
    "A": "visuomotor_skill",
    "B": "visuomotor_skill",
    "C": "visuomotor_skill",
    "D": "interactive_task_planner",
    "E": "interactive_task_planner",
    "F": "human_motion_forecasting",
}
# natural (non-injected) failure attribution by reason
NATURAL_MODULES = {
    "ObjectNotHere": "visuomotor_skill",
    "GripperEmpty": "visuomotor_skill",
    "GripperFull": "visuomotor_skill",
    "UnknownConstant": "interactive_task_planner",
    "CodegenError": "interactive_task_planner",
}

CODEGEN_NODE = "Code_Generation"


class WorldError(ValueError):
    pass


@dataclass
class FaultConfig:
    """Per-category probability and/or scripted (run, tick) triggers."""

    probabilities: dict[str, float] = field(default_factory=dict)
    triggers: dict[str, list[tuple[int, int]]] = field(default_factory=dict)

    def __post_init__(self):
        for category, p in self.probabilities.items():
            if category not in FAULT_CATEGORIES:
                raise ValueError(f"unknown fault category {category!r}")
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability for {category} out of range: {p}")
        for category in self.triggers:
            if category not in FAULT_CATEGORIES:
                raise ValueError(f"unknown fault category {category!r}")

    @classmethod
    def from_dict(cls, raw: dict) -> "FaultConfig":
        probabilities = {}
        triggers = {}
        for category, entry in raw.items():
            if "probability" in entry:
                probabilities[category] = float(entry["probability"])
            if "triggers" in entry:
                triggers[category] = [tuple(pair) for pair in entry["triggers"]]
        return cls(probabilities, triggers)

    @classmethod
    def from_file(cls, path: str | Path) -> "FaultConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def fires(self, category: str, rng: random.Random, run_index: int, t: int) -> bool:
        if (run_index, t) in set(self.triggers.get(category, [])):
            return True
        p = self.probabilities.get(category, 0.0)
        return p > 0.0 and rng.random() < p


@dataclass
class KitchenWorld:
    """Declarative kitchen scene: locations, object placements, grippers."""

    locations: dict[str, dict]
    placements: dict[str, str]
    grippers: dict[str, str | None]
    agent_locations: dict[str, str]
    mobile: set[str]
    durations: dict[str, int]
    feedback_interval: int = 2

    @classmethod
    def from_dict(cls, raw: dict) -> "KitchenWorld":
        locations = dict(raw["locations"])
        placements = dict(raw["objects"])
        for obj, loc in placements.items():
            if loc not in locations:
                raise WorldError(f"object {obj} placed at unknown location {loc}")
        agents = raw["agents"]
        return cls(
            locations=locations,
            placements=placements,
            grippers={name: None for name in agents},
            agent_locations={name: spec["location"] for name, spec in agents.items()},
            mobile={name for name, spec in agents.items() if spec.get("kind") == "mobile"},
            durations=dict(raw["durations"]),
            feedback_interval=int(raw.get("feedback_interval", 2)),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "KitchenWorld":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    @classmethod
    def default(cls) -> "KitchenWorld":
        from importlib.resources import files

        raw = files("souschef").joinpath("data/worlds/kitchen.json").read_text(encoding="utf-8")
        return cls.from_dict(json.loads(raw))

    # -- queries ---------------------------------------------------------

    def constants(self) -> set[str]:
        return set(self.locations) | set(self.placements) | set(self.grippers)

    def resolve_location(self, target: str) -> str | None:
        """A skill target may be a location or an object (stack onto it)."""
        if target in self.locations:
            return target
        if target in self.placements:
            return self.placements[target]
        return None

    def reachable(self, agent: str, location: str) -> bool:
        if location not in self.locations:
            return False
        if agent in self.mobile:
            return self.agent_locations[agent] == location
        return bool(self.locations[location].get("tabletop"))

    def conservation_breaches(self) -> list[str]:
        """Every object must sit in exactly one location or one gripper."""
        breaches = []
        held = [obj for obj in self.grippers.values() if obj is not None]
        for obj in held:
            if obj in self.placements:
                breaches.append(f"{obj} both held and placed at {self.placements[obj]}")
        if len(held) != len(set(held)):
            breaches.append(f"object held by two grippers: {held}")
        for obj, loc in self.placements.items():
            if loc not in self.locations:
                breaches.append(f"{obj} placed at unknown location {loc}")
        return breaches

    def duration_of(self, skill: str) -> int:
        return max(1, int(self.durations.get(skill, 1)))


@dataclass(frozen=True)
class SkillResult:
    outcome: str  # "done" | "failed" | "cancelled"
    reason: str = ""
    category: str = ""  # injected fault category, if any

    @property
    def module(self) -> str:
        if self.category:
            return MODULE_TAGS[self.category]
        return NATURAL_MODULES.get(self.reason.split("(")[0], "visuomotor_skill")


def apply_skill(world: KitchenWorld, agent: str, call: SkillCall) -> SkillResult:
    """Check preconditions and apply the effects of one completed skill."""
    name, args = call.skill, call.args
    if name == "go_to":
        loc = args[0]
        if loc not in world.locations:
            return SkillResult("failed", f"UnknownConstant({loc})")
        world.agent_locations[agent] = loc
        return SkillResult("done")
    if name == "pick_up_item":
        obj = args[0]
        if world.grippers[agent] is not None:
            return SkillResult("failed", "GripperFull")
        loc = world.placements.get(obj)
        if loc is None or not world.reachable(agent, loc):
            return SkillResult("failed", "ObjectNotHere")
        del world.placements[obj]
        world.grippers[agent] = obj
        return SkillResult("done")
    if name == "place_item_at":
        if world.grippers[agent] is None:
            return SkillResult("failed", "GripperEmpty")
        loc = world.resolve_location(args[0])
        if loc is None or not world.reachable(agent, loc):
            return SkillResult("failed", f"UnknownConstant({args[0]})")
        world.placements[world.grippers[agent]] = loc
        world.grippers[agent] = None
        return SkillResult("done")
    if name == "stir":
        return SkillResult("done")
    if name == "pour":
        obj, target = args
        dest = world.resolve_location(target)
        if dest is None or not world.reachable(agent, dest):
            return SkillResult("failed", f"UnknownConstant({target})")
        if world.grippers[agent] == obj:
            world.grippers[agent] = None
        else:
            loc = world.placements.get(obj)
            if loc is None or not world.reachable(agent, loc):
                return SkillResult("failed", "ObjectNotHere")
            del world.placements[obj]
        world.placements[obj] = dest
        return SkillResult("done")
    if name == "get_obj_from_user":
        # the user produces the object and hands it over
        obj = args[0]
        if world.grippers[agent] is not None:
            return SkillResult("failed", "GripperFull")
        if obj in world.placements:
            del world.placements[obj]
        for other, held in world.grippers.items():
            if held == obj:
                world.grippers[other] = None
        world.grippers[agent] = obj
        return SkillResult("done")
    if name == "move_gripper_to":
        loc = world.resolve_location(args[0])
        if loc is None or not world.reachable(agent, loc):
            return SkillResult("failed", f"UnknownConstant({args[0]})")
        return SkillResult("done")
    if name == "spread":
        obj = args[0]
        if world.grippers[agent] != obj:
            return SkillResult("failed", "GripperEmpty")
        world.grippers[agent] = None
        world.placements[obj] = world.agent_locations[agent]
        return SkillResult("done")
    return SkillResult("failed", f"UnknownConstant({name})")


_FAULTED_SKILLS = {"pick_up_item": "A", "place_item_at": "B", "get_obj_from_user": "F"}


@dataclass
class AgentExecutor:
    """One in-flight subtask per agent, one in-flight skill at a time."""

    agent_id: str
    label: str = ""
    calls: list[SkillCall] = field(default_factory=list)
    next_call: int = 0
    in_flight: SkillCall | None = None
    remaining: int = 0
    correlation_id: str = ""
    cancelled: bool = False

    @property
    def busy(self) -> bool:
        return bool(self.label)

    def reset(self) -> None:
        self.label = ""
        self.calls = []
        self.next_call = 0
        self.in_flight = None
        self.remaining = 0
        self.correlation_id = ""
        self.cancelled = False


class Simulation:
    """Owns the world, the executors, simulated time, and all the logs.

    The simulation is the single orchestrator: persona/user text goes in via
    post_user, planner ticks run via settle_planner (which routes interrupt
    actions to cancel), and step() advances simulated time one tick.
    """

    def __init__(
        self,
        session: PlannerSession,
        gateway: Gateway,
        world: KitchenWorld | None = None,
        faults: FaultConfig | None = None,
        seed: int = 0,
        run_index: int = 0,
        catalog: SkillCatalog | None = None,
    ):
        self.session = session
        self.gateway = gateway
        self.world = world if world is not None else KitchenWorld.default()
        self.faults = faults if faults is not None else FaultConfig()
        self.rng = random.Random(seed)
        self.run_index = run_index
        self.catalog = catalog if catalog is not None else default_catalog()
        self.t = 0
        self.executors = {agent: AgentExecutor(agent) for agent in (R2, R1)}
        self.messages: list[dict] = []  # every SkillMessage, in order
        self.transitions: list[dict] = []  # agent lifecycle transitions
        self.conservation_log: list[str] = []
        self._correlation_counter = 0
        self._robot_done: set[str] = set()
        self._user_applied: set[str] = set()

    # -- logging helpers ---------------------------------------------------

    def _message(self, kind: str, correlation_id: str, agent: str, **extra) -> None:
        entry = {"kind": kind, "correlation_id": correlation_id, "agent": agent, "t": self.t}
        entry.update(extra)
        self.messages.append(entry)

    def _transition(self, agent: str, src: str, dst: str, cause: str) -> None:
        self.transitions.append(
            {"agent": agent, "from": src, "to": dst, "cause": cause, "t": self.t}
        )
        self.conservation_log.extend(self.world.conservation_breaches())

    def _event(self, kind: str, agent: str, label: str, **extra) -> dict:
        entry = {"kind": kind, "agent": agent, "label": label, "t": self.t}
        entry.update(extra)
        self.session.record(entry)
        return entry

    # -- planner coupling ----------------------------------------------------

    def post_user(self, text: str, tag: str = "", meta: dict | None = None) -> None:
        self.session.post_user(text, tag=tag, meta=meta)

    def settle_planner(self, max_ticks: int = 8):
        records = self.session.settle(max_ticks)
        for record in records:
            for action in record.actions:
                if isinstance(action, Interrupt):
                    self.cancel(action.agent)
                elif isinstance(action, MarkComplete):
                    for label in action.subtasks:
                        self._user_performs(label)
        return records

    def _user_performs(self, label: str) -> None:
        """Mirror a subtask the user did themselves into the world.

        Planner-side completions that no robot executed represent real human
        work, so the program's net effects are applied without reachability or
        gripper preconditions; steps with no robot-skill program (chopping,
        simmering) change nothing an executor depends on.
        """
        key = label.split("#", 1)[0].strip().lower()
        if key in self._robot_done or key in self._user_applied:
            return
        self._user_applied.add(key)
        try:
            program = self._user_program(label)
        except (CodegenError, GatewayError, ValueError):
            return
        world = self.world
        holding: str | None = None
        for call in program.calls:
            name, args = call.skill, call.args
            if name in ("pick_up_item", "get_obj_from_user"):
                obj = args[0]
                for other, held in world.grippers.items():
                    if held == obj:
                        world.grippers[other] = None
                world.placements.pop(obj, None)
                holding = obj
            elif name == "place_item_at" and holding is not None:
                dest = world.resolve_location(args[0])
                if dest is not None:
                    world.placements[holding] = dest
                    holding = None
            elif name == "pour":
                obj, target = args
                dest = world.resolve_location(target)
                if dest is None:
                    continue
                if holding == obj:
                    holding = None
                for other, held in world.grippers.items():
                    if held == obj:
                        world.grippers[other] = None
                world.placements.pop(obj, None)
                world.placements[obj] = dest
            elif name == "spread" and holding == args[0]:
                world.placements[holding] = self._user_surface()
                holding = None
        if holding is not None:
            world.placements[holding] = self._user_surface()

    def _user_program(self, label: str):
        plain = label.split("#", 1)[0].strip()
        completed = [c.split("#", 1)[0].strip() for c in self.session.completed]
        prompt = render_codegen_prompt(plain, completed, self.catalog)
        query = f'"""\n{plain}\n\ncompleted_action_functions: {json.dumps(completed)}\n"""'
        request = CompletionRequest(
            node_name=CODEGEN_NODE,
            system="",
            instructions=prompt,
            rendered_observation=query,
        )
        return parse_skill_program(self.gateway.complete(request), self.catalog)

    def _user_surface(self) -> str:
        for name, info in self.world.locations.items():
            if info.get("tabletop"):
                return name
        return next(iter(self.world.locations))

    # -- cancellation --------------------------------------------------------

    def cancel(self, agent: str) -> bool:
        """Idempotent. Returns True when the cancel reached the executor."""
        executor = self.executors[agent]
        if not executor.busy:
            return True
        if executor.cancelled:
            return True
        if self.faults.fires("D", self.rng, self.run_index, self.t):
            self._event(
                "cancel_dropped",
                agent,
                executor.label,
                category="D",
                module=MODULE_TAGS["D"],
            )
            return False
        executor.cancelled = True
        if executor.in_flight is not None:
            self._message("cancel", executor.correlation_id, agent)
            self._message("result", executor.correlation_id, agent, outcome="cancelled")
        label = executor.label
        executor.reset()
        self._transition(agent, "Running", "Interrupted", "cancel")
        self._event("subtask_interrupted", agent, label)
        return True

    # -- codegen ---------------------------------------------------------

    def _program_for(self, agent: str, label: str):
        plain = label.split("#", 1)[0].strip()
        completed = [c.split("#", 1)[0].strip() for c in self.session.completed]
        prompt = render_codegen_prompt(plain, completed, self.catalog)
        query = f'"""\n{plain}\n\ncompleted_action_functions: {json.dumps(completed)}\n"""'
        request = CompletionRequest(
            node_name=CODEGEN_NODE,
            system="",
            instructions=prompt,
            rendered_observation=query,
        )
        response = self.gateway.complete(request)
        program = parse_skill_program(response, self.catalog)
        issues = validate_program(
            program, agent, self.catalog, extra_constants=self.world.constants()
        )
        if issues:
            raise CodegenError("; ".join(str(i) for i in issues))
        return program

    # -- one simulated tick ------------------------------------------------

    def step(self) -> list[dict]:
        """Advance simulated time by one tick; returns planner-visible events."""
        self.t += 1
        events: list[dict] = []
        for agent in (R2, R1):
            executor = self.executors[agent]
            if not executor.busy:
                popped = self.session.pop_subtask(agent)
                if popped is None:
                    continue
                from_state = "Interrupted" if self._was_interrupted(agent) else "Idle"
                self._transition(agent, from_state, "Running", "pop")
                events.extend(self._start_subtask(executor, popped))
                continue
            if executor.in_flight is None:
                self._issue_next(executor)
                continue
            executor.remaining -= 1
            duration = self.world.duration_of(executor.in_flight.skill)
            elapsed = duration - executor.remaining
            if executor.remaining <= 0:
                events.extend(self._finish_skill(executor))
            elif elapsed % self.world.feedback_interval == 0:
                self._message(
                    "feedback",
                    executor.correlation_id,
                    agent,
                    progress=round(elapsed / duration, 3),
                )
        self.conservation_log.extend(self.world.conservation_breaches())
        return events

    def _was_interrupted(self, agent: str) -> bool:
        for entry in reversed(self.transitions):
            if entry["agent"] == agent:
                return entry["to"] == "Interrupted"
        return False

    def _start_subtask(self, executor: AgentExecutor, label: str) -> list[dict]:
        agent = executor.agent_id
        events = [self._event("subtask_started", agent, label)]
        if self.faults.fires("E", self.rng, self.run_index, self.t):
            # the planner generated a program for the wrong subtask; the
            # intended one is reported failed
            self.session.fail_current(agent)
            self._transition(agent, "Running", "Idle", "failed")
            events.append(
                self._event(
                    "subtask_failed",
                    agent,
                    label,
                    category="E",
                    module=MODULE_TAGS["E"],
                    reason="InjectedFault(E)",
                )
            )
            return events
        try:
            program = self._program_for(agent, label)
        except CodegenError as exc:
            self.session.fail_current(agent)
            self._transition(agent, "Running", "Idle", "failed")
            events.append(
                self._event(
                    "subtask_failed",
                    agent,
                    label,
                    module=NATURAL_MODULES["CodegenError"],
                    reason=f"CodegenError({exc})",
                )
            )
            return events
        executor.label = label
        executor.calls = list(program.calls)
        executor.next_call = 0
        done = self._issue_next(executor)
        if done is not None:
            events.append(done)
        return events

    def _issue_next(self, executor: AgentExecutor) -> dict | None:
        """Issue the next skill Request, or finish the subtask when the
        program is exhausted (returns the completion event in that case)."""
        agent = executor.agent_id
        if executor.cancelled:
            return None
        if executor.next_call >= len(executor.calls):
            label = executor.label
            executor.reset()
            self._robot_done.add(label.split("#", 1)[0].strip().lower())
            self.session.complete_current(agent)
            self._transition(agent, "Running", "Idle", "done")
            return self._event("subtask_done", agent, label)
        call = executor.calls[executor.next_call]
        executor.next_call += 1
        self._correlation_counter += 1
        executor.correlation_id = f"{agent}-{self._correlation_counter}"
        executor.in_flight = call
        executor.remaining = self.world.duration_of(call.skill)
        self._message("request", executor.correlation_id, agent, call=call.text())
        return None

    def _finish_skill(self, executor: AgentExecutor) -> list[dict]:
        agent = executor.agent_id
        call = executor.in_flight
        executor.in_flight = None
        result = apply_skill(self.world, agent, call)
        if result.outcome == "done":
            category = _FAULTED_SKILLS.get(call.skill)
            if category and self.faults.fires(category, self.rng, self.run_index, self.t):
                result = self._inject_fault(agent, call, category)
            elif self.faults.fires("C", self.rng, self.run_index, self.t):
                result = self._inject_fault(agent, call, "C")
        self._message(
            "result",
            executor.correlation_id,
            agent,
            outcome=result.outcome,
            reason=result.reason,
        )
        if result.outcome == "done":
            done = self._issue_next(executor)
            return [done] if done is not None else []
        label = executor.label
        executor.reset()
        self.session.fail_current(agent)
        self._transition(agent, "Running", "Idle", "failed")
        return [
            self._event(
                "subtask_failed",
                agent,
                label,
                category=result.category,
                module=result.module,
                reason=result.reason,
            )
        ]

    def _inject_fault(self, agent: str, call: SkillCall, category: str) -> SkillResult:
        """Convert a successful skill into a categorized failure, undoing the
        side effect so the world stays consistent (the object is dropped back
        where the agent stands)."""
        held = self.world.grippers[agent]
        if held is not None:
            self.world.grippers[agent] = None
            self.world.placements[held] = self.world.agent_locations[agent]
        return SkillResult("failed", f"InjectedFault({category})", category)

    # -- run loops ---------------------------------------------------------

    def robots_pending(self) -> bool:
        return any(e.busy for e in self.executors.values()) or any(
            self.session.queues[agent] for agent in (R2, R1)
        )

    def run_until_quiet(self, max_steps: int = 5000) -> list[dict]:
        """Advance until no robot has queued or in-flight work, settling the
        planner after every planner-visible event."""
        events: list[dict] = []
        self.settle_planner()
        steps = 0
        while self.robots_pending():
            steps += 1
            if steps > max_steps:
                self.session.record({"kind": "budget_exceeded", "t": self.t})
                break
            new_events = self.step()
            if new_events:
                events.extend(new_events)
                self.settle_planner()
        return events
