"""Session state, action application, and the monolithic one-prompt planner.

A PlannerSession owns the cooking state for one user: the recipe DAG, per-agent
queues and statuses, the chat, and the transcript. Planners (tree or
one-prompt) are pure observation-to-actions functions; the session applies
their actions, enforces queue conservation, and decides when a tick fires (only
when the observation changed since the last committed tick).
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from . import capabilities, recipe_graph
from .actions import (
    Assign,
    HighLevelAction,
    Interrupt,
    MarkComplete,
    NoOp,
    Say,
    SetRecipe,
    action_to_dict,
)
from .behavior_tree import TickRecord, observation_hash
from .gateway import CompletionRequest, Gateway
from .json_extract import ExtractError, extract_json
from .observation import (
    ASSISTANT_SPEAKER,
    AgentStatus,
    AgentView,
    Observation,
    R1,
    R2,
    USER,
    USER_SPEAKER,
    render_observation,
)
from .prompts import load_prompt, substitute
from .recipe_graph import RecipeDag

log = logging.getLogger(__name__)

DEFAULT_SETTLE_TICKS = 8


class UnknownRecipe(KeyError):
    pass


class UnknownSubtaskLabel(KeyError):
    pass


class UnknownAgent(KeyError):
    pass


class UnparseableResponse(ValueError):
    pass


class RecipeLibrary:
    """Recipe texts by display name, loaded from a directory of .txt files."""

    def __init__(self, texts: dict[str, str]):
        self._texts = dict(texts)

    @classmethod
    def from_dir(cls, path: str | Path) -> "RecipeLibrary":
        texts: dict[str, str] = {}
        for file in sorted(Path(path).glob("*.txt")):
            text = file.read_text(encoding="utf-8")
            dag = recipe_graph.parse_nested_list(
                text, recipe_name=file.stem.replace("_", " ").title()
            )
            texts[dag.recipe_name] = text
        if not texts:
            raise UnknownRecipe(f"no recipes under {path}")
        return cls(texts)

    @classmethod
    def packaged(cls) -> "RecipeLibrary":
        from importlib.resources import files

        root = files("souschef").joinpath("data/recipes")
        texts: dict[str, str] = {}
        for file in sorted(root.iterdir(), key=lambda f: f.name):
            if file.name.endswith(".txt"):
                stem = file.name[: -len(".txt")]
                text = file.read_text(encoding="utf-8")
                dag = recipe_graph.parse_nested_list(
                    text, recipe_name=stem.replace("_", " ").title()
                )
                texts[dag.recipe_name] = text
        return cls(texts)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self._texts)

    def resolve(self, name: str) -> str:
        if name in self._texts:
            return name
        lowered = name.strip().lower()
        for known in self._texts:
            if known.lower() == lowered:
                return known
        raise UnknownRecipe(name)

    def load(self, name: str) -> RecipeDag:
        canonical = self.resolve(name)
        return recipe_graph.parse_nested_list(self._texts[canonical], recipe_name=canonical)


@dataclass
class PlannerSession:
    library: RecipeLibrary
    planner: object = None  # anything with .decide(observation, tick_id) -> TickRecord
    transcript_path: Path | None = None

    dag: RecipeDag | None = None
    queues: dict[str, list[str]] = field(
        default_factory=lambda: {R2: [], R1: [], USER: []}
    )
    current: dict[str, str] = field(default_factory=lambda: {R2: "", R1: ""})
    status: dict[str, AgentStatus] = field(
        default_factory=lambda: {R2: AgentStatus.IDLE, R1: AgentStatus.IDLE}
    )
    completed: list[str] = field(default_factory=list)
    failed: list[str] = field(default_factory=list)
    external_labels: set[str] = field(default_factory=set)
    chat: list[tuple[str, str]] = field(default_factory=list)
    transcript: list[dict] = field(default_factory=list)
    prev_observation: Observation | None = None
    pending_user_input: str = ""
    tick_counter: int = 0

    # -- observation ---------------------------------------------------------

    def available_subtasks(self) -> list[str]:
        if self.dag is None:
            return []
        busy = set(self.completed) | set(self.failed)
        for queue in self.queues.values():
            busy.update(queue)
        busy.update(label for label in self.current.values() if label)
        return [t for t in self.dag.available_subtasks() if t not in busy]

    def observation(self) -> Observation:
        return Observation(
            recipe_name=self.dag.recipe_name if self.dag else "",
            available_subtasks=tuple(self.available_subtasks()),
            r2=AgentView(tuple(self.queues[R2]), self.status[R2], self.current[R2]),
            r1=AgentView(tuple(self.queues[R1]), self.status[R1], self.current[R1]),
            user_subtask_queue=tuple(self.queues[USER]),
            completed_subtask_list=tuple(self.completed),
            chat_history=tuple(self.chat),
            user_input=self.pending_user_input,
        )

    # -- transcript ----------------------------------------------------------

    def record(self, entry: dict) -> None:
        self.transcript.append(entry)
        if self.transcript_path is not None:
            with open(self.transcript_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")

    # -- chat ----------------------------------------------------------------

    def post_user(self, text: str, tag: str = "", meta: dict | None = None) -> None:
        self.chat.append((USER_SPEAKER, text))
        self.pending_user_input = text
        entry = {"kind": "user_msg", "text": text, "tick_id": self.tick_counter}
        if tag:
            entry["tag"] = tag
        if meta:
            entry["meta"] = meta
        self.record(entry)

    def say(self, text: str) -> None:
        self.chat.append((ASSISTANT_SPEAKER, text))
        self.record({"kind": "assistant_msg", "text": text, "tick_id": self.tick_counter})

    # -- ticking -------------------------------------------------------------

    def tick(self) -> TickRecord | None:
        """Run one planner tick if the observation changed; apply its actions."""
        observation = self.observation()
        if observation == self.prev_observation:
            return None
        self.tick_counter += 1
        record = self.planner.decide(observation, self.tick_counter)
        record.actions = self._validated(record.actions, observation)
        self.prev_observation = observation
        self.pending_user_input = ""
        self.record(
            {
                "kind": "tick",
                "tick_id": record.tick_id,
                "planner": record.planner,
                "node_path": [list(step) for step in record.node_path],
                "actions": [action_to_dict(a) for a in record.actions],
                "raw_llm_io": record.raw_llm_io,
                "observation_hash": record.observation_hash,
                "fallback": record.fallback,
            }
        )
        apply_actions(self, record.actions)
        return record

    def settle(self, max_ticks: int = DEFAULT_SETTLE_TICKS) -> list[TickRecord]:
        """Tick until the observation stops changing or the budget runs out."""
        records = []
        for _ in range(max_ticks):
            record = self.tick()
            if record is None:
                break
            records.append(record)
        return records

    def _validated(
        self, actions: list[HighLevelAction], observation: Observation
    ) -> list[HighLevelAction]:
        """Drop capability-violating assignment labels before application."""
        out: list[HighLevelAction] = []
        for action in actions:
            if isinstance(action, Assign):
                kept = []
                for label in action.subtasks:
                    verdict = capabilities.validate_assignment(action.agent, label)
                    if verdict is None:
                        kept.append(label)
                    else:
                        log.warning("dropping incapable assignment %s <- %r", action.agent, label)
                        self.record(
                            {
                                "kind": "assignment_dropped",
                                "agent": action.agent,
                                "label": label,
                                "reason": "capability",
                                "tick_id": self.tick_counter,
                            }
                        )
                if kept:
                    out.append(Assign(action.agent, tuple(kept)))
            else:
                out.append(action)
        return out

    # -- state transitions driven by the agent runtime ------------------------

    def pop_subtask(self, agent: str) -> str | None:
        """Move the queue head to current and mark the agent Running."""
        if agent not in self.current:
            raise UnknownAgent(agent)
        if self.current[agent] or not self.queues[agent]:
            return None
        label = self.queues[agent].pop(0)
        self.current[agent] = label
        self.status[agent] = AgentStatus.RUNNING
        return label

    def complete_current(self, agent: str) -> None:
        label = self.current[agent]
        self.current[agent] = ""
        self.status[agent] = AgentStatus.IDLE
        if label:
            self._complete_label(label)

    def fail_current(self, agent: str) -> None:
        """A failed subtask is terminal for the run: it neither completes nor
        returns to the frontier."""
        label = self.current[agent]
        self.current[agent] = ""
        self.status[agent] = AgentStatus.IDLE
        if label and label not in self.failed:
            self.failed.append(label)

    def interrupt_ack(self, agent: str) -> None:
        self.current[agent] = ""
        self.status[agent] = AgentStatus.INTERRUPTED

    def resume_idle(self, agent: str) -> None:
        if self.status[agent] is AgentStatus.INTERRUPTED:
            self.status[agent] = AgentStatus.IDLE

    def _resolve_label(self, label: str) -> str | None:
        """Canonical DAG id for a label, or None when it is not a DAG subtask."""
        if self.dag is None:
            return None
        if label in self.dag:
            return label
        lowered = label.strip().lower()
        matches = [node.id for node in self.dag.nodes if node.id.lower() == lowered]
        return matches[0] if matches else None

    def _complete_label(self, label: str) -> None:
        resolved = self._resolve_label(label)
        if resolved is None and label not in self.external_labels:
            raise UnknownSubtaskLabel(label)
        name = resolved or label
        for queue in self.queues.values():
            if name in queue:
                queue.remove(name)
        if name not in self.completed:
            self.completed.append(name)
        if resolved is not None:
            self.dag = self.dag.mark_done(resolved)

    def completion_fraction(self) -> float:
        if self.dag is None or self.dag.node_count == 0:
            return 0.0
        done = sum(1 for node in self.dag.nodes if node.done)
        return done / self.dag.node_count


def apply_actions(session: PlannerSession, actions: list[HighLevelAction]) -> PlannerSession:
    """Apply planner actions in order. Assignments must already be validated."""
    for action in actions:
        if isinstance(action, NoOp):
            continue
        if isinstance(action, Say):
            session.say(action.message)
        elif isinstance(action, SetRecipe):
            canonical = session.library.resolve(action.name)  # raises UnknownRecipe
            if session.dag is not None:
                log.info("RecipeSwitch: %s -> %s", session.dag.recipe_name, canonical)
                session.record(
                    {
                        "kind": "recipe_switch",
                        "from": session.dag.recipe_name,
                        "to": canonical,
                        "tick_id": session.tick_counter,
                    }
                )
            session.dag = session.library.load(canonical)
            session.queues = {R2: [], R1: [], USER: []}
            session.current = {R2: "", R1: ""}
            session.status = {R2: AgentStatus.IDLE, R1: AgentStatus.IDLE}
            session.completed = []
            session.failed = []
            session.external_labels = set()
        elif isinstance(action, Assign):
            if action.agent not in session.queues:
                raise UnknownAgent(action.agent)
            for label in action.subtasks:
                resolved = session._resolve_label(label)
                name = resolved if resolved is not None else label
                settled = set(session.completed) | set(session.failed)
                settled.update(v for v in session.current.values() if v)
                if name in settled or name in session.queues[action.agent]:
                    log.info("skipping duplicate assignment of %r", name)
                    continue
                if resolved is None:
                    session.external_labels.add(name)
                # Assigning a label queued elsewhere moves it between queues.
                for queue in session.queues.values():
                    if name in queue:
                        queue.remove(name)
                session.queues[action.agent].append(name)
        elif isinstance(action, MarkComplete):
            for label in action.subtasks:
                session._complete_label(label)
        elif isinstance(action, Interrupt):
            if action.agent not in session.current:
                raise UnknownAgent(action.agent)
            session.interrupt_ack(action.agent)
        else:
            raise TypeError(f"unknown action {action!r}")
    return session


# -- one-prompt planner -------------------------------------------------------

_QUEUE_KEYS = {
    "R2_subtask_queue": R2,
    "R1_subtask_queue": R1,
    "user_subtask_queue": USER,
}


class OnePromptPlanner:
    """Single monolithic prompt, single LLM call per tick, lenient parsing.

    The response shape (which keys are present) decides the action kind; a
    response that fits none of the shapes maps to no_op with a logged
    UnparseableResponse.
    """

    name = "one-prompt"
    node_name = "All_Actions"

    def __init__(self, gateway: Gateway, recipes: tuple[str, ...] = ()):
        self.gateway = gateway
        self.recipes = tuple(recipes)
        self.prompt = load_prompt("all_actions.prompt")

    def decide(self, observation: Observation, tick_id: int) -> TickRecord:
        request = CompletionRequest(
            node_name=self.node_name,
            system=self.prompt.system,
            instructions=substitute(
                self.prompt.instructions, self.recipes, capabilities.render_capability_table()
            ),
            rendered_observation=render_observation(observation),
        )
        response = self.gateway.complete(request)
        record = TickRecord(
            tick_id=tick_id,
            planner=self.name,
            node_path=[(self.node_name, "payload")],
            actions=[],
            raw_llm_io=[{"node": self.node_name, "response": response, "error": None}],
            observation_hash=observation_hash(observation),
        )
        try:
            record.actions = plan_from_response(response, observation)
        except UnparseableResponse as exc:
            log.warning("one-prompt response unusable: %s", exc)
            record.raw_llm_io[-1]["error"] = str(exc)
            record.actions = [NoOp()]
        return record


def _lenient_list(value: object) -> list[str] | None:
    if isinstance(value, str):
        return [value] if value.strip() else []
    if isinstance(value, list) and all(isinstance(x, str) for x in value):
        return [x for x in (s.strip() for s in value) if x]
    return None


def plan_from_response(response: str, observation: Observation) -> list[HighLevelAction]:
    """Classify a monolithic-planner response by its key signature."""
    try:
        payload = {str(k).strip(): v for k, v in extract_json(response).items()}
    except ExtractError as exc:
        raise UnparseableResponse(str(exc)) from exc

    def pick(*names: str) -> object | None:
        for name in names:
            if name in payload:
                return payload[name]
        return None

    reply = pick("reply")
    say = [Say(reply)] if isinstance(reply, str) and reply.strip() else []

    if pick("R2_status") is not None or pick("R1_status") is not None:
        actions: list[HighLevelAction] = []
        for agent, view in ((R2, observation.r2), (R1, observation.r1)):
            raw = pick(f"{agent}_status")
            try:
                wanted = AgentStatus.parse(raw) if isinstance(raw, str) else None
            except ValueError:
                wanted = None
            if wanted is AgentStatus.INTERRUPTED and view.status is AgentStatus.RUNNING:
                actions.append(Interrupt(agent))
        completed = _lenient_list(pick("completed_subtask_list", "updated completed_subtask_list"))
        if completed:
            fresh = [x for x in completed if x not in observation.completed_subtask_list]
            if fresh:
                actions.append(MarkComplete(tuple(dict.fromkeys(fresh))))
        return (actions + say) or [NoOp()]

    queue_hit = any(
        pick(key, f"updated {key}") is not None
        for key in (*_QUEUE_KEYS, "completed_subtask_list")
    )
    if queue_hit:
        actions = []
        current = {
            R2: list(observation.r2.subtask_queue),
            R1: list(observation.r1.subtask_queue),
            USER: list(observation.user_subtask_queue),
        }
        for key, agent in _QUEUE_KEYS.items():
            updated = _lenient_list(pick(key, f"updated {key}"))
            if updated is None:
                continue
            inserted = [label for label in updated if label not in current[agent]]
            if inserted:
                actions.append(Assign(agent, tuple(dict.fromkeys(inserted))))
        completed = _lenient_list(pick("completed_subtask_list", "updated completed_subtask_list"))
        if completed:
            fresh = [x for x in completed if x not in observation.completed_subtask_list]
            if fresh:
                actions.append(MarkComplete(tuple(dict.fromkeys(fresh))))
        return (actions + say) or [NoOp()]

    recipe = pick("recipe_name", "recipe name")
    if isinstance(recipe, str) and recipe.strip():
        return [SetRecipe(recipe.strip())] + say

    if say:
        return say
    if "reasoning" in payload or not payload:
        return [NoOp()]
    raise UnparseableResponse(f"unrecognized key signature {sorted(payload)}")
