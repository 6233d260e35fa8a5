"""Behavior tree of prompt-driven planning nodes.

Decision nodes pick a child by name; action nodes emit a JSON payload that maps
onto the high-level action vocabulary. Every node output is schema-checked at
the boundary; malformed or invalid output reruns the node up to the retry
limit. An exhausted decision node falls back to the Overall_Clarify action, an
exhausted action node to no_op, so the committed decision stream stays
schema-valid no matter how unreliable the backend is.
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

from . import capabilities
from .actions import (
    Assign,
    HighLevelAction,
    Interrupt,
    MarkComplete,
    NoOp,
    Say,
    SetRecipe,
)
from .gateway import CompletionRequest, Gateway
from .json_extract import ExtractError, extract_json
from .observation import AgentStatus, Observation, R1, R2, USER, render_observation
from .prompts import PromptSpec, load_prompt, substitute

log = logging.getLogger(__name__)

RETRY_LIMIT = 3
ROOT_NODE = "Decision"
FALLBACK_SAY_NODE = "Overall_Clarify"
NO_OP_NODE = "No_op"


class InvalidNodeOutput(ValueError):
    pass


class NodeExhausted(RuntimeError):
    def __init__(self, node_name: str, attempts: list[dict], last_error: str):
        super().__init__(
            f"{node_name} failed validation {len(attempts)} times: {last_error}"
        )
        self.node_name = node_name
        self.attempts = attempts


# Value domains for schema fields.
TEXT = "text"  # string; may be empty
SAY = "say"  # string; must be non-empty
LIST = "list"  # list of strings (a bare string is accepted as a 1-list)
STATUS = "status"  # Idle / Running / Killed / Interrupted


@dataclass(frozen=True)
class FieldSpec:
    keys: tuple[str, ...]  # accepted spellings; first is canonical
    kind: str

    @property
    def canonical(self) -> str:
        return self.keys[0]


@dataclass(frozen=True)
class BehaviorNode:
    name: str
    kind: str  # "decision" | "action"
    prompt: PromptSpec | None
    allowed: tuple[str, ...] = ()
    schema: tuple[FieldSpec, ...] = ()


_DECISION_SCHEMA = (FieldSpec(("reasoning",), TEXT), FieldSpec(("decision",), TEXT))
_SAY_SCHEMA = (FieldSpec(("reasoning",), TEXT), FieldSpec(("reply",), SAY))
_SET_RECIPE_SCHEMA = (
    FieldSpec(("reasoning",), TEXT),
    FieldSpec(("recipe name", "recipe_name"), SAY),
    FieldSpec(("reply",), SAY),
)
_MODIFY_SCHEMA = (
    FieldSpec(("reasoning",), TEXT),
    FieldSpec(("updated R2_subtask_queue", "R2_subtask_queue"), LIST),
    FieldSpec(("updated R1_subtask_queue", "R1_subtask_queue"), LIST),
    FieldSpec(("updated user_subtask_queue", "user_subtask_queue"), LIST),
    FieldSpec(("updated completed_subtask_list", "completed_subtask_list"), LIST),
    FieldSpec(("reply",), SAY),
)
_INTERRUPT_SCHEMA = (
    FieldSpec(("reasoning",), TEXT),
    FieldSpec(("R2_status",), STATUS),
    FieldSpec(("R1_status",), STATUS),
    FieldSpec(("completed_subtask_list",), LIST),
    FieldSpec(("reply",), SAY),
)


def build_tree() -> dict[str, BehaviorNode]:
    """The planning tree: root Decision -> Recipe/Execution branches -> leaves.

    Clarify_Recipe has no prompt document of its own; it reuses the
    Overall_Clarify prompt under its tree name. No_op is synthetic: no backend
    call, emits [no_op].
    """
    decision = load_prompt("decision.prompt")
    recipe = load_prompt("recipe.prompt")
    execution = load_prompt("execution.prompt")
    clarify = load_prompt("overall_clarify.prompt")

    nodes = [
        BehaviorNode(ROOT_NODE, "decision", decision, decision.allowed_decisions(), _DECISION_SCHEMA),
        BehaviorNode("Recipe", "decision", recipe, recipe.allowed_decisions(), _DECISION_SCHEMA),
        BehaviorNode("Execution", "decision", execution, execution.allowed_decisions(), _DECISION_SCHEMA),
        BehaviorNode("Set_Recipe", "action", load_prompt("set_recipe.prompt"), schema=_SET_RECIPE_SCHEMA),
        BehaviorNode("Suggest_Alternative_Recipe", "action", load_prompt("suggest_alternative_recipe.prompt"), schema=_SAY_SCHEMA),
        BehaviorNode("Clarify_Recipe", "action", clarify, schema=_SAY_SCHEMA),
        BehaviorNode("Overall_Clarify", "action", clarify, schema=_SAY_SCHEMA),
        BehaviorNode("Confirm_Subtask", "action", load_prompt("confirm_subtask.prompt"), schema=_SAY_SCHEMA),
        BehaviorNode("Modify_Subtask", "action", load_prompt("modify_subtask.prompt"), schema=_MODIFY_SCHEMA),
        BehaviorNode("Interrupt_Subtask", "action", load_prompt("interrupt_subtask.prompt"), schema=_INTERRUPT_SCHEMA),
        BehaviorNode(NO_OP_NODE, "action", None),
    ]
    tree = {n.name: n for n in nodes}
    for node in nodes:
        if node.kind == "decision":
            if not node.allowed:
                raise ValueError(f"decision node {node.name} has no children")
            missing = [c for c in node.allowed if c not in tree]
            if missing:
                raise ValueError(f"{node.name} names unknown children {missing}")
    return tree


def normalize_payload(payload: dict) -> dict:
    """Strip whitespace from keys (prompt examples contain e.g. a trailing-space
    key) without touching values."""
    return {str(k).strip(): v for k, v in payload.items()}


def validate_payload(node: BehaviorNode, payload: dict) -> dict:
    """Check the payload against the node schema; returns a canonical-key dict."""
    out: dict = {}
    for spec in node.schema:
        value = None
        found = False
        for key in spec.keys:
            if key in payload:
                value = payload[key]
                found = True
                break
        if not found:
            raise InvalidNodeOutput(f"{node.name}: missing key {spec.canonical!r}")
        if spec.kind in (TEXT, SAY):
            if not isinstance(value, str):
                raise InvalidNodeOutput(f"{node.name}: {spec.canonical} must be a string")
            if spec.kind == SAY and not value.strip():
                raise InvalidNodeOutput(f"{node.name}: {spec.canonical} must be non-empty")
        elif spec.kind == LIST:
            if isinstance(value, str):
                value = [value] if value.strip() else []
            if not isinstance(value, list) or not all(isinstance(x, str) for x in value):
                raise InvalidNodeOutput(f"{node.name}: {spec.canonical} must be a list of strings")
            value = [x for x in (s.strip() for s in value) if x]
        elif spec.kind == STATUS:
            try:
                value = AgentStatus.parse(value) if isinstance(value, str) else None
            except ValueError:
                value = None
            if value is None:
                raise InvalidNodeOutput(f"{node.name}: {spec.canonical} is not a status")
        out[spec.canonical] = value
    if node.kind == "decision":
        decision = out.get("decision", "").strip()
        if decision not in node.allowed:
            raise InvalidNodeOutput(
                f"{node.name}: decision {decision!r} not in {node.allowed}"
            )
        out["decision"] = decision
    return out


@dataclass
class NodeRun:
    """One node evaluation: validated payload plus the raw exchange trail."""

    node_name: str
    payload: dict
    attempts: list[dict] = field(default_factory=list)  # {response, error}
    exhausted: bool = False

    @property
    def retry_count(self) -> int:
        return max(0, len(self.attempts) - 1)


def run_node(
    node: BehaviorNode,
    observation: Observation,
    gateway: Gateway,
    recipes: tuple[str, ...] = (),
    retry_limit: int = RETRY_LIMIT,
) -> NodeRun:
    """Evaluate one node, validating and retrying. Raises NodeExhausted when the
    backend never produces schema-valid output within the retry budget."""
    if node.prompt is None:
        return NodeRun(node.name, {})
    request = CompletionRequest(
        node_name=node.name,
        system=node.prompt.system,
        instructions=substitute(
            node.prompt.instructions, recipes, capabilities.render_capability_table()
        ),
        rendered_observation=render_observation(observation),
    )
    run = NodeRun(node.name, {})
    last_error = ""
    for _attempt in range(retry_limit + 1):
        response = gateway.complete(request)
        try:
            payload = validate_payload(node, normalize_payload(extract_json(response)))
        except (ExtractError, InvalidNodeOutput) as exc:
            last_error = str(exc)
            run.attempts.append({"node": node.name, "response": response, "error": last_error})
            continue
        run.attempts.append({"node": node.name, "response": response, "error": None})
        run.payload = payload
        return run
    raise NodeExhausted(node.name, run.attempts, last_error)


def observation_hash(observation: Observation) -> str:
    return hashlib.sha256(render_observation(observation).encode("utf-8")).hexdigest()


@dataclass
class TickRecord:
    tick_id: int
    planner: str
    node_path: list[tuple[str, str]]  # (node name, outcome: decision or "payload")
    actions: list[HighLevelAction]
    raw_llm_io: list[dict]
    observation_hash: str
    fallback: bool = False  # a NodeExhausted fallback edge was taken


def diff_queues_to_actions(
    observation: Observation, payload: dict
) -> list[HighLevelAction]:
    """Turn Modify_Subtask whole-queue output into incremental actions.

    Insertions become assigns, completed-list insertions become mark_complete,
    removals without completion evidence are logged and dropped.
    """
    actions: list[HighLevelAction] = []
    current = {
        R2: list(observation.r2.subtask_queue),
        R1: list(observation.r1.subtask_queue),
        USER: list(observation.user_subtask_queue),
    }
    updated = {
        R2: payload["updated R2_subtask_queue"],
        R1: payload["updated R1_subtask_queue"],
        USER: payload["updated user_subtask_queue"],
    }
    completed_now = payload["updated completed_subtask_list"]
    new_completed = [
        label for label in completed_now if label not in observation.completed_subtask_list
    ]
    inserted_anywhere: set[str] = set()
    for agent in (R2, R1, USER):
        inserted = [label for label in updated[agent] if label not in current[agent]]
        inserted_anywhere.update(inserted)
        if inserted:
            actions.append(Assign(agent, tuple(dict.fromkeys(inserted))))
    for agent in (R2, R1, USER):
        removed = [label for label in current[agent] if label not in updated[agent]]
        for label in removed:
            if label not in completed_now and label not in inserted_anywhere:
                log.warning("queue removal of %r without completion evidence; dropped", label)
    if new_completed:
        actions.append(MarkComplete(tuple(dict.fromkeys(new_completed))))
    return actions


def payload_to_actions(
    node_name: str, payload: dict, observation: Observation
) -> list[HighLevelAction]:
    """Map a leaf action node's validated payload onto high-level actions."""
    if node_name == NO_OP_NODE:
        return [NoOp()]
    reply = payload.get("reply", "")
    if node_name == "Set_Recipe":
        actions: list[HighLevelAction] = [SetRecipe(payload["recipe name"])]
        if reply:
            actions.append(Say(reply))
        return actions
    if node_name in ("Suggest_Alternative_Recipe", "Clarify_Recipe", "Overall_Clarify", "Confirm_Subtask"):
        return [Say(reply)]
    if node_name == "Modify_Subtask":
        return diff_queues_to_actions(observation, payload) + [Say(reply)]
    if node_name == "Interrupt_Subtask":
        actions = []
        for agent, view in ((R2, observation.r2), (R1, observation.r1)):
            wanted = payload[f"{agent}_status"]
            if wanted is AgentStatus.INTERRUPTED and view.status is AgentStatus.RUNNING:
                actions.append(Interrupt(agent))
        # an interrupted subtask returns to the frontier unless the node also
        # put it in the completed list (e.g. the user already did it)
        new_completed = [
            label
            for label in payload["completed_subtask_list"]
            if label not in observation.completed_subtask_list
        ]
        if new_completed:
            actions.append(MarkComplete(tuple(dict.fromkeys(new_completed))))
        actions.append(Say(reply))
        return actions
    raise ValueError(f"no action mapping for node {node_name!r}")


class TreePlanner:
    """Walks the tree once per tick, committing exactly one root-to-leaf path."""

    name = "tree"

    def __init__(self, gateway: Gateway, recipes: tuple[str, ...] = (), retry_limit: int = RETRY_LIMIT):
        self.gateway = gateway
        self.recipes = tuple(recipes)
        self.retry_limit = retry_limit
        self.tree = build_tree()

    def decide(self, observation: Observation, tick_id: int) -> TickRecord:
        record = TickRecord(
            tick_id=tick_id,
            planner=self.name,
            node_path=[],
            actions=[],
            raw_llm_io=[],
            observation_hash=observation_hash(observation),
        )
        node = self.tree[ROOT_NODE]
        while True:
            try:
                run = run_node(node, observation, self.gateway, self.recipes, self.retry_limit)
            except NodeExhausted as exc:
                log.warning("node exhausted: %s", exc)
                record.fallback = True
                record.raw_llm_io.extend(exc.attempts)
                if node.kind == "decision":
                    record.node_path.append((node.name, f"!{FALLBACK_SAY_NODE}"))
                    node = self.tree[FALLBACK_SAY_NODE]
                    try:
                        run = run_node(node, observation, self.gateway, self.recipes, self.retry_limit)
                    except NodeExhausted as exc2:
                        record.raw_llm_io.extend(exc2.attempts)
                        record.node_path.append((node.name, f"!{NO_OP_NODE}"))
                        record.actions = [NoOp()]
                        return record
                    record.node_path.append((node.name, "payload"))
                    record.raw_llm_io.extend(run.attempts)
                    record.actions = payload_to_actions(node.name, run.payload, observation)
                    return record
                record.node_path.append((node.name, f"!{NO_OP_NODE}"))
                record.actions = [NoOp()]
                return record
            record.raw_llm_io.extend(run.attempts)
            if node.kind == "decision":
                decision = run.payload["decision"]
                record.node_path.append((node.name, decision))
                node = self.tree[decision]
                continue
            record.node_path.append((node.name, "payload"))
            record.actions = payload_to_actions(node.name, run.payload, observation)
            return record
