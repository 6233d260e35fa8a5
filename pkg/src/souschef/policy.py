"""Deterministic scripted backends for tests and evaluation.

CompliantBackend is a rule-based stand-in for a well-behaved LLM: it parses the
rendered observation back into structure, classifies the user's input, and
emits exactly the JSON each planning node expects. It is intentionally a
closed-loop policy, not a lookup table, so full cooking sessions run without a
network. SloppyBackend wraps any backend and corrupts responses at a fixed
rate, for the validation robustness sweeps. ReassignRefusingBackend is the
constructed unit-test failure: it treats reassignment requests as smalltalk.
"""
from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass

from .capabilities import capable_agents, validate_assignment
from .gateway import CompletionRequest
from .observation import (
    AgentStatus,
    Observation,
    R1,
    R2,
    USER,
    USER_SPEAKER,
    parse_rendered_observation,
)
from .phrases import (
    extract_proposals,
    extract_suggestions,
    labels_match,
    normalize_label,
)

CODEGEN_NODE = "Code_Generation"

_APPROVALS = {
    "ok", "okay", "yes", "yep", "sure", "sounds good", "great", "perfect",
    "go ahead", "alright", "fine", "do it", "yes please", "ok sounds good",
    "sounds great", "lets do it", "let's do it",
}
_REJECTIONS = ("no", "nope", "no thanks", "not that", "something else")
_FOOD_WORDS = ("hungry", "cook", "make", "eat", "dinner", "lunch", "meal", "food", "snack")


@dataclass(frozen=True)
class Intent:
    kind: str  # none|approve|reject|interrupt|report_done|reassign|robot_request|add_task|recipe_request|vague_food|smalltalk
    label: str = ""
    agent: str = ""
    recipe: str = ""


def _clean(text: str) -> str:
    return re.sub(r"[^\w\s']", " ", text.lower()).strip()


def classify_user_input(text: str, recipes: tuple[str, ...]) -> Intent:
    if not text.strip():
        return Intent("none")
    t = _clean(text)
    if "stop" in t.split() or "don't go" in t:
        agent = R2 if "r2" in t.split() else R1 if "r1" in t.split() else ""
        return Intent("interrupt", agent=agent)
    for prefix in ("i finished", "i have finished", "i am done with", "i'm done with"):
        if t.startswith(prefix):
            return Intent("report_done", label=t[len(prefix):].strip())
    if t.startswith("i got ") and "already" in t:
        label = t[len("i got "):].split("already")[0].strip()
        return Intent("report_done", label=label)
    for prefix in ("i will handle ", "i'll handle "):
        if t.startswith(prefix):
            label = t[len(prefix):].strip()
            label = re.sub(r"\s+myself$", "", label)
            return Intent("reassign", label=label, agent=USER)
    match = re.match(r"^can (r1|r2) (.+)$", t)
    if match:
        return Intent("robot_request", label=match.group(2).strip(), agent=match.group(1).upper())
    match = re.search(r"can you (?:also )?get me (.+)$", t)
    if match:
        return Intent("add_task", label=f"get {match.group(1).strip()}")
    squeezed = re.sub(r"\s+", " ", t)
    if squeezed in _APPROVALS or any(squeezed.startswith(w + " ") for w in ("ok", "okay", "sure", "yes")):
        return Intent("approve")
    if squeezed in _REJECTIONS or any(squeezed.startswith(w + " ") for w in ("no", "nope")):
        return Intent("reject")
    hits = [name for name in recipes if name.lower() in t]
    if hits:
        return Intent("recipe_request", recipe=max(hits, key=len))
    if any(word in t for word in _FOOD_WORDS):
        return Intent("vague_food")
    return Intent("smalltalk")


def pending_proposals(observation: Observation) -> list[tuple[str, str]]:
    """Proposals made by the planner since the previous user turn (the current
    user_input turn, already in the chat, does not close the window)."""
    chat = list(observation.chat_history)
    if (
        observation.user_input
        and chat
        and chat[-1] == (USER_SPEAKER, observation.user_input)
    ):
        chat = chat[:-1]
    proposals: list[tuple[str, str]] = []
    for speaker, text in reversed(chat):
        if speaker == USER_SPEAKER:
            break
        proposals = extract_proposals(text) + proposals
    return proposals


def last_suggestions(observation: Observation) -> list[str]:
    for speaker, text in reversed(observation.chat_history):
        if speaker != USER_SPEAKER:
            names = extract_suggestions(text)
            if names:
                return names
    return []


def _all_suggested(observation: Observation) -> list[str]:
    names: list[str] = []
    for speaker, text in observation.chat_history:
        if speaker != USER_SPEAKER:
            for name in extract_suggestions(text):
                if name not in names:
                    names.append(name)
    return names


def _busy_labels(observation: Observation) -> list[str]:
    labels = list(observation.r2.subtask_queue) + list(observation.r1.subtask_queue)
    labels += list(observation.user_subtask_queue) + list(observation.completed_subtask_list)
    for view in (observation.r2, observation.r1):
        if view.current_subtask:
            labels.append(view.current_subtask)
    return labels


def _confirm_candidates(observation: Observation) -> list[str]:
    pending = [task for _agent, task in pending_proposals(observation)]
    return [
        task
        for task in observation.available_subtasks
        if not any(labels_match(task, p) for p in pending)
    ]


def _running_agent(observation: Observation, preferred: str = "") -> str:
    views = {R2: observation.r2, R1: observation.r1}
    if preferred and views[preferred].status is AgentStatus.RUNNING:
        return preferred
    if preferred:
        return ""
    for agent in (R2, R1):
        if views[agent].status is AgentStatus.RUNNING:
            return agent
    return ""


def _current_owner(observation: Observation, label: str) -> str:
    for agent, view in ((R2, observation.r2), (R1, observation.r1)):
        if view.current_subtask and labels_match(view.current_subtask, label):
            if view.status is AgentStatus.RUNNING:
                return agent
    return ""


class CompliantBackend:
    """Ideal-planner oracle: always emits schema-valid, policy-consistent JSON."""

    def __init__(self, recipes: tuple[str, ...] = ()):
        if not recipes:
            from .planner import RecipeLibrary

            recipes = RecipeLibrary.packaged().names
        self.recipes = tuple(recipes)

    # hook for constructed-failure variants
    def _adjust_intent(self, intent: Intent) -> Intent:
        return intent

    def complete(self, request: CompletionRequest) -> str:
        if request.node_name == CODEGEN_NODE:
            return self.codegen(request.rendered_observation)
        observation = parse_rendered_observation(request.rendered_observation)
        intent = self._adjust_intent(
            classify_user_input(observation.user_input, self.recipes)
        )
        handler = {
            "Decision": self._decision,
            "Recipe": self._recipe,
            "Execution": self._execution,
            "Set_Recipe": self._set_recipe,
            "Suggest_Alternative_Recipe": self._suggest,
            "Clarify_Recipe": self._clarify,
            "Overall_Clarify": self._clarify,
            "Confirm_Subtask": self._confirm,
            "Modify_Subtask": self._modify,
            "Interrupt_Subtask": self._interrupt,
            "All_Actions": self._all_actions,
        }.get(request.node_name)
        if handler is None:
            raise KeyError(f"no policy for node {request.node_name!r}")
        return json.dumps(handler(observation, intent), indent=1)

    # -- decision nodes ----------------------------------------------------

    def _route_root(self, observation: Observation, intent: Intent) -> str:
        if not observation.recipe_name:
            return "Recipe" if observation.user_input else "Overall_Clarify"
        if not observation.user_input:
            return "Execution"
        kind = intent.kind
        if kind in ("interrupt", "report_done", "reassign", "robot_request", "add_task"):
            return "Execution"
        if kind == "approve" and pending_proposals(observation):
            return "Execution"
        if kind == "recipe_request":
            return "Recipe"
        return "Overall_Clarify"

    def _route_recipe(self, observation: Observation, intent: Intent) -> str:
        if intent.kind == "recipe_request":
            return "Set_Recipe"
        if intent.kind == "approve" and last_suggestions(observation):
            return "Set_Recipe"
        if intent.kind in ("vague_food", "reject", "add_task"):
            return "Suggest_Alternative_Recipe"
        return "Clarify_Recipe"

    def _route_execution(self, observation: Observation, intent: Intent) -> str:
        kind = intent.kind
        if kind == "interrupt" and _running_agent(observation, intent.agent):
            return "Interrupt_Subtask"
        if kind == "report_done" and _current_owner(observation, intent.label):
            return "Interrupt_Subtask"
        if kind in ("report_done", "reassign", "robot_request", "add_task", "interrupt"):
            return "Modify_Subtask"
        if kind == "approve" and pending_proposals(observation):
            return "Modify_Subtask"
        if _confirm_candidates(observation):
            return "Confirm_Subtask"
        return "No_op"

    def _decision(self, observation: Observation, intent: Intent) -> dict:
        choice = self._route_root(observation, intent)
        return {"reasoning": f"Routing the turn to the {choice} branch.", "decision": choice}

    def _recipe(self, observation: Observation, intent: Intent) -> dict:
        choice = self._route_recipe(observation, intent)
        return {"reasoning": f"The recipe request is best served by {choice}.", "decision": choice}

    def _execution(self, observation: Observation, intent: Intent) -> dict:
        choice = self._route_execution(observation, intent)
        return {"reasoning": f"Execution state calls for {choice}.", "decision": choice}

    # -- leaf nodes -----------------------------------------------------------

    def _pick_recipe(self, observation: Observation, intent: Intent) -> str:
        if intent.kind == "recipe_request":
            return intent.recipe
        suggestions = last_suggestions(observation)
        for name in suggestions:
            for known in self.recipes:
                if known.lower() == name.lower():
                    return known
        return self.recipes[0]

    def _set_recipe(self, observation: Observation, intent: Intent) -> dict:
        name = self._pick_recipe(observation, intent)
        return {
            "reasoning": f"The user settled on {name}.",
            "recipe name": name,
            "reply": f"Great, let's make {name}!",
        }

    def _suggest(self, observation: Observation, intent: Intent) -> dict:
        already = {n.lower() for n in _all_suggested(observation)}
        pool = [n for n in self.recipes if n.lower() not in already] or list(self.recipes)
        words = set(_clean(observation.user_input).split())
        keyed = [n for n in pool if words & set(n.lower().split())]
        picks = (keyed or pool)[:2]
        return {
            "reasoning": "No exact recipe match; offering close options.",
            "reply": f"How about {' or '.join(picks)}?",
        }

    def _clarify(self, observation: Observation, intent: Intent) -> dict:
        if not observation.recipe_name:
            names = ", ".join(self.recipes)
            reply = f"I did not catch that. We could make one of these: {names}. Which sounds good?"
        else:
            reply = "Noted. Tell me when you are ready for the next step."
        return {"reasoning": "Nothing actionable; keep the user informed.", "reply": reply}

    def _confirm(self, observation: Observation, intent: Intent) -> dict:
        candidates = _confirm_candidates(observation)
        r2_task = next((t for t in candidates if validate_assignment(R2, t) is None), "")
        r1_task = next(
            (t for t in candidates if t != r2_task and validate_assignment(R1, t) is None), ""
        )
        user_task = next((t for t in candidates if not capable_agents(t)), "")
        parts = []
        if r2_task:
            parts.append(f"SR2l R2 go {r2_task} for you?")
        if r1_task:
            parts.append(f"SR2l R1 go {r1_task} for you?")
        if user_task:
            parts.append(
                f"None of the robots can {user_task}. Can you do that and let me know when you are done?"
            )
        reply = " ".join(parts) or "Just tell me when you are ready for the next step."
        return {"reasoning": "Proposing the next available subtasks.", "reply": reply}

    def _modify(self, observation: Observation, intent: Intent) -> dict:
        queues = {
            R2: list(observation.r2.subtask_queue),
            R1: list(observation.r1.subtask_queue),
            USER: list(observation.user_subtask_queue),
        }
        completed = list(observation.completed_subtask_list)
        busy = _busy_labels(observation)
        parts: list[str] = []

        def enqueue(agent: str, task: str) -> bool:
            if any(labels_match(task, b) for b in busy):
                return False
            queues[agent].append(task)
            busy.append(task)
            return True

        if intent.kind == "approve":
            for agent, task in pending_proposals(observation):
                if not enqueue(agent, task):
                    continue
                if agent == USER:
                    parts.append(f"Thanks for taking {task}.")
                else:
                    parts.append(f"{agent} will {task}.")
            if not parts:
                parts.append("Ok.")
        elif intent.kind == "report_done":
            resolved = self._resolve_reported(observation, intent.label)
            if resolved:
                for queue in queues.values():
                    if resolved in queue:
                        queue.remove(resolved)
                completed.append(resolved)
                parts.append(f"Nice, {resolved} is done.")
            else:
                parts.append("I do not see that step on the list.")
        elif intent.kind == "reassign":
            resolved = self._resolve_anywhere(observation, intent.label)
            if resolved:
                for agent in (R2, R1):
                    if resolved in queues[agent]:
                        queues[agent].remove(resolved)
                if resolved not in queues[USER]:
                    queues[USER].append(resolved)
                parts.append(f"Got it, you will {resolved}.")
            else:
                parts.append("I could not find that step to reassign.")
        elif intent.kind == "robot_request":
            resolved = self._resolve_anywhere(observation, intent.label)
            if resolved and validate_assignment(intent.agent, resolved) is None:
                for queue in queues.values():
                    if resolved in queue:
                        queue.remove(resolved)
                queues[intent.agent].append(resolved)
                parts.append(f"{intent.agent} will {resolved}.")
            elif resolved:
                parts.append(f"{intent.agent} cannot {resolved}.")
            else:
                parts.append("I could not find that step.")
        elif intent.kind == "add_task":
            agents = capable_agents(intent.label)
            if agents and enqueue(agents[0], intent.label):
                parts.append(f"{agents[0]} will {intent.label}.")
            else:
                parts.append(f"Sorry, nobody is free to {intent.label} right now.")
        elif intent.kind == "interrupt":
            parts.append("Neither robot is working on anything right now.")
        else:
            parts.append("Ok.")
        return {
            "reasoning": f"Adjusting the queues for a {intent.kind} request.",
            "updated R2_subtask_queue": queues[R2],
            "updated R1_subtask_queue": queues[R1],
            "updated user_subtask_queue": queues[USER],
            "updated completed_subtask_list": completed,
            "reply": " ".join(parts),
        }

    def _interrupt(self, observation: Observation, intent: Intent) -> dict:
        if intent.kind == "report_done":
            target = _current_owner(observation, intent.label)
        else:
            target = _running_agent(observation, intent.agent)
        target = target or _running_agent(observation)
        views = {R2: observation.r2, R1: observation.r1}
        statuses = {agent: views[agent].status.render() for agent in (R2, R1)}
        completed = list(observation.completed_subtask_list)
        current = views[target].current_subtask if target else ""
        if target:
            statuses[target] = AgentStatus.INTERRUPTED.render()
            if current:
                completed.append(current)
            reply = f"Ok, {target} will stop working on {current}."
        else:
            reply = "Neither robot is running right now."
        return {
            "reasoning": "Stopping the robot the user pointed at.",
            "R2_status": statuses[R2],
            "R1_status": statuses[R1],
            "completed_subtask_list": completed,
            "reply": reply,
        }

    # -- resolution helpers ---------------------------------------------------

    def _resolve_reported(self, observation: Observation, label: str) -> str:
        pools = (
            observation.user_subtask_queue,
            observation.r2.subtask_queue,
            observation.r1.subtask_queue,
            observation.available_subtasks,
        )
        for pool in pools:
            for task in pool:
                if labels_match(task, label):
                    return task
        return ""

    def _resolve_anywhere(self, observation: Observation, label: str) -> str:
        pools = (
            observation.r2.subtask_queue,
            observation.r1.subtask_queue,
            [task for _a, task in pending_proposals(observation)],
            observation.available_subtasks,
            observation.user_subtask_queue,
        )
        for pool in pools:
            for task in pool:
                if labels_match(task, label):
                    return task
        return ""

    # -- monolithic planner ----------------------------------------------------

    def _all_actions(self, observation: Observation, intent: Intent) -> dict:
        root = self._route_root(observation, intent)
        if root == "Recipe":
            leaf = self._route_recipe(observation, intent)
            if leaf == "Set_Recipe":
                payload = self._set_recipe(observation, intent)
                return {
                    "reasoning": payload["reasoning"],
                    "recipe_name": payload["recipe name"],
                    "reply": payload["reply"],
                }
            if leaf == "Suggest_Alternative_Recipe":
                return self._suggest(observation, intent)
            return self._clarify(observation, intent)
        if root == "Overall_Clarify":
            return self._clarify(observation, intent)
        leaf = self._route_execution(observation, intent)
        if leaf == "Confirm_Subtask":
            return self._confirm(observation, intent)
        if leaf == "Modify_Subtask":
            payload = self._modify(observation, intent)
            return {
                "reasoning": payload["reasoning"],
                "R2_subtask_queue": payload["updated R2_subtask_queue"],
                "R1_subtask_queue": payload["updated R1_subtask_queue"],
                "user_subtask_queue": payload["updated user_subtask_queue"],
                "completed_subtask_list": payload["updated completed_subtask_list"],
                "reply": payload["reply"],
            }
        if leaf == "Interrupt_Subtask":
            return self._interrupt(observation, intent)
        return {"reasoning": "Nothing to do this tick."}

    # -- skill code generation -------------------------------------------------

    def codegen(self, query: str) -> str:
        lines = [l for l in query.splitlines() if l.strip() and l.strip() != '"""']
        label = lines[0].strip() if lines else ""
        try:
            return generate_skill_text(label)
        except ValueError:
            return "# no program available"


_FILLER_WORDS = {"can", "of", "jar", "bottle", "box", "bag"}


def _const(phrase: str) -> str:
    words = [w for w in normalize_label(phrase).split() if w not in _FILLER_WORDS]
    if not words:
        raise ValueError(f"no object in {phrase!r}")
    return re.sub(r"\W+", "_", "_".join(words)).strip("_").upper()


def generate_skill_text(label: str) -> str:
    """Program text for one subtask label, mirroring the prompt examples."""
    text = label.split("#", 1)[0].strip().lower()
    match = re.match(r"^get (.+)$", text)
    if match:
        obj = _const(match.group(1))
        return f"go_to(PANTRY)\npick_up_item({obj})\ngo_to(TABLE)\nplace_item_at(TABLE)"
    match = re.match(r"^put away (.+)$", text)
    if match:
        obj = _const(match.group(1))
        return f"get_obj_from_user({obj})\ngo_to(SHELF)\nplace_item_at(SHELF)"
    match = re.match(r"^(stir|mix)(?:\s+(.+))?$", text)
    if match:
        verb, rest = match.group(1), match.group(2) or ""
        receptacle = "BOWL" if verb == "mix" else "POT"
        for word, loc in (("pot", "POT"), ("bowl", "BOWL"), ("pan", "PAN")):
            if word in rest.split():
                receptacle = loc
        return f"pick_up_item(LADLE)\nplace_item_at({receptacle})\nstir()"
    match = re.match(r"^pour (.+?) (?:at|into|in|to) (.+)$", text)
    if match:
        return f"pour({_const(match.group(1))}, {_const(match.group(2))})"
    match = re.match(r"^(?:hand over|handover) (.+)$", text)
    if match:
        obj = _const(match.group(1))
        return f"pick_up_item({obj})\nmove_gripper_to(USER)\nplace_item_at(USER)"
    match = re.match(r"^stack (.+?) (?:on top of|onto|on|at) (.+)$", text)
    if match:
        obj, target = _const(match.group(1)), _const(match.group(2))
        return f"pick_up_item({obj})\nmove_gripper_to({target})\nplace_item_at({target})"
    match = re.match(r"^spread (.+?) (?:on|over|at) (.+)$", text)
    if match:
        obj, target = _const(match.group(1)), _const(match.group(2))
        return f"pick_up_item({obj})\nmove_gripper_to({target})\nspread({obj})"
    raise ValueError(f"no skill template for {label!r}")


_GARBAGE = (
    "Sure thing, happy to help with that!",
    '{"decision": "Make_Coffee"}',
    "{'reply': 42}",
    '{"reasoning": "hmm", "decision": "Recipe"',
)


class SloppyBackend:
    """Corrupts planner-node responses at rate p; codegen passes through."""

    def __init__(self, inner, p: float, seed: int = 0):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"corruption rate out of range: {p}")
        self.inner = inner
        self.p = p
        self.rng = random.Random(seed)

    def complete(self, request: CompletionRequest) -> str:
        if request.node_name != CODEGEN_NODE and self.rng.random() < self.p:
            return self.rng.choice(_GARBAGE)
        return self.inner.complete(request)


class ReassignRefusingBackend(CompliantBackend):
    """Treats reassignment requests as smalltalk, so mode-C unit tests fail."""

    def _adjust_intent(self, intent: Intent) -> Intent:
        if intent.kind == "reassign":
            return Intent("smalltalk")
        return intent
