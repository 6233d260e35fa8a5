"""Observation model and its canonical text rendering.

The planner prompts consume a fixed-order textual serialization of the world
state; the same text is what scripted backends and the replay hash see, so the
rendering here is the wire format. ``parse_rendered_observation`` inverts it.

Status alias: the prompt documents use the word "Killed" for an interrupted
robot, so INTERRUPTED renders as "Killed" and "Killed" parses back to
INTERRUPTED. Chat entries carry no timestamps; observation equality is plain
structural equality.
"""
from __future__ import annotations

import ast
import enum
from dataclasses import dataclass, field, replace

R1 = "R1"
R2 = "R2"
USER = "User"
ROBOTS = (R2, R1)

# The prompt documents address the assistant by this name in chat transcripts.
ASSISTANT_SPEAKER = "Mosaic"
USER_SPEAKER = "User"


class AgentStatus(enum.Enum):
    IDLE = "Idle"
    RUNNING = "Running"
    INTERRUPTED = "Interrupted"

    def render(self) -> str:
        return "Killed" if self is AgentStatus.INTERRUPTED else self.value

    @classmethod
    def parse(cls, text: str) -> "AgentStatus":
        text = text.strip()
        if text == "Killed":
            return cls.INTERRUPTED
        return cls(text)


@dataclass(frozen=True)
class AgentView:
    subtask_queue: tuple[str, ...] = ()
    status: AgentStatus = AgentStatus.IDLE
    current_subtask: str = ""


@dataclass(frozen=True)
class Observation:
    recipe_name: str = ""
    available_subtasks: tuple[str, ...] = ()
    r2: AgentView = field(default_factory=AgentView)
    r1: AgentView = field(default_factory=AgentView)
    user_subtask_queue: tuple[str, ...] = ()
    completed_subtask_list: tuple[str, ...] = ()
    chat_history: tuple[tuple[str, str], ...] = ()  # (speaker, text)
    user_input: str = ""

    def view(self, agent: str) -> AgentView:
        if agent == R2:
            return self.r2
        if agent == R1:
            return self.r1
        raise KeyError(agent)

    def with_user_input(self, text: str) -> "Observation":
        return replace(
            self,
            user_input=text,
            chat_history=self.chat_history + ((USER_SPEAKER, text),),
        )


def _render_list(items) -> str:
    return "[" + ", ".join(repr(str(x)) for x in items) + "]"


def render_observation(obs: Observation) -> str:
    lines = [
        f'recipe_name: "{obs.recipe_name}"',
        f"available_subtasks: {_render_list(obs.available_subtasks)}",
        f"R2_subtask_queue: {_render_list(obs.r2.subtask_queue)}",
        f'R2_status: "{obs.r2.status.render()}"',
        f'R2_current_subtask: "{obs.r2.current_subtask}"',
        f"R1_subtask_queue: {_render_list(obs.r1.subtask_queue)}",
        f'R1_status: "{obs.r1.status.render()}"',
        f'R1_current_subtask: "{obs.r1.current_subtask}"',
        f"user_subtask_queue: {_render_list(obs.user_subtask_queue)}",
        f"completed_subtask_list: {_render_list(obs.completed_subtask_list)}",
        "chat_history:",
    ]
    lines += [f"- {speaker}: {text}" for speaker, text in obs.chat_history]
    lines.append(f'user_input: "{obs.user_input}"')
    return "\n".join(lines) + "\n"


class ObservationParseError(ValueError):
    pass


def _take_quoted(value: str) -> str:
    value = value.strip()
    if len(value) >= 2 and value[0] == '"' and value[-1] == '"':
        return value[1:-1]
    return value


def _take_list(value: str) -> tuple[str, ...]:
    try:
        items = ast.literal_eval(value.strip())
    except (ValueError, SyntaxError) as exc:
        raise ObservationParseError(f"bad list literal: {value!r}") from exc
    if not isinstance(items, (list, tuple)):
        raise ObservationParseError(f"expected a list: {value!r}")
    return tuple(str(x) for x in items)


def parse_rendered_observation(text: str) -> Observation:
    """Inverse of :func:`render_observation` for canonical text."""
    scalars: dict[str, str] = {}
    chat: list[tuple[str, str]] = []
    in_chat = False
    for line in text.splitlines():
        if line.strip() == "chat_history:":
            in_chat = True
            continue
        if in_chat and line.startswith("- "):
            speaker, sep, message = line[2:].partition(": ")
            if not sep:
                raise ObservationParseError(f"bad chat line: {line!r}")
            chat.append((speaker, message))
            continue
        in_chat = False
        head, sep, tail = line.partition(":")
        if sep:
            scalars[head.strip()] = tail.strip()

    def view(prefix: str) -> AgentView:
        return AgentView(
            subtask_queue=_take_list(scalars.get(f"{prefix}_subtask_queue", "[]")),
            status=AgentStatus.parse(_take_quoted(scalars.get(f"{prefix}_status", '"Idle"'))),
            current_subtask=_take_quoted(scalars.get(f"{prefix}_current_subtask", '""')),
        )

    return Observation(
        recipe_name=_take_quoted(scalars.get("recipe_name", '""')),
        available_subtasks=_take_list(scalars.get("available_subtasks", "[]")),
        r2=view("R2"),
        r1=view("R1"),
        user_subtask_queue=_take_list(scalars.get("user_subtask_queue", "[]")),
        completed_subtask_list=_take_list(scalars.get("completed_subtask_list", "[]")),
        chat_history=tuple(chat),
        user_input=_take_quoted(scalars.get("user_input", '""')),
    )
