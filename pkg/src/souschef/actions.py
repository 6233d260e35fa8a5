"""High-level planner actions. Both planners emit this same vocabulary so the
evaluator never cares which planner produced a transcript."""
from __future__ import annotations

from dataclasses import dataclass

from .observation import R1, R2, USER

_ASSIGNABLE = {R1, R2, USER}
_INTERRUPTIBLE = {R1, R2}


@dataclass(frozen=True)
class Say:
    message: str

    def __post_init__(self):
        if not self.message:
            raise ValueError("say message must be non-empty")


@dataclass(frozen=True)
class SetRecipe:
    name: str


@dataclass(frozen=True)
class Assign:
    agent: str
    subtasks: tuple[str, ...]

    def __post_init__(self):
        if self.agent not in _ASSIGNABLE:
            raise ValueError(f"cannot assign to {self.agent!r}")


@dataclass(frozen=True)
class MarkComplete:
    subtasks: tuple[str, ...]


@dataclass(frozen=True)
class Interrupt:
    agent: str

    def __post_init__(self):
        if self.agent not in _INTERRUPTIBLE:
            raise ValueError(f"cannot interrupt {self.agent!r}")


@dataclass(frozen=True)
class NoOp:
    pass


HighLevelAction = Say | SetRecipe | Assign | MarkComplete | Interrupt | NoOp


def action_to_dict(action: HighLevelAction) -> dict:
    if isinstance(action, Say):
        return {"kind": "say", "message": action.message}
    if isinstance(action, SetRecipe):
        return {"kind": "set_recipe", "name": action.name}
    if isinstance(action, Assign):
        return {"kind": "assign", "agent": action.agent, "subtasks": list(action.subtasks)}
    if isinstance(action, MarkComplete):
        return {"kind": "mark_complete", "subtasks": list(action.subtasks)}
    if isinstance(action, Interrupt):
        return {"kind": "interrupt", "agent": action.agent}
    if isinstance(action, NoOp):
        return {"kind": "no_op"}
    raise TypeError(f"not an action: {action!r}")


def action_from_dict(raw: dict) -> HighLevelAction:
    kind = raw.get("kind")
    if kind == "say":
        return Say(raw["message"])
    if kind == "set_recipe":
        return SetRecipe(raw["name"])
    if kind == "assign":
        return Assign(raw["agent"], tuple(raw["subtasks"]))
    if kind == "mark_complete":
        return MarkComplete(tuple(raw["subtasks"]))
    if kind == "interrupt":
        return Interrupt(raw["agent"])
    if kind == "no_op":
        return NoOp()
    raise ValueError(f"unknown action kind: {kind!r}")
