"""Agent capability table: which subtask verbs each agent may be assigned.

The table mirrors the wording the planner prompts use. Matching is on the
leading verb phrase, case-insensitive; "mix" counts as stirring and "handover"
as "hand over". The user can be assigned anything.
"""
from __future__ import annotations

from dataclasses import dataclass

from .observation import R1, R2, USER

CAPABILITY_PHRASES: dict[str, tuple[str, ...]] = {
    R2: ("get", "put away"),
    R1: ("stir", "mix", "hand over", "handover", "pour", "stack", "spread"),
}


@dataclass(frozen=True)
class CapabilityViolation:
    agent: str
    subtask: str

    def __str__(self) -> str:
        return f"{self.subtask!r} is beyond {self.agent}'s capabilities"


def _matches(label: str, phrase: str) -> bool:
    label = label.lower().strip()
    return label == phrase or label.startswith(phrase + " ")


def validate_assignment(agent: str, subtask_label: str) -> CapabilityViolation | None:
    """None means Ok. The user may take any subtask."""
    if agent == USER:
        return None
    phrases = CAPABILITY_PHRASES.get(agent, ())
    if any(_matches(subtask_label, p) for p in phrases):
        return None
    return CapabilityViolation(agent, subtask_label)


def capable_agents(subtask_label: str) -> list[str]:
    """Robots able to take the subtask, in R2, R1 order. Empty means user-only."""
    return [a for a in (R2, R1) if validate_assignment(a, subtask_label) is None]


def render_capability_table() -> str:
    """Text block substituted for <robot_capabilities> in prompt documents."""
    return (
        "- R2 can: 'get {target_obj}', 'put away {target_obj}'\n"
        "- R1 can: 'stir/mix', 'hand over {target_obj}', 'pour {target_obj} at {location}', "
        "'stack {target_obj} at {location}', 'spread {target_obj} on {location}'\n"
        "- The user can do anything, including subtasks no robot can do."
    )
