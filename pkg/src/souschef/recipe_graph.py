"""Nested-list recipe markup parsed into a dependency DAG with done-state tracking.

A recipe file is plain text: one optional ``recipe: <name>`` header line plus bullet
lines using any of the markers ``-``, ``*``, ``+``. Indentation depth (4 spaces per
level, tabs expanded) expresses ordering: an item one level deeper than the adjacent
run of items above it depends on every item in that run. Items on the same level can
happen in parallel. Everything else in the file is ignored, so the raw text a model
produces can be fed in directly.

All operations are value-semantic: mutating operations return a new ``RecipeDag``.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, replace

log = logging.getLogger(__name__)

INDENT_UNIT = 4
_BULLET_RE = re.compile(r"^(?P<indent>[ ]*)(?P<marker>[-*+])\s+(?P<label>\S.*)$")
_HEADER_RE = re.compile(r"^recipe:\s*(?P<name>.+?)\s*$", re.IGNORECASE)

# bullet marker cycle used when rendering, mirroring the markup the DAG prompt shows
_MARKERS = "-*+"


class RecipeError(ValueError):
    """Problem with recipe markup."""


class EmptyRecipe(RecipeError):
    """No bullet lines found in the input."""


class IndentationJump(RecipeError):
    """A bullet is nested more than one level deeper than the line above it."""


class UnknownSubtask(KeyError):
    """Subtask id not present in the DAG."""


@dataclass(frozen=True)
class Subtask:
    id: str
    label: str
    depth: int
    parents: tuple[str, ...]
    done: bool = False


class RecipeDag:
    """Immutable dependency DAG over subtasks, in document order."""

    def __init__(self, recipe_name: str, nodes: tuple[Subtask, ...]):
        self.recipe_name = recipe_name
        self.nodes = tuple(nodes)
        self._by_id = {n.id: n for n in self.nodes}
        if len(self._by_id) != len(self.nodes):
            raise RecipeError("duplicate subtask ids")

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, RecipeDag)
            and self.recipe_name == other.recipe_name
            and self.nodes == other.nodes
        )

    def __repr__(self) -> str:
        done = sum(1 for n in self.nodes if n.done)
        return f"RecipeDag({self.recipe_name!r}, {len(self.nodes)} nodes, {done} done)"

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def edges(self) -> list[tuple[str, str]]:
        return [(p, n.id) for n in self.nodes for p in n.parents]

    def get(self, subtask_id: str) -> Subtask:
        try:
            return self._by_id[subtask_id]
        except KeyError:
            raise UnknownSubtask(subtask_id) from None

    def __contains__(self, subtask_id: str) -> bool:
        return subtask_id in self._by_id

    def available_subtasks(self) -> list[str]:
        """Ids of undone nodes whose parents are all done, in document order."""
        return [
            n.id
            for n in self.nodes
            if not n.done and all(self._by_id[p].done for p in n.parents)
        ]

    def mark_done(self, subtask_id: str) -> RecipeDag:
        """Return a new DAG with the node marked done. Idempotent.

        Marking ahead of the frontier is allowed (the user may report finishing
        work the planner never scheduled) but gets logged as out-of-order.
        """
        node = self.get(subtask_id)
        if node.done:
            return self
        if any(not self._by_id[p].done for p in node.parents):
            log.warning("out-of-order completion of %r (undone parents)", subtask_id)
        nodes = tuple(replace(n, done=True) if n.id == subtask_id else n for n in self.nodes)
        return RecipeDag(self.recipe_name, nodes)

    def is_finished(self) -> bool:
        return all(n.done for n in self.nodes)

    def render(self) -> str:
        """Serialize back to nested-list markup (header line included)."""
        lines = []
        if self.recipe_name:
            lines.append(f"recipe: {self.recipe_name}")
        for n in self.nodes:
            marker = _MARKERS[n.depth % len(_MARKERS)]
            lines.append(f"{' ' * (INDENT_UNIT * n.depth)}{marker} {n.label}")
        return "\n".join(lines) + "\n"


def parse_nested_list(text: str, recipe_name: str = "") -> RecipeDag:
    """Parse nested-list markup into a :class:`RecipeDag`.

    Non-bullet lines are skipped, except a ``recipe: <name>`` header which names the
    recipe. An item's parents are the adjacent run of items one level shallower
    directly above it: the run is interrupted by any line of a different depth, which
    is what makes "pour A / pour B / (deeper) stir" give the stir step both pours as
    parents.
    """
    name = recipe_name
    nodes: list[Subtask] = []
    label_counts: dict[str, int] = {}
    runs: dict[int, list[str]] = {}
    prev_depth: int | None = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.expandtabs(INDENT_UNIT)
        header = _HEADER_RE.match(line.strip())
        if header and not nodes:
            name = header.group("name")
            continue
        m = _BULLET_RE.match(line)
        if not m:
            continue
        depth = len(m.group("indent")) // INDENT_UNIT
        label = m.group("label").strip()
        limit = 0 if prev_depth is None else prev_depth + 1
        if depth > limit:
            raise IndentationJump(
                f"line {lineno}: bullet {label!r} at depth {depth}, expected at most {limit}"
            )

        label_counts[label] = label_counts.get(label, 0) + 1
        node_id = label if label_counts[label] == 1 else f"{label}#{label_counts[label]}"

        parents = tuple(runs.get(depth - 1, ())) if depth > 0 else ()
        if prev_depth == depth:
            runs[depth].append(node_id)
        else:
            runs[depth] = [node_id]
        for deeper in [d for d in runs if d > depth]:
            del runs[deeper]

        nodes.append(Subtask(id=node_id, label=label, depth=depth, parents=parents))
        prev_depth = depth

    if not nodes:
        raise EmptyRecipe("no bullet lines in recipe text")
    return RecipeDag(name, tuple(nodes))


def load_recipe_file(path) -> RecipeDag:
    with open(path, encoding="utf-8") as fh:
        return parse_nested_list(fh.read())
