"""Loader for the planner's prompt documents.

The documents are structured text, YAML-flavored but not YAML (duplicate
``examples:`` headers, example items split across separate ``-`` entries,
unquoted JSON in blocks), so this is a purpose-built tolerant reader for
exactly that shape:

    key: scalar value
    key: |
        four-space indented block
    examples:
    - description: inline text
    - observation: |
        block
    - response: |
        block

Repeated ``examples:`` headers continue the same list. The shipped files are
loaded as-is; nothing here rewrites them.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

_TOP_KEY_RE = re.compile(r"^(?P<key>[A-Za-z_][\w]*):(?P<rest>.*)$")
_ITEM_RE = re.compile(r"^- (?P<key>description|observation|response):(?P<rest>.*)$")
_DECISION_LIST_RE = re.compile(
    r"choose (?:a task from|an action node from|from)\s*\[(?P<body>[^\]]+)\]"
)

RECIPES_PLACEHOLDER = "<recipes>"
CAPABILITIES_PLACEHOLDER = "<robot_capabilities>"


class PromptFormatError(ValueError):
    pass


@dataclass(frozen=True)
class PromptExample:
    description: str = ""
    observation: str = ""
    response: str = ""


@dataclass(frozen=True)
class PromptSpec:
    name: str
    node_type: str
    system: str
    instructions: str
    examples: tuple[PromptExample, ...]
    version: str = ""
    prompt_description: str = ""
    prompt_version: str = ""

    def allowed_decisions(self) -> tuple[str, ...]:
        """Child names listed in the instructions' choose-from bracket."""
        m = _DECISION_LIST_RE.search(self.instructions)
        if not m:
            return ()
        return tuple(re.findall(r"'([^']+)'", m.group("body")))


def _read_block(lines: list[str], start: int) -> tuple[str, int]:
    """Collect the 4-space indented block starting at `start`. Whitespace-only
    lines inside the block are kept as empty lines."""
    block: list[str] = []
    i = start
    while i < len(lines):
        line = lines[i]
        if not line.strip():
            block.append("")
            i += 1
            continue
        if line.startswith("    "):
            block.append(line[4:])
            i += 1
            continue
        break
    # trailing blank lines belong to the document, not the block
    while block and block[-1] == "":
        block.pop()
    return ("\n".join(block) + "\n" if block else ""), i


def parse_prompt_text(text: str, name: str = "") -> PromptSpec:
    lines = text.splitlines()
    scalars: dict[str, str] = {}
    blocks: dict[str, str] = {}
    examples: list[dict[str, str]] = []
    i = 0
    in_examples = False
    while i < len(lines):
        line = lines[i]
        if not line.strip():
            i += 1
            continue
        item = _ITEM_RE.match(line)
        if in_examples and item:
            key, rest = item.group("key"), item.group("rest").strip()
            if key == "description":
                examples.append({"description": rest})
                i += 1
                continue
            if not examples:
                examples.append({})
            if rest == "|" or rest == "":
                block, i = _read_block(lines, i + 1)
                examples[-1][key] = block
            else:
                examples[-1][key] = rest
                i += 1
            continue
        top = _TOP_KEY_RE.match(line)
        if top:
            key, rest = top.group("key"), top.group("rest").strip()
            if key == "examples":
                in_examples = True
                i += 1
                continue
            in_examples = False
            if rest == "|":
                block, i = _read_block(lines, i + 1)
                blocks[key] = block
            else:
                scalars[key] = rest
                i += 1
            continue
        raise PromptFormatError(f"unparseable line in prompt document: {line!r}")

    return PromptSpec(
        name=scalars.get("node_name", name),
        node_type=scalars.get("node_type", ""),
        system=blocks.get("system", ""),
        instructions=blocks.get("instructions", ""),
        examples=tuple(
            PromptExample(
                description=e.get("description", ""),
                observation=e.get("observation", ""),
                response=e.get("response", ""),
            )
            for e in examples
        ),
        version=scalars.get("version", ""),
        prompt_description=scalars.get("prompt_description", ""),
        prompt_version=scalars.get("prompt_version", ""),
    )


def prompt_file_text(filename: str) -> str:
    return resources.files("souschef.data.prompts").joinpath(filename).read_text("utf-8")


@lru_cache(maxsize=None)
def load_prompt(filename: str) -> PromptSpec:
    stem = filename.rsplit(".", 1)[0]
    return parse_prompt_text(prompt_file_text(filename), name=stem)


def substitute(instructions: str, recipes: tuple[str, ...] = (), capabilities: str = "") -> str:
    """Fill the <recipes> / <robot_capabilities> placeholders."""
    text = instructions
    if RECIPES_PLACEHOLDER in text:
        rendered = "[" + ", ".join(repr(r) for r in recipes) + "]"
        text = text.replace(RECIPES_PLACEHOLDER, rendered)
    if CAPABILITIES_PLACEHOLDER in text:
        text = text.replace(CAPABILITIES_PLACEHOLDER, capabilities)
    return text
