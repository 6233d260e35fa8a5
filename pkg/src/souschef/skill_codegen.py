"""Code-generation prompt rendering plus the restricted skill-program parser.

Robot subtasks are executed as short straight-line programs of skill calls
(``pick_up_item(SALT)`` and friends). The grammar is deliberately tiny: import
lines and blanks are ignored, a comment that wraps a call is recorded as an
already-completed step, a call line is ``IDENT(args)`` with constant args, and
anything richer (assignments, loops, conditionals) rejects the whole program.
Rejecting is the point: partial execution of a mis-generated plan is worse than
a planner-visible error.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

SKIPPED_SUFFIX = "  # already completed this action"

_CALL_RE = re.compile(r"^(?P<name>[A-Za-z_]\w*)\s*\(\s*(?P<args>.*?)\s*\)\s*(?:#.*)?$")
_IDENT_RE = re.compile(r"^[A-Za-z_]\w*$")
_IMPORT_RE = re.compile(r"^(?:import|from)\s+\S")


class CodegenError(ValueError):
    """Base class for program parse/validation failures."""


class DisallowedConstruct(CodegenError):
    pass


class UnknownSkill(CodegenError):
    pass


class ArityMismatch(CodegenError):
    pass


class NoSkills(CodegenError):
    pass


class EmptySubtask(CodegenError):
    pass


class UnknownConstant(CodegenError):
    pass


class SkillNotAvailable(CodegenError):
    pass


@dataclass(frozen=True)
class SkillCall:
    skill: str
    args: tuple[str, ...] = ()

    def text(self) -> str:
        return f"{self.skill}({', '.join(self.args)})"


@dataclass(frozen=True)
class SkillProgram:
    calls: tuple[SkillCall, ...]
    skipped: tuple[str, ...] = ()  # canonical call texts of already-completed steps


@dataclass(frozen=True)
class SkillCatalog:
    """Skill signature table plus per-agent executable sets, from config."""

    arities: dict[str, int]
    agent_skills: dict[str, frozenset[str]]
    constants: frozenset[str]

    @classmethod
    def from_dict(cls, raw: dict) -> SkillCatalog:
        return cls(
            arities=dict(raw["skills"]),
            agent_skills={a: frozenset(s) for a, s in raw["agent_skills"].items()},
            constants=frozenset(raw.get("constants", ())),
        )


def load_catalog(path=None) -> SkillCatalog:
    if path is None:
        return default_catalog()
    with open(path, encoding="utf-8") as fh:
        return SkillCatalog.from_dict(json.load(fh))


@lru_cache(maxsize=1)
def default_catalog() -> SkillCatalog:
    raw = resources.files("souschef.data").joinpath("skills.json").read_text("utf-8")
    return SkillCatalog.from_dict(json.loads(raw))


def _normalize_quoted(value: str) -> str:
    """Quoted args become bare constants: "ranch sauce" -> RANCH_SAUCE."""
    ident = re.sub(r"\W+", "_", value.strip()).strip("_").upper()
    return ident


def _split_args(text: str) -> list[str]:
    """Split an arg list on commas, honoring quotes. Raises on dangling quotes."""
    parts: list[str] = []
    buf: list[str] = []
    quote: str | None = None
    for ch in text:
        if quote:
            buf.append(ch)
            if ch == quote:
                quote = None
        elif ch in "'\"":
            quote = ch
            buf.append(ch)
        elif ch == ",":
            parts.append("".join(buf).strip())
            buf = []
        else:
            buf.append(ch)
    if quote:
        raise DisallowedConstruct(f"unterminated quote in args: {text!r}")
    parts.append("".join(buf).strip())
    return parts


def _parse_call(line: str) -> SkillCall | None:
    """Syntactic call parse; returns None when the line is not call-shaped."""
    m = _CALL_RE.match(line.strip())
    if not m:
        return None
    argtext = m.group("args")
    args: list[str] = []
    if argtext:
        for part in _split_args(argtext):
            if not part:
                raise DisallowedConstruct(f"empty argument in {line!r}")
            if len(part) >= 2 and part[0] == part[-1] and part[0] in "'\"":
                inner = part[1:-1]
                if any(q in inner for q in "'\""):
                    raise DisallowedConstruct(f"nested quote in argument {part!r}")
                norm = _normalize_quoted(inner)
                if not norm:
                    raise DisallowedConstruct(f"blank string argument in {line!r}")
                args.append(norm)
            elif _IDENT_RE.match(part):
                args.append(part)
            else:
                raise DisallowedConstruct(f"argument {part!r} is not a constant")
    return SkillCall(m.group("name"), tuple(args))


def _check_signature(call: SkillCall, catalog: SkillCatalog) -> None:
    if call.skill not in catalog.arities:
        raise UnknownSkill(call.skill)
    want = catalog.arities[call.skill]
    if len(call.args) != want:
        raise ArityMismatch(
            f"{call.skill} takes {want} arg(s), got {len(call.args)}: {call.text()}"
        )


def parse_skill_program(text: str | bytes, catalog: SkillCatalog | None = None) -> SkillProgram:
    """Parse generated program text. Every input either parses or raises one
    classified :class:`CodegenError`."""
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")
    catalog = catalog or default_catalog()
    calls: list[SkillCall] = []
    skipped: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or _IMPORT_RE.match(line):
            continue
        if line.startswith("#"):
            body = line.lstrip("#").strip()
            try:
                call = _parse_call(body)
            except DisallowedConstruct:
                call = None  # commentary, not a wrapped call
            if call is not None and call.skill in catalog.arities:
                _check_signature(call, catalog)
                skipped.append(call.text())
            continue
        call = _parse_call(line)
        if call is None:
            raise DisallowedConstruct(f"line {lineno}: {raw.strip()!r}")
        _check_signature(call, catalog)
        calls.append(call)
    if not calls:
        raise NoSkills("program contains no skill calls")
    return SkillProgram(tuple(calls), tuple(skipped))


def serialize_program(program: SkillProgram) -> str:
    lines = [f"# {text}{SKIPPED_SUFFIX}" for text in program.skipped]
    lines += [call.text() for call in program.calls]
    return "\n".join(lines) + "\n"


def validate_program(
    program: SkillProgram,
    agent: str,
    catalog: SkillCatalog | None = None,
    extra_constants: frozenset[str] | set[str] = frozenset(),
) -> list[CodegenError]:
    """Agent-level validation: executable set, signature table, known constants.

    Returns a verdict list; empty means Ok. Unlike parsing this never raises, so
    callers can report every problem at once.
    """
    catalog = catalog or default_catalog()
    known = catalog.constants | frozenset(extra_constants)
    executable = catalog.agent_skills.get(agent)
    problems: list[CodegenError] = []
    if executable is None:
        return [SkillNotAvailable(f"no skill set configured for agent {agent!r}")]
    for call in program.calls:
        if call.skill not in catalog.arities:
            problems.append(UnknownSkill(call.skill))
            continue
        if call.skill not in executable:
            problems.append(SkillNotAvailable(f"{call.skill} not executable by {agent}"))
        want = catalog.arities[call.skill]
        if len(call.args) != want:
            problems.append(
                ArityMismatch(f"{call.text()} (want {want} args, got {len(call.args)})")
            )
        for arg in call.args:
            if arg not in known:
                problems.append(UnknownConstant(f"{arg} in {call.text()}"))
    return problems


@lru_cache(maxsize=1)
def _template_text() -> str:
    return resources.files("souschef.data.prompts").joinpath("codegen.template").read_text("utf-8")


def render_codegen_prompt(
    subtask: str,
    completed_action_functions: list[str] | tuple[str, ...] = (),
    catalog: SkillCatalog | None = None,
) -> str:
    """Append a query stanza for `subtask` after the template's example blocks.

    The template's header placeholders are filled from the catalog so a live
    model sees real importable names.
    """
    if not subtask or not subtask.strip():
        raise EmptySubtask("subtask label is empty")
    catalog = catalog or default_catalog()
    template = _template_text().rstrip("\n")
    template = template.replace("<robot_api>", ", ".join(sorted(catalog.arities)))
    template = template.replace("<env_constants>", ", ".join(sorted(catalog.constants)))
    completed = json.dumps(list(completed_action_functions))
    stanza = f'"""\n{subtask}\n\ncompleted_action_functions: {completed}\n"""\n<query_code_separator>\n'
    return f"{template}\n<example_separator>\n{stanza}"
