"""Persona-driven scenario runs: script realization, end-to-end cooking with
injected turns, unit-test scoring, and reporting."""
from __future__ import annotations

import json

import pytest

from souschef.eval_harness import (
    EASY_INJECTIONS,
    HARD_INJECTIONS,
    HARD_PLAN,
    MODES,
    PersonaScript,
    build_planner,
    render_score_table,
    run_scenario,
    score_unit_tests,
)
from souschef.gateway import Gateway
from souschef.observation import R1, R2, USER
from souschef.policy import CompliantBackend, ReassignRefusingBackend
from souschef.violations import check_violations


# ---------------------------------------------------------------------------
# persona scripts


def test_persona_script_constructors():
    easy = PersonaScript.easy("Caesar Salad", "C")
    assert easy.injections == ("C",)
    assert easy.max_turns == 60
    assert len(easy.injections) == EASY_INJECTIONS

    hard = PersonaScript.hard("Tomato Soup")
    assert hard.injections == HARD_PLAN
    assert hard.max_turns == 90
    assert len(hard.injections) == HARD_INJECTIONS

    nominal = PersonaScript.nominal("Caesar Salad")
    assert nominal.injections == ()


def test_persona_script_rejects_unknown_modes():
    with pytest.raises(ValueError):
        PersonaScript("Caesar Salad", ("X",))


def test_persona_script_serialization_round_trip(tmp_path):
    script = PersonaScript.hard("Tomato Soup")
    raw = script.to_dict()
    assert PersonaScript.from_dict(raw) == script

    path = tmp_path / "persona.json"
    path.write_text(json.dumps(raw))
    assert PersonaScript.from_file(path) == script


def test_build_planner_kinds(library):
    gateway = Gateway(CompliantBackend(library.names))
    assert build_planner("tree", gateway, library.names).name == "tree"
    assert build_planner("one-prompt", gateway, library.names).name == "one-prompt"
    with pytest.raises(ValueError):
        build_planner("oracle", gateway, library.names)


# ---------------------------------------------------------------------------
# nominal scenario runs


def test_nominal_run_finishes_cleanly(run_compliant):
    result = run_compliant("Caesar Salad")
    assert result.finished
    assert not result.budget_exceeded
    assert result.injections == []
    assert result.session.dag.is_finished()
    assert check_violations(result.transcript) == []
    rate, verdicts = score_unit_tests(result.transcript, ("Caesar Salad",))
    assert (rate, verdicts) == (1.0, [])
    assert result.sim.conservation_log == []


def test_nominal_run_with_the_one_prompt_planner(run_compliant):
    result = run_compliant("Tomato Soup", planner_kind="one-prompt")
    assert result.finished
    assert check_violations(result.transcript) == []


def test_transcript_text_is_deterministic_jsonl(run_compliant):
    first = run_compliant("Caesar Salad", seed=3)
    second = run_compliant("Caesar Salad", seed=3)
    text = first.transcript_text()
    assert text == second.transcript_text()
    assert text.endswith("\n")
    lines = text.strip("\n").split("\n")
    assert len(lines) == len(first.transcript)
    for line in lines:
        assert json.loads(line)


# ---------------------------------------------------------------------------
# injected scenario runs


@pytest.mark.parametrize("mode", MODES)
def test_easy_injection_passes_its_unit_test(run_compliant, recipe_names, mode):
    persona = PersonaScript.easy("Caesar Salad", mode)
    result = run_compliant("Caesar Salad", persona=persona)
    assert result.finished
    assert check_violations(result.transcript) == []
    assert [entry["mode"] for entry in result.injections] == [mode]
    rate, verdicts = score_unit_tests(result.transcript, recipe_names)
    assert rate == 1.0
    assert [v["mode"] for v in verdicts] == [mode]


def test_hard_plan_realizes_every_injection(run_compliant, recipe_names):
    persona = PersonaScript.hard("Tomato Soup")
    result = run_compliant("Tomato Soup", persona=persona)
    assert result.finished
    assert [entry["mode"] for entry in result.injections] == list(HARD_PLAN)
    assert check_violations(result.transcript) == []
    rate, verdicts = score_unit_tests(result.transcript, recipe_names)
    assert rate == 1.0
    assert len(verdicts) == HARD_INJECTIONS


def test_realized_injection_indices_point_at_their_turns(run_compliant):
    persona = PersonaScript.hard("Caesar Salad")
    result = run_compliant("Caesar Salad", persona=persona)
    for entry in result.injections:
        record = result.transcript[entry["index"]]
        assert record["kind"] == "user_msg"
        assert record["meta"]["injection"] == entry["mode"]


def test_reassign_refusal_fails_the_unit_test_without_violations(library, recipe_names):
    persona = PersonaScript.easy("Caesar Salad", "C")
    result = run_scenario(
        "Caesar Salad",
        persona,
        "tree",
        ReassignRefusingBackend(library.names),
        library=library,
    )
    rate, verdicts = score_unit_tests(result.transcript, recipe_names)
    assert rate == 0.0
    assert [v["passed"] for v in verdicts] == [False]
    # refusing a request is rude but not a violation: it neither acts without
    # permission nor claims work it did not queue
    assert check_violations(result.transcript) == []


def test_turn_budget_exhaustion_is_reported(run_compliant):
    persona = PersonaScript("Caesar Salad", (), max_turns=2)
    result = run_compliant("Caesar Salad", persona=persona)
    assert result.budget_exceeded
    assert not result.finished
    assert result.transcript[-1]["kind"] == "turn_budget_exceeded"
    assert result.transcript[-1]["turns"] == 2


def test_transcript_written_to_disk_matches_memory(run_compliant, tmp_path):
    path = tmp_path / "run.jsonl"
    result = run_compliant("Caesar Salad", transcript_path=path)
    assert path.read_text() == result.transcript_text()


# ---------------------------------------------------------------------------
# unit-test scoring on synthetic transcripts


def turn(mode: str, label: str = "", agent: str = "") -> dict:
    meta = {"injection": mode}
    if label:
        meta["label"] = label
    if agent:
        meta["agent"] = agent
    return {"kind": "user_msg", "text": "x", "tag": "propose_recipe", "meta": meta}


def tick(*actions: dict) -> dict:
    return {"kind": "tick", "actions": list(actions)}


NAMES = ("Caesar Salad", "Tomato Soup")


def test_score_recipe_mode_requires_say_then_known_recipe():
    passing = [
        turn("A"),
        tick({"kind": "say", "message": "What sounds good?"}),
        tick({"kind": "set_recipe", "name": "Tomato Soup"}),
    ]
    rate, verdicts = score_unit_tests(passing, NAMES)
    assert rate == 1.0 and verdicts[0]["passed"]

    no_say = [
        turn("B"),
        tick({"kind": "set_recipe", "name": "Tomato Soup"}),
    ]
    assert score_unit_tests(no_say, NAMES)[0] == 0.0

    unknown_recipe = [
        turn("B"),
        tick({"kind": "say", "message": "Coming up!"}),
        tick({"kind": "set_recipe", "name": "Beef Wellington"}),
    ]
    assert score_unit_tests(unknown_recipe, NAMES)[0] == 0.0

    never_set = [turn("A"), tick({"kind": "say", "message": "Hmm."})]
    assert score_unit_tests(never_set, NAMES)[0] == 0.0


def test_score_reassign_needs_a_matching_later_assign():
    base = turn("C", label="get salt", agent=USER)
    passing = [
        base,
        tick({"kind": "assign", "agent": USER, "subtasks": ["Get salt"]}),
    ]
    assert score_unit_tests(passing, NAMES)[0] == 1.0

    wrong_agent = [
        base,
        tick({"kind": "assign", "agent": R1, "subtasks": ["Get salt"]}),
    ]
    assert score_unit_tests(wrong_agent, NAMES)[0] == 0.0

    too_early = [
        tick({"kind": "assign", "agent": USER, "subtasks": ["Get salt"]}),
        base,
    ]
    assert score_unit_tests(too_early, NAMES)[0] == 0.0


def test_score_add_subtask_checks_capability():
    base = turn("D", label="get olives")
    capable = [
        base,
        tick({"kind": "assign", "agent": R2, "subtasks": ["get olives"]}),
    ]
    assert score_unit_tests(capable, NAMES)[0] == 1.0

    incapable = [
        base,
        tick({"kind": "assign", "agent": R1, "subtasks": ["get olives"]}),
    ]
    assert score_unit_tests(incapable, NAMES)[0] == 0.0


def test_score_without_injections_is_a_clean_pass():
    assert score_unit_tests([], NAMES) == (1.0, [])
    uninjected = [
        {"kind": "user_msg", "text": "hi", "tag": "smalltalk"},
        tick({"kind": "say", "message": "Hello!"}),
    ]
    assert score_unit_tests(uninjected, NAMES) == (1.0, [])


def test_render_score_table():
    _rate, verdicts = score_unit_tests(
        [
            turn("D", label="get olives"),
            tick({"kind": "assign", "agent": R2, "subtasks": ["get olives"]}),
        ],
        NAMES,
    )
    table = render_score_table(verdicts)
    lines = table.splitlines()
    assert lines[0] == "mode  turn  passed"
    assert lines[1].startswith("D") and lines[1].endswith("yes")
