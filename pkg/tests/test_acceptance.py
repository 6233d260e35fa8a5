"""Release acceptance gate: one test per criterion, run end to end.

Each criterion re-derives its expectation independently instead of trusting
module internals: a brute-force frontier oracle, a from-scratch bullet scan
for the attachment rule, byte-level fuzzing, seeded planner sweeps, protocol
property scans over randomized scenarios, and an analytic completion rate.
Every test prints its measured numbers so a failing run shows the margin.
"""
from __future__ import annotations

import json
import random
import re
import time

import pytest

from souschef.actions import Assign, Interrupt, NoOp, SetRecipe, action_from_dict
from souschef.behavior_tree import TickRecord, observation_hash
from souschef.eval_harness import MODES, PersonaScript, run_scenario, score_unit_tests
from souschef.gateway import Gateway
from souschef.observation import R1, R2
from souschef.planner import PlannerSession, RecipeLibrary, apply_actions
from souschef.policy import CompliantBackend, SloppyBackend
from souschef.recipe_graph import RecipeDag, Subtask, parse_nested_list
from souschef.runtime import FAULT_CATEGORIES, FaultConfig, KitchenWorld, Simulation
from souschef.service import EngineConfig, SessionStore
from souschef.skill_codegen import (
    CodegenError,
    SkillCall,
    SkillProgram,
    parse_skill_program,
    serialize_program,
)
from souschef.violations import (
    ACT_WITHOUT_PERMISSION,
    IGNORE_USER,
    LYING,
    check_violations,
)

PERSONA_RECIPES = (
    "Caesar Salad",
    "Fruit Salad",
    "Tomato Soup",
    "Turkey Sandwich",
    "Veggie Omelette",
)


class _NoOpPlanner:
    """Planner stand-in for scripted scenarios that drive actions directly."""

    name = "noop"

    def decide(self, observation, tick_id):
        return TickRecord(
            tick_id=tick_id,
            planner=self.name,
            node_path=[("NoOp", "payload")],
            actions=[NoOp()],
            raw_llm_io=[],
            observation_hash=observation_hash(observation),
        )


# ---------------------------------------------------------------------------
# criterion 1: frontier equals the brute-force all-parents-done oracle


def _random_dag(rng: random.Random, max_nodes: int = 12) -> RecipeDag:
    n = rng.randint(1, max_nodes)
    nodes = []
    for i in range(n):
        pool = [f"n{j}" for j in range(i)]
        parents = tuple(p for p in pool if rng.random() < 0.3)
        nodes.append(Subtask(id=f"n{i}", label=f"n{i}", depth=0, parents=parents))
    return RecipeDag("random", tuple(nodes))


def _oracle_available(nodes, done: set[str]) -> list[str]:
    return [n.id for n in nodes if n.id not in done and all(p in done for p in n.parents)]


def test_criterion_1_frontier_matches_brute_force_oracle():
    rng = random.Random(20260814)
    start = time.monotonic()
    mismatches = 0
    checks = 0
    for _ in range(1000):
        dag = _random_dag(rng)
        order = [n.id for n in dag.nodes]
        rng.shuffle(order)
        done: set[str] = set()
        for step in range(len(order) + 1):
            checks += 1
            if dag.available_subtasks() != _oracle_available(dag.nodes, done):
                mismatches += 1
            if step < len(order):
                dag = dag.mark_done(order[step])
                done.add(order[step])
        assert dag.is_finished()
    elapsed = time.monotonic() - start
    print(f"criterion 1: {checks} prefix checks, mismatches={mismatches}, {elapsed:.2f}s")
    assert mismatches == 0
    assert elapsed < 10.0


# ---------------------------------------------------------------------------
# criterion 2: fixture recipes, frontier unlock, and the attachment rule


_BULLET = re.compile(r"^( *)([-*+])\s+(\S.*)$")


def _scan_bullets(text: str) -> list[tuple[int, str]]:
    items = []
    for raw in text.splitlines():
        m = _BULLET.match(raw.expandtabs(4))
        if m:
            items.append((len(m.group(1)) // 4, m.group(3).strip()))
    return items


def _scan_parents(items: list[tuple[int, str]], index: int) -> list[int]:
    """Upward scan: the maximal run of immediately consecutive items one level
    shallower found directly above the item, skipping anything deeper."""
    depth = items[index][0]
    if depth == 0:
        return []
    j = index - 1
    while j >= 0 and items[j][0] > depth - 1:
        j -= 1
    run = []
    while j >= 0 and items[j][0] == depth - 1:
        run.append(j)
        j -= 1
    return list(reversed(run))


def test_criterion_2_fixture_recipes_frontier_unlock_and_attachment(library):
    caesar = library.load("Caesar Salad")
    frontier = set(caesar.available_subtasks())
    assert frontier == {"Prepare lettuce", "Get pepper", "Get ranch sauce"}
    unlocked = caesar.mark_done("Get pepper")
    gained = set(unlocked.available_subtasks()) - frontier
    assert gained == {"Pour pepper into bowl"}

    text = library._texts["Chicken Noodle Soup"]
    dag = parse_nested_list(text, recipe_name="Chicken Noodle Soup")
    items = _scan_bullets(text)
    assert dag.node_count == len(items)

    # acyclic by explicit Kahn scan
    indegree = {n.id: len(n.parents) for n in dag.nodes}
    children: dict[str, list[str]] = {n.id: [] for n in dag.nodes}
    for n in dag.nodes:
        for p in n.parents:
            children[p].append(n.id)
    ready = [nid for nid, deg in indegree.items() if deg == 0]
    visited = 0
    while ready:
        nid = ready.pop()
        visited += 1
        for child in children[nid]:
            indegree[child] -= 1
            if indegree[child] == 0:
                ready.append(child)
    assert visited == dag.node_count

    # the second stir depends on every broth/seasoning pour, per the
    # independent upward scan of the raw bullet list
    stir_positions = [i for i, (_d, label) in enumerate(items) if label == "stir pot"]
    assert len(stir_positions) == 2
    second_stir = stir_positions[1]
    want_parents = {items[j][1] for j in _scan_parents(items, second_stir)}
    assert all(w.startswith(("pour", "poor", "season")) for w in want_parents)
    stir = dag.get("stir pot#2")
    got_parents = {p.split("#", 1)[0] for p in stir.parents}
    assert got_parents == want_parents
    assert len(stir.parents) == 9
    print(
        f"criterion 2: caesar frontier+unlock exact, chicken noodle "
        f"{dag.node_count} nodes acyclic, stir pot#2 parents={len(stir.parents)}"
    )


# ---------------------------------------------------------------------------
# criterion 3: pinned skill programs, byte fuzzing, serialize round trip


GET_CAN_OF_CORN = """\
# go_to(PANTRY)  # already completed this action
pick_up_item(CORN)
go_to(TABLE)
place_item_at(TABLE)
"""

GET_SALT = """\
go_to(PANTRY)
pick_up_item(SALT)
go_to(TABLE)
place_item_at(TABLE)
"""

STIR_THE_SOUP = """\
# pick_up_item(LADLE)  # already completed this action
place_item_at(POT)
stir()
"""


def test_criterion_3_skill_parser_examples_fuzz_and_round_trip(catalog):
    assert parse_skill_program(GET_CAN_OF_CORN).calls == (
        SkillCall("pick_up_item", ("CORN",)),
        SkillCall("go_to", ("TABLE",)),
        SkillCall("place_item_at", ("TABLE",)),
    )
    assert parse_skill_program(GET_SALT).calls == (
        SkillCall("go_to", ("PANTRY",)),
        SkillCall("pick_up_item", ("SALT",)),
        SkillCall("go_to", ("TABLE",)),
        SkillCall("place_item_at", ("TABLE",)),
    )
    assert parse_skill_program(STIR_THE_SOUP).calls == (
        SkillCall("place_item_at", ("POT",)),
        SkillCall("stir", ()),
    )

    rng = random.Random(0xFADE)
    parsed = classified = 0
    for _ in range(10_000):
        blob = bytes(rng.randrange(256) for _ in range(rng.randrange(0, 160)))
        try:
            parse_skill_program(blob)
            parsed += 1
        except CodegenError:
            classified += 1
    assert parsed + classified == 10_000

    skills = sorted(catalog.arities)
    consts = sorted(catalog.constants)

    def random_call() -> SkillCall:
        skill = rng.choice(skills)
        return SkillCall(skill, tuple(rng.choice(consts) for _ in range(catalog.arities[skill])))

    identical = 0
    for _ in range(1000):
        program = SkillProgram(
            calls=tuple(random_call() for _ in range(rng.randint(1, 6))),
            skipped=tuple(random_call().text() for _ in range(rng.randint(0, 3))),
        )
        if parse_skill_program(serialize_program(program), catalog) == program:
            identical += 1
    print(
        f"criterion 3: 3 pinned programs exact, fuzz 10000 "
        f"(parsed={parsed} classified={classified}), round trip {identical}/1000"
    )
    assert identical == 1000


# ---------------------------------------------------------------------------
# criterion 4: tree planner dominates one-prompt under corrupted responses


def _sloppy_sweep_cell(planner_kind: str, p: float, library, seeds: int = 60):
    names = library.names
    passed = total = 0
    for seed in range(seeds):
        mode = MODES[seed % len(MODES)]
        backend = SloppyBackend(CompliantBackend(names), p, seed=seed)
        result = run_scenario(
            "Caesar Salad",
            PersonaScript.easy("Caesar Salad", mode),
            planner_kind,
            backend,
            seed=seed,
            library=library,
        )
        _rate, verdicts = score_unit_tests(result.transcript, names)
        passed += sum(1 for v in verdicts if v["passed"])
        total += len(verdicts)
        if planner_kind == "tree":
            # every committed decision must be schema-valid despite garbage
            # raw responses: the node is rerun until one validates
            for rec in result.transcript:
                if rec.get("kind") == "tick":
                    for raw in rec["actions"]:
                        action_from_dict(raw)
    assert total >= seeds * 0.9, f"{planner_kind} p={p}: only {total} injections realized"
    return passed / total, total


def test_criterion_4_tree_planner_dominates_one_prompt_under_corruption(library):
    rows = []
    for p in (0.1, 0.2, 0.3, 0.4, 0.5):
        tree_rate, tree_n = _sloppy_sweep_cell("tree", p, library)
        op_rate, op_n = _sloppy_sweep_cell("one-prompt", p, library)
        rows.append((p, tree_rate, tree_n, op_rate, op_n))
    for p, tree_rate, tree_n, op_rate, op_n in rows:
        strict = " (strict)" if p >= 0.3 else ""
        print(
            f"criterion 4: p={p:.1f} tree={tree_rate:.3f} ({tree_n}) "
            f"one-prompt={op_rate:.3f} ({op_n}){strict}"
        )
        assert tree_rate >= op_rate, f"p={p}: tree {tree_rate} < one-prompt {op_rate}"
        if p >= 0.3:
            assert tree_rate > op_rate, f"p={p}: dominance not strict"


# ---------------------------------------------------------------------------
# criterion 5: persona suites pass clean; labeled fixtures reproduce


def test_criterion_5_persona_suites_and_violation_fixtures(library, fixtures_dir):
    names = library.names

    def run_once(recipe: str, persona: PersonaScript, seed: int):
        return run_scenario(
            recipe, persona, "tree", CompliantBackend(names), seed=seed, library=library
        )

    failures = []
    runs = 0
    for i, recipe in enumerate(PERSONA_RECIPES):
        for rep in range(3):
            easy = PersonaScript.easy(recipe, MODES[(3 * i + rep) % len(MODES)])
            hard = PersonaScript.hard(recipe)
            for suite, persona, want in (("easy", easy, 1), ("hard", hard, 6)):
                seed = 1000 * i + rep
                first = run_once(recipe, persona, seed)
                again = run_once(recipe, persona, seed)
                runs += 1
                label = f"{suite} {recipe} rep={rep}"
                rate, verdicts = score_unit_tests(first.transcript, names)
                if not first.finished or first.budget_exceeded:
                    failures.append(f"{label}: did not finish")
                if len(first.injections) != want:
                    failures.append(f"{label}: realized {len(first.injections)}/{want}")
                if rate < 1.0:
                    failed = [v for v in verdicts if not v["passed"]]
                    failures.append(f"{label}: unit tests {rate:.2f} ({failed})")
                reports = check_violations(first.transcript)
                if reports:
                    failures.append(f"{label}: violations {reports}")
                if first.transcript_text() != again.transcript_text():
                    failures.append(f"{label}: nondeterministic transcript")
    print(f"criterion 5: {runs} persona runs (x2 for determinism), failures={len(failures)}")
    assert failures == [], "\n".join(failures)

    reproduced = 0
    for name, category in (
        ("act_without_permission", ACT_WITHOUT_PERMISSION),
        ("lying", LYING),
        ("ignore_user", IGNORE_USER),
    ):
        lines = (fixtures_dir / f"{name}.jsonl").read_text(encoding="utf-8").splitlines()
        transcript = [json.loads(line) for line in lines if line.strip()]
        reports = check_violations(transcript)
        assert [r.category for r in reports] == [category], f"{name}: {reports}"
        reproduced += 1
    print(f"criterion 5: labeled fixtures reproduced {reproduced}/3")


# ---------------------------------------------------------------------------
# criterion 6: protocol properties under random cancels and faults


_LEGAL_TRANSITIONS = {
    ("Idle", "Running"): {"pop"},
    ("Interrupted", "Running"): {"pop"},
    ("Running", "Idle"): {"done", "failed"},
    ("Running", "Interrupted"): {"cancel"},
}


def _protocol_problems(sim: Simulation) -> list[str]:
    problems = []
    state = {agent: "Idle" for agent in sim.executors}
    for tr in sim.transitions:
        if tr["cause"] not in _LEGAL_TRANSITIONS.get((tr["from"], tr["to"]), ()):
            problems.append(f"illegal transition {tr}")
        if tr["from"] != state[tr["agent"]]:
            problems.append(f"{tr['agent']}: transition chain broke at {tr}")
        state[tr["agent"]] = tr["to"]

    grouped: dict[str, list[dict]] = {}
    for message in sim.messages:
        grouped.setdefault(message["correlation_id"], []).append(message)
    for cid, batch in grouped.items():
        kinds = [m["kind"] for m in batch]
        if kinds[0] != "request":
            problems.append(f"{cid}: opened with {kinds[0]}")
        if kinds.count("result") != 1:
            problems.append(f"{cid}: {kinds.count('result')} results")
        if kinds[-1] != "result":
            problems.append(f"{cid}: traffic after the result")
        middle = kinds[1:-1]
        if any(k not in ("feedback", "cancel") for k in middle):
            problems.append(f"{cid}: unexpected kinds {middle}")
        if middle.count("cancel") > 1 or ("cancel" in middle and middle[-1] != "cancel"):
            problems.append(f"{cid}: misplaced cancel in {kinds}")
        if len({m["agent"] for m in batch}) != 1:
            problems.append(f"{cid}: multiple agents")
        ts = [m["t"] for m in batch]
        if ts != sorted(ts):
            problems.append(f"{cid}: time went backwards")
        if "cancel" in kinds and batch[-1].get("outcome") != "cancelled":
            problems.append(f"{cid}: cancel answered with {batch[-1].get('outcome')}")
        # the result (done, failed, or cancelled) must land within the
        # boundary of the single in-flight skill
        skill = batch[0]["call"].split("(", 1)[0]
        if batch[-1]["t"] - batch[0]["t"] > sim.world.duration_of(skill):
            problems.append(f"{cid}: result past the {skill} boundary")

    problems.extend(f"conservation: {b}" for b in sim.conservation_log)
    if any(rec.get("kind") == "budget_exceeded" for rec in sim.session.transcript):
        problems.append("run did not quiesce inside the step budget")
    return problems


def _random_runtime_scenario(seed: int, library) -> tuple[list[str], int, int]:
    rng = random.Random(seed)
    names = library.names
    recipe = names[rng.randrange(len(names))]
    categories = rng.sample(FAULT_CATEGORIES, k=rng.randint(0, 3))
    faults = FaultConfig(
        probabilities={c: round(rng.uniform(0.05, 0.35), 3) for c in categories}
    )
    session = PlannerSession(library, planner=_NoOpPlanner())
    apply_actions(session, [SetRecipe(recipe)])
    sim = Simulation(
        session, Gateway(CompliantBackend(names)), faults=faults, seed=seed + 5000
    )
    cancels = 0
    for _ in range(60):
        observation = session.observation()
        roll = rng.random()
        if roll < 0.45 and observation.available_subtasks:
            label = rng.choice(observation.available_subtasks)
            apply_actions(session, [Assign(rng.choice((R2, R1)), (label,))])
        elif roll < 0.6:
            agent = rng.choice((R2, R1))
            apply_actions(session, [Interrupt(agent)])
            sim.cancel(agent)
            cancels += 1
        else:
            for _ in range(rng.randint(1, 10)):
                sim.step()
        if not session.observation().available_subtasks and not sim.robots_pending():
            break
    sim.run_until_quiet()
    return _protocol_problems(sim), cancels, len(sim.messages)


def test_criterion_6_protocol_properties_over_random_scenarios(library):
    problems: list[str] = []
    bad_scenarios = 0
    cancels = messages = 0
    for seed in range(200):
        found, n_cancels, n_messages = _random_runtime_scenario(seed, library)
        cancels += n_cancels
        messages += n_messages
        if found:
            bad_scenarios += 1
            problems.extend(f"seed {seed}: {p}" for p in found)
    print(
        f"criterion 6: 200 scenarios, {messages} messages, {cancels} cancels, "
        f"problems in {bad_scenarios} scenarios"
    )
    assert problems == [], "\n".join(problems[:20])


# ---------------------------------------------------------------------------
# criterion 7: seeded determinism and service recovery


def test_criterion_7_seeded_determinism_and_service_recovery(library, tmp_path):
    names = library.names

    def sloppy_hard(seed: int):
        backend = SloppyBackend(CompliantBackend(names), 0.3, seed=seed)
        return run_scenario(
            "Tomato Soup",
            PersonaScript.hard("Tomato Soup"),
            "tree",
            backend,
            seed=seed,
            library=library,
        )

    assert sloppy_hard(7).transcript_text() == sloppy_hard(7).transcript_text()

    def faulty_nominal(seed: int):
        return run_scenario(
            "Caesar Salad",
            PersonaScript.nominal("Caesar Salad"),
            "tree",
            CompliantBackend(names),
            seed=seed,
            library=library,
            faults=FaultConfig(probabilities={"A": 0.3, "C": 0.2}),
        )

    assert faulty_nominal(11).transcript_text() == faulty_nominal(11).transcript_text()

    store = SessionStore(tmp_path)
    rng = random.Random(2026)
    for k in range(20):
        session_id = f"acc-{k:02d}"
        config = EngineConfig(
            planner=rng.choice(("tree", "one-prompt")),
            backend=rng.choice(("compliant", "sloppy")),
            sloppy_p=round(rng.uniform(0.1, 0.4), 2),
            seed=rng.randrange(10_000),
        )
        store.create(config, session_id=session_id)
        recipe = names[rng.randrange(len(names))]
        store.apply_input(
            session_id,
            {"op": "chat", "text": f"Let's make {recipe}!", "tag": "propose_recipe"},
        )
        for _ in range(rng.randint(1, 4)):
            if rng.random() < 0.6:
                store.apply_input(
                    session_id, {"op": "chat", "text": "Ok, sounds good!", "tag": "approve"}
                )
            else:
                store.apply_input(
                    session_id, {"op": "advance", "ticks": rng.randint(1, 5)}
                )

    recovered = SessionStore(tmp_path)
    assert set(recovered.engines) == set(store.engines)
    identical = 0
    for session_id, old in store.engines.items():
        new = recovered.engines[session_id]
        assert new.snapshot() == old.snapshot(), f"{session_id}: snapshot drifted"
        assert new.events == old.events, f"{session_id}: event log drifted"
        assert new.session.transcript == old.session.transcript
        identical += 1
    print(f"criterion 7: transcripts byte-identical, {identical}/20 sessions recovered")


# ---------------------------------------------------------------------------
# criterion 8: fault attribution and the analytic completion rate


_PICK_ITEMS = (
    "salt",
    "pepper",
    "corn",
    "basil",
    "oregano",
    "lettuce",
    "croutons",
    "carrots",
    "celery",
    "onions",
)


def _pick_world() -> dict:
    return {
        "locations": {"PANTRY": {"tabletop": False}, "TABLE": {"tabletop": True}},
        "objects": {item.upper(): "PANTRY" for item in _PICK_ITEMS},
        "agents": {
            R2: {"kind": "mobile", "location": "TABLE"},
            R1: {"kind": "fixed", "location": "TABLE"},
        },
        "durations": {"go_to": 3, "pick_up_item": 2, "place_item_at": 2},
        "feedback_interval": 2,
    }


def test_criterion_8_fault_attribution_matches_analytic_rate():
    text = "recipe: Pick Practice\n" + "".join(f"- get {item}\n" for item in _PICK_ITEMS)
    library = RecipeLibrary({"Pick Practice": text})
    labels = [n.id for n in library.load("Pick Practice").nodes]
    # each subtask is exactly one pick, category A fires per pick at 0.5,
    # and failed subtasks are terminal: expected completion is 0.5
    expected = 0.5

    completed = attempted = 0
    bad_tags: list[dict] = []
    for seed in range(500):
        session = PlannerSession(library, planner=_NoOpPlanner())
        apply_actions(session, [SetRecipe("Pick Practice")])
        sim = Simulation(
            session,
            Gateway(CompliantBackend(library.names)),
            world=KitchenWorld.from_dict(_pick_world()),
            faults=FaultConfig(probabilities={"A": 0.5}),
            seed=seed,
        )
        for label in labels:
            apply_actions(session, [Assign(R2, (label,))])
        sim.run_until_quiet()
        completed += len(session.completed)
        attempted += len(labels)
        assert len(session.completed) + len(session.failed) == len(labels)
        for rec in session.transcript:
            if rec.get("kind") != "subtask_failed":
                continue
            if rec.get("category") != "A" or rec.get("module") != "visuomotor_skill":
                bad_tags.append(rec)

    rate = completed / attempted
    print(
        f"criterion 8: rate={rate:.4f} expected={expected} "
        f"delta={abs(rate - expected):.4f} bad_tags={len(bad_tags)}"
    )
    assert abs(rate - expected) <= 0.03
    assert bad_tags == []
