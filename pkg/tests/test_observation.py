"""Observation rendering is the wire format every backend sees; these tests pin
the field order, the Killed status alias, and the render/parse inversion.
Capability checks ride along since they share the agent vocabulary."""
from hypothesis import given, settings
from hypothesis import strategies as st

from souschef.capabilities import (
    CapabilityViolation,
    capable_agents,
    render_capability_table,
    validate_assignment,
)
from souschef.observation import (
    AgentStatus,
    AgentView,
    Observation,
    R1,
    R2,
    USER,
    parse_rendered_observation,
    render_observation,
)


def sample_observation() -> Observation:
    return Observation(
        recipe_name="Caesar Salad",
        available_subtasks=("Get pepper", "Get ranch sauce"),
        r2=AgentView(("Get croutons",), AgentStatus.RUNNING, "Get lettuce"),
        r1=AgentView((), AgentStatus.INTERRUPTED, ""),
        user_subtask_queue=("Prepare lettuce",),
        completed_subtask_list=("Get bowl",),
        chat_history=(("User", "Let's make caesar salad!"), ("Mosaic", "Sounds good!")),
        user_input="What's next?",
    )


def test_render_field_order_and_aliases():
    lines = render_observation(sample_observation()).splitlines()
    keys = [line.split(":")[0] for line in lines]
    assert keys == [
        "recipe_name",
        "available_subtasks",
        "R2_subtask_queue",
        "R2_status",
        "R2_current_subtask",
        "R1_subtask_queue",
        "R1_status",
        "R1_current_subtask",
        "user_subtask_queue",
        "completed_subtask_list",
        "chat_history",
        "- User",
        "- Mosaic",
        "user_input",
    ]


def test_interrupted_renders_as_killed():
    rendered = render_observation(sample_observation())
    assert 'R1_status: "Killed"' in rendered
    assert "Interrupted" not in rendered


def test_parse_inverts_render():
    obs = sample_observation()
    assert parse_rendered_observation(render_observation(obs)) == obs


def test_status_parse_accepts_both_spellings():
    assert AgentStatus.parse("Killed") is AgentStatus.INTERRUPTED
    assert AgentStatus.parse("Interrupted") is AgentStatus.INTERRUPTED
    assert AgentStatus.parse(" Idle ") is AgentStatus.IDLE


def test_with_user_input_appends_chat():
    obs = Observation().with_user_input("hello")
    assert obs.user_input == "hello"
    assert obs.chat_history == (("User", "hello"),)


labels = st.text(
    alphabet=st.characters(whitelist_categories=("Lu", "Ll", "Nd"), whitelist_characters=" "),
    max_size=20,
).map(str.strip)


@settings(max_examples=150, deadline=None)
@given(
    st.lists(labels, max_size=4),
    st.lists(labels, max_size=4),
    st.sampled_from(list(AgentStatus)),
    st.sampled_from(list(AgentStatus)),
)
def test_round_trip_random_queues(queue_a, queue_b, status_a, status_b):
    obs = Observation(
        recipe_name="X",
        r2=AgentView(tuple(queue_a), status_a, ""),
        r1=AgentView(tuple(queue_b), status_b, ""),
    )
    assert parse_rendered_observation(render_observation(obs)) == obs


# --- capabilities ------------------------------------------------------------------

def test_mobile_robot_fetches():
    assert validate_assignment(R2, "get pepper") is None
    assert validate_assignment(R2, "put away salt") is None
    assert validate_assignment(R2, "Get ranch sauce") is None


def test_arm_manipulates():
    for label in ("stir pot", "mix salad", "pour pepper into pot",
                  "hand over the spoon", "stack lettuce on sandwich",
                  "spread honey on sandwich"):
        assert validate_assignment(R1, label) is None


def test_cross_assignments_rejected():
    assert isinstance(validate_assignment(R1, "get pepper"), CapabilityViolation)
    assert isinstance(validate_assignment(R2, "stir pot"), CapabilityViolation)


def test_verb_must_be_a_whole_word():
    # "getting" is not the verb "get"
    assert isinstance(validate_assignment(R2, "getting dressed"), CapabilityViolation)


def test_user_can_do_anything():
    assert validate_assignment(USER, "fold the laundry") is None


def test_capable_agents_order_and_user_only():
    assert capable_agents("get salt") == [R2]
    assert capable_agents("pour salt into pot") == [R1]
    assert capable_agents("chop the onions") == []


def test_capability_table_mentions_both_robots():
    table = render_capability_table()
    assert "R2 can" in table and "R1 can" in table and "user" in table.lower()
