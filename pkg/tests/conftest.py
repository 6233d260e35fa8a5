"""Shared fixtures: the packaged recipe library, the skill catalog, and a
one-call scenario runner wired to the deterministic scripted backend."""
from pathlib import Path

import pytest

from souschef.eval_harness import PersonaScript, run_scenario
from souschef.planner import RecipeLibrary
from souschef.policy import CompliantBackend
from souschef.skill_codegen import default_catalog

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def library() -> RecipeLibrary:
    return RecipeLibrary.packaged()


@pytest.fixture(scope="session")
def recipe_names(library) -> tuple[str, ...]:
    return library.names


@pytest.fixture(scope="session")
def catalog():
    return default_catalog()


@pytest.fixture
def run_compliant(library):
    """Run one scenario against the compliant scripted backend."""

    def _run(recipe, persona=None, planner_kind="tree", seed=0, **kwargs):
        persona = persona or PersonaScript.nominal(recipe)
        backend = CompliantBackend(library.names)
        return run_scenario(
            recipe, persona, planner_kind, backend, seed=seed, library=library, **kwargs
        )

    return _run


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES
