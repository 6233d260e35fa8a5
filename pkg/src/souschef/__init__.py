"""Task orchestration for a user cooking alongside two simulated robot helpers.

The package is organized around a small pipeline: recipes parsed into dependency
graphs (:mod:`souschef.recipe_graph`), a planner that turns chat into queue edits
(:mod:`souschef.planner` / :mod:`souschef.behavior_tree`), skill code generation for
the robots (:mod:`souschef.skill_codegen`), a discrete-tick robot runtime
(:mod:`souschef.runtime`), and an evaluation harness plus HTTP service on top.
"""

__version__ = "0.1.0"
