"""Prompt templates shipped with the package and their rendering rules.

Templates are plain-text files with named {placeholders}. Rendering is total:
every declared placeholder must be supplied and is substituted everywhere it
occurs; a missing value fails before any network call. Brace groups that are
not declared placeholders (e.g. JSON examples inside a template) pass through
untouched.
"""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources

from .errors import TemplateError

TEMPLATE_PLACEHOLDERS: dict[str, tuple[str, ...]] = {
    "solver": ("question",),
    "teacher_grading": ("question", "reference_info", "student_answers"),
    "teacher_refinement": ("original_question", "error_analysis"),
    "judge": ("question", "reference_answer", "solution"),
}


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    if name not in TEMPLATE_PLACEHOLDERS:
        raise TemplateError(f"unknown template {name!r}")
    return resources.files("coevo.templates").joinpath(f"{name}.txt").read_text(encoding="utf-8")


def render_template(name: str, **values: str) -> str:
    required = TEMPLATE_PLACEHOLDERS[name] if name in TEMPLATE_PLACEHOLDERS else ()
    if name not in TEMPLATE_PLACEHOLDERS:
        raise TemplateError(f"unknown template {name!r}")
    missing = [key for key in required if key not in values or values[key] is None]
    if missing:
        raise TemplateError(f"template {name!r} missing value(s) for: {', '.join(missing)}")
    text = load_template(name)
    for key in required:
        text = text.replace("{" + key + "}", str(values[key]))
    leftovers = [key for key in required if re.search(r"\{" + key + r"\}", text)]
    if leftovers:
        raise TemplateError(f"template {name!r} left placeholders unresolved: {leftovers}")
    return text


def render_solver_prompt(question: str) -> str:
    return render_template("solver", question=question)


def render_grading_prompt(question: str, reference_info: str | None, student_answers: str) -> str:
    return render_template(
        "teacher_grading",
        question=question,
        reference_info=reference_info if reference_info else "none provided",
        student_answers=student_answers,
    )


def render_refinement_prompt(original_question: str, error_analysis: str) -> str:
    return render_template(
        "teacher_refinement", original_question=original_question, error_analysis=error_analysis
    )


def render_judge_prompt(question: str, reference_answer: str, solution: str) -> str:
    return render_template(
        "judge", question=question, reference_answer=reference_answer, solution=solution
    )
