"""Dual verification of solution attempts and the universal-failure quality gate.

The rule-based extractor is consulted first; a judge model is asked only when
extraction finds nothing or the comparison is inconclusive (a symbolic form on
either side). When both routes produce a verdict and they differ, the judge
wins but the disagreement is flagged for audit.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Protocol, Sequence

from .answers import answers_equal, canonicalize, extract_answer
from .curriculum import Problem
from .errors import AlignmentError, InvalidArgumentError, SchemaError, TransportError
from .jsonio import extract_first_json_object

logger = logging.getLogger(__name__)

# Reasons a problem can be discarded by the quality gate.
DISCARD_REASONS = (
    "reference_mismatch",
    "ambiguous_statement",
    "non_unique_solution",
    "insufficient_information",
)

_AMBIGUITY_MARKERS = (
    ("ambiguous", "ambiguous_statement"),
    ("multiple valid interpretation", "ambiguous_statement"),
    ("multiple interpretations", "ambiguous_statement"),
    ("more than one valid answer", "non_unique_solution"),
    ("not unique", "non_unique_solution"),
    ("no unique solution", "non_unique_solution"),
    ("multiple solutions", "non_unique_solution"),
    ("insufficient information", "insufficient_information"),
    ("cannot be determined", "insufficient_information"),
)


@dataclass(frozen=True)
class Verdict:
    correct: bool
    source: str  # "rule" | "judge" | "simulated"
    analysis: str | None = None
    disagreement_flag: bool = False


class Judge(Protocol):
    """Escalation target for inconclusive rule verdicts."""

    def assess(self, problem: Problem, solution_text: str) -> tuple[bool, str]: ...


class QualityTeacher(Protocol):
    """Re-solve oracle used by the quality gate."""

    def resolve(self, problem: Problem, *, iteration: int = 0): ...


def dual_verify(problem: Problem, solution_text: str, judge: Judge | None = None) -> Verdict:
    """Rule-based check against the reference answer, with judge escalation.

    Escalates when nothing was extracted or the mismatch involves a symbolic
    form. A judge failure (or absent judge) on an inconclusive rule path
    yields a conservative incorrect verdict from the rule source.
    """
    reference = canonicalize(problem.reference_answer)
    extraction = extract_answer(solution_text)

    rule_verdict: Verdict | None = None
    conclusive = False
    if extraction.found:
        equal = answers_equal(extraction.canonical, reference)
        conclusive = equal or (
            extraction.canonical.kind != "symbolic" and reference.kind != "symbolic"
        )
        rule_verdict = Verdict(correct=equal, source="rule")
    if rule_verdict is not None and conclusive:
        return rule_verdict

    if judge is not None:
        try:
            correct, analysis = judge.assess(problem, solution_text)
        except (TransportError, SchemaError) as exc:
            logger.warning("judge unavailable for %s: %s", problem.id, exc)
        else:
            disagreement = rule_verdict is not None and rule_verdict.correct != bool(correct)
            return Verdict(
                correct=bool(correct),
                source="judge",
                analysis=analysis or None,
                disagreement_flag=disagreement,
            )

    logger.info("rule verdict inconclusive for %s and no judge available", problem.id)
    return Verdict(
        correct=False,
        source="rule",
        analysis="inconclusive rule extraction; judge unavailable (low confidence)",
    )


def parse_teacher_grading(
    raw_text: str, attempt_answers: Sequence[str] | None = None
) -> list[Verdict]:
    """Parse a grading reply into verdicts.

    The reply must contain one JSON object with `correct_answers` (list of
    answer strings) and `incorrect_answers` (list of {answer, analysis}); the
    object may be embedded in prose. With `attempt_answers` given, verdicts
    are aligned to the submitted order by answer-string matching (exact, then
    canonical equality); any unmatched attempt raises an alignment error
    naming the offending items.
    """
    obj = extract_first_json_object(raw_text)
    missing = [key for key in ("correct_answers", "incorrect_answers") if key not in obj]
    if missing:
        raise SchemaError(f"grading reply missing key(s): {', '.join(missing)}", raw_text=raw_text)
    corrects = obj["correct_answers"]
    incorrects = obj["incorrect_answers"]
    if not isinstance(corrects, list) or not isinstance(incorrects, list):
        raise SchemaError("grading keys must hold lists", raw_text=raw_text)

    graded: list[tuple[str, Verdict]] = []
    for answer in corrects:
        graded.append((str(answer), Verdict(correct=True, source="judge")))
    for item in incorrects:
        if not isinstance(item, dict) or "answer" not in item:
            raise SchemaError("incorrect_answers items need an 'answer' key", raw_text=raw_text)
        graded.append(
            (
                str(item["answer"]),
                Verdict(correct=False, source="judge", analysis=item.get("analysis")),
            )
        )

    if attempt_answers is None:
        return [verdict for _, verdict in graded]

    verdicts: list[Verdict] = []
    unmatched: list[tuple[int, str]] = []
    for idx, submitted in enumerate(attempt_answers):
        match = _match_graded(str(submitted), graded)
        if match is None:
            unmatched.append((idx, str(submitted)))
        else:
            verdicts.append(match)
    if unmatched:
        raise AlignmentError(
            f"{len(unmatched)} attempt answer(s) not present in grading reply",
            unmatched=unmatched,
            raw_text=raw_text,
        )
    return verdicts


def _match_graded(submitted: str, graded: list[tuple[str, Verdict]]) -> Verdict | None:
    for answer, verdict in graded:
        if answer == submitted:
            return verdict
    try:
        submitted_canonical = canonicalize(submitted)
    except InvalidArgumentError:
        return None
    for answer, verdict in graded:
        try:
            if answers_equal(canonicalize(answer), submitted_canonical):
                return verdict
        except InvalidArgumentError:
            continue
    return None


def mean_at_k(verdicts: Sequence[bool]) -> float:
    """Arithmetic mean of correctness indicators over k independent attempts."""
    if not verdicts:
        raise InvalidArgumentError("mean_at_k needs at least one verdict")
    return sum(1 for v in verdicts if v) / len(verdicts)


@dataclass(frozen=True)
class QualityDecision:
    keep: bool
    reason: str | None = None
    deferred: bool = False


def quality_check(problem: Problem, teacher: QualityTeacher, *, iteration: int = 0) -> QualityDecision:
    """Re-verify a universally-failed problem with the teacher.

    The teacher re-solves independently at low temperature; the problem is
    discarded when the fresh answer contradicts the stored reference or the
    teacher reports ambiguity or a non-unique solution. Teacher outages defer
    the decision (fail-open) so a transient error never quarantines a valid
    problem.
    """
    try:
        outcome = teacher.resolve(problem, iteration=iteration)
    except TransportError as exc:
        logger.warning("quality check deferred for %s: teacher unavailable (%s)", problem.id, exc)
        return QualityDecision(keep=True, reason="teacher_unavailable", deferred=True)

    text = outcome.text if hasattr(outcome, "text") else str(outcome)
    lowered = text.lower()
    for marker, reason in _AMBIGUITY_MARKERS:
        if marker in lowered:
            return QualityDecision(keep=False, reason=reason)

    extraction = extract_answer(text)
    if not extraction.found:
        return QualityDecision(keep=False, reason="reference_mismatch")
    reference = canonicalize(problem.reference_answer)
    if answers_equal(extraction.canonical, reference):
        return QualityDecision(keep=True)
    return QualityDecision(keep=False, reason="reference_mismatch")
