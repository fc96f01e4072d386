"""Problem utility scoring and the utility-weighted distillation dataset.

A refined problem's utility is an unnormalized Gaussian of the solver's
measured success rate, peaking at the target rate (default 0.5) so problems at
the frontier of capability weigh most. A clamped linear family is available
as an alternative. The weighted objective evaluator exists to sanity-check
emitted datasets under a toy policy; training itself happens elsewhere.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .curriculum import Problem
from .errors import InvalidArgumentError, TransportError
from .jsonio import write_jsonl_atomic
from .prompts import render_refinement_prompt
from .seeding import STREAM_UTILITY
from .verify import Judge, dual_verify

logger = logging.getLogger(__name__)

DEFAULT_WEIGHT_FLOOR = 0.01


@dataclass(frozen=True)
class GaussianUtility:
    mu: float = 0.5
    sigma: float = 0.2

    def __post_init__(self):
        if not self.sigma > 0:
            raise InvalidArgumentError("gaussian sigma must be positive")


@dataclass(frozen=True)
class LinearUtility:
    a: float
    b: float


UtilityConfig = GaussianUtility | LinearUtility

DEFAULT_UTILITY = GaussianUtility()


def utility(success_rate: float, config: UtilityConfig = DEFAULT_UTILITY) -> float:
    """Score a success rate: exp(-(s-mu)^2 / (2 sigma^2)) for the Gaussian
    family, a*s+b clamped to [0, 1] for the linear family."""
    rate = float(success_rate)
    if math.isnan(rate) or rate < 0.0 or rate > 1.0:
        raise InvalidArgumentError(f"success rate {success_rate!r} outside [0, 1]")
    if isinstance(config, GaussianUtility):
        deviation = rate - config.mu
        return math.exp(-(deviation * deviation) / (2.0 * config.sigma * config.sigma))
    if isinstance(config, LinearUtility):
        return min(1.0, max(0.0, config.a * rate + config.b))
    raise InvalidArgumentError(f"unknown utility config {config!r}")


@dataclass(frozen=True)
class FailureRecord:
    """One (problem, incorrect attempt) observation."""

    problem_id: str
    statement: str
    solution_text: str
    attempt_index: int


@dataclass(frozen=True)
class RefinedRecord:
    """A refined problem together with the failure it was derived from."""

    source_problem_id: str
    source_attempt_index: int
    problem: Problem


@dataclass(frozen=True)
class WeightedExample:
    source_problem_id: str
    source_statement: str
    failed_solution: str
    target_problem: str
    target_solution: str
    measured_success_rate: float
    weight: float
    stale: bool = False


def estimate_utility(
    problem: Problem,
    solver,
    k: int = 8,
    config: UtilityConfig = DEFAULT_UTILITY,
    *,
    iteration: int = 0,
    judge: Judge | None = None,
) -> tuple[float, float]:
    """Measure a problem's solve rate with k rollouts and score its utility.

    Each delivered attempt goes through the same dual-verification path used
    for curriculum statistics. Raises a transport error if every rollout
    failed to deliver (nothing measurable), leaving no weight recorded.
    """
    if k < 1:
        raise InvalidArgumentError("k must be at least 1")
    slots = solver.generate(problem, k, iteration=iteration, stream=STREAM_UTILITY)
    delivered = [slot for slot in slots if slot.text is not None]
    if not delivered:
        raise TransportError(
            f"all {k} utility rollouts failed for {problem.id}",
            attempts=[slot.error for slot in slots],
        )
    verdicts = [dual_verify(problem, slot.text, judge).correct for slot in delivered]
    rate = sum(1 for v in verdicts if v) / len(verdicts)
    weight = utility(rate, config)
    logger.debug(
        "utility rollout %s: %d/%d correct (s=%.4f, weight=%.6f)",
        problem.id,
        sum(verdicts),
        len(verdicts),
        rate,
        weight,
    )
    return rate, weight


@dataclass
class WsftBuildResult:
    examples: list[WeightedExample]
    dropped_low_weight: int
    broken_links: list[str]


def build_wsft_dataset(
    failures: Sequence[FailureRecord],
    refined: Sequence[RefinedRecord],
    solver,
    config: UtilityConfig = DEFAULT_UTILITY,
    *,
    k: int = 8,
    weight_floor: float = DEFAULT_WEIGHT_FLOOR,
    iteration: int = 0,
    stale: bool = False,
    judge: Judge | None = None,
    mapper: Callable[..., Iterable] = map,
) -> WsftBuildResult:
    """One weighted example per (failure, refined) link.

    Utility is measured once per distinct refined problem against the current
    solver. Links whose originating failure is missing are skipped with a
    per-item error; examples whose weight falls below the floor are dropped
    and counted, so emitted + dropped + broken always equals the input count.
    """
    by_key = {(f.problem_id, f.attempt_index): f for f in failures}
    linked: list[tuple[FailureRecord, RefinedRecord]] = []
    broken: list[str] = []
    for record in refined:
        failure = by_key.get((record.source_problem_id, record.source_attempt_index))
        if failure is None:
            broken.append(
                f"{record.problem.id}: no failure ({record.source_problem_id},"
                f" attempt {record.source_attempt_index})"
            )
            logger.warning("skipping refined problem with broken linkage: %s", broken[-1])
            continue
        linked.append((failure, record))

    distinct: dict[str, Problem] = {}
    for _, record in linked:
        distinct.setdefault(record.problem.id, record.problem)
    ordered_ids = sorted(distinct)
    measurements = dict(
        zip(
            ordered_ids,
            mapper(
                lambda pid: estimate_utility(
                    distinct[pid], solver, k, config, iteration=iteration, judge=judge
                ),
                ordered_ids,
            ),
        )
    )

    examples: list[WeightedExample] = []
    dropped = 0
    for failure, record in linked:
        rate, weight = measurements[record.problem.id]
        if weight < weight_floor:
            dropped += 1
            continue
        examples.append(
            WeightedExample(
                source_problem_id=failure.problem_id,
                source_statement=failure.statement,
                failed_solution=failure.solution_text,
                target_problem=record.problem.statement,
                target_solution=record.problem.reference_solution,
                measured_success_rate=rate,
                weight=weight,
                stale=stale,
            )
        )
    return WsftBuildResult(examples=examples, dropped_low_weight=dropped, broken_links=broken)


def wsft_objective(examples: Sequence[Sequence[float]]) -> float:
    """-mean(weight * log_likelihood) over (weight, log_likelihood) rows."""
    arr = np.asarray(examples, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InvalidArgumentError("examples must be rows of (weight, log_likelihood)")
    if arr.shape[0] == 0:
        raise InvalidArgumentError("examples must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError("weights and log-likelihoods must be finite")
    return float(-np.mean(arr[:, 0] * arr[:, 1]))


def emit_wsft_dataset(
    examples: Sequence[WeightedExample], path: str | Path, *, iteration: int = 0
) -> int:
    """Write weighted examples as stable JSONL; the prompt is the rendered
    refinement request for (source problem, failed solution) and weights are
    serialized with 6 decimal places."""
    records = (
        {
            "prompt": render_refinement_prompt(ex.source_statement, ex.failed_solution),
            "completion": ex.target_problem,
            "target_solution": ex.target_solution,
            "weight": round(ex.weight, 6),
            "measured_success_rate": ex.measured_success_rate,
            "stale": ex.stale,
            "iteration": iteration,
        }
        for ex in examples
    )
    return write_jsonl_atomic(path, records)
