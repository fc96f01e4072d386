"""The co-evolutionary loop: solve/verify/pair collection, refine/weigh/emit,
curriculum update, with checkpointing and per-iteration reports.

Each iteration runs three phases against the curriculum store, which is
mutated only at phase barriers; solve, refine, and utility tasks run on a
bounded worker pool with task-scoped RNG, so emitted files are byte-identical
across worker counts and across resumed runs. Partial failures degrade counts
in the report instead of aborting; only a checkpoint-write failure aborts.
"""

from __future__ import annotations

import json
import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .agents import AgentBundle, TeacherAgent
from .curriculum import (
    SEED_DISTRIBUTION,
    CurriculumEntry,
    CurriculumStore,
    Problem,
    Zone,
)
from .distill import (
    DEFAULT_UTILITY,
    DEFAULT_WEIGHT_FLOOR,
    FailureRecord,
    RefinedRecord,
    UtilityConfig,
    build_wsft_dataset,
    emit_wsft_dataset,
)
from .errors import (
    EngineError,
    InvalidArgumentError,
    RefinementError,
    SchemaError,
    SnapshotCorruptionError,
    SnapshotError,
    TransportError,
)
from .jsonio import canonical_dumps
from .preference import (
    AttemptRecord,
    DpoConfig,
    build_pairs,
    emit_dpo_dataset,
    partition_attempts,
    reference_attempt,
)
from .prompts import render_solver_prompt
from .seeding import STREAM_PAIRS, STREAM_SEED_FILTER, STREAM_SOLVE, pid_int, rng_for
from .verify import dual_verify, quality_check

logger = logging.getLogger(__name__)

_STATE_RE = re.compile(r"^state_t(\d+)\.json$")


@dataclass(frozen=True)
class RunConfig:
    attempts_per_problem: int = 8  # k
    replay_ratio: float = 0.25
    utility: UtilityConfig = field(default_factory=lambda: DEFAULT_UTILITY)
    solver_temperature: float = 0.7
    eval_samples: int = 32
    workers: int = 32
    iterations: int = 5  # T
    seed: int = 0
    dpo_beta: float = 0.1
    max_pairs_per_problem: int = 64
    weight_floor: float = DEFAULT_WEIGHT_FLOOR
    mastered_refinement: bool = True

    def __post_init__(self):
        if self.attempts_per_problem < 1:
            raise InvalidArgumentError("attempts_per_problem must be at least 1")
        if not 0.0 <= self.replay_ratio <= 1.0:
            raise InvalidArgumentError("replay_ratio must be in [0, 1]")
        if self.workers < 1:
            raise InvalidArgumentError("workers must be at least 1")
        if self.iterations < 0:
            raise InvalidArgumentError("iterations must be non-negative")

    def dpo(self) -> DpoConfig:
        return DpoConfig(beta=self.dpo_beta, max_pairs_per_problem=self.max_pairs_per_problem)


@dataclass
class IterationReport:
    iteration: int
    problems_evaluated: int
    failure_count: int
    pairs_emitted: int
    new_problems: int
    refinements_failed: int
    quality_discards: int
    zone_histogram: dict[str, int]
    mean_success_rate: float
    wall_time: float

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "problems_evaluated": self.problems_evaluated,
            "failure_count": self.failure_count,
            "pairs_emitted": self.pairs_emitted,
            "new_problems": self.new_problems,
            "refinements_failed": self.refinements_failed,
            "quality_discards": self.quality_discards,
            "zone_histogram": self.zone_histogram,
            "mean_success_rate": self.mean_success_rate,
            "wall_time": self.wall_time,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "IterationReport":
        return cls(**{"wall_time": 0.0, **data})


# -- checkpoint layout ----------------------------------------------------------


def state_path(checkpoint_dir: str | Path, iteration: int) -> Path:
    return Path(checkpoint_dir) / f"state_t{iteration}.json"


def report_path(checkpoint_dir: str | Path, iteration: int) -> Path:
    return Path(checkpoint_dir) / f"report_t{iteration}.json"


def dpo_path(checkpoint_dir: str | Path, iteration: int) -> Path:
    return Path(checkpoint_dir) / f"dpo_t{iteration}.jsonl"


def agents_state_path(checkpoint_dir: str | Path, iteration: int) -> Path:
    return Path(checkpoint_dir) / f"agents_t{iteration}.json"


def wsft_path(checkpoint_dir: str | Path, iteration: int) -> Path:
    return Path(checkpoint_dir) / f"wsft_t{iteration}.jsonl"


def _state_files(checkpoint_dir: Path) -> list[tuple[int, Path]]:
    found = []
    for path in checkpoint_dir.glob("state_t*.json"):
        match = _STATE_RE.match(path.name)
        if match:
            found.append((int(match.group(1)), path))
    return sorted(found)


def load_latest_state(checkpoint_dir: str | Path) -> CurriculumStore:
    """Load the newest snapshot; on corruption, abort pointing at the newest
    snapshot that still loads."""
    files = _state_files(Path(checkpoint_dir))
    if not files:
        raise SnapshotCorruptionError(f"no snapshots in {checkpoint_dir}")
    newest = files[-1][1]
    try:
        return CurriculumStore.load(newest)
    except SnapshotError as exc:
        last_good = None
        for _, path in reversed(files[:-1]):
            try:
                CurriculumStore.load(path)
            except SnapshotError:
                continue
            last_good = str(path)
            break
        raise SnapshotCorruptionError(
            f"checkpoint {newest} is unreadable ({exc}); last good: {last_good}",
            last_good=last_good,
        ) from exc


class MetricsLog:
    """Append-only JSONL event stream (phase timings, error tallies)."""

    def __init__(self, path: str | Path | None):
        self._path = Path(path) if path else None

    def event(self, kind: str, **fields) -> None:
        if self._path is None:
            return
        record = {"event": kind, **fields}
        with self._path.open("a", encoding="utf-8") as fh:
            fh.write(canonical_dumps(record) + "\n")


# -- phase 1 helpers -------------------------------------------------------------


@dataclass
class ProblemRound:
    problem: Problem
    attempts: list[tuple[int, AttemptRecord]]  # (attempt index, verified record)
    undelivered: int


def collect_failures(rounds: dict[str, ProblemRound]) -> list[FailureRecord]:
    """One record per incorrect attempt, ordered by (problem id, attempt index)."""
    failures: list[FailureRecord] = []
    for pid in sorted(rounds):
        round_ = rounds[pid]
        for index, record in sorted(round_.attempts, key=lambda item: item[0]):
            if record.verdict is None:
                raise InvalidArgumentError(f"attempt {index} on {pid} lacks a verdict")
            if not record.verdict.correct:
                failures.append(
                    FailureRecord(
                        problem_id=pid,
                        statement=round_.problem.statement,
                        solution_text=record.text,
                        attempt_index=index,
                    )
                )
    return failures


# -- the loop ---------------------------------------------------------------------


def run_iteration(
    store: CurriculumStore,
    config: RunConfig,
    agents: AgentBundle,
    checkpoint_dir: str | Path,
    metrics: MetricsLog | None = None,
) -> IterationReport:
    """Execute one full iteration at the store's current index and checkpoint."""
    checkpoint_dir = Path(checkpoint_dir)
    checkpoint_dir.mkdir(parents=True, exist_ok=True)
    metrics = metrics or MetricsLog(None)
    t = store.iteration
    started = time.monotonic()
    k = config.attempts_per_problem

    batch = store.sample_training_batch(replay_ratio=config.replay_ratio)
    metrics.event("phase_start", iteration=t, phase="solve", batch=len(batch))

    def solve_one(entry: CurriculumEntry) -> ProblemRound:
        problem = entry.problem
        slots = agents.solver.generate(problem, k, iteration=t, stream=STREAM_SOLVE)
        attempts: list[tuple[int, AttemptRecord]] = []
        undelivered = 0
        for slot in slots:
            if slot.text is None:
                undelivered += 1
                continue
            verdict = dual_verify(problem, slot.text, agents.judge)
            attempts.append(
                (slot.index, AttemptRecord(problem_id=problem.id, text=slot.text, verdict=verdict))
            )
        return ProblemRound(problem=problem, attempts=attempts, undelivered=undelivered)

    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        rounds = {
            round_.problem.id: round_
            for round_ in pool.map(solve_one, batch)
        }

        # Barrier: statistics, zones, and quality flags.
        evaluated_rates: list[float] = []
        for pid in sorted(rounds):
            round_ = rounds[pid]
            verdicts = [rec.verdict.correct for _, rec in sorted(round_.attempts, key=lambda item: item[0])]
            if not verdicts:
                logger.warning("no delivered attempts for %s; stats unchanged", pid)
                continue
            entry = store.update_stats(pid, verdicts)
            evaluated_rates.append(entry.success_rate)

        # Preference pairs, per problem, deterministic rng per (seed, t, problem).
        all_pairs = []
        for pid in sorted(rounds):
            round_ = rounds[pid]
            records = [rec for _, rec in sorted(round_.attempts, key=lambda item: item[0])]
            if not records:
                continue
            winners, losers = partition_attempts(records, reference_attempt(round_.problem))
            if not losers:
                continue
            rng = rng_for(config.seed, STREAM_PAIRS, t, pid_int(pid))
            all_pairs.extend(
                build_pairs(
                    winners,
                    losers,
                    config.dpo(),
                    rng,
                    prompt=render_solver_prompt(round_.problem.statement),
                )
            )
        pairs_emitted = emit_dpo_dataset(all_pairs, dpo_path(checkpoint_dir, t), iteration=t)

        failures = collect_failures(rounds)

        # The solver consumes this iteration's pairs before utilities are
        # measured; without a trainable solver the utilities are marked stale.
        stale = not hasattr(agents.solver, "apply_training")
        if not stale:
            agents.solver.apply_training(len(all_pairs))

        metrics.event(
            "phase_start", iteration=t, phase="refine", failures=len(failures), pairs=pairs_emitted
        )

        # Zone-adaptive refinement sources: learning-zone problems contribute a
        # failed attempt, mastered ones a successful attempt (volume capped by
        # |failures| so failure-driven data stays dominant); too-difficult
        # problems are set aside entirely.
        learning_sources: list[tuple[Problem, FailureRecord]] = []
        mastered_sources: list[tuple[Problem, str]] = []
        first_failure = {}
        for failure in failures:
            first_failure.setdefault(failure.problem_id, failure)
        for pid in sorted(rounds):
            entry = store.entries[pid]
            if not entry.active or not entry.evaluated:
                continue
            if entry.zone is Zone.LEARNING and pid in first_failure:
                learning_sources.append((rounds[pid].problem, first_failure[pid]))
            elif entry.zone is Zone.MASTERED and config.mastered_refinement:
                correct = [
                    rec
                    for _, rec in sorted(rounds[pid].attempts, key=lambda item: item[0])
                    if rec.verdict.correct
                ]
                if correct:
                    mastered_sources.append((rounds[pid].problem, correct[0].text))
        mastered_sources = mastered_sources[: len(failures)]

        refinements_failed = 0
        refined_records: list[RefinedRecord] = []
        new_problems: list[Problem] = []

        def refine_one(task):
            problem, analysis, from_mastered, attempt_index = task
            try:
                triple = agents.teacher.refine(
                    problem, analysis, iteration=t, from_mastered=from_mastered
                )
                refined = Problem.make(
                    statement=triple.enhanced_question,
                    reference_answer=triple.answer,
                    reference_solution=triple.solution,
                    domain_tag=problem.domain_tag,
                    origin="teacher",
                    parent_id=problem.id,
                    created_iteration=t + 1,
                )
            except (RefinementError, TransportError, SchemaError, InvalidArgumentError) as exc:
                logger.warning("refinement failed for %s: %s", problem.id, exc)
                return None
            return refined

        tasks = [
            (problem, failure.solution_text, False, failure.attempt_index)
            for problem, failure in learning_sources
        ] + [(problem, success_text, True, -1) for problem, success_text in mastered_sources]
        for task, refined in zip(tasks, pool.map(refine_one, tasks)):
            if refined is None:
                refinements_failed += 1
                continue
            new_problems.append(refined)
            problem, _, from_mastered, attempt_index = task
            if not from_mastered:
                refined_records.append(
                    RefinedRecord(
                        source_problem_id=problem.id,
                        source_attempt_index=attempt_index,
                        problem=refined,
                    )
                )

        metrics.event("phase_start", iteration=t, phase="distill", refined=len(new_problems))

        wsft = build_wsft_dataset(
            failures,
            refined_records,
            agents.solver,
            config.utility,
            k=k,
            weight_floor=config.weight_floor,
            iteration=t,
            stale=stale,
            judge=agents.judge,
            mapper=pool.map,
        )
        emit_wsft_dataset(wsft.examples, wsft_path(checkpoint_dir, t), iteration=t)

    # Phase 3: curriculum update, quality gate, checkpoint.
    add_report = store.add_problems(new_problems, iteration=t + 1)

    quality_discards = 0
    flagged = sorted(
        pid
        for pid, entry in store.entries.items()
        if entry.active and entry.needs_quality_check
    )
    for pid in flagged:
        decision = quality_check(store.entries[pid].problem, agents.teacher, iteration=t)
        if not decision.keep:
            store.quarantine(pid, decision.reason or "quality_gate")
            quality_discards += 1
            logger.info("quarantined %s (%s)", pid, decision.reason)
        elif not decision.deferred:
            store.clear_quality_flag(pid)

    store.iteration = t + 1
    try:
        store.snapshot(state_path(checkpoint_dir, t + 1))
        agent_state = agents.state_dict() if hasattr(agents, "state_dict") else {}
        if agent_state:
            agents_state_path(checkpoint_dir, t + 1).write_text(
                canonical_dumps(agent_state) + "\n", encoding="utf-8"
            )
    except OSError as exc:
        raise SnapshotError(f"checkpoint write failed at iteration {t}: {exc}") from exc

    report = IterationReport(
        iteration=t,
        problems_evaluated=len(batch),
        failure_count=len(failures),
        pairs_emitted=pairs_emitted,
        new_problems=add_report.inserted,
        refinements_failed=refinements_failed,
        quality_discards=quality_discards,
        zone_histogram=store.zone_histogram(),
        mean_success_rate=(
            sum(evaluated_rates) / len(evaluated_rates) if evaluated_rates else 0.0
        ),
        wall_time=time.monotonic() - started,
    )
    # wall_time stays in the returned report but out of the file, keeping
    # checkpoint trees byte-reproducible; timings go to the metrics log.
    persisted = {k: v for k, v in report.to_dict().items() if k != "wall_time"}
    report_path(checkpoint_dir, t).write_text(canonical_dumps(persisted) + "\n", encoding="utf-8")
    metrics.event(
        "iteration_done",
        iteration=t,
        failures=report.failure_count,
        new_problems=report.new_problems,
        wall_time=report.wall_time,
    )
    return report


def run(
    config: RunConfig,
    agents: AgentBundle,
    checkpoint_dir: str | Path,
    seed_problems: Sequence[Problem] | None = None,
    *,
    iterations: int | None = None,
    force: bool = False,
) -> list[IterationReport]:
    """Run (or resume) T sequential iterations with checkpoints.

    A fresh directory is initialized from the seed problems; an existing one
    resumes from its newest snapshot with identical continuation. Existing
    per-iteration outputs are never overwritten unless forced.
    """
    checkpoint_dir = Path(checkpoint_dir)
    checkpoint_dir.mkdir(parents=True, exist_ok=True)
    total = config.iterations if iterations is None else iterations
    metrics = MetricsLog(checkpoint_dir / "metrics.jsonl")

    if _state_files(checkpoint_dir):
        store = load_latest_state(checkpoint_dir)
        agent_file = agents_state_path(checkpoint_dir, store.iteration)
        if agent_file.exists() and hasattr(agents, "load_state_dict"):
            agents.load_state_dict(json.loads(agent_file.read_text(encoding="utf-8")))
    else:
        store = CurriculumStore(rng_seed=config.seed)
        if seed_problems:
            store.add_problems(list(seed_problems), iteration=0)
        store.snapshot(state_path(checkpoint_dir, 0))

    reports: list[IterationReport] = []
    for t in range(store.iteration, total):
        if dpo_path(checkpoint_dir, t).exists() and not force:
            raise EngineError(
                f"outputs for iteration {t} already exist in {checkpoint_dir}; use force to overwrite"
            )
        reports.append(run_iteration(store, config, agents, checkpoint_dir, metrics))
    return reports


# -- seed filtering and validity ---------------------------------------------------


@dataclass
class SeedFilterReport:
    accepted: list[Problem]
    rejected: list[tuple[Problem, str]]

    def reasons(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for _, reason in self.rejected:
            counts[reason] = counts.get(reason, 0) + 1
        return counts


def filter_seed_candidates(
    problems: Sequence[Problem], solver, k: int = 8, *, judge=None
) -> SeedFilterReport:
    """Keep candidates whose measured k-attempt solve rate sits in the
    productive band [0.10, 0.70]; universal success is rejected as too easy,
    near-universal failure as too hard, undeliverable measurement as
    unverifiable."""
    accepted: list[Problem] = []
    rejected: list[tuple[Problem, str]] = []
    for problem in problems:
        slots = solver.generate(problem, k, iteration=0, stream=STREAM_SEED_FILTER)
        delivered = [slot for slot in slots if slot.text is not None]
        if len(delivered) < k:
            rejected.append((problem, "unverifiable"))
            continue
        verdicts = [dual_verify(problem, slot.text, judge).correct for slot in delivered]
        rate = sum(1 for v in verdicts if v) / len(verdicts)
        if rate > 0.70:
            rejected.append((problem, "too_easy"))
        elif rate < 0.10:
            rejected.append((problem, "too_hard"))
        else:
            accepted.append(problem)
    return SeedFilterReport(accepted=accepted, rejected=rejected)


@dataclass
class DistributionCheck:
    ok: bool
    counts: dict[str, int]
    expected: dict[str, int]

    def mismatches(self) -> dict[str, tuple[int, int]]:
        keys = set(self.counts) | set(self.expected)
        return {
            key: (self.counts.get(key, 0), self.expected.get(key, 0))
            for key in sorted(keys)
            if self.counts.get(key, 0) != self.expected.get(key, 0)
        }


def validate_domain_distribution(
    problems: Sequence[Problem], expected: dict[str, int] | None = None
) -> DistributionCheck:
    """Exact comparison of per-subject counts against the canonical split."""
    expected = dict(expected or SEED_DISTRIBUTION)
    counts: dict[str, int] = {}
    for problem in problems:
        tag = problem.domain_tag or "unknown"
        counts[tag] = counts.get(tag, 0) + 1
    return DistributionCheck(ok=counts == expected, counts=counts, expected=expected)


@dataclass
class ValidityReport:
    rate: float
    outcomes: list[tuple[str, str]]
    transport_failures: int


def measure_validity_rate(
    problems: Sequence[Problem], teacher: TeacherAgent, *, judge=None
) -> ValidityReport:
    """Fraction of problems the strong model solves within the token/time
    budget, one attempt each. Transport failures (after the gateway's retries)
    count as unsolved and are tallied separately."""
    if not problems:
        raise InvalidArgumentError("validity rate over an empty set is undefined")
    outcomes: list[tuple[str, str]] = []
    transport_failures = 0
    solved = 0
    for problem in problems:
        try:
            outcome = teacher.resolve(problem, iteration=0)
        except TransportError:
            transport_failures += 1
            outcomes.append((problem.id, "transport"))
            continue
        if outcome.truncated:
            outcomes.append((problem.id, "token_budget"))
            continue
        if dual_verify(problem, outcome.text, judge).correct:
            solved += 1
            outcomes.append((problem.id, "solved"))
        else:
            outcomes.append((problem.id, "incorrect"))
    for pid, result in outcomes:
        logger.debug("validity %s: %s", pid, result)
    return ValidityReport(
        rate=solved / len(problems), outcomes=outcomes, transport_failures=transport_failures
    )
