"""Deterministic simulated solver/teacher agents for desk-scale loop runs.

The solver succeeds on a problem with logistic probability in the gap between
its scalar skill and the problem's latent difficulty, so skill equal to
difficulty gives a 50% solve rate. Attempts are emitted as real text with a
boxed final answer (correct or perturbed), which exercises the full extraction
and verification path unmodified.

Latent difficulty is embedded in the statement text of simulated problems, so
it survives serialization and resume; problems from other sources fall back to
their 1-5 difficulty hint, or a stable id-derived value.

All randomness is scoped to (run seed, stream, iteration, problem, attempt),
making parallel and serial execution interchangeable.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .curriculum import SUBJECT_AREAS, Problem
from .errors import InvalidArgumentError, SchemaError
from .gateway import CompletionSlot, RefinementTriple
from .seeding import STREAM_QUALITY, STREAM_REFINE, STREAM_SOLVE, pid_int, rng_for

_DIFFICULTY_TAG_RE = re.compile(r"\[difficulty=([-+0-9.eE]+)\]")


@dataclass(frozen=True)
class SimScenario:
    """Knobs for one simulated run; serializable as a flat JSON object."""

    initial_skill: float = 0.0
    learning_rate: float = 0.01
    delta_learning: float = 0.2
    delta_mastered: float = 0.8
    iterations: int = 5
    seed: int = 0
    seed_problem_count: int = 100
    seed_difficulty_mean: float = 0.0
    seed_difficulty_spread: float = 1.0

    @classmethod
    def from_json(cls, path: str | Path) -> "SimScenario":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise SchemaError(f"cannot read scenario {path}: {exc}") from exc
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in data.items() if k in known})

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


@dataclass(frozen=True)
class SimSolverState:
    skill: float
    learning_rate: float
    rng_seed: int


@dataclass(frozen=True)
class SimAttempt:
    text: str
    correct: bool


def _difficulty_hint_for(difficulty: float) -> int:
    return min(5, max(1, 1 + int(max(difficulty, 0.0) // 0.8)))


def latent_difficulty(problem: Problem) -> float:
    """Recover a problem's difficulty on the latent scale.

    Simulated statements carry an explicit tag; otherwise the 1-5 hint maps
    back onto the scale, and as a last resort a stable value is derived from
    the problem id so any manifest can be solved deterministically.
    """
    match = _DIFFICULTY_TAG_RE.search(problem.statement)
    if match:
        try:
            return float(match.group(1))
        except ValueError:
            pass
    if problem.difficulty_hint is not None:
        return (problem.difficulty_hint - 1) * 0.8
    return (pid_int(problem.id) % 2000) / 1000.0


def solve_probability(skill: float, difficulty: float) -> float:
    return 1.0 / (1.0 + np.exp(-(skill - difficulty)))


def _statement(index_label: str, difficulty: float, key: str) -> str:
    return (
        f"[difficulty={difficulty:.4f}] Task {index_label}: "
        f"compute the registered value for key {key}."
    )


def _solution_text(key: str, value: int) -> str:
    return f"Looking up key {key} gives the registered value. Final: \\boxed{{{value}}}"


def make_seed_problems(scenario: SimScenario) -> list[Problem]:
    """Deterministic synthetic seed set with Gaussian-spread difficulties."""
    rng = rng_for(scenario.seed, 0)
    problems = []
    for i in range(scenario.seed_problem_count):
        difficulty = float(
            scenario.seed_difficulty_mean + scenario.seed_difficulty_spread * rng.standard_normal()
        )
        value = int(rng.integers(100, 100_000))
        key = f"{int(rng.integers(0, 16**8)):08x}"
        problems.append(
            Problem.make(
                statement=_statement(f"seed-{i:04d}", difficulty, key),
                reference_answer=str(value),
                reference_solution=_solution_text(key, value),
                domain_tag=SUBJECT_AREAS[i % len(SUBJECT_AREAS)],
                difficulty_hint=_difficulty_hint_for(difficulty),
                origin="simulated",
                created_iteration=0,
            )
        )
    return problems


def sim_solve(
    state: SimSolverState,
    problem: Problem,
    attempt_index: int,
    *,
    iteration: int = 0,
    stream: int = STREAM_SOLVE,
) -> SimAttempt:
    """One attempt with ground-truth correctness; rng scoped per attempt."""
    rng = rng_for(state.rng_seed, stream, iteration, pid_int(problem.id), attempt_index)
    difficulty = latent_difficulty(problem)
    p = solve_probability(state.skill, difficulty)
    correct = bool(rng.random() < p)
    reference = problem.reference_answer.strip()
    if correct:
        value = reference
    else:
        offset = int(rng.integers(1, 10)) * (1 if rng.random() < 0.5 else -1)
        try:
            value = str(int(reference) + offset)
        except ValueError:
            value = reference + f"+{offset}"
    text = (
        f"Attempt {attempt_index} on task {problem.id}.\n"
        f"Working through the lookup gives {value}.\n"
        f"Therefore, the answer is {value}. Final: \\boxed{{{value}}}"
    )
    return SimAttempt(text=text, correct=correct)


def skill_update(state: SimSolverState, pair_count: int) -> SimSolverState:
    """Concave (sqrt) skill growth in the number of preference pairs consumed."""
    if pair_count < 0:
        raise InvalidArgumentError("pair_count must be non-negative")
    gain = state.learning_rate * float(np.sqrt(pair_count))
    return replace(state, skill=state.skill + gain)


def sim_refine(
    problem: Problem,
    from_mastered: bool,
    *,
    iteration: int = 0,
    seed: int = 0,
    delta_learning: float = 0.2,
    delta_mastered: float = 0.8,
) -> RefinementTriple:
    """Deterministic refinement: a failure-sourced variant steps difficulty by
    the learning delta, a mastery-sourced one by the (larger) mastered delta."""
    delta = delta_mastered if from_mastered else delta_learning
    difficulty = latent_difficulty(problem) + delta
    rng = rng_for(seed, STREAM_REFINE, iteration, pid_int(problem.id), int(from_mastered))
    value = int(rng.integers(100, 100_000))
    key = f"{int(rng.integers(0, 16**8)):08x}"
    flavor = "harder" if from_mastered else "targeted"
    label = f"r{iteration}-{flavor}-of-{problem.id}"
    return RefinementTriple(
        enhanced_question=_statement(label, difficulty, key),
        solution=_solution_text(key, value),
        answer=str(value),
    )


class SimSolver:
    """`SolverAgent` over the logistic skill model; skill moves only through
    apply_training, at the orchestrator's phase barrier."""

    def __init__(self, scenario: SimScenario):
        self.scenario = scenario
        self.state = SimSolverState(
            skill=scenario.initial_skill,
            learning_rate=scenario.learning_rate,
            rng_seed=scenario.seed,
        )

    def generate(self, problem, n, *, iteration: int = 0, stream: int = STREAM_SOLVE):
        slots = []
        for index in range(n):
            attempt = sim_solve(self.state, problem, index, iteration=iteration, stream=stream)
            slots.append(CompletionSlot(index=index, text=attempt.text))
        return slots

    def apply_training(self, pair_count: int) -> None:
        self.state = skill_update(self.state, pair_count)

    def state_dict(self) -> dict:
        return {
            "skill": self.state.skill,
            "learning_rate": self.state.learning_rate,
            "rng_seed": self.state.rng_seed,
        }

    def load_state_dict(self, state: dict) -> None:
        self.state = SimSolverState(
            skill=float(state["skill"]),
            learning_rate=float(state["learning_rate"]),
            rng_seed=int(state["rng_seed"]),
        )


class SimTeacher:
    """`TeacherAgent` producing deterministic refinements and honest re-solves.

    A nonzero corrupt fraction makes the re-solve contradict the stored
    reference for a stable id-derived subset of problems, for exercising the
    quality gate end to end.
    """

    def __init__(self, scenario: SimScenario, *, corrupt_resolve_fraction: float = 0.0):
        self.scenario = scenario
        self.corrupt_resolve_fraction = corrupt_resolve_fraction

    def refine(self, problem, analysis, *, iteration: int = 0, from_mastered: bool = False):
        return sim_refine(
            problem,
            from_mastered,
            iteration=iteration,
            seed=self.scenario.seed,
            delta_learning=self.scenario.delta_learning,
            delta_mastered=self.scenario.delta_mastered,
        )

    def resolve(self, problem, *, iteration: int = 0):
        from .agents import ResolveOutcome

        reference = problem.reference_answer.strip()
        corrupted = (pid_int(problem.id) % 10_000) / 10_000.0 < self.corrupt_resolve_fraction
        if corrupted:
            rng = rng_for(self.scenario.seed, STREAM_QUALITY, iteration, pid_int(problem.id))
            try:
                answer = str(int(reference) + int(rng.integers(1, 10)))
            except ValueError:
                answer = reference + "?"
            text = f"Re-solving independently gives \\boxed{{{answer}}}"
        else:
            text = f"Re-solving independently confirms the result: \\boxed{{{reference}}}"
        return ResolveOutcome(text=text, truncated=False)
