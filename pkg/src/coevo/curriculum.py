"""Curriculum state: problems, solve statistics, zone labels, replay sampling, persistence.

The curriculum only ever grows. Problems are deduplicated by a content hash of
(statement, reference answer) on insert and never deleted; entries that fail
the quality gate are quarantined but retained for audit. Zone labels follow
the exact three-way split on the per-problem solve rate: 1.0 is mastered,
0.0 is too difficult, anything strictly between is the learning frontier.

All mutation happens at orchestrator phase barriers (single writer); reads are
safe from any number of workers in between.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    InvalidArgumentError,
    NotFoundError,
    SchemaError,
    SnapshotCorruptionError,
    SnapshotVersionError,
)
from .jsonio import canonical_dumps

SNAPSHOT_VERSION = 1

ORIGINS = ("seed", "teacher", "generator", "simulated")

SUBJECT_AREAS = (
    "algebra",
    "number_theory",
    "geometry",
    "combinatorics",
    "precalculus",
    "intermediate_algebra",
    "prealgebra",
)

# Canonical per-subject seed counts for a 100-problem starter manifest.
SEED_DISTRIBUTION = {
    "algebra": 15,
    "number_theory": 15,
    "geometry": 15,
    "combinatorics": 15,
    "precalculus": 15,
    "intermediate_algebra": 15,
    "prealgebra": 10,
}


class Zone(str, Enum):
    MASTERED = "Mastered"
    LEARNING = "Learning"
    TOO_DIFFICULT = "TooDifficult"


def problem_id(statement: str, reference_answer: str) -> str:
    """Deterministic content hash; identical content always yields the same id."""
    digest = hashlib.sha256()
    digest.update(statement.encode("utf-8"))
    digest.update(b"\x1f")
    digest.update(reference_answer.encode("utf-8"))
    return digest.hexdigest()[:16]


@dataclass(frozen=True)
class Problem:
    id: str
    statement: str
    reference_solution: str
    reference_answer: str
    domain_tag: str | None = None
    difficulty_hint: int | None = None
    origin: str = "seed"
    parent_id: str | None = None
    created_iteration: int = 0

    @classmethod
    def make(
        cls,
        statement: str,
        reference_answer: str,
        *,
        reference_solution: str = "",
        domain_tag: str | None = None,
        difficulty_hint: int | None = None,
        origin: str = "seed",
        parent_id: str | None = None,
        created_iteration: int = 0,
    ) -> "Problem":
        if not statement or not statement.strip():
            raise InvalidArgumentError("problem statement is empty")
        if not reference_answer or not reference_answer.strip():
            raise InvalidArgumentError("reference answer is empty")
        if origin not in ORIGINS:
            raise InvalidArgumentError(f"unknown origin {origin!r}")
        if origin == "seed" and parent_id is not None:
            raise InvalidArgumentError("seed problems cannot carry a parent_id")
        if origin in ("teacher", "generator") and parent_id is None:
            raise InvalidArgumentError(f"{origin}-refined problems must carry a parent_id")
        if difficulty_hint is not None and not 1 <= int(difficulty_hint) <= 5:
            raise InvalidArgumentError("difficulty_hint must be in 1..5")
        if created_iteration < 0:
            raise InvalidArgumentError("created_iteration must be non-negative")
        return cls(
            id=problem_id(statement, reference_answer),
            statement=statement,
            reference_solution=reference_solution,
            reference_answer=reference_answer,
            domain_tag=domain_tag,
            difficulty_hint=int(difficulty_hint) if difficulty_hint is not None else None,
            origin=origin,
            parent_id=parent_id,
            created_iteration=int(created_iteration),
        )

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "statement": self.statement,
            "reference_solution": self.reference_solution,
            "reference_answer": self.reference_answer,
            "domain_tag": self.domain_tag,
            "difficulty_hint": self.difficulty_hint,
            "origin": self.origin,
            "parent_id": self.parent_id,
            "created_iteration": self.created_iteration,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Problem":
        return cls(
            id=data["id"],
            statement=data["statement"],
            reference_solution=data.get("reference_solution", ""),
            reference_answer=data["reference_answer"],
            domain_tag=data.get("domain_tag"),
            difficulty_hint=data.get("difficulty_hint"),
            origin=data.get("origin", "seed"),
            parent_id=data.get("parent_id"),
            created_iteration=int(data.get("created_iteration", 0)),
        )


def classify_zone(success_rate: float) -> Zone:
    """Pure three-way mapping of a solve rate onto a zone.

    Endpoints are exact: a rate of 1 means mastered, 0 means too difficult,
    anything strictly inside (0, 1) is the learning zone.
    """
    rate = float(success_rate)
    if math.isnan(rate) or rate < 0.0 or rate > 1.0:
        raise InvalidArgumentError(f"success rate {success_rate!r} outside [0, 1]")
    if rate == 1.0:
        return Zone.MASTERED
    if rate == 0.0:
        return Zone.TOO_DIFFICULT
    return Zone.LEARNING


@dataclass
class CurriculumEntry:
    problem: Problem
    attempts: int = 0
    successes: int = 0
    success_rate: float | None = None
    zone: Zone = Zone.LEARNING
    last_evaluated_iteration: int = -1
    status: str = "active"  # "active" | "quarantined"
    needs_quality_check: bool = False
    quarantine_reason: str | None = None

    @property
    def evaluated(self) -> bool:
        return self.attempts > 0

    @property
    def active(self) -> bool:
        return self.status == "active"

    def to_dict(self) -> dict:
        return {
            "problem": self.problem.to_dict(),
            "attempts": self.attempts,
            "successes": self.successes,
            "success_rate": self.success_rate,
            "zone": self.zone.value,
            "last_evaluated_iteration": self.last_evaluated_iteration,
            "status": self.status,
            "needs_quality_check": self.needs_quality_check,
            "quarantine_reason": self.quarantine_reason,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CurriculumEntry":
        return cls(
            problem=Problem.from_dict(data["problem"]),
            attempts=int(data["attempts"]),
            successes=int(data["successes"]),
            success_rate=data.get("success_rate"),
            zone=Zone(data["zone"]),
            last_evaluated_iteration=int(data["last_evaluated_iteration"]),
            status=data.get("status", "active"),
            needs_quality_check=bool(data.get("needs_quality_check", False)),
            quarantine_reason=data.get("quarantine_reason"),
        )


@dataclass(frozen=True)
class ZoneTransition:
    problem_id: str
    old_zone: Zone
    new_zone: Zone
    iteration: int

    def to_dict(self) -> dict:
        return {
            "problem_id": self.problem_id,
            "old_zone": self.old_zone.value,
            "new_zone": self.new_zone.value,
            "iteration": self.iteration,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ZoneTransition":
        return cls(data["problem_id"], Zone(data["old_zone"]), Zone(data["new_zone"]), int(data["iteration"]))


@dataclass(frozen=True)
class AddReport:
    inserted: int
    rejected: tuple[tuple[int, str], ...] = ()


@dataclass
class TransitionReport:
    transitions: list[ZoneTransition]

    @property
    def difficult_to_learning(self) -> int:
        return sum(
            1
            for t in self.transitions
            if t.old_zone is Zone.TOO_DIFFICULT and t.new_zone is Zone.LEARNING
        )

    @property
    def learning_to_mastered(self) -> int:
        return sum(
            1 for t in self.transitions if t.old_zone is Zone.LEARNING and t.new_zone is Zone.MASTERED
        )


class CurriculumStore:
    """Single-writer owner of the evolving curriculum.

    The replay sampler consumes a persistent PCG64 stream whose full state is
    captured in snapshots, so a resumed run draws exactly the same replay
    batches as an uninterrupted one.
    """

    def __init__(self, rng_seed: int = 0):
        self.iteration = 0
        self.rng_seed = int(rng_seed) & ((1 << 64) - 1)
        self.entries: dict[str, CurriculumEntry] = {}
        self.transition_log: list[ZoneTransition] = []
        self._rng = np.random.default_rng(self.rng_seed)

    # -- insertion ---------------------------------------------------------

    def add_problems(self, batch: Sequence[Problem], iteration: int) -> AddReport:
        """Insert problems, skipping duplicates by id; malformed items are
        rejected per-item (the batch is not atomic)."""
        inserted = 0
        rejected: list[tuple[int, str]] = []
        for idx, problem in enumerate(batch):
            if not problem.statement or not problem.statement.strip():
                rejected.append((idx, "empty statement"))
                continue
            if not problem.reference_answer or not problem.reference_answer.strip():
                rejected.append((idx, "empty reference answer"))
                continue
            if problem.id in self.entries:
                continue
            stamped = problem
            if problem.created_iteration != iteration:
                stamped = replace(problem, created_iteration=int(iteration))
            self.entries[stamped.id] = CurriculumEntry(problem=stamped)
            inserted += 1
        return AddReport(inserted=inserted, rejected=tuple(rejected))

    # -- statistics --------------------------------------------------------

    def update_stats(self, problem_id: str, verdicts: Sequence[bool]) -> CurriculumEntry:
        entry = self.entries.get(problem_id)
        if entry is None:
            raise NotFoundError(f"unknown problem id {problem_id!r}")
        if not verdicts:
            raise InvalidArgumentError("verdicts must be non-empty")
        was_evaluated = entry.evaluated
        old_zone = entry.zone
        entry.attempts = len(verdicts)
        entry.successes = sum(1 for v in verdicts if v)
        entry.success_rate = entry.successes / entry.attempts
        entry.zone = classify_zone(entry.success_rate)
        entry.last_evaluated_iteration = self.iteration
        # Universal failure triggers the quality gate; any success clears it.
        entry.needs_quality_check = entry.successes == 0
        # The default Learning label on never-evaluated entries is a
        # convention, not a measurement; only evaluated-to-evaluated zone
        # changes are logged as transitions.
        if was_evaluated and entry.zone != old_zone:
            self.transition_log.append(
                ZoneTransition(problem_id, old_zone, entry.zone, self.iteration)
            )
        return entry

    def recategorize_all(self, latest_verdicts: Mapping[str, Sequence[bool]]) -> TransitionReport:
        """Recompute zones for every entry with fresh verdicts; entries without
        verdicts keep their current zone."""
        start = len(self.transition_log)
        for pid in sorted(latest_verdicts):
            self.update_stats(pid, latest_verdicts[pid])
        return TransitionReport(transitions=list(self.transition_log[start:]))

    # -- sampling ----------------------------------------------------------

    def sample_training_batch(
        self, iteration: int | None = None, replay_ratio: float = 0.25
    ) -> list[CurriculumEntry]:
        """All active entries created at `iteration` plus a replay sample of
        round(replay_ratio * |new|) older active entries, without replacement."""
        if not 0.0 <= replay_ratio <= 1.0:
            raise InvalidArgumentError(f"replay ratio {replay_ratio!r} outside [0, 1]")
        it = self.iteration if iteration is None else int(iteration)
        active = [e for e in self.entries.values() if e.active]
        new = sorted(
            (e for e in active if e.problem.created_iteration == it), key=lambda e: e.problem.id
        )
        pool = sorted(
            (e for e in active if e.problem.created_iteration < it), key=lambda e: e.problem.id
        )
        want = int(math.floor(replay_ratio * len(new) + 0.5))  # round half-up
        take = min(want, len(pool))
        replay: list[CurriculumEntry] = []
        if take > 0:
            chosen = self._rng.choice(len(pool), size=take, replace=False)
            replay = [pool[i] for i in sorted(int(i) for i in chosen)]
        return new + replay

    # -- lifecycle ---------------------------------------------------------

    def quarantine(self, problem_id: str, reason: str) -> CurriculumEntry:
        entry = self.entries.get(problem_id)
        if entry is None:
            raise NotFoundError(f"unknown problem id {problem_id!r}")
        entry.status = "quarantined"
        entry.quarantine_reason = reason
        entry.needs_quality_check = False
        return entry

    def clear_quality_flag(self, problem_id: str) -> None:
        entry = self.entries.get(problem_id)
        if entry is None:
            raise NotFoundError(f"unknown problem id {problem_id!r}")
        entry.needs_quality_check = False

    # -- views -------------------------------------------------------------

    def zone_histogram(self) -> dict[str, int]:
        counts = {zone.value: 0 for zone in Zone}
        for entry in self.entries.values():
            if entry.active:
                counts[entry.zone.value] += 1
        return counts

    def active_ids(self) -> set[str]:
        return {pid for pid, e in self.entries.items() if e.active}

    def quarantined_ids(self) -> set[str]:
        return {pid for pid, e in self.entries.items() if not e.active}

    # -- persistence -------------------------------------------------------

    def to_dict(self) -> dict:
        state = self._rng.bit_generator.state
        return {
            "format_version": SNAPSHOT_VERSION,
            "iteration": self.iteration,
            "rng_seed": self.rng_seed,
            "rng_state": {
                "bit_generator": state["bit_generator"],
                "state": {"state": state["state"]["state"], "inc": state["state"]["inc"]},
                "has_uint32": state["has_uint32"],
                "uinteger": state["uinteger"],
            },
            "entries": {pid: entry.to_dict() for pid, entry in self.entries.items()},
            "transition_log": [t.to_dict() for t in self.transition_log],
        }

    def snapshot(self, path: str | Path) -> Path:
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        try:
            tmp.write_text(canonical_dumps(self.to_dict()) + "\n", encoding="utf-8")
            os.replace(tmp, path)
        except BaseException:
            tmp.unlink(missing_ok=True)
            raise
        return path

    @classmethod
    def from_dict(cls, data: dict) -> "CurriculumStore":
        try:
            version = data["format_version"]
        except (KeyError, TypeError) as exc:
            raise SnapshotCorruptionError("snapshot missing format_version") from exc
        if version != SNAPSHOT_VERSION:
            raise SnapshotVersionError(
                f"snapshot format_version {version!r} unsupported (expected {SNAPSHOT_VERSION})"
            )
        try:
            store = cls(rng_seed=data["rng_seed"])
            store.iteration = int(data["iteration"])
            for pid in sorted(data["entries"]):
                store.entries[pid] = CurriculumEntry.from_dict(data["entries"][pid])
            store.transition_log = [ZoneTransition.from_dict(t) for t in data["transition_log"]]
            rng_state = data["rng_state"]
            bit = np.random.PCG64()
            bit.state = {
                "bit_generator": rng_state["bit_generator"],
                "state": {
                    "state": int(rng_state["state"]["state"]),
                    "inc": int(rng_state["state"]["inc"]),
                },
                "has_uint32": int(rng_state["has_uint32"]),
                "uinteger": int(rng_state["uinteger"]),
            }
            store._rng = np.random.Generator(bit)
        except (KeyError, TypeError, ValueError) as exc:
            raise SnapshotCorruptionError(f"snapshot structurally invalid: {exc}") from exc
        return store

    @classmethod
    def load(cls, path: str | Path) -> "CurriculumStore":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise SnapshotCorruptionError(f"cannot read snapshot {path}: {exc}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SnapshotCorruptionError(f"snapshot {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)


def load_seed_manifest(path: str | Path) -> list[Problem]:
    """Parse a JSONL seed manifest (one problem per line).

    Required keys per line: statement, reference_answer. Optional:
    reference_solution, domain_tag, difficulty_hint. Any malformed line is
    collected and reported with its line number; nothing is returned unless
    the whole manifest parses.
    """
    path = Path(path)
    problems: list[Problem] = []
    errors: list[str] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                errors.append(f"line {lineno}: invalid JSON ({exc})")
                continue
            try:
                problems.append(
                    Problem.make(
                        statement=record.get("statement", ""),
                        reference_answer=str(record.get("reference_answer", "")),
                        reference_solution=record.get("reference_solution", ""),
                        domain_tag=record.get("domain_tag"),
                        difficulty_hint=record.get("difficulty_hint"),
                        origin="seed",
                        created_iteration=0,
                    )
                )
            except InvalidArgumentError as exc:
                errors.append(f"line {lineno}: {exc}")
    if errors:
        raise SchemaError(f"seed manifest {path} has {len(errors)} bad line(s)", details=errors)
    return problems
