"""Preference-pair construction and the DPO dataset/objective surface.

Attempts are split into winning (verified correct) and losing sets; when no
sampled attempt is correct the reference solution becomes the sole winner, so
at least one pair can always be formed for a problem with failures. The loss
evaluator exists purely to sanity-check emitted datasets (and to drive
simulated-training experiments); no weights are ever updated here.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError
from .jsonio import write_jsonl_atomic
from .verify import Verdict


@dataclass(frozen=True)
class AttemptRecord:
    problem_id: str
    text: str
    verdict: Verdict | None
    source: str = "sampled"  # "sampled" | "reference"


@dataclass(frozen=True)
class PreferencePair:
    problem_id: str
    prompt: str
    winner: AttemptRecord
    loser: AttemptRecord
    winner_is_reference: bool


@dataclass(frozen=True)
class DpoConfig:
    beta: float = 0.1
    max_pairs_per_problem: int = 64

    def __post_init__(self):
        if not self.beta > 0:
            raise InvalidArgumentError("beta must be positive")
        if self.max_pairs_per_problem < 1:
            raise InvalidArgumentError("max_pairs_per_problem must be at least 1")


def reference_attempt(problem) -> AttemptRecord:
    """Wrap a problem's reference solution as a correct-by-construction attempt."""
    return AttemptRecord(
        problem_id=problem.id,
        text=problem.reference_solution or problem.reference_answer,
        verdict=Verdict(correct=True, source="rule", analysis="reference solution"),
        source="reference",
    )


def partition_attempts(
    attempts: Sequence[AttemptRecord], reference: AttemptRecord
) -> tuple[list[AttemptRecord], list[AttemptRecord]]:
    """Split attempts into (winners, losers); winners is never empty.

    The reference is injected as the sole winner only when every sampled
    attempt failed.
    """
    if not attempts:
        raise InvalidArgumentError("attempts must be non-empty")
    for attempt in attempts:
        if attempt.verdict is None:
            raise InvalidArgumentError(f"attempt on {attempt.problem_id} has no verdict")
    if reference.verdict is None or not reference.verdict.correct:
        raise InvalidArgumentError("reference attempt must carry a correct verdict")
    winners = [a for a in attempts if a.verdict.correct]
    losers = [a for a in attempts if not a.verdict.correct]
    if not winners:
        winners = [reference]
    return winners, losers


def build_pairs(
    winners: Sequence[AttemptRecord],
    losers: Sequence[AttemptRecord],
    config: DpoConfig,
    rng: np.random.Generator,
    *,
    prompt: str,
) -> list[PreferencePair]:
    """Cross product of winners x losers, uniformly subsampled (without
    replacement) when it exceeds the per-problem cap. Deterministic given the
    generator's seed; selected pairs keep cross-product order."""
    if not winners:
        raise InvalidArgumentError("winners must be non-empty")
    cross = [
        (w, l)
        for w in winners
        for l in losers
        if w.text != l.text
    ]
    if len(cross) > config.max_pairs_per_problem:
        chosen = rng.choice(len(cross), size=config.max_pairs_per_problem, replace=False)
        cross = [cross[i] for i in sorted(int(i) for i in chosen)]
    return [
        PreferencePair(
            problem_id=loser.problem_id,
            prompt=prompt,
            winner=winner,
            loser=loser,
            winner_is_reference=winner.source == "reference",
        )
        for winner, loser in cross
    ]


def _margins(beta: float, pairs: Sequence[Sequence[float]]) -> np.ndarray:
    if not beta > 0:
        raise InvalidArgumentError("beta must be positive")
    arr = np.asarray(pairs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise InvalidArgumentError("pairs must be rows of 4 log-probabilities")
    if arr.shape[0] == 0:
        raise InvalidArgumentError("pairs must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError("log-probabilities must be finite")
    lwp, lwr, llp, llr = arr.T
    return beta * ((lwp - lwr) - (llp - llr))


def dpo_loss(beta: float, pairs: Sequence[Sequence[float]]) -> float:
    """Mean of -ln sigma(beta * margin) over (logp_w_policy, logp_w_ref,
    logp_l_policy, logp_l_ref) rows; log1p-stable for large |margin|."""
    x = _margins(beta, pairs)
    return float(np.mean(np.logaddexp(0.0, -x)))


def dpo_loss_gradient(beta: float, pairs: Sequence[Sequence[float]]) -> np.ndarray:
    """Analytic gradient of dpo_loss w.r.t. each of the 4 log-probabilities,
    shape (n_pairs, 4) in the same column order as the input rows."""
    x = _margins(beta, pairs)
    # sigma(-x), computed without overflow on either tail
    s = np.where(x >= 0, np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))), 1.0 / (1.0 + np.exp(np.abs(x))))
    scale = beta * s / len(x)
    grad = np.empty((len(x), 4), dtype=np.float64)
    grad[:, 0] = -scale  # logp_w_policy
    grad[:, 1] = scale  # logp_w_ref
    grad[:, 2] = scale  # logp_l_policy
    grad[:, 3] = -scale  # logp_l_ref
    return grad


def emit_dpo_dataset(pairs: Sequence[PreferencePair], path: str | Path, *, iteration: int = 0) -> int:
    """Write pairs as stable JSONL ({problem_id, prompt, chosen, rejected,
    winner_is_reference, iteration}); returns the record count."""
    records = (
        {
            "problem_id": pair.problem_id,
            "prompt": pair.prompt,
            "chosen": pair.winner.text,
            "rejected": pair.loser.text,
            "winner_is_reference": pair.winner_is_reference,
            "iteration": iteration,
        }
        for pair in pairs
    )
    return write_jsonl_atomic(path, records)
