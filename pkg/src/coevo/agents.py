"""Agent interfaces the orchestrator drives, plus remote-backed adapters.

Simulated counterparts live in `sim`; both sides implement the same protocols
so the loop runs unmodified against either. Remote adapters ignore the rng
scoping keywords (network sampling is inherently nondeterministic); simulated
agents use them to stay reproducible across worker counts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

from .curriculum import Problem
from .errors import SchemaError, TransportError
from .gateway import (
    AgentHandle,
    CompletionRequest,
    CompletionSlot,
    Gateway,
    RefinementTriple,
    solver_generate,
    teacher_grade,
    teacher_refine,
)
from .jsonio import extract_first_json_object
from .prompts import render_judge_prompt, render_solver_prompt
from .seeding import STREAM_SOLVE


@dataclass(frozen=True)
class ResolveOutcome:
    text: str
    truncated: bool = False


@runtime_checkable
class SolverAgent(Protocol):
    def generate(
        self, problem: Problem, n: int, *, iteration: int = 0, stream: int = STREAM_SOLVE
    ) -> list[CompletionSlot]: ...


@runtime_checkable
class TeacherAgent(Protocol):
    def refine(
        self,
        problem: Problem,
        analysis: str,
        *,
        iteration: int = 0,
        from_mastered: bool = False,
    ) -> RefinementTriple: ...

    def resolve(self, problem: Problem, *, iteration: int = 0) -> ResolveOutcome: ...


@dataclass
class AgentBundle:
    solver: SolverAgent
    teacher: TeacherAgent
    judge: object | None = None

    def state_dict(self) -> dict:
        """Collect resumable state from agents that carry any (simulated ones
        do; remote agents' state lives in external trainers)."""
        state: dict = {}
        for name in ("solver", "teacher"):
            agent = getattr(self, name)
            if hasattr(agent, "state_dict"):
                state[name] = agent.state_dict()
        return state

    def load_state_dict(self, state: dict) -> None:
        for name, agent_state in state.items():
            agent = getattr(self, name, None)
            if agent is not None and hasattr(agent, "load_state_dict"):
                agent.load_state_dict(agent_state)


@dataclass
class RemoteSolver:
    gateway: Gateway
    handle: AgentHandle

    def generate(self, problem, n, *, iteration: int = 0, stream: int = STREAM_SOLVE):
        return solver_generate(self.gateway, self.handle, problem, n)


@dataclass
class RemoteTeacher:
    gateway: Gateway
    handle: AgentHandle

    def refine(self, problem, analysis, *, iteration: int = 0, from_mastered: bool = False):
        return teacher_refine(self.gateway, self.handle, problem, analysis)

    def grade(self, problem, reference, attempts) -> str:
        return teacher_grade(self.gateway, self.handle, problem, reference, attempts)

    def resolve(self, problem, *, iteration: int = 0) -> ResolveOutcome:
        # Independent re-solve at low temperature for the quality gate and
        # validity measurement; truncation is reported, not raised.
        response = self.gateway.complete(
            self.handle,
            CompletionRequest(prompt=render_solver_prompt(problem.statement), temperature=0.1),
        )
        return ResolveOutcome(text=response.text, truncated=response.finish_reason == "length")


@dataclass
class RemoteJudge:
    gateway: Gateway
    handle: AgentHandle

    def assess(self, problem, solution_text) -> tuple[bool, str]:
        prompt = render_judge_prompt(problem.statement, problem.reference_answer, solution_text)
        response = self.gateway.complete(self.handle, CompletionRequest(prompt=prompt))
        try:
            obj = extract_first_json_object(response.text)
            return bool(obj["correct"]), str(obj.get("analysis", ""))
        except (SchemaError, KeyError) as exc:
            raise TransportError(f"judge reply unusable: {exc}") from exc
