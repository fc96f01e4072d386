"""Uniform access to solver/teacher/generator/judge backends.

Speaks OpenAI-compatible chat completions over HTTP with per-endpoint
connection pooling (blocking admission, never rejection), exponential backoff
with jitter, least-loaded endpoint selection, and failover: an endpoint that
fails repeatedly is benched for a cool-down before rejoining rotation.
Timeouts surface as a distinct error type so callers can tell them from
generic transport failures.
"""

from __future__ import annotations

import logging
import os
import random
import threading
import time
from dataclasses import dataclass, field, replace

import httpx

from .errors import (
    GatewayTimeoutError,
    InvalidArgumentError,
    RefinementError,
    SchemaError,
    TransportError,
)
from .jsonio import extract_first_json_object
from .prompts import (
    render_grading_prompt,
    render_refinement_prompt,
    render_solver_prompt,
)

logger = logging.getLogger(__name__)

DEFAULT_MAX_CONNECTIONS = 50
DEFAULT_REQUEST_TIMEOUT = 600.0
DEFAULT_MAX_COMPLETION_TOKENS = 4096
UNHEALTHY_THRESHOLD = 3
COOLDOWN_SECONDS = 30.0
# Within one request an endpoint is retried at most this many times before
# rotation prefers an alternative (when one exists).
PER_REQUEST_ENDPOINT_FAILURES = 2
# Rough prompt-budget conversion used when truncating oversized inputs.
CHARS_PER_TOKEN = 4


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 4
    base_delay: float = 0.5
    multiplier: float = 2.0
    jitter: float = 0.1
    max_delay: float = 60.0

    def __post_init__(self):
        if self.max_attempts < 1:
            raise InvalidArgumentError("max_attempts must be at least 1")
        if not self.base_delay > 0:
            raise InvalidArgumentError("base_delay must be positive")
        if not 0.0 <= self.jitter < 1.0:
            raise InvalidArgumentError("jitter must be in [0, 1)")
        # multiplier must outpace jitter so delays stay strictly increasing
        if not self.multiplier > 1.0 + self.jitter:
            raise InvalidArgumentError("multiplier must exceed 1 + jitter")

    def delay(self, retry_index: int, u: float) -> float:
        raw = self.base_delay * (self.multiplier**retry_index) * (1.0 + self.jitter * u)
        return min(self.max_delay, raw)


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    credential_env: str | None = None
    model: str = "default"
    max_connections: int = DEFAULT_MAX_CONNECTIONS
    request_timeout: float = DEFAULT_REQUEST_TIMEOUT
    max_completion_tokens: int = DEFAULT_MAX_COMPLETION_TOKENS
    retry: RetryPolicy = field(default_factory=RetryPolicy)

    def __post_init__(self):
        if self.max_connections < 1:
            raise InvalidArgumentError("max_connections must be at least 1")
        if not self.request_timeout > 0:
            raise InvalidArgumentError("request_timeout must be positive")
        if self.max_completion_tokens < 1:
            raise InvalidArgumentError("max_completion_tokens must be at least 1")


@dataclass(frozen=True)
class SamplingParams:
    temperature: float = 0.7
    top_p: float = 0.9
    n: int = 1


@dataclass(frozen=True)
class AgentHandle:
    role: str  # "solver" | "teacher" | "generator" | "judge"
    endpoints: tuple[EndpointConfig, ...]
    prompt_template: str
    default_sampling: SamplingParams

    def __post_init__(self):
        if not self.endpoints:
            raise InvalidArgumentError("handle needs at least one endpoint")


_ROLE_DEFAULTS = {
    "solver": ("solver", 0.7),
    "teacher": ("teacher_grading", 0.1),
    "generator": ("teacher_refinement", 0.7),
    "judge": ("judge", 0.1),
}


def make_handle(
    role: str,
    endpoints,
    *,
    prompt_template: str | None = None,
    temperature: float | None = None,
    top_p: float = 0.9,
) -> AgentHandle:
    if role not in _ROLE_DEFAULTS:
        raise InvalidArgumentError(f"unknown role {role!r}")
    default_template, default_temperature = _ROLE_DEFAULTS[role]
    return AgentHandle(
        role=role,
        endpoints=tuple(endpoints),
        prompt_template=prompt_template or default_template,
        default_sampling=SamplingParams(
            temperature=default_temperature if temperature is None else temperature,
            top_p=top_p,
        ),
    )


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    temperature: float | None = None
    top_p: float | None = None
    max_tokens: int | None = None


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    finish_reason: str
    latency: float
    endpoint: str
    attempt_count: int


@dataclass(frozen=True)
class AttemptLogEntry:
    endpoint: str
    outcome: str  # "ok" | "timeout" | "transport" | "http_<code>" | "bad_response"
    latency: float


@dataclass(frozen=True)
class CompletionSlot:
    """One slot of a batched generation; either text or an error marker."""

    index: int
    text: str | None = None
    error: str | None = None
    response: CompletionResponse | None = None


class _EndpointRuntime:
    def __init__(self, config: EndpointConfig):
        self.config = config
        self.semaphore = threading.Semaphore(config.max_connections)
        self.in_flight = 0
        self.consecutive_failures = 0
        self.unhealthy_until = 0.0
        self.client: httpx.Client | None = None


class Gateway:
    """Thread-safe request router; safe for concurrent use from many workers."""

    def __init__(
        self,
        *,
        sleeper=time.sleep,
        clock=time.monotonic,
        rng: random.Random | None = None,
        unhealthy_threshold: int = UNHEALTHY_THRESHOLD,
        cooldown: float = COOLDOWN_SECONDS,
        per_request_endpoint_failures: int = PER_REQUEST_ENDPOINT_FAILURES,
    ):
        self._sleeper = sleeper
        self._clock = clock
        self._rng = rng or random.Random()
        self._unhealthy_threshold = unhealthy_threshold
        self._cooldown = cooldown
        self._per_request_failures = per_request_endpoint_failures
        self._lock = threading.Lock()
        self._runtimes: dict[EndpointConfig, _EndpointRuntime] = {}

    def close(self) -> None:
        with self._lock:
            for runtime in self._runtimes.values():
                if runtime.client is not None:
                    runtime.client.close()
                    runtime.client = None

    def __enter__(self) -> "Gateway":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    # -- endpoint management -------------------------------------------------

    def _runtime(self, config: EndpointConfig) -> _EndpointRuntime:
        with self._lock:
            runtime = self._runtimes.get(config)
            if runtime is None:
                runtime = _EndpointRuntime(config)
                self._runtimes[config] = runtime
            return runtime

    def _client(self, runtime: _EndpointRuntime) -> httpx.Client:
        with self._lock:
            if runtime.client is None:
                config = runtime.config
                runtime.client = httpx.Client(
                    base_url=config.base_url,
                    timeout=config.request_timeout,
                    limits=httpx.Limits(
                        max_connections=config.max_connections,
                        max_keepalive_connections=config.max_connections,
                    ),
                )
            return runtime.client

    def _select(self, handle: AgentHandle, request_failures: dict) -> _EndpointRuntime | None:
        runtimes = [self._runtime(ep) for ep in handle.endpoints]
        for _ in range(2):
            with self._lock:
                now = self._clock()
                healthy = [
                    (idx, rt) for idx, rt in enumerate(runtimes) if rt.unhealthy_until <= now
                ]
                if healthy:
                    preferred = [
                        (idx, rt)
                        for idx, rt in healthy
                        if request_failures.get(rt.config, 0) < self._per_request_failures
                    ] or healthy
                    preferred.sort(key=lambda item: (item[1].in_flight, item[0]))
                    return preferred[0][1]
                wait = min(rt.unhealthy_until for rt in runtimes) - now
            if wait > 0:
                logger.info("all endpoints benched; waiting %.2fs for cool-down", wait)
                self._sleeper(wait)
        return None

    def _mark_failure(self, runtime: _EndpointRuntime) -> None:
        with self._lock:
            runtime.consecutive_failures += 1
            if runtime.consecutive_failures >= self._unhealthy_threshold:
                runtime.unhealthy_until = self._clock() + self._cooldown
                runtime.consecutive_failures = 0
                logger.warning(
                    "endpoint %s benched for %.1fs", runtime.config.base_url, self._cooldown
                )

    def _mark_success(self, runtime: _EndpointRuntime) -> None:
        with self._lock:
            runtime.consecutive_failures = 0

    # -- request path ---------------------------------------------------------

    def complete(self, handle: AgentHandle, request: CompletionRequest) -> CompletionResponse:
        """Send one chat completion, retrying with backoff across endpoints.

        Endpoint choice is least-in-flight with ties broken by list order; a
        retried endpoint is skipped once it has failed twice within this
        request while alternatives remain. Raises a timeout error when the
        final failure was a timeout, a transport error otherwise; both carry
        the per-endpoint attempt log.
        """
        policy = handle.endpoints[0].retry
        attempts_log: list[AttemptLogEntry] = []
        request_failures: dict[EndpointConfig, int] = {}
        last_kind = "transport"
        for attempt in range(1, policy.max_attempts + 1):
            runtime = self._select(handle, request_failures)
            if runtime is None:
                break
            response, kind, latency = self._attempt(runtime, handle, request)
            attempts_log.append(
                AttemptLogEntry(endpoint=runtime.config.base_url, outcome=kind, latency=latency)
            )
            if response is not None:
                self._mark_success(runtime)
                return replace(response, attempt_count=attempt)
            last_kind = kind
            request_failures[runtime.config] = request_failures.get(runtime.config, 0) + 1
            self._mark_failure(runtime)
            if attempt < policy.max_attempts:
                self._sleeper(policy.delay(attempt - 1, self._rng.random()))
        error_cls = GatewayTimeoutError if last_kind == "timeout" else TransportError
        raise error_cls(
            f"request failed after {len(attempts_log)} attempt(s); last outcome: {last_kind}",
            attempts=[entry.__dict__ for entry in attempts_log],
        )

    def _attempt(
        self, runtime: _EndpointRuntime, handle: AgentHandle, request: CompletionRequest
    ) -> tuple[CompletionResponse | None, str, float]:
        config = runtime.config
        sampling = handle.default_sampling
        max_tokens = min(
            request.max_tokens or config.max_completion_tokens, config.max_completion_tokens
        )
        payload = {
            "model": config.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": sampling.temperature
            if request.temperature is None
            else request.temperature,
            "top_p": sampling.top_p if request.top_p is None else request.top_p,
            "n": 1,
            "max_tokens": max_tokens,
        }
        headers = {}
        if config.credential_env:
            credential = os.environ.get(config.credential_env)
            if not credential:
                raise InvalidArgumentError(
                    f"credential environment variable {config.credential_env!r} is not set"
                )
            headers["Authorization"] = f"Bearer {credential}"

        client = self._client(runtime)
        runtime.semaphore.acquire()
        with self._lock:
            runtime.in_flight += 1
        start = self._clock()
        try:
            try:
                http_response = client.post("/chat/completions", json=payload, headers=headers)
            except httpx.TimeoutException:
                return None, "timeout", self._clock() - start
            except (httpx.HTTPError, OSError) as exc:
                logger.debug("transport failure on %s: %s", config.base_url, exc)
                return None, "transport", self._clock() - start
            latency = self._clock() - start
            if http_response.status_code // 100 != 2:
                return None, f"http_{http_response.status_code}", latency
            try:
                data = http_response.json()
                choice = data["choices"][0]
                text = choice["message"]["content"]
                finish = choice.get("finish_reason", "stop")
            except (KeyError, IndexError, TypeError, ValueError):
                return None, "bad_response", latency
            return (
                CompletionResponse(
                    text=text,
                    finish_reason=finish,
                    latency=latency,
                    endpoint=config.base_url,
                    attempt_count=0,
                ),
                "ok",
                latency,
            )
        finally:
            with self._lock:
                runtime.in_flight -= 1
            runtime.semaphore.release()


# -- role operations -----------------------------------------------------------


def solver_generate(
    gateway: Gateway,
    handle: AgentHandle,
    problem,
    n: int,
    temperature: float | None = None,
) -> list[CompletionSlot]:
    """n independent completions of the solver prompt, in request order.

    Individual failures become per-slot error markers rather than voiding the
    remaining completions; the caller decides policy for partial delivery.
    """
    if n < 1:
        raise InvalidArgumentError("n must be at least 1")
    prompt = render_solver_prompt(problem.statement)
    slots: list[CompletionSlot] = []
    for index in range(n):
        try:
            response = gateway.complete(
                handle, CompletionRequest(prompt=prompt, temperature=temperature)
            )
        except TransportError as exc:
            slots.append(CompletionSlot(index=index, error=str(exc)))
        else:
            slots.append(CompletionSlot(index=index, text=response.text, response=response))
    return slots


def teacher_grade(
    gateway: Gateway, handle: AgentHandle, problem, reference: str | None, attempts
) -> str:
    """Render the grading prompt and return the raw grading reply text."""
    attempts = list(attempts)
    if not attempts:
        raise InvalidArgumentError("attempts must be non-empty")
    student_answers = "\n".join(f"{i + 1}. {text}" for i, text in enumerate(attempts))
    budget = handle.endpoints[0].max_completion_tokens * CHARS_PER_TOKEN
    if len(student_answers) > budget:
        student_answers = student_answers[:budget] + "\n[truncated]"
        logger.warning(
            "student answers for %s truncated to %d chars", getattr(problem, "id", "?"), budget
        )
    prompt = render_grading_prompt(problem.statement, reference, student_answers)
    return gateway.complete(handle, CompletionRequest(prompt=prompt)).text


@dataclass(frozen=True)
class RefinementTriple:
    enhanced_question: str
    solution: str
    answer: str


def teacher_refine(
    gateway: Gateway, handle: AgentHandle, problem, error_analysis: str
) -> RefinementTriple:
    """Ask for an enhanced problem; parse the {enhanced_question, solution,
    answer} reply (extra keys ignored). Schema failures become refinement
    errors; transport errors propagate."""
    prompt = render_refinement_prompt(problem.statement, error_analysis)
    response = gateway.complete(handle, CompletionRequest(prompt=prompt))
    try:
        obj = extract_first_json_object(response.text)
    except SchemaError as exc:
        raise RefinementError(f"refinement reply held no JSON object: {exc}") from exc
    missing = [k for k in ("enhanced_question", "solution", "answer") if k not in obj]
    if missing:
        raise RefinementError(f"refinement reply missing key(s): {', '.join(missing)}")
    question = str(obj["enhanced_question"]).strip()
    answer = str(obj["answer"]).strip()
    if not question or not answer:
        raise RefinementError("refinement reply has empty question or answer")
    return RefinementTriple(
        enhanced_question=question, solution=str(obj["solution"]), answer=answer
    )


def generator_refine(gateway: Gateway, handle: AgentHandle, problem, failed_solution: str) -> str:
    """One completion against the distilled generator; returns the new
    question text. The reference solution for it is obtained separately."""
    if not problem.statement or not failed_solution:
        raise InvalidArgumentError("problem statement and failed solution must be non-empty")
    prompt = render_refinement_prompt(problem.statement, failed_solution)
    text = gateway.complete(handle, CompletionRequest(prompt=prompt)).text.strip()
    if not text:
        raise RefinementError("generator returned an empty problem")
    return text
