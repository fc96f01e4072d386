"""Co-evolutionary curriculum engine.

Orchestrates solver/teacher/generator agents (remote or simulated) over an
evolving, zone-classified problem curriculum; verifies solutions by rule-based
answer extraction with judge escalation; and emits preference-pair (DPO) and
utility-weighted (WSFT) training datasets for external trainers.
"""

from .agents import AgentBundle, RemoteJudge, RemoteSolver, RemoteTeacher, ResolveOutcome
from .answers import (
    ANSWER_TOLERANCE,
    CanonicalAnswer,
    ExtractionResult,
    answers_equal,
    canonicalize,
    extract_answer,
)
from .curriculum import (
    SEED_DISTRIBUTION,
    SUBJECT_AREAS,
    AddReport,
    CurriculumEntry,
    CurriculumStore,
    Problem,
    Zone,
    ZoneTransition,
    classify_zone,
    load_seed_manifest,
    problem_id,
)
from .distill import (
    FailureRecord,
    GaussianUtility,
    LinearUtility,
    RefinedRecord,
    WeightedExample,
    build_wsft_dataset,
    emit_wsft_dataset,
    estimate_utility,
    utility,
    wsft_objective,
)
from .errors import (
    AlignmentError,
    EngineError,
    GatewayTimeoutError,
    InvalidArgumentError,
    NotFoundError,
    RefinementError,
    SchemaError,
    SnapshotCorruptionError,
    SnapshotError,
    SnapshotVersionError,
    TemplateError,
    TransportError,
)
from .gateway import (
    AgentHandle,
    CompletionRequest,
    CompletionResponse,
    CompletionSlot,
    EndpointConfig,
    Gateway,
    RefinementTriple,
    RetryPolicy,
    SamplingParams,
    generator_refine,
    make_handle,
    solver_generate,
    teacher_grade,
    teacher_refine,
)
from .orchestrator import (
    IterationReport,
    RunConfig,
    collect_failures,
    filter_seed_candidates,
    load_latest_state,
    measure_validity_rate,
    run,
    run_iteration,
    validate_domain_distribution,
)
from .preference import (
    AttemptRecord,
    DpoConfig,
    PreferencePair,
    build_pairs,
    dpo_loss,
    dpo_loss_gradient,
    emit_dpo_dataset,
    partition_attempts,
    reference_attempt,
)
from .sim import (
    SimScenario,
    SimSolver,
    SimSolverState,
    SimTeacher,
    latent_difficulty,
    make_seed_problems,
    sim_refine,
    sim_solve,
    skill_update,
    solve_probability,
)
from .verify import (
    QualityDecision,
    Verdict,
    dual_verify,
    mean_at_k,
    parse_teacher_grading,
    quality_check,
)

__version__ = "0.1.0"
