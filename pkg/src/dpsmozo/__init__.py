"""Differentially private in-context learning by mixing one-shot and
zero-shot next-token distributions under a per-step Renyi divergence cap.

The public surface is re-exported here; everything else is internal.
"""

from .accountant import (
    AccountingInputs,
    BudgetPlan,
    RdpCurve,
    compose,
    dp_to_rdp,
    mozo_curve,
    plan_budget,
    rdp_to_dp,
    select_alpha,
    subsampled_rdp,
    write_accounting_report,
)
from .baseline_esa import EsaConfig, EsaResult, esa_answer, partition_pool
from .decoder import (
    DecodingConfig,
    GenerationRecord,
    concat_decode,
    dps_mozo_generate,
    dps_mozo_step,
    ensemble_decode,
    mozo_step_distribution,
    subsample,
)
from .dist import (
    LogitVector,
    LogProbDist,
    log_softmax,
    mix_logits,
    product_distribution,
    renyi_divergence,
    sample_token,
    sym_renyi_divergence,
    top_k_indices,
    truncate_to_support,
)
from .errors import (
    BudgetError,
    BudgetExhaustedError,
    BudgetInfeasibleError,
    ConfigError,
    ProviderError,
    RemoteTransportError,
    UncoveredContextError,
)
from .evaluation import (
    MiaConfig,
    MiaResult,
    auc_roc,
    format_lambda_trace,
    lambda_trace_aggregate,
    mia_membership_score,
    mia_run,
    rouge_l_f1,
)
from .pipelines import (
    OfflineJob,
    OfflineResult,
    OnlineJob,
    OnlineResult,
    OnlineSession,
    Query,
    load_queries,
    run_offline,
    run_online,
)
from .presets import PRESETS, DatasetPreset
from .providers import (
    CallAuditProvider,
    Demonstration,
    PromptContext,
    RecordingProvider,
    RemoteProvider,
    SyntheticEmbedder,
    SyntheticProvider,
    TraceProvider,
    build_provider,
    context_key,
    load_demo_pool,
)
from .rng import RNG_ALGORITHM, make_generator, stable_digest, stable_hex, stable_seed
from .solvers import (
    BisectionSettings,
    LambdaBounds,
    bisect_max_feasible,
    solve_beta,
    solve_lambda,
)

__version__ = "0.1.0"

__all__ = [
    "AccountingInputs",
    "BudgetError",
    "BudgetExhaustedError",
    "BudgetInfeasibleError",
    "BudgetPlan",
    "BisectionSettings",
    "CallAuditProvider",
    "ConfigError",
    "DatasetPreset",
    "DecodingConfig",
    "Demonstration",
    "EsaConfig",
    "EsaResult",
    "GenerationRecord",
    "LambdaBounds",
    "LogProbDist",
    "LogitVector",
    "MiaConfig",
    "MiaResult",
    "OfflineJob",
    "OfflineResult",
    "OnlineJob",
    "OnlineResult",
    "OnlineSession",
    "PRESETS",
    "PromptContext",
    "ProviderError",
    "Query",
    "RNG_ALGORITHM",
    "RdpCurve",
    "RecordingProvider",
    "RemoteProvider",
    "RemoteTransportError",
    "SyntheticEmbedder",
    "SyntheticProvider",
    "TraceProvider",
    "UncoveredContextError",
    "auc_roc",
    "bisect_max_feasible",
    "build_provider",
    "compose",
    "concat_decode",
    "context_key",
    "dp_to_rdp",
    "dps_mozo_generate",
    "dps_mozo_step",
    "ensemble_decode",
    "esa_answer",
    "format_lambda_trace",
    "lambda_trace_aggregate",
    "load_demo_pool",
    "load_queries",
    "log_softmax",
    "make_generator",
    "mia_membership_score",
    "mia_run",
    "mix_logits",
    "mozo_curve",
    "mozo_step_distribution",
    "partition_pool",
    "plan_budget",
    "product_distribution",
    "rdp_to_dp",
    "renyi_divergence",
    "rouge_l_f1",
    "run_offline",
    "run_online",
    "sample_token",
    "select_alpha",
    "solve_beta",
    "solve_lambda",
    "stable_digest",
    "stable_hex",
    "stable_seed",
    "subsample",
    "subsampled_rdp",
    "sym_renyi_divergence",
    "top_k_indices",
    "truncate_to_support",
    "write_accounting_report",
]
