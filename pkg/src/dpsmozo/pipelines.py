"""End-to-end private decoding pipelines.

Online: plan the budget once for at most ``n_test`` queries of ``t_max``
tokens, then answer queries with the private decoder behind a hard gate;
query ``n_test + 1`` is refused, whatever the earlier answers actually
spent. Offline: spend the budget once on synthesizing private demonstrations
from public inputs, after which any number of queries is answered by
non-private ensemble decoding over the synthetic set (post-processing of a
DP output adds no privacy cost).

Every stochastic choice derives its generator from (job seed, role, index),
so identical jobs produce identical artifacts and distinct queries could be
answered in parallel without changing results.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Sequence

from .accountant import AccountingInputs, BudgetPlan, plan_budget
from .decoder import DecodingConfig, GenerationRecord, dps_mozo_generate, ensemble_decode, subsample
from .errors import BudgetExhaustedError, ConfigError
from .fileio import read_jsonl
from .providers import Demonstration
from .rng import RNG_ALGORITHM, make_generator, stable_hex
from .solvers import BisectionSettings, LambdaBounds

__all__ = [
    "Query",
    "load_queries",
    "OnlineJob",
    "OfflineJob",
    "OnlineSession",
    "OnlineResult",
    "SyntheticDemoSet",
    "OfflineResult",
    "run_online",
    "run_offline",
]


@dataclass(frozen=True)
class Query:
    query_id: str
    text: str
    reference: str | None = None

    def __post_init__(self):
        if not self.query_id:
            raise ValueError("query id must be non-empty")


def load_queries(path) -> list[Query]:
    """Read a JSONL file of {id, input[, reference]} records."""
    queries = []
    seen = set()
    for i, rec in enumerate(read_jsonl(path)):
        try:
            query = Query(str(rec["id"]), str(rec["input"]), rec.get("reference"))
        except KeyError as exc:
            raise ValueError(f"{path}: record {i} is missing field {exc}") from exc
        if query.query_id in seen:
            raise ValueError(f"{path}: duplicate query id {query.query_id!r}")
        seen.add(query.query_id)
        queries.append(query)
    if not queries:
        raise ValueError(f"{path}: query file is empty")
    return queries


def _decoding_config(plan: BudgetPlan, top_k: int, t_max: int, eos_token_id: int,
                     template_id: str, lambda_bounds: LambdaBounds,
                     bisection: BisectionSettings) -> DecodingConfig:
    return DecodingConfig(
        n_shots=plan.inputs.n_shots,
        top_k=top_k,
        beta=plan.beta,
        alpha=plan.alpha,
        t_max=t_max,
        eos_token_id=eos_token_id,
        lambda_bounds=lambda_bounds,
        bisection=bisection,
        template_id=template_id,
    )


@dataclass(frozen=True)
class OnlineJob:
    """A budget, a pool, and the queries it is allowed to answer."""

    pool: tuple[Demonstration, ...]
    queries: tuple[Query, ...]
    accounting: AccountingInputs
    top_k: int
    seed: int
    template_id: str = "default"

    def __post_init__(self):
        object.__setattr__(self, "pool", tuple(self.pool))
        object.__setattr__(self, "queries", tuple(self.queries))
        if len(self.pool) != self.accounting.pool_size:
            raise ConfigError(
                f"pool has {len(self.pool)} records but accounting says {self.accounting.pool_size}"
            )
        if len(self.queries) > self.accounting.n_test:
            raise ConfigError(
                f"{len(self.queries)} queries exceed the planned allowance n_test={self.accounting.n_test}"
            )
        if self.top_k < 1:
            raise ConfigError("top_k must be >= 1")


class OnlineSession:
    """Reserve-then-decode gate around the private decoder.

    ``answer`` reserves one of the ``n_test`` planned slots under a lock
    before any provider call happens, so concurrent callers can never
    overspend; the (n_test + 1)-th call raises ``BudgetExhaustedError``.
    """

    def __init__(self, pool: Sequence[Demonstration], plan: BudgetPlan, provider,
                 top_k: int, seed: int, template_id: str = "default",
                 lambda_bounds: LambdaBounds = LambdaBounds(),
                 bisection: BisectionSettings = BisectionSettings()):
        self.pool = tuple(pool)
        self.plan = plan
        self.provider = provider
        self.seed = int(seed)
        self.config = _decoding_config(plan, top_k, plan.inputs.t_max, provider.eos_token_id,
                                       template_id, lambda_bounds, bisection)
        self._lock = threading.Lock()
        self._served = 0

    def answer(self, query: Query) -> GenerationRecord:
        with self._lock:
            if self._served >= self.plan.inputs.n_test:
                raise BudgetExhaustedError(
                    f"query allowance n_test={self.plan.inputs.n_test} is exhausted"
                )
            slot = self._served
            self._served += 1
        rng = make_generator(self.seed, "online-query", slot)
        return dps_mozo_generate(self.pool, query.query_id, query.text, self.config,
                                 self.provider, rng)

    @property
    def served(self) -> int:
        return self._served


@dataclass(frozen=True)
class OnlineResult:
    plan: BudgetPlan
    records: tuple[GenerationRecord, ...]
    metadata: dict


def _run_metadata(seed: int, provider, mode: str) -> dict:
    spec = provider.spec() if hasattr(provider, "spec") else {"kind": type(provider).__name__}
    return {
        "mode": mode,
        "seed": seed,
        "rng_algorithm": RNG_ALGORITHM,
        "provider_spec_hash": stable_hex("provider-spec", repr(sorted(spec.items()))),
        "provider_kind": spec.get("kind"),
    }


def run_online(job: OnlineJob, provider) -> OnlineResult:
    plan = plan_budget(job.accounting)
    session = OnlineSession(job.pool, plan, provider, job.top_k, job.seed, job.template_id)
    records = tuple(session.answer(query) for query in job.queries)
    return OnlineResult(plan, records, _run_metadata(job.seed, provider, "online"))


@dataclass(frozen=True)
class OfflineJob:
    """Synthesize private demonstrations once, answer queries forever after.

    ``t_max_synth`` caps each synthetic demonstration's length (it is the
    t_max the budget is planned over); ``n_shots_answer`` is how many
    synthetic demos each later answer draws.
    """

    pool: tuple[Demonstration, ...]
    public_inputs: tuple[Query, ...]
    epsilon: float
    delta: float
    n_shots: int
    top_k: int
    t_max_synth: int
    t_max_answer: int
    seed: int
    alpha: int | None = None
    n_shots_answer: int | None = None
    template_id: str = "default"

    def __post_init__(self):
        object.__setattr__(self, "pool", tuple(self.pool))
        object.__setattr__(self, "public_inputs", tuple(self.public_inputs))
        if not self.public_inputs:
            raise ConfigError("offline job needs at least one public input")
        pool_ids = {d.demo_id for d in self.pool}
        overlap = pool_ids & {q.query_id for q in self.public_inputs}
        if overlap:
            raise ConfigError(f"public inputs overlap the private pool by id: {sorted(overlap)[:3]}")

    @property
    def accounting(self) -> AccountingInputs:
        return AccountingInputs(
            epsilon=self.epsilon,
            delta=self.delta,
            pool_size=len(self.pool),
            n_shots=self.n_shots,
            n_test=len(self.public_inputs),
            t_max=self.t_max_synth,
            alpha=self.alpha,
        )


@dataclass(frozen=True)
class SyntheticDemoSet:
    """DP-synthesized demonstrations, tagged with their accounting report."""

    demos: tuple[Demonstration, ...]
    report_id: str


@dataclass(frozen=True)
class OfflineResult:
    plan: BudgetPlan
    synthetic: SyntheticDemoSet
    records: tuple[GenerationRecord, ...]
    answer: Callable[[Query], tuple[int, ...]]
    metadata: dict


def run_offline(job: OfflineJob, provider) -> OfflineResult:
    """DP-synthesize demos from public inputs, return an ungated answerer.

    The private pool is only touched while generating the synthetic set. The
    returned ``answer`` callable ensemble-decodes over demonstrations drawn
    from the synthetic set and never sees the pool, so it may be called any
    number of times.
    """
    accounting = job.accounting
    plan = plan_budget(accounting)
    cfg = _decoding_config(plan, job.top_k, job.t_max_synth, provider.eos_token_id,
                           job.template_id, LambdaBounds(), BisectionSettings())
    records = []
    demos = []
    for slot, public in enumerate(job.public_inputs):
        rng = make_generator(job.seed, "offline-synthesize", slot)
        record = dps_mozo_generate(job.pool, public.query_id, public.text, cfg, provider, rng)
        records.append(record)
        output_text = provider.detokenize(record.token_ids) if hasattr(provider, "detokenize") \
            else " ".join(str(t) for t in record.token_ids)
        demos.append(Demonstration(f"synthetic/{public.query_id}", public.text, output_text))
    synthetic = SyntheticDemoSet(tuple(demos), plan.report_id)

    n_answer = job.n_shots_answer if job.n_shots_answer is not None else min(job.n_shots, len(demos))
    if not (1 <= n_answer <= len(demos)):
        raise ConfigError("n_shots_answer must be in [1, number of synthetic demos]")
    answer_cfg = DecodingConfig(
        n_shots=n_answer, top_k=job.top_k, beta=plan.beta, alpha=plan.alpha,
        t_max=job.t_max_answer, eos_token_id=provider.eos_token_id,
        template_id=job.template_id,
    )
    counter = {"n": 0}
    lock = threading.Lock()

    def answer(query: Query) -> tuple[int, ...]:
        # Post-processing: no gate, fresh derived stream per call.
        with lock:
            slot = counter["n"]
            counter["n"] += 1
        rng = make_generator(job.seed, "offline-answer", slot)
        drawn = subsample(synthetic.demos, n_answer, rng)
        return ensemble_decode(drawn, query.text, answer_cfg, provider, rng)

    return OfflineResult(plan, synthetic, tuple(records), answer,
                         _run_metadata(job.seed, provider, "offline"))
