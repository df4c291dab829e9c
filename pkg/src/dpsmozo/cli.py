"""Command-line front end.

Subcommands: ``account`` (privacy planning only), ``decode`` (answer queries
in one of five modes), ``mia`` (membership-inference harness), and ``trace``
(record a provider trace / replay a run from one). Runs are configured by a
JSON file; any flag given on the command line overrides the file value. All
artifacts are written atomically and contain no timestamps, so a job rerun
with the same seed produces byte-identical outputs.

Exit codes: 0 success, 2 configuration error, 3 privacy budget infeasible or
exhausted, 4 provider failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .accountant import AccountingInputs, plan_budget, write_accounting_report
from .baseline_esa import EsaConfig, esa_answer
from .decoder import DecodingConfig, ensemble_decode, concat_decode, subsample
from .errors import BudgetError, ConfigError, ProviderError
from .evaluation import (
    MiaConfig,
    format_lambda_trace,
    lambda_trace_aggregate,
    mia_membership_score,
    mia_run,
    rouge_l_f1,
)
from .fileio import read_json, write_json, write_jsonl, atomic_write_text
from .pipelines import OnlineJob, OfflineJob, Query, load_queries, run_offline, run_online
from .presets import PRESETS
from .providers import (
    RecordingProvider,
    SyntheticEmbedder,
    TraceProvider,
    build_provider,
    load_demo_pool,
)
from .rng import RNG_ALGORITHM, make_generator, stable_hex

DECODE_MODES = ("online", "offline", "zero-shot", "few-shot-nonprivate", "esa")

# Flags that override the same-named config keys.
_OVERRIDE_KEYS = (
    "preset", "epsilon", "delta", "alpha", "pool_path", "queries_path",
    "public_inputs_path", "pool_size", "n_shots", "n_test", "t_max",
    "t_max_synth", "top_k", "seed", "template_id", "mode",
)


def _load_config(args: argparse.Namespace) -> dict:
    cfg = {}
    if getattr(args, "config", None):
        try:
            cfg = read_json(args.config)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {args.config}")
        except ValueError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}")
        if not isinstance(cfg, dict):
            raise ConfigError("config file must hold a JSON object")
    for key in _OVERRIDE_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    preset_name = cfg.get("preset")
    if preset_name is not None:
        preset = PRESETS.get(str(preset_name))
        if preset is None:
            raise ConfigError(f"unknown preset {preset_name!r} (have: {', '.join(sorted(PRESETS))})")
        defaults = {
            "pool_size": preset.pool_size,
            "t_max": preset.t_max,
            "t_max_synth": preset.t_max_synth,
            "top_k": preset.top_k,
            "n_shots": preset.n_shots,
            "n_test": preset.n_test,
        }
        for key, value in defaults.items():
            cfg.setdefault(key, value)
    cfg.setdefault("seed", 0)
    cfg.setdefault("template_id", "default")
    cfg.setdefault("top_k", 100)
    return cfg


def _require(cfg: dict, key: str):
    if cfg.get(key) is None:
        raise ConfigError(f"missing required setting {key!r} (config key or flag)")
    return cfg[key]


def _build_provider(cfg: dict):
    spec = cfg.get("provider")
    if not isinstance(spec, dict):
        raise ConfigError('config needs a "provider" object, e.g. {"kind": "synthetic"}')
    try:
        return build_provider(spec)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad provider spec: {exc}") from exc


def _build_embedder(cfg: dict, provider):
    spec = cfg.get("embedder", {"kind": "synthetic"})
    kind = spec.get("kind", "synthetic")
    if kind == "synthetic":
        return SyntheticEmbedder(dim=int(spec.get("dim", 64)), seed=int(spec.get("seed", 0)))
    if kind == "provider":
        if not hasattr(provider, "embed"):
            raise ConfigError("provider has no embedding endpoint")
        return provider
    raise ConfigError(f"unknown embedder kind {kind!r}")


def _load_pool(cfg: dict):
    return load_demo_pool(_require(cfg, "pool_path"))


def _accounting_inputs(cfg: dict, pool_size: int, n_test: int, t_max: int) -> AccountingInputs:
    epsilon = float(_require(cfg, "epsilon"))
    if epsilon == 0.0:
        raise ConfigError("epsilon = 0 is not an accounting target; use zero-shot mode instead")
    delta = cfg.get("delta")
    delta = 1.0 / pool_size if delta is None else float(delta)
    alpha = cfg.get("alpha")
    try:
        return AccountingInputs(
            epsilon=epsilon, delta=delta, pool_size=pool_size,
            n_shots=int(_require(cfg, "n_shots")), n_test=n_test, t_max=t_max,
            alpha=None if alpha is None else int(alpha),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _metadata(cfg: dict, provider) -> dict:
    spec = provider.spec() if hasattr(provider, "spec") else {"kind": type(provider).__name__}
    echo = {k: v for k, v in sorted(cfg.items())}
    return {
        "package_version": __version__,
        "rng_algorithm": RNG_ALGORITHM,
        "seed": int(cfg.get("seed", 0)),
        "provider_spec_hash": stable_hex("provider-spec", repr(sorted(spec.items()))),
        "config": echo,
    }


def _text_of(provider, token_ids) -> str:
    if hasattr(provider, "detokenize"):
        return provider.detokenize(list(token_ids))
    return " ".join(str(t) for t in token_ids)


def _write_answers(path, rows) -> None:
    write_jsonl(path, rows)


def _write_metrics(out_dir: Path, rows, queries) -> None:
    refs = {q.query_id: q.reference for q in queries if q.reference is not None}
    if not refs:
        return
    scored = []
    for row in rows:
        ref = refs.get(row["query_id"])
        if ref is None:
            continue
        scored.append((row["query_id"], rouge_l_f1(row["text"], ref)))
    if not scored:
        return
    values = [s for _, s in scored]
    mean = sum(values) / len(values)
    std = (sum((v - mean) ** 2 for v in values) / len(values)) ** 0.5
    lines = ["query_id\trouge_l_f1"]
    lines += [f"{qid}\t{val:.6f}" for qid, val in scored]
    lines += [f"#mean\t{mean:.6f}", f"#std\t{std:.6f}"]
    atomic_write_text(out_dir / "metrics.tsv", "\n".join(lines) + "\n")


def cmd_account(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    pool_size = cfg.get("pool_size")
    if cfg.get("pool_path"):
        pool_size = len(load_demo_pool(cfg["pool_path"]))
    if pool_size is None:
        raise ConfigError("need pool_path, pool_size, or a preset to fix the pool size")
    inputs = _accounting_inputs(cfg, int(pool_size), int(_require(cfg, "n_test")),
                                int(_require(cfg, "t_max")))
    plan = plan_budget(inputs)
    out = args.out or "accounting.json"
    write_accounting_report(plan, out)
    print(f"alpha={plan.alpha} eps_tilde={plan.eps_tilde:.6f} "
          f"per_step_budget={plan.per_step_budget:.3e} beta={plan.beta:.6f} "
          f"per_step_eps={plan.per_step_eps:.3e} epsilon_realized={plan.epsilon_realized:.6f}")
    print(f"wrote {out}")
    return 0


def _decode_online(cfg: dict, provider, out_dir: Path) -> None:
    pool = _load_pool(cfg)
    queries = load_queries(_require(cfg, "queries_path"))
    n_test = int(cfg.get("n_test") or len(queries))
    inputs = _accounting_inputs(cfg, len(pool), n_test, int(_require(cfg, "t_max")))
    job = OnlineJob(tuple(pool), tuple(queries), inputs, int(cfg["top_k"]),
                    int(cfg["seed"]), cfg["template_id"])
    result = run_online(job, provider)
    rows = [
        {
            "query_id": rec.query_id,
            "token_ids": list(rec.token_ids),
            "text": _text_of(provider, rec.token_ids),
            "steps_used": rec.steps_used,
            "terminated_by": rec.terminated_by,
            "min_lambdas": list(rec.min_lambdas),
        }
        for rec in result.records
    ]
    _write_answers(out_dir / "answers.jsonl", rows)
    write_accounting_report(result.plan, out_dir / "accounting.json")
    atomic_write_text(out_dir / "lambda_trace.tsv",
                      format_lambda_trace(lambda_trace_aggregate(result.records)))
    _write_metrics(out_dir, rows, queries)
    write_json(out_dir / "metadata.json", {**_metadata(cfg, provider), "mode": "online"})


def _decode_offline(cfg: dict, provider, out_dir: Path) -> None:
    pool = _load_pool(cfg)
    public = load_queries(_require(cfg, "public_inputs_path"))
    queries = load_queries(_require(cfg, "queries_path"))
    job = OfflineJob(
        pool=tuple(pool), public_inputs=tuple(public),
        epsilon=float(_require(cfg, "epsilon")),
        delta=(1.0 / len(pool)) if cfg.get("delta") is None else float(cfg["delta"]),
        n_shots=int(_require(cfg, "n_shots")), top_k=int(cfg["top_k"]),
        t_max_synth=int(_require(cfg, "t_max_synth")), t_max_answer=int(_require(cfg, "t_max")),
        seed=int(cfg["seed"]), alpha=cfg.get("alpha"),
        template_id=cfg["template_id"],
    )
    result = run_offline(job, provider)
    write_jsonl(out_dir / "synthetic_demos.jsonl", [
        {"id": d.demo_id, "input": d.input_text, "output": d.output_text,
         "report_id": result.synthetic.report_id}
        for d in result.synthetic.demos
    ])
    rows = []
    for query in queries:
        token_ids = result.answer(query)
        rows.append({
            "query_id": query.query_id,
            "token_ids": list(token_ids),
            "text": _text_of(provider, token_ids),
            "steps_used": len(token_ids),
        })
    _write_answers(out_dir / "answers.jsonl", rows)
    write_accounting_report(result.plan, out_dir / "accounting.json")
    _write_metrics(out_dir, rows, queries)
    write_json(out_dir / "metadata.json", {**_metadata(cfg, provider), "mode": "offline"})


def _decode_simple(cfg: dict, provider, out_dir: Path, mode: str) -> None:
    """zero-shot / few-shot / esa: non-accounted decoding over the query file."""
    queries = load_queries(_require(cfg, "queries_path"))
    t_max = int(_require(cfg, "t_max"))
    top_k = int(cfg["top_k"])
    seed = int(cfg["seed"])
    rows = []
    if mode == "zero-shot":
        decode_cfg = DecodingConfig(n_shots=1, top_k=top_k, beta=0.0, alpha=2, t_max=t_max,
                                    eos_token_id=provider.eos_token_id,
                                    template_id=cfg["template_id"])
        for i, query in enumerate(queries):
            rng = make_generator(seed, "zero-shot-query", i)
            token_ids = concat_decode([], query.text, decode_cfg, provider, rng)
            rows.append({"query_id": query.query_id, "token_ids": list(token_ids),
                         "text": _text_of(provider, token_ids), "steps_used": len(token_ids)})
    elif mode == "few-shot-nonprivate":
        pool = _load_pool(cfg)
        n_shots = int(_require(cfg, "n_shots"))
        decode_cfg = DecodingConfig(n_shots=n_shots, top_k=top_k, beta=0.0, alpha=2, t_max=t_max,
                                    eos_token_id=provider.eos_token_id,
                                    template_id=cfg["template_id"])
        for i, query in enumerate(queries):
            rng = make_generator(seed, "few-shot-query", i)
            demos = subsample(pool, n_shots, rng)
            token_ids = ensemble_decode(demos, query.text, decode_cfg, provider, rng)
            rows.append({"query_id": query.query_id, "token_ids": list(token_ids),
                         "text": _text_of(provider, token_ids), "steps_used": len(token_ids)})
    elif mode == "esa":
        pool = _load_pool(cfg)
        esa = cfg.get("esa")
        if not isinstance(esa, dict):
            raise ConfigError('esa mode needs an "esa" config object')
        try:
            esa_cfg = EsaConfig(
                sigma=float(esa["sigma"]), top_k=top_k, t_max=t_max,
                n_subsets=int(esa.get("n_subsets", 100)),
                subset_size=int(esa.get("subset_size", 4)),
                n_candidates=int(esa.get("n_candidates", 100)),
                template_id=cfg["template_id"],
            )
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad esa config: {exc}") from exc
        embedder = _build_embedder(cfg, provider)
        for i, query in enumerate(queries):
            rng = make_generator(seed, "esa-query", i)
            result = esa_answer(pool, query.text, esa_cfg, provider, embedder, rng)
            rows.append({"query_id": query.query_id, "text": result.candidate_text,
                         "candidate_index": result.candidate_index})
    else:
        raise ConfigError(f"unknown decode mode {mode!r}")
    _write_answers(out_dir / "answers.jsonl", rows)
    _write_metrics(out_dir, rows, queries)
    meta = {**_metadata(cfg, provider), "mode": mode}
    if mode == "esa":
        meta["normalize_embeddings"] = True
    write_json(out_dir / "metadata.json", meta)


def _run_decode(cfg: dict, provider, out_dir: Path) -> None:
    mode = cfg.get("mode") or "online"
    if mode not in DECODE_MODES:
        raise ConfigError(f"unknown decode mode {mode!r} (have: {', '.join(DECODE_MODES)})")
    out_dir.mkdir(parents=True, exist_ok=True)
    if mode == "online":
        _decode_online(cfg, provider, out_dir)
    elif mode == "offline":
        _decode_offline(cfg, provider, out_dir)
    else:
        _decode_simple(cfg, provider, out_dir, mode)


def cmd_decode(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    provider = _build_provider(cfg)
    _run_decode(cfg, provider, Path(args.out_dir))
    print(f"wrote {args.out_dir}")
    return 0


def cmd_mia(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    provider = _build_provider(cfg)
    pool = _load_pool(cfg)
    mia = cfg.get("mia", {})
    mia_cfg = MiaConfig(
        test_pool_size=int(mia.get("test_pool_size", 51)),
        repetitions=int(mia.get("repetitions", 5)),
        seed=int(cfg["seed"]),
        per_attack=bool(mia.get("per_attack", False)),
    )
    if not hasattr(provider, "token_for_label"):
        raise ConfigError("mia needs a provider exposing token_for_label")

    def score_fn(member, query, rng):
        return mia_membership_score(provider, member, query.input_text, query.output_text,
                                    cfg["template_id"])

    result = mia_run(pool, score_fn, mia_cfg)
    out = args.out or "mia_report.json"
    write_json(out, {
        "auc_mean": result.auc_mean,
        "auc_std": result.auc_std,
        "auc_per_repetition": list(result.auc_per_repetition),
        "test_pool_size": mia_cfg.test_pool_size,
        "repetitions": mia_cfg.repetitions,
        "per_attack": mia_cfg.per_attack,
        "seed": mia_cfg.seed,
    })
    print(f"auc_mean={result.auc_mean:.4f} auc_std={result.auc_std:.4f}")
    print(f"wrote {out}")
    return 0


def cmd_trace(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    out_dir = Path(args.out_dir)
    if args.trace_action == "record":
        provider = RecordingProvider(_build_provider(cfg))
        _run_decode(cfg, provider, out_dir)
        provider.write_trace(args.trace, sidecar=not args.no_sidecar)
        print(f"recorded {len(provider.records)} contexts to {args.trace}")
    else:
        provider = TraceProvider.from_files(args.trace)
        _run_decode(cfg, provider, out_dir)
        print(f"replayed from {args.trace}")
    print(f"wrote {out_dir}")
    return 0


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--preset", help="named preset (samsum, e2e, wikilarge)")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--alpha", type=int)
    p.add_argument("--pool", dest="pool_path", help="demo pool JSONL ({id, input, output})")
    p.add_argument("--pool-size", dest="pool_size", type=int,
                   help="pool size for accounting when no pool file is read")
    p.add_argument("--queries", dest="queries_path", help="queries JSONL ({id, input[, reference]})")
    p.add_argument("--public-inputs", dest="public_inputs_path",
                   help="public inputs JSONL for offline synthesis")
    p.add_argument("--n-shots", dest="n_shots", type=int)
    p.add_argument("--n-test", dest="n_test", type=int)
    p.add_argument("--t-max", dest="t_max", type=int)
    p.add_argument("--t-max-synth", dest="t_max_synth", type=int)
    p.add_argument("--top-k", dest="top_k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--template-id", dest="template_id")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dpsmozo",
                                     description="Differentially private in-context decoding")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_account = sub.add_parser("account", help="plan a privacy budget and write the report")
    _add_common_flags(p_account)
    p_account.add_argument("--out", help="report path (default accounting.json)")
    p_account.set_defaults(fn=cmd_account)

    p_decode = sub.add_parser("decode", help="answer queries in one of the decode modes")
    _add_common_flags(p_decode)
    p_decode.add_argument("--mode", choices=DECODE_MODES)
    p_decode.add_argument("--out-dir", required=True)
    p_decode.set_defaults(fn=cmd_decode)

    p_mia = sub.add_parser("mia", help="run the membership-inference harness")
    _add_common_flags(p_mia)
    p_mia.add_argument("--out", help="report path (default mia_report.json)")
    p_mia.set_defaults(fn=cmd_mia)

    p_trace = sub.add_parser("trace", help="record or replay a provider trace")
    p_trace_sub = p_trace.add_subparsers(dest="trace_action", required=True)
    for action in ("record", "replay"):
        p = p_trace_sub.add_parser(action)
        _add_common_flags(p)
        p.add_argument("--mode", choices=DECODE_MODES)
        p.add_argument("--trace", required=True, help="trace JSONL path")
        p.add_argument("--out-dir", required=True)
        if action == "record":
            p.add_argument("--no-sidecar", action="store_true",
                           help="skip the bit-exact float64 sidecar")
        p.set_defaults(fn=cmd_trace)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BudgetError as exc:
        print(f"budget error: {exc}", file=sys.stderr)
        return 3
    except ProviderError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
