"""Operator entry point: simulate, train, eval, bench-stability, serve-demo.

Exit codes: 0 success, 1 contract violation, 2 configuration error.  Every
command writes its fully-resolved configuration next to its outputs so any
artifact is reproducible from (seed, resolved config).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from .domain import ProtocolConfig, RerankConfig
from .features import FeatureConfig, feature_schema_document
from .model import ModelConfig, RankingModel
from .rerank import ModelScorer, adaptive_beam_search
from .serialize import load_model, save_model
from .sim import (
    ARMS,
    ServerStub,
    SimConfig,
    SyntheticUser,
    VideoPool,
    collect_rerank_triggers,
    read_events,
    run_experiment,
    run_session,
    split_sessions,
    validate_session,
    write_events,
)
from .training import evaluate_auc, examples_from_sessions, train_model

EXIT_OK = 0
EXIT_CONTRACT = 1
EXIT_CONFIG = 2


class ConfigError(Exception):
    pass


class ContractViolation(Exception):
    pass


def _dataclass_from_args(cls, args: argparse.Namespace, prefix: str = ""):
    kwargs = {}
    for f in dataclasses.fields(cls):
        attr = prefix + f.name
        if hasattr(args, attr) and getattr(args, attr) is not None:
            kwargs[f.name] = getattr(args, attr)
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e)) from e


def _add_protocol_args(p: argparse.ArgumentParser):
    p.add_argument("--page-consume-m", dest="page_consume_m", type=int)
    p.add_argument("--page-return-total", dest="page_return_total", type=int)


def _add_rerank_args(p: argparse.ArgumentParser):
    p.add_argument("--beam-size-k", dest="beam_size_k", type=int)
    p.add_argument("--n-show", dest="n_show", type=int)
    p.add_argument("--stability-threshold-t", dest="stability_threshold_t", type=float)
    p.add_argument("--alpha", dest="alpha", type=float)
    p.add_argument("--beta", dest="beta", type=float)
    p.add_argument("--max-steps", dest="max_steps", type=int)


def _write_resolved(outdir: Path, command: str, payload: dict):
    outdir.mkdir(parents=True, exist_ok=True)
    resolved = {"command": command, **payload}
    (outdir / "resolved_config.json").write_text(json.dumps(resolved, indent=2, sort_keys=True))
    print(json.dumps(resolved, sort_keys=True))


def _load_config_file(args) -> dict:
    if getattr(args, "config", None):
        return json.loads(Path(args.config).read_text())
    return {}


def _apply_config_file(args: argparse.Namespace, file_cfg: dict):
    # config file fills gaps; explicit flags win
    for k, v in file_cfg.items():
        attr = k.replace("-", "_")
        if getattr(args, attr, None) is None and hasattr(args, attr):
            setattr(args, attr, v)


def cmd_simulate(args) -> int:
    outdir = Path(args.out)
    protocol = _dataclass_from_args(ProtocolConfig, args)
    rerank_cfg = _dataclass_from_args(RerankConfig, args)
    sim_cfg = SimConfig()
    if args.arm not in ARMS:
        raise ConfigError(f"arm must be one of {ARMS}")
    scorer = None
    if args.arm != "server_order":
        if not args.model:
            raise ConfigError(f"arm {args.arm} requires --model")
        scorer = ModelScorer(load_model(args.model))
    pool = VideoPool.generate(sim_cfg, args.seed)
    stub = ServerStub(sim_cfg, pool, args.seed)
    all_events = []
    for s in range(args.sessions):
        user = SyntheticUser.generate(sim_cfg, args.seed, s % args.users)
        events = run_session(args.arm, user, stub, protocol, rerank_cfg, sim_cfg,
                             scorer, session_key=(args.seed, s))
        violations = validate_session(events, protocol)
        if violations:
            raise ContractViolation("; ".join(violations[:5]))
        all_events.extend(events)
    outdir.mkdir(parents=True, exist_ok=True)
    write_events(outdir / "events.ndjson", all_events)
    _write_resolved(outdir, "simulate", {
        "arm": args.arm, "sessions": args.sessions, "users": args.users, "seed": args.seed,
        "model": args.model, "protocol": dataclasses.asdict(protocol),
        "rerank": dataclasses.asdict(rerank_cfg), "sim": dataclasses.asdict(sim_cfg),
    })
    return EXIT_OK


def cmd_train(args) -> int:
    outdir = Path(args.out)
    logs = Path(args.logs)
    if not logs.exists():
        raise ConfigError(f"log file {logs} does not exist")
    try:
        sessions = split_sessions(read_events(logs))
    except (ValueError, KeyError, json.JSONDecodeError) as e:
        raise ConfigError(f"malformed log file: {e}") from e
    if not sessions:
        raise ConfigError("no sessions in log file")
    fc = FeatureConfig()
    mc = ModelConfig()
    n_holdout = max(1, int(len(sessions) * args.holdout_frac)) if args.holdout_frac else 0
    train_sessions = sessions[:len(sessions) - n_holdout] if n_holdout else sessions
    holdout_sessions = sessions[len(sessions) - n_holdout:] if n_holdout else []
    examples = examples_from_sessions(train_sessions, fc, include_history=not args.no_history)
    if not examples:
        raise ConfigError("no impressions in training sessions")
    model = RankingModel(model_config=mc, feature_config=fc, seed=args.seed)
    outdir.mkdir(parents=True, exist_ok=True)
    curve: list[tuple[int, float]] = []

    def checkpoint(step, loss):
        digest = save_model(model, outdir / f"checkpoint_{step:06d}.bin")
        curve.append((step, loss))
        print(f"checkpoint step={step} loss={loss:.5f} digest={digest[:12]}")

    losses = train_model(
        examples, model, epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
        seed=args.seed, checkpoint_cb=checkpoint,
        checkpoint_every=args.checkpoint_every,
    )
    digest = save_model(model, outdir / "model.bin")
    with open(outdir / "training_curve.tsv", "w") as f:
        f.write("step\tloss\n")
        for i, l in enumerate(losses):
            f.write(f"{i + 1}\t{l:.6f}\n")
    result = {"final_loss": losses[-1], "steps": len(losses), "digest": digest}
    if holdout_sessions:
        hold = examples_from_sessions(holdout_sessions, fc, include_history=not args.no_history)
        if hold:
            result["holdout_auc"] = evaluate_auc(model, hold)
    (outdir / "train_result.json").write_text(json.dumps(result, indent=2))
    _write_resolved(outdir, "train", {
        "logs": str(logs), "seed": args.seed, "epochs": args.epochs,
        "batch_size": args.batch_size, "lr": args.lr, "no_history": args.no_history,
        "holdout_frac": args.holdout_frac, "checkpoint_every": args.checkpoint_every,
        "digest": digest,
    })
    return EXIT_OK


def cmd_eval(args) -> int:
    outdir = Path(args.out)
    arms = args.arms.split(",")
    for a in arms:
        if a not in ARMS:
            raise ConfigError(f"unknown arm {a!r}")
    protocol = _dataclass_from_args(ProtocolConfig, args)
    rerank_cfg = _dataclass_from_args(RerankConfig, args)
    scorer = None
    if any(a != "server_order" for a in arms):
        if not args.model:
            raise ConfigError("model arms require --model")
        scorer = ModelScorer(load_model(args.model))
    report, _ = run_experiment(
        arms, args.users, args.sessions, args.seed,
        protocol=protocol, rerank_cfg=rerank_cfg, scorer=scorer,
    )
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "report.json").write_text(json.dumps(report.to_dict(), indent=2))
    with open(outdir / "per_position_like_rate.tsv", "w") as f:
        f.write("position\t" + "\t".join(arms) + "\n")
        for p in range(len(report.per_position[arms[0]])):
            f.write(str(p + 1) + "\t" + "\t".join(
                f"{report.per_position[a][p]:.6f}" for a in arms) + "\n")
    for a in arms:
        r = report.rates[a]
        print(f"{a}: like={r['like_rate']:.4f} ev={r['effective_view_rate']:.4f} "
              f"follow={r['follow_rate']:.4f} depth={r['mean_depth']:.2f}")
    for a, up in report.uplift.items():
        print(f"uplift {a} vs {report.base_arm}: like={up['like']['value']:+.4f} "
              f"CI [{up['like']['ci_low']:+.4f}, {up['like']['ci_high']:+.4f}]")
    _write_resolved(outdir, "eval", {
        "arms": arms, "sessions": args.sessions, "users": args.users, "seed": args.seed,
        "model": args.model, "protocol": dataclasses.asdict(protocol),
        "rerank": dataclasses.asdict(rerank_cfg),
    })
    return EXIT_OK


def cmd_bench_stability(args) -> int:
    outdir = Path(args.out)
    model = load_model(args.model) if args.model else RankingModel(seed=args.seed)
    scorer = ModelScorer(model)
    triggers = collect_rerank_triggers(args.triggers, args.seed, min_queue=args.steps)
    stab_by_step = [[] for _ in range(args.steps)]
    latency_by_step = [0.0] * args.steps
    for trig in triggers:
        full_cfg = RerankConfig(beam_size_k=args.beam_size_k, n_show=1,
                                stability_threshold_t=0.0, max_steps=args.steps)
        res = adaptive_beam_search(trig.queue, scorer, trig.history, trig.ctx, full_cfg)
        for d in res.diagnostics:
            stab_by_step[d.step - 1].append(d.stability)
        for s in range(1, args.steps + 1):
            cfg_s = RerankConfig(beam_size_k=args.beam_size_k, n_show=1,
                                 stability_threshold_t=0.0, max_steps=s)
            t0 = time.perf_counter()
            adaptive_beam_search(trig.queue, scorer, trig.history, trig.ctx, cfg_s)
            latency_by_step[s - 1] += time.perf_counter() - t0
    rows = []
    base_latency = latency_by_step[0] / len(triggers)
    for s in range(args.steps):
        rows.append({
            "step": s + 1,
            "mean_stability": statistics.fmean(stab_by_step[s]),
            "relative_latency": (latency_by_step[s] / len(triggers)) / base_latency,
        })
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "stability.tsv", "w") as f:
        f.write("step\tmean_stability\trelative_latency\n")
        for r in rows:
            f.write(f"{r['step']}\t{r['mean_stability']:.4f}\t{r['relative_latency']:.2f}\n")
    print("step\tmean_stability\trelative_latency")
    for r in rows:
        print(f"{r['step']}\t{r['mean_stability']:.4f}\t{r['relative_latency']:.2f}")
    (outdir / "stability.json").write_text(json.dumps(rows, indent=2))
    _write_resolved(outdir, "bench-stability", {
        "triggers": args.triggers, "seed": args.seed, "steps": args.steps,
        "beam_size_k": args.beam_size_k, "model": args.model,
    })
    return EXIT_OK


def cmd_validate_log(args) -> int:
    protocol = _dataclass_from_args(ProtocolConfig, args)
    sessions = split_sessions(read_events(args.logs))
    violations = []
    for i, sess in enumerate(sessions):
        for v in validate_session(sess, protocol):
            violations.append(f"session {i}: {v}")
    if violations:
        for v in violations:
            print(v, file=sys.stderr)
        return EXIT_CONTRACT
    print(f"{len(sessions)} sessions, no violations")
    return EXIT_OK


def cmd_schema(args) -> int:
    print(json.dumps(feature_schema_document(FeatureConfig()), indent=2))
    return EXIT_OK


def cmd_serve_demo(args) -> int:
    import uvicorn

    from .demo import create_app

    app = create_app(model_path=args.model, seed=args.seed, record_path=args.record)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edgerank")
    sub = parser.add_subparsers(dest="command", required=True)

    # mergeable options default to None so a --config file can fill them;
    # hard defaults are applied after the merge in main()
    p = sub.add_parser("simulate", help="run sessions for one arm, write event logs")
    p.add_argument("--arm", choices=ARMS)
    p.add_argument("--sessions", type=int)
    p.add_argument("--users", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--model")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON file with defaults; flags override")
    _add_protocol_args(p)
    _add_rerank_args(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train the ranking model from event logs")
    p.add_argument("--logs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=2)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--holdout-frac", type=float, default=0.1)
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--no-history", action="store_true",
                   help="ablation: train without the real-time watch sequence")
    p.add_argument("--config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="paired multi-arm experiment with report")
    p.add_argument("--arms")
    p.add_argument("--sessions", type=int)
    p.add_argument("--users", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--model")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    _add_protocol_args(p)
    _add_rerank_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench-stability", help="stability/latency by beam search step")
    p.add_argument("--triggers", type=int, default=50)
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--beam-size-k", dest="beam_size_k", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench_stability)

    p = sub.add_parser("validate-log", help="check event logs against the protocol")
    p.add_argument("--logs", required=True)
    _add_protocol_args(p)
    p.set_defaults(func=cmd_validate_log)

    p = sub.add_parser("schema", help="print the feature schema document")
    p.set_defaults(func=cmd_schema)

    p = sub.add_parser("serve-demo", help="interactive demo session over websocket")
    p.add_argument("--model", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--record", help="write the full message log to this ndjson file")
    p.set_defaults(func=cmd_serve_demo)

    return parser


_MERGED_DEFAULTS = {
    "simulate": {"arm": "server_order", "sessions": 100, "users": 20, "seed": 0},
    "eval": {"arms": "server_order,greedy,context_aware", "sessions": 200,
             "users": 50, "seed": 0},
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config_file(args, _load_config_file(args))
        for attr, value in _MERGED_DEFAULTS.get(args.command, {}).items():
            if getattr(args, attr, None) is None:
                setattr(args, attr, value)
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ContractViolation as e:
        print(f"contract violation: {e}", file=sys.stderr)
        return EXIT_CONTRACT
    except FileNotFoundError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
