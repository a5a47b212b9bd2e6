"""Command-line surface: generate benchmarks, score zoos, aggregate,
train, rank, evaluate, and export chart data.

Exit codes: 0 success, 1 I/O failure, 2 configuration or usage error,
3 capability error (an estimator asked for data a bank does not have).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .aggregate import ScoreVector, copeland_aggregate, dsc_order
from .banks import read_bank
from .errors import CapabilityError, FormatError, ValidationError, ZooRankError
from .estimators import METHODS, score_zoo
from .evaluate import evaluate, ranker_scores
from .metrics import spider_chart_data, weighted_kendall_tau, write_chart_csv, write_chart_json
from .ranker import load_params, rank_zoo, rerank_top_k, save_params
from .synth import ZooConfig, build_benchmark, load_benchmark, write_benchmark
from .tokens import build_task_token
from .training import LOSS_KINDS, TrainConfig, train

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_CAPABILITY = 3


class _UsageError(Exception):
    pass


def _load_json_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise _UsageError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise _UsageError(
            f"bad JSON in {path}: line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc


def _build_config(cls, overrides, path=None):
    values = {}
    if path is not None:
        raw = _load_json_config(path)
        if not isinstance(raw, dict):
            raise _UsageError(f"config {path} must be a JSON object")
        fields = {f.name for f in dataclasses.fields(cls)}
        for key, value in raw.items():
            if key not in fields:
                raise _UsageError(f"unknown config key {key!r} for {cls.__name__}")
            values[key] = tuple(value) if isinstance(value, list) else value
    values.update(overrides)
    try:
        return cls(**values)
    except (TypeError, ValidationError) as exc:
        raise _UsageError(str(exc)) from exc


def _read_task_dir(path):
    """A task directory: probe/ bank plus models/<model_id>/ banks."""
    path = Path(path)
    models_dir = path / "models"
    if not models_dir.is_dir():
        raise FormatError(f"no models/ directory under {path}")
    probe = read_bank(path / "probe") if (path / "probe").is_dir() else None
    banks = {p.name: read_bank(p) for p in sorted(models_dir.iterdir()) if p.is_dir()}
    if not banks:
        raise FormatError(f"no model banks under {models_dir}")
    return probe, banks


def _print_score_table(model_ids, values, header, json_out, extra=None):
    order = dsc_order(np.asarray(values, dtype=np.float64)).order
    if json_out:
        payload = {
            "method": header,
            "model_ids": list(model_ids),
            "scores": [float(v) for v in values],
        }
        if extra:
            payload.update(extra)
        print(json.dumps(payload, sort_keys=True))
        return
    width = max(len(m) for m in model_ids)
    print(f"{'model_id':<{width}}  {header}")
    for m in order:
        print(f"{model_ids[m]:<{width}}  {values[m]: .6f}")


def cmd_synth_zoo(args) -> int:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    config = _build_config(ZooConfig, overrides, args.config)
    benchmark = build_benchmark(config)
    write_benchmark(benchmark, args.out)
    print(f"wrote benchmark ({config.n_models} models, "
          f"{config.n_eval_tasks} eval tasks) to {args.out}")
    return EXIT_OK


def cmd_score(args) -> int:
    _, banks = _read_task_dir(args.task)
    model_ids = list(banks)
    scores = score_zoo([banks[m] for m in model_ids], args.method)
    _print_score_table(model_ids, scores.values, args.method, args.json)
    return EXIT_OK


def cmd_aggregate(args) -> int:
    rankings, model_ids = [], None
    for path in args.scores:
        try:
            with open(path, encoding="utf-8") as fh:
                payload = json.load(fh)
        except OSError as exc:
            raise FormatError(f"cannot read {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise _UsageError(f"bad JSON in {path}: {exc.msg}") from exc
        if "model_ids" not in payload or "scores" not in payload:
            raise _UsageError(f"{path} lacks model_ids/scores keys")
        if model_ids is None:
            model_ids = payload["model_ids"]
        elif model_ids != payload["model_ids"]:
            raise _UsageError(f"{path} has a different model set")
        rankings.append(ScoreVector(np.asarray(payload["scores"], dtype=np.float64)))
    agg = copeland_aggregate(rankings)
    _print_score_table(model_ids, agg.values, "copeland", args.json)
    return EXIT_OK


def cmd_train(args) -> int:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.loss is not None:
        if args.loss not in LOSS_KINDS:
            raise _UsageError(f"loss must be one of {LOSS_KINDS}")
        overrides["loss"] = args.loss
    config = _build_config(TrainConfig, overrides, args.config)
    benchmark = load_benchmark(args.benchmark)
    result = train(benchmark.pool, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_params(result.params, out / "params")
    with open(out / "loss_trace.json", "w", encoding="utf-8") as fh:
        json.dump(result.loss_trace, fh, indent=2)
        fh.write("\n")
    print(f"trained on {config.n_tasks} tasks for {config.epochs} epochs; "
          f"final loss {result.loss_trace[-1]['loss']:.6f}; params in {out / 'params'}")
    return EXIT_OK


def cmd_rank(args) -> int:
    params = load_params(args.params)
    probe, banks = _read_task_dir(args.task)
    if probe is None:
        raise FormatError(f"task {args.task} has no probe bank")
    k = args.k
    if k > params.n_models:
        print(f"warning: k={k} exceeds zoo size, clamping to {params.n_models}",
              file=sys.stderr)
        k = params.n_models
    ranking = rank_zoo(build_task_token(probe), params)
    refreshed = set()
    if k > 0:
        refreshed = {params.model_ids[m] for m in ranking.order.order[:k]}
        ranking = rerank_top_k(ranking, banks, k, params)
    if args.json:
        print(json.dumps({
            "model_ids": params.model_ids,
            "scores": [float(v) for v in ranking.scores.values],
            "order": [int(m) for m in ranking.order.order],
            "k_used": ranking.k_used,
            "refreshed": sorted(refreshed),
        }, sort_keys=True))
        return EXIT_OK
    width = max(len(m) for m in params.model_ids)
    print(f"{'model_id':<{width}}  score      refreshed")
    for m in ranking.order.order:
        mid = params.model_ids[m]
        mark = "yes" if mid in refreshed else ""
        print(f"{mid:<{width}}  {ranking.scores.values[m]: .6f}  {mark}")
    return EXIT_OK


def _parse_k_sweep(text):
    try:
        ks = tuple(int(part) for part in text.split(","))
    except ValueError as exc:
        raise _UsageError(f"bad --k-sweep value {text!r}") from exc
    if not ks or any(k < 0 for k in ks):
        raise _UsageError("--k-sweep needs non-negative comma-separated integers")
    return ks


def cmd_eval(args) -> int:
    benchmark = load_benchmark(args.benchmark)
    params = load_params(args.params) if args.params else None
    ks = _parse_k_sweep(args.k_sweep) if args.k_sweep else (args.k,)
    result = evaluate(benchmark, params, ks=ks)
    if args.k_sweep:
        writer = csv.writer(sys.stdout)
        writer.writerow(["k", "mean_tau_w"])
        for k in ks:
            writer.writerow([k, repr(result.mean[f"ranker_k{k}"])])
        return EXIT_OK
    if args.json:
        print(json.dumps({"mean": result.mean, "per_task": result.per_task}, sort_keys=True))
        return EXIT_OK
    names = list(result.mean)
    print("task  " + "  ".join(f"{n:>10}" for n in names))
    for t in range(len(benchmark.eval_tasks)):
        row = "  ".join(f"{result.per_task[n][t]:>10.4f}" for n in names)
        print(f"{t:<4}  {row}")
    print("mean  " + "  ".join(f"{result.mean[n]:>10.4f}" for n in names))
    return EXIT_OK


def cmd_chart(args) -> int:
    params = load_params(args.params)
    clusters_spec = _load_json_config(args.clusters)
    if not isinstance(clusters_spec, dict) or not clusters_spec:
        raise _UsageError(f"{args.clusters} must be a non-empty JSON object")
    cluster_tokens = {}
    for name, task_dirs in clusters_spec.items():
        if not task_dirs:
            raise _UsageError(f"cluster {name!r} lists no task directories")
        tokens = []
        for task_dir in task_dirs:
            probe, _ = _read_task_dir(task_dir)
            if probe is None:
                raise FormatError(f"task {task_dir} has no probe bank")
            tokens.append(build_task_token(probe))
        cluster_tokens[name] = tokens
    chart = spider_chart_data(params, cluster_tokens)
    out = Path(args.out)
    write_chart_csv(chart, out.with_suffix(".csv"))
    write_chart_json(chart, out.with_suffix(".json"))
    print(f"wrote {out.with_suffix('.csv')} and {out.with_suffix('.json')}")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="zoorank", description=__doc__)
    parser.add_argument("--threads", type=int, default=1,
                        help="worker cap for scoring/generation (default 1 for "
                             "bit-reproducible output)")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("synth-zoo", help="generate a synthetic benchmark")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON file with ZooConfig overrides")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth_zoo)

    p = sub.add_parser("score", help="score a task directory with one estimator")
    p.add_argument("--task", required=True)
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("aggregate", help="Copeland-aggregate score JSON files")
    p.add_argument("scores", nargs="+")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("train", help="train the ranker on a benchmark's pool")
    p.add_argument("--benchmark", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON file with TrainConfig overrides")
    p.add_argument("--seed", type=int)
    p.add_argument("--loss")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("rank", help="rank the zoo for one task")
    p.add_argument("--task", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--k", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("eval", help="evaluate baselines and the ranker")
    p.add_argument("--benchmark", required=True)
    p.add_argument("--params")
    p.add_argument("--k", type=int, default=0)
    p.add_argument("--k-sweep", dest="k_sweep",
                   help="comma-separated k values; emits CSV of mean tau_w per k")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("chart", help="export per-model similarity chart data")
    p.add_argument("--params", required=True)
    p.add_argument("--clusters", required=True,
                   help="JSON object: cluster name -> list of task directories")
    p.add_argument("--out", required=True, help="output path prefix")
    p.set_defaults(func=cmd_chart)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CapabilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPABILITY
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ZooRankError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
