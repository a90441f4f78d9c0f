"""Command line interface: ``generate``, ``sample``, ``evaluate``, ``report``, ``run``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .engine import run
from .harness import (
    EVAL_MODES,
    ExperimentConfig,
    data_rng,
    predictive_ll,
    read_dataset,
    read_metrics,
    read_trace,
    run_experiment,
    summarize,
    tune_mala_step,
    write_dataset,
    write_metrics,
    write_trace,
    metrics_rows,
)
from .models import make_benchmark


def _json_arg(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"not valid JSON: {exc}") from exc


def _benchmark_from_sidecar(sidecar):
    meta = dict(sidecar["meta"])
    hyper = meta.pop("hyper", None)
    return make_benchmark(sidecar["model"], meta, hyper)


def cmd_generate(args):
    bench = make_benchmark(args.model, args.sizes, args.hyperparams)
    data = bench.generate(data_rng(args.seed))
    train, heldout = bench.split(data, data_rng(args.seed + 1), args.holdout_fraction)
    out = write_dataset(args.out, train, heldout, {"seed": args.seed})
    print(f"wrote dataset to {out} ({train.n_rows} train rows, {heldout.n_rows} held-out rows)")


def _load_config(args) -> ExperimentConfig:
    d = {}
    if args.config:
        with open(args.config) as fh:
            d = json.load(fh)
    for key in ("method", "num_samples", "seed", "eig_floor", "rwm_step", "mala_step", "eval_mode"):
        val = getattr(args, key, None)
        if val is not None:
            d[key] = val
    d.setdefault("model", "unknown")
    return ExperimentConfig.from_dict(d)


def _metrics_for(trace, heldout, bench, mode):
    series = predictive_ll(trace, heldout, bench, mode) if bench.has_heldout and heldout.n_rows else None
    return metrics_rows(trace, series)


def cmd_sample(args):
    train, heldout, sidecar = read_dataset(args.dataset)
    cfg = _load_config(args)
    bench = _benchmark_from_sidecar(sidecar)
    model = bench.model(train)
    step = None
    if cfg.method == "mala" and cfg.mala_step == "auto":
        step = tune_mala_step(model, seed=cfg.seed + 1, rwm_step=cfg.rwm_step)
    trace = run(model, None, cfg.sampler_config(step))
    out = Path(args.out)
    write_trace(out / "trace", trace)
    rows = _metrics_for(trace, heldout, bench, cfg.eval_mode)
    write_metrics(out / "metrics.csv", rows)
    print(f"wrote {len(trace)} samples to {out}")


def cmd_evaluate(args):
    train, heldout, sidecar = read_dataset(args.dataset)
    bench = _benchmark_from_sidecar(sidecar)
    trace = read_trace(args.trace)
    rows = _metrics_for(trace, heldout, bench, args.eval_mode)
    write_metrics(args.out, rows)
    print(f"wrote metrics to {args.out}")


def cmd_report(args):
    rows = read_metrics(args.metrics)
    trace = read_trace(args.trace) if args.trace else None
    summary = summarize(rows, trace)
    text = json.dumps(summary, indent=2)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    print(text)


def cmd_run(args):
    cfg = ExperimentConfig.from_json(args.config)
    if args.out:
        cfg.output_dir = args.out
    res = run_experiment(cfg)
    print(json.dumps(res["summary"], indent=2))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nmc", description="Newtonian Monte Carlo experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="simulate a dataset and split it")
    g.add_argument("model", choices=["funnel", "blr", "robust", "annotation"])
    g.add_argument("--sizes", type=_json_arg, default={}, help='e.g. \'{"N": 2000, "K": 10}\'')
    g.add_argument("--hyperparams", type=_json_arg, default=None)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--holdout-fraction", type=float, default=0.5)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("sample", help="run a chain on a generated dataset")
    s.add_argument("--dataset", required=True)
    s.add_argument("--config", help="JSON config; flags below override it")
    s.add_argument("--method", choices=["nmc", "rwm", "mala"])
    s.add_argument("--num-samples", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--eig-floor", type=float)
    s.add_argument("--rwm-step", type=float)
    s.add_argument("--mala-step", type=lambda v: v if v == "auto" else float(v))
    s.add_argument("--eval-mode", choices=EVAL_MODES)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    e = sub.add_parser("evaluate", help="predictive log-likelihood of a stored trace")
    e.add_argument("--dataset", required=True)
    e.add_argument("--trace", required=True)
    e.add_argument("--eval-mode", choices=EVAL_MODES, default="z-integrated")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("report", help="summarize a metrics CSV as JSON")
    r.add_argument("--metrics", required=True)
    r.add_argument("--trace", help="trace directory, for per-node acceptance and fallbacks")
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)

    x = sub.add_parser("run", help="generate, sample, evaluate and report from one config")
    x.add_argument("--config", required=True)
    x.add_argument("--out")
    x.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    np.seterr(all="ignore")
    sys.exit(main())
