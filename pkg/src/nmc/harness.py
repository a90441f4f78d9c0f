"""Experiment orchestration, metrics and on-disk formats.

An experiment directory holds::

    dataset/   train.csv, heldout.csv, dataset.json (sidecar)
    trace/     one CSV per latent node, sampler.csv, index.json
    metrics.csv
    summary.json
"""

from __future__ import annotations

import csv
import json
import logging
import re
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from .engine import SamplerConfig, Trace, run
from .models import Benchmark, Dataset, make_benchmark

__all__ = [
    "ExperimentConfig",
    "running_log_mean_exp",
    "predictive_ll",
    "samples_to_convergence",
    "tune_mala_step",
    "write_dataset",
    "read_dataset",
    "write_trace",
    "read_trace",
    "write_metrics",
    "read_metrics",
    "metrics_rows",
    "summarize",
    "run_experiment",
    "data_rng",
]

log = logging.getLogger(__name__)

EVAL_MODES = ("z-integrated", "conditional-on-z")


@dataclass
class ExperimentConfig:
    model: str
    method: str = "nmc"
    sizes: dict = field(default_factory=dict)
    hyperparams: dict = field(default_factory=dict)
    num_samples: int = 1000
    seed: int = 0
    holdout_fraction: float = 0.5
    eig_floor: float = 1e-8
    rwm_step: float = 0.5
    mala_step: Any = 0.1  # a number, or "auto" to tune for 0.5 acceptance
    output_dir: str | None = None
    eval_mode: str = "z-integrated"

    def __post_init__(self):
        if not 0 < self.holdout_fraction < 1:
            raise ValueError("holdout_fraction must lie strictly between 0 and 1")
        if self.eval_mode not in EVAL_MODES:
            raise ValueError(f"eval_mode must be one of {EVAL_MODES}")
        if self.mala_step != "auto" and not float(self.mala_step) > 0:
            raise ValueError("mala_step must be positive or 'auto'")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def sampler_config(self, mala_step: float | None = None) -> SamplerConfig:
        step = mala_step if mala_step is not None else self.mala_step
        return SamplerConfig(
            method=self.method,
            num_samples=self.num_samples,
            seed=self.seed,
            rwm_step=self.rwm_step,
            mala_step=0.1 if step == "auto" else float(step),
            eig_floor=self.eig_floor,
        )

    def benchmark(self) -> Benchmark:
        return make_benchmark(self.model, self.sizes, self.hyperparams)


def data_rng(seed: int) -> np.random.Generator:
    """Data stream for ``seed``; independent of the chain stream ``default_rng(seed)``."""
    return np.random.default_rng([0xDA7A, int(seed)])


# -- metrics --------------------------------------------------------------------


def running_log_mean_exp(values) -> np.ndarray:
    """``log((1/t) sum_{s<=t} exp(values[s]))`` for every prefix, in log space."""
    values = np.asarray(values, dtype=float)
    return np.logaddexp.accumulate(values) - np.log(np.arange(1, len(values) + 1))


def predictive_ll(trace: Trace, heldout: Dataset, benchmark: Benchmark, mode: str = "z-integrated"):
    """Running posterior-averaged held-out log predictive density, one value per sample."""
    if heldout.n_rows == 0:
        raise ValueError("held-out set is empty")
    per_sample = np.array(
        [benchmark.heldout_loglik(trace.draw(t), heldout, mode) for t in range(len(trace))]
    )
    return running_log_mean_exp(per_sample)


def samples_to_convergence(series, rel_tol: float = 0.01) -> int:
    """Smallest 1-based ``t`` after which the series stays within ``rel_tol`` of its last value."""
    series = np.asarray(series, dtype=float)
    if series.size == 0:
        raise ValueError("empty series")
    final = series[-1]
    if not np.isfinite(final) or final == 0:
        raise ValueError(f"final value must be finite and nonzero, got {final}")
    outside = np.flatnonzero(~(np.abs(series - final) <= rel_tol * abs(final)))
    return int(outside[-1]) + 2 if outside.size else 1


def tune_mala_step(
    model,
    target: float = 0.5,
    seed: int = 0,
    pilot_samples: int = 100,
    lo: float = 1e-5,
    hi: float = 10.0,
    iters: int = 12,
    rwm_step: float = 0.5,
) -> float:
    """Bisect (in log space) for the MALA step giving ``target`` acceptance.

    Acceptance is measured on real-valued nodes over the second half of a
    short pilot chain started from a prior draw.
    """
    real_nodes = [n for n in model.latent if model[n].support.kind == "real"]
    if not real_nodes:
        return float(np.sqrt(lo * hi))

    def rate(step):
        cfg = SamplerConfig("mala", pilot_samples, seed, rwm_step=rwm_step, mala_step=step)
        tr = run(model, None, cfg)
        half = pilot_samples // 2
        probs = np.concatenate([np.asarray(tr.accept_probs[n][half:]) for n in real_nodes])
        return float(probs.mean())

    a, b = np.log(lo), np.log(hi)
    for _ in range(iters):
        mid = 0.5 * (a + b)
        if rate(np.exp(mid)) > target:
            a = mid
        else:
            b = mid
    return float(np.exp(0.5 * (a + b)))


# -- CSV formats ----------------------------------------------------------------

_TYPE_NAMES = {"f": "float", "i": "int", "u": "int", "b": "int"}


def _flat_columns(name: str, arr: np.ndarray) -> list[str]:
    if arr.ndim <= 1:
        return [name]
    inner = arr.shape[1:]
    return [f"{name}[{','.join(map(str, idx))}]" for idx in np.ndindex(*inner)]


def _write_columns(path: Path, columns: dict[str, np.ndarray]):
    """Write equal-length columns with a typed ``name:type`` header."""
    header, blocks, kinds = [], [], []
    for name, arr in columns.items():
        arr = np.asarray(arr)
        kind = _TYPE_NAMES.get(arr.dtype.kind, "float")
        cols = _flat_columns(name, arr)
        header += [f"{c}:{kind}" for c in cols]
        kinds += [kind] * len(cols)
        blocks.append(arr.reshape(arr.shape[0], -1))
    n = blocks[0].shape[0] if blocks else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(n):
            row = []
            for b in blocks:
                row.extend(b[i].tolist())
            w.writerow([int(v) if k == "int" else repr(float(v)) for v, k in zip(row, kinds)])


_HEADER = re.compile(r"^(?P<name>[^\[:]+)(?:\[(?P<idx>[^\]]*)\])?:(?P<type>int|float)$")


def _read_columns(path: Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    groups: dict[str, list[int]] = {}
    types: dict[str, str] = {}
    shapes: dict[str, list[tuple[int, ...]]] = {}
    for j, col in enumerate(header):
        m = _HEADER.match(col)
        if m is None:
            raise ValueError(f"{path}: malformed column header {col!r}")
        name = m["name"]
        groups.setdefault(name, []).append(j)
        types[name] = m["type"]
        if m["idx"]:
            shapes.setdefault(name, []).append(tuple(int(i) for i in m["idx"].split(",")))
    data = np.array(body, dtype=float).reshape(len(body), len(header))
    out = {}
    for name, cols in groups.items():
        block = data[:, cols]
        if name in shapes:
            inner = tuple(max(s) + 1 for s in zip(*shapes[name]))
            block = block.reshape((len(body),) + inner)
        else:
            block = block[:, 0]
        out[name] = block.astype(np.int64) if types[name] == "int" else block
    return out


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    return x


def write_dataset(directory, train: Dataset, heldout: Dataset, extra: dict | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    _write_columns(directory / "train.csv", train.observations)
    _write_columns(directory / "heldout.csv", heldout.observations)
    sidecar = {
        "model": train.model,
        "meta": _jsonable(train.meta),
        "observed": {
            k: {"shape": list(np.shape(v)[1:]), "dtype": _TYPE_NAMES.get(np.asarray(v).dtype.kind, "float")}
            for k, v in train.observations.items()
        },
        "n_train": train.n_rows,
        "n_heldout": heldout.n_rows,
        "truth": _jsonable(train.truth),
        **(extra or {}),
    }
    with open(directory / "dataset.json", "w") as fh:
        json.dump(sidecar, fh, indent=2)
    return directory


def read_dataset(directory) -> tuple[Dataset, Dataset, dict]:
    directory = Path(directory)
    try:
        with open(directory / "dataset.json") as fh:
            sidecar = json.load(fh)
        train_obs = _read_columns(directory / "train.csv")
        held_obs = _read_columns(directory / "heldout.csv")
    except OSError as exc:
        raise OSError(f"cannot read dataset in {directory}: {exc}") from exc
    truth = {k: np.asarray(v) if isinstance(v, list) else v for k, v in sidecar["truth"].items()}
    meta = sidecar["meta"]
    name = sidecar["model"]
    if sidecar.get("n_train", 1) == 0:
        train_obs = {}
    if sidecar.get("n_heldout", 1) == 0:
        held_obs = {}
    return Dataset(name, train_obs, truth, meta), Dataset(name, held_obs, truth, meta), sidecar


def _node_file(node_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", node_id).strip("_") + ".csv"


def write_trace(directory, trace: Trace) -> Path:
    """One CSV per latent node plus per-sweep sampler diagnostics."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    index = {}
    for nid in trace.nodes:
        arr = trace.array(nid)
        fname = _node_file(nid)
        _write_columns(directory / fname, {nid.split("[")[0]: arr} if arr.ndim > 1 else {_plain(nid): arr})
        index[nid] = {"file": fname, "shape": list(arr.shape[1:]), "dtype": str(arr.dtype)}
    _write_columns(
        directory / "sampler.csv",
        {
            "sample": np.arange(1, len(trace) + 1),
            "seconds": np.asarray(trace.seconds),
            "log_density": np.asarray(trace.log_density),
            "accept_rate": np.asarray(trace.accept_rate),
            "fallback_count": np.asarray(trace.fallback_total, dtype=np.int64),
        },
    )
    stats = {
        "nodes": index,
        "accepted": trace.accepted,
        "proposed": trace.proposed,
        "fallbacks": trace.fallbacks,
    }
    with open(directory / "index.json", "w") as fh:
        json.dump(stats, fh, indent=1)
    return directory


def _plain(node_id: str) -> str:
    return re.sub(r"[\[\],]+", "_", node_id).strip("_")


def read_trace(directory) -> Trace:
    directory = Path(directory)
    try:
        with open(directory / "index.json") as fh:
            stats = json.load(fh)
        sampler = _read_columns(directory / "sampler.csv")
    except OSError as exc:
        raise OSError(f"cannot read trace in {directory}: {exc}") from exc
    nodes = tuple(stats["nodes"])
    trace = Trace(nodes)
    for nid, info in stats["nodes"].items():
        cols = _read_columns(directory / info["file"])
        arr = next(iter(cols.values()))
        if info["dtype"].startswith("int"):
            arr = arr.astype(np.int64)
        if arr.ndim == 1:
            trace.samples[nid] = [v.item() for v in arr]
        else:
            trace.samples[nid] = list(arr)
    trace.log_density = sampler["log_density"].tolist()
    trace.seconds = sampler["seconds"].tolist()
    trace.accept_rate = sampler["accept_rate"].tolist()
    trace.fallback_total = sampler["fallback_count"].astype(int).tolist()
    trace.accepted.update(stats["accepted"])
    trace.proposed.update(stats["proposed"])
    trace.fallbacks.update(stats["fallbacks"])
    return trace


def metrics_rows(trace: Trace, series=None) -> dict[str, np.ndarray]:
    n = len(trace)
    pll = np.full(n, np.nan) if series is None else np.asarray(series, dtype=float)
    return {
        "sample": np.arange(1, n + 1),
        "seconds": np.asarray(trace.seconds, dtype=float),
        "predictive_ll": pll,
        "accept_rate": np.asarray(trace.accept_rate, dtype=float),
        "fallback_count": np.asarray(trace.fallback_total, dtype=np.int64),
    }


def write_metrics(path, rows: dict[str, np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _write_columns(path, rows)
    return path


def read_metrics(path) -> dict[str, np.ndarray]:
    return _read_columns(Path(path))


def summarize(metrics: dict[str, np.ndarray], trace: Trace | None = None, extra: dict | None = None) -> dict:
    """Summary record: timing, convergence, acceptance and fallbacks."""
    series = np.asarray(metrics["predictive_ll"], dtype=float)
    out: dict[str, Any] = {
        "num_samples": int(len(series)),
        "total_seconds": float(metrics["seconds"][-1]) if len(series) else 0.0,
        "final_accept_rate": float(metrics["accept_rate"][-1]) if len(series) else float("nan"),
        "fallback_count": int(metrics["fallback_count"][-1]) if len(series) else 0,
    }
    if len(series) and np.all(np.isfinite(series)):
        out["final_predictive_ll"] = float(series[-1])
        out["samples_to_convergence"] = samples_to_convergence(series)
    else:
        out["final_predictive_ll"] = None
        out["samples_to_convergence"] = None
    if trace is not None:
        rates = trace.acceptance_rates()
        out["acceptance_rates"] = {k: (None if np.isnan(v) else v) for k, v in rates.items()}
        out["fallbacks"] = dict(trace.fallbacks)
    if extra:
        out.update(_jsonable(extra))
    return out


# -- end-to-end -----------------------------------------------------------------


def run_experiment(config: ExperimentConfig) -> dict:
    """Generate data, sample, evaluate and (optionally) write every artifact.

    Timing covers the sampling loop only.  Returns a dict with the trace,
    metrics columns, summary and the datasets.
    """
    bench = config.benchmark()
    train, heldout = bench.split(bench.generate(data_rng(config.seed)), data_rng(config.seed + 1), config.holdout_fraction)
    model = bench.model(train)
    mala_step = None
    if config.method == "mala" and config.mala_step == "auto":
        mala_step = tune_mala_step(model, seed=config.seed + 1, rwm_step=config.rwm_step)
        log.info("tuned MALA step: %g", mala_step)
    trace = run(model, None, config.sampler_config(mala_step))
    series = predictive_ll(trace, heldout, bench, config.eval_mode) if bench.has_heldout else None
    rows = metrics_rows(trace, series)
    extra = bench.summarize(trace, train)
    if mala_step is not None:
        extra["mala_step"] = mala_step
    summary = summarize(rows, trace, {"model": config.model, "method": config.method, **extra})
    if config.output_dir:
        out = Path(config.output_dir)
        write_dataset(out / "dataset", train, heldout, {"seed": config.seed})
        write_trace(out / "trace", trace)
        write_metrics(out / "metrics.csv", rows)
        with open(out / "summary.json", "w") as fh:
            json.dump(summary, fh, indent=2)
        with open(out / "config.json", "w") as fh:
            json.dump(_jsonable(asdict(config)), fh, indent=2)
    return {
        "trace": trace,
        "metrics": rows,
        "summary": summary,
        "train": train,
        "heldout": heldout,
        "benchmark": bench,
    }
