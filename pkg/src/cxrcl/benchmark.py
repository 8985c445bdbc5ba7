"""Experience streams, the forgetting/overall-performance metrics, and the
benchmark harness that drives a strategy through a stream.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .imaging import Sample
from .network import Network, NetworkConfig, TrainConfig, forward, images_to_batch, init_network
from .strategies import StrategyConfig, train_experience

DEFAULT_EXPERIENCES = 25


@dataclass(frozen=True)
class Experience:
    """One sequential batch of unseen training samples (1-based index)."""

    index: int
    samples: tuple[Sample, ...]

    def __post_init__(self):
        if self.index < 1:
            raise ValueError("experience index is 1-based")
        if not self.samples:
            raise ValueError("experience must be non-empty")


def make_stream(pool: list[Sample], k: int, seed: int) -> list[Experience]:
    """Seeded shuffle of the pool, split into k contiguous near-equal chunks."""
    if k < 1:
        raise ValueError("need at least one experience")
    if k > len(pool):
        raise ValueError(f"cannot split {len(pool)} samples into {k} experiences")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(pool))
    shuffled = [pool[i] for i in order]
    base, extra = divmod(len(pool), k)
    stream = []
    start = 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        stream.append(Experience(index=i + 1, samples=tuple(shuffled[start : start + size])))
        start += size
    return stream


def forgetting_terms(accuracies) -> list[float]:
    """f_k = max over earlier experiences l < k of (A_l - A_k), for k >= 2."""
    A = list(accuracies)
    terms = []
    for k in range(1, len(A)):
        terms.append(max(A[l] - A[k] for l in range(k)))
    return terms


def avg_forgetting(accuracies) -> float:
    """Mean of the per-experience maximum forgetting; 0 for a single experience."""
    if len(accuracies) < 1:
        raise ValueError("need at least one accuracy entry")
    terms = forgetting_terms(accuracies)
    return float(np.mean(terms)) if terms else 0.0


def overall_performance(avg_accuracy: float, avg_forget: float) -> float:
    """p = (avg_accuracy + (100 - avg_forgetting) / 2) / 2 on the 0-100 scale."""
    if not 0.0 <= avg_accuracy <= 100.0:
        raise ValueError(f"average accuracy {avg_accuracy} outside [0, 100]")
    if not -100.0 <= avg_forget <= 100.0:
        raise ValueError(f"average forgetting {avg_forget} outside [-100, 100]")
    return 0.5 * (avg_accuracy + (100.0 - avg_forget) / 2.0)


@dataclass(frozen=True)
class BenchmarkReport:
    """Per-run metrics plus the raw accuracy/timing trace they derive from."""

    strategy: str
    seed: int
    accuracies: tuple[float, ...]
    eval_times_ms: tuple[float, ...]
    avg_accuracy: float
    accuracy_std: float
    avg_forgetting: float
    forgetting_std: float
    overall_performance: float
    avg_eval_time_ms: float


def report_from_trace(
    strategy: str, seed: int, accuracies, eval_times_ms
) -> BenchmarkReport:
    A = [float(a) for a in accuracies]
    times = [float(t) for t in eval_times_ms]
    terms = forgetting_terms(A)
    f_mean = float(np.mean(terms)) if terms else 0.0
    return BenchmarkReport(
        strategy=strategy,
        seed=seed,
        accuracies=tuple(A),
        eval_times_ms=tuple(times),
        avg_accuracy=float(np.mean(A)),
        accuracy_std=float(np.std(A)),
        avg_forgetting=f_mean,
        forgetting_std=float(np.std(terms)) if terms else 0.0,
        overall_performance=overall_performance(float(np.mean(A)), f_mean),
        avg_eval_time_ms=float(np.mean(times)) if times else 0.0,
    )


def evaluate_percent(net: Network, X: np.ndarray, y: np.ndarray) -> float:
    logits, _ = forward(net, X)
    return float((logits.argmax(axis=1) == y).mean() * 100.0)


def run_benchmark(
    strategy: StrategyConfig,
    stream: list[Experience],
    test: list[Sample],
    net_cfg: NetworkConfig,
    train_cfg: TrainConfig,
    initial_net: Network | None = None,
) -> BenchmarkReport:
    """Train through the stream, evaluating the full test set after each
    experience and timing each evaluation pass."""
    if not stream:
        raise ValueError("stream must be non-empty")
    if not test:
        raise ValueError("test set must be non-empty")
    # test data is converted here, outside the samples_to_batch training
    # funnel, so training-call audits never see test ids
    X_test = images_to_batch([s.image for s in test])
    y_test = np.array([int(s.label) for s in test], dtype=np.int64)

    net = initial_net.clone() if initial_net is not None else init_network(net_cfg)
    state = None
    accuracies = []
    eval_times = []
    for experience in stream:
        net, state, _ = train_experience(
            strategy, net, state, list(experience.samples), train_cfg
        )
        t0 = time.perf_counter()
        accuracies.append(evaluate_percent(net, X_test, y_test))
        eval_times.append((time.perf_counter() - t0) * 1000.0)
    return report_from_trace(strategy.describe(), train_cfg.seed, accuracies, eval_times)


REPORT_FIELDS = [
    "strategy",
    "seed",
    "avg_accuracy",
    "accuracy_std",
    "avg_forgetting",
    "forgetting_std",
    "overall_performance",
    "avg_eval_time_ms",
    "accuracies",
    "eval_times_ms",
]


def emit_report(report: BenchmarkReport, fmt: str, path: str | Path) -> None:
    """Write a report as a JSON document or append it as a CSV data row."""
    path = Path(path)
    if fmt == "json":
        path.write_text(json.dumps(asdict(report), indent=2) + "\n")
    elif fmt == "csv":
        fresh = not path.exists() or path.stat().st_size == 0
        with open(path, "a", newline="") as fh:
            writer = csv.writer(fh)
            if fresh:
                writer.writerow(REPORT_FIELDS)
            row = asdict(report)
            row["accuracies"] = json.dumps(list(report.accuracies))
            row["eval_times_ms"] = json.dumps(list(report.eval_times_ms))
            writer.writerow([row[f] for f in REPORT_FIELDS])
    else:
        raise ValueError(f"unknown report format {fmt!r}")


def parse_reports(path: str | Path, fmt: str) -> list[BenchmarkReport]:
    """Inverse of emit_report; returns every report stored in the file."""
    path = Path(path)
    if fmt == "json":
        doc = json.loads(path.read_text())
        return [_report_from_dict(doc)]
    if fmt == "csv":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        reports = []
        for row in rows:
            doc = dict(row)
            doc["seed"] = int(doc["seed"])
            for f in (
                "avg_accuracy",
                "accuracy_std",
                "avg_forgetting",
                "forgetting_std",
                "overall_performance",
                "avg_eval_time_ms",
            ):
                doc[f] = float(doc[f])
            doc["accuracies"] = json.loads(doc["accuracies"])
            doc["eval_times_ms"] = json.loads(doc["eval_times_ms"])
            reports.append(_report_from_dict(doc))
        return reports
    raise ValueError(f"unknown report format {fmt!r}")


def _report_from_dict(doc: dict) -> BenchmarkReport:
    return BenchmarkReport(
        strategy=doc["strategy"],
        seed=int(doc["seed"]),
        accuracies=tuple(float(a) for a in doc["accuracies"]),
        eval_times_ms=tuple(float(t) for t in doc["eval_times_ms"]),
        avg_accuracy=float(doc["avg_accuracy"]),
        accuracy_std=float(doc["accuracy_std"]),
        avg_forgetting=float(doc["avg_forgetting"]),
        forgetting_std=float(doc["forgetting_std"]),
        overall_performance=float(doc["overall_performance"]),
        avg_eval_time_ms=float(doc["avg_eval_time_ms"]),
    )
