"""The screening service: multi-producer enqueue, single-consumer processing
against the live model pair, role-gated reads, and service metrics.

Submissions flow queued -> processing -> {classified | learned | rejected |
failed}. The input validator gates every image (classify and learn alike);
learn submissions apply a single-sample continual update with the configured
strategy.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..benchmark import parse_reports
from ..imaging import ClassLabel, Image, Sample, decode_image, resize
from ..network import CheckpointError, TrainConfig, load_checkpoint, predict, softmax, forward
from ..strategies import StrategyConfig, train_experience
from ..synth import VALIDATOR_VALID
from .auth import Authenticator, User
from .errors import AuthorizationError, NotFoundError, StateError, ValidationError
from .registry import ModelRegistry
from .store import Submission, SubmissionStore, utc_now


class QueueEmpty(Exception):
    pass


def _check_label(label: str) -> ClassLabel:
    try:
        return ClassLabel.from_wire(label)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc


def _default_online_cfg() -> TrainConfig:
    return TrainConfig(max_epochs=3, batch_size=1, patience=3, lr=0.001, seed=0)


def _default_strategy() -> StrategyConfig:
    return StrategyConfig(method="lwf")


@dataclass
class ServiceConfig:
    data_dir: Path
    users_path: Path
    screening_checkpoint: Path | None = None
    validator_checkpoint: Path | None = None
    strategy: StrategyConfig = field(default_factory=_default_strategy)
    online_train: TrainConfig = field(default_factory=_default_online_cfg)
    input_size: tuple[int, int] = (32, 32)
    token_ttl_seconds: float = 3600.0
    benchmark_report: Path | None = None


class ScreeningService:
    def __init__(self, config: ServiceConfig, clock=time.time):
        self.config = config
        self.store = SubmissionStore(config.data_dir)
        self.auth = Authenticator.from_file(
            config.users_path, ttl_seconds=config.token_ttl_seconds, clock=clock
        )
        self.registry = self._load_registry()
        w, h = config.input_size
        expected = self.registry.screening.layer_sizes[0]
        if w * h != expected:
            raise CheckpointError(
                f"input size {w}x{h} does not match the screening network "
                f"input width {expected}"
            )
        self._benchmark_summary = None
        if config.benchmark_report is not None:
            self._benchmark_summary = _report_summary(config.benchmark_report)

        self._cond = threading.Condition()
        self._process_lock = threading.Lock()
        self._stop = threading.Event()
        self._worker: threading.Thread | None = None

    def _load_registry(self) -> ModelRegistry:
        resume_dir = Path(self.config.data_dir) / "registry"
        if (resume_dir / "registry.json").exists():
            return ModelRegistry.load(resume_dir)
        for name, path in (
            ("screening checkpoint", self.config.screening_checkpoint),
            ("validator checkpoint", self.config.validator_checkpoint),
        ):
            if path is None or not Path(path).exists():
                raise CheckpointError(f"missing {name}: {path}")
        screening, _ = load_checkpoint(self.config.screening_checkpoint)
        validator, _ = load_checkpoint(self.config.validator_checkpoint)
        return ModelRegistry(
            screening=screening,
            validator=validator,
            strategy_cfg=self.config.strategy,
        )

    # -- submission intake ---------------------------------------------------

    def enqueue(
        self,
        user: User,
        sub_type: str,
        image_bytes: bytes,
        label: str | None = None,
        provenance: dict | None = None,
    ) -> int:
        if sub_type not in ("classify", "learn"):
            raise ValidationError(f"unknown submission type {sub_type!r}")
        if user.role == "researcher":
            raise AuthorizationError("researchers cannot submit images")
        if sub_type == "learn":
            if label is None:
                raise ValidationError("learn submissions require a label")
            _check_label(label)
            if user.role != "doctor" and provenance is None:
                raise AuthorizationError(
                    "learn submissions require a doctor or a confirmation provenance"
                )
        elif label is not None:
            raise ValidationError("classify submissions must not carry a label")
        try:
            decode_image(image_bytes)
        except Exception as exc:
            raise ValidationError(f"unreadable image: {exc}") from exc
        ref = self.store.images.put(image_bytes)
        sub = self.store.create(user.id, sub_type, ref, label, provenance)
        with self._cond:
            self._cond.notify()
        return sub.id

    # -- processing ------------------------------------------------------------

    def validate_cxr(self, img: Image) -> tuple[bool, float]:
        """Binary gate from the input validator, thresholded at 0.5."""
        logits, _ = forward(self.registry.validator, img.flat()[None, :])
        confidence = float(softmax(logits)[0, VALIDATOR_VALID])
        return confidence >= 0.5, confidence

    def process_next(self) -> Submission:
        """Take the FIFO head through validation and the model; never loses it."""
        with self._process_lock:
            sub = self.store.take_next()
            if sub is None:
                raise QueueEmpty()
            t0 = time.perf_counter()
            try:
                self._process(sub)
            except Exception as exc:
                elapsed = (time.perf_counter() - t0) * 1000.0
                self.store.finish(
                    sub.id,
                    "failed",
                    elapsed_ms=elapsed,
                    processed_at=utc_now(),
                    error_detail=f"{type(exc).__name__}: {exc}",
                )
            return self.store.get(sub.id)

    def _process(self, sub: Submission) -> None:
        t0 = time.perf_counter()
        img = decode_image(self.store.images.get(sub.image_ref))
        img = resize(img, *self.config.input_size)
        ok, confidence = self.validate_cxr(img)
        if not ok:
            self.store.finish(
                sub.id,
                "rejected",
                elapsed_ms=(time.perf_counter() - t0) * 1000.0,
                processed_at=utc_now(),
                error_detail=(
                    f"not recognized as a chest X-ray "
                    f"(validator confidence {confidence:.3f})"
                ),
            )
            return
        if sub.type == "classify":
            label_idx, probs = predict(self.registry.screening, img)
            prediction = {
                "label": ClassLabel(label_idx).wire_name,
                "probabilities": {
                    ClassLabel(i).wire_name: float(probs[i]) for i in range(len(probs))
                },
                "validator_confidence": confidence,
            }
            self.store.finish(
                sub.id,
                "classified",
                elapsed_ms=(time.perf_counter() - t0) * 1000.0,
                prediction=prediction,
                processed_at=utc_now(),
            )
        else:
            sample = Sample(
                image=img,
                label=ClassLabel.from_wire(sub.label),
                source_id=f"submission-{sub.id}",
            )
            processed_at = utc_now()
            net, state, _ = train_experience(
                self.registry.strategy_cfg,
                self.registry.screening,
                self.registry.strategy_state,
                [sample],
                self.config.online_train,
            )
            self.registry.screening = net
            self.registry.strategy_state = state
            self.registry.learned_count += 1
            self.store.finish(
                sub.id,
                "learned",
                elapsed_ms=(time.perf_counter() - t0) * 1000.0,
                processed_at=processed_at,
                learned_at=utc_now(),
            )

    # -- confirmation ------------------------------------------------------------

    def confirm(self, user: User, sid: int, label: str) -> int:
        """Doctor confirms/refutes a classified submission; enqueues the
        derived learn submission with the confirmed label."""
        Authenticator.require_role(user, "doctor")
        sub = self.store.get(sid)
        if sub.submitter not in user.patients:
            raise AuthorizationError(
                f"doctor {user.id!r} is not paired with submitter {sub.submitter!r}"
            )
        if sub.status != "classified":
            raise StateError(f"submission {sid} is {sub.status}, not classified")
        if sub.confirmation is not None:
            raise StateError(f"submission {sid} is already confirmed")
        _check_label(label)
        learn = self.store.create(
            user.id,
            "learn",
            sub.image_ref,
            label,
            provenance={"confirmed_from": sid, "doctor": user.id},
        )
        self.store.add_confirmation(sid, user.id, label, learn.id)
        with self._cond:
            self._cond.notify()
        return learn.id

    # -- reads -------------------------------------------------------------------

    def _visible(self, user: User, sub: Submission) -> bool:
        if user.role == "researcher":
            return True
        if user.role == "doctor":
            return sub.submitter == user.id or sub.submitter in user.patients
        return sub.submitter == user.id

    def get_submission(self, user: User, sid: int) -> dict:
        sub = self.store.get(sid)
        if not self._visible(user, sub):
            raise AuthorizationError(f"submission {sid} is not visible to {user.id!r}")
        return sub.to_view(anonymize=user.role == "researcher")

    def list_submissions(
        self,
        user: User,
        status: str | None = None,
        sub_type: str | None = None,
        submitter: str | None = None,
    ) -> list[dict]:
        if submitter is not None and user.role == "researcher":
            # researcher records are anonymized; a submitter filter would
            # re-identify them
            raise AuthorizationError("researchers cannot filter by submitter")
        out = []
        for sub in self.store.all_submissions():
            if not self._visible(user, sub):
                continue
            if status is not None and sub.status != status:
                continue
            if sub_type is not None and sub.type != sub_type:
                continue
            if submitter is not None and sub.submitter != submitter:
                continue
            out.append(sub.to_view(anonymize=user.role == "researcher"))
        return out

    # -- metrics -----------------------------------------------------------------

    def metrics(self) -> dict:
        lat = self.store.latency
        status_counts: dict[str, int] = {}
        for sub in self.store.all_submissions():
            status_counts[sub.status] = status_counts.get(sub.status, 0) + 1
        return {
            "queue_depth": self.store.queue_depth(),
            "model_version": self.registry.model_version(),
            "learned_count": self.registry.learned_count,
            "latency_ms": {
                "classify": _latency_stats(lat.classify),
                "learn": _latency_stats(lat.learn),
                "total_samples": lat.total,
            },
            "status_counts": status_counts,
            "benchmark": self._benchmark_summary,
        }

    # -- worker & lifecycle --------------------------------------------------------

    def start_worker(self) -> None:
        if self._worker is not None:
            return
        self._stop.clear()
        self._worker = threading.Thread(target=self._worker_loop, daemon=True)
        self._worker.start()

    def _worker_loop(self) -> None:
        while not self._stop.is_set():
            with self._cond:
                while self.store.queue_depth() == 0 and not self._stop.is_set():
                    self._cond.wait(timeout=0.05)
            if self._stop.is_set():
                return
            try:
                self.process_next()
            except QueueEmpty:
                continue

    def stop_worker(self) -> None:
        self._stop.set()
        with self._cond:
            self._cond.notify_all()
        if self._worker is not None:
            self._worker.join()
            self._worker = None

    def drain(self) -> None:
        """Process the backlog synchronously (test and CLI convenience)."""
        while True:
            try:
                self.process_next()
            except QueueEmpty:
                return

    def save_registry(self) -> Path:
        return self.registry.save(Path(self.config.data_dir) / "registry")

    def close(self, save: bool = True) -> None:
        self.stop_worker()
        if save:
            self.save_registry()
        self.store.close()


def _latency_stats(samples: list[float]) -> dict:
    if not samples:
        return {"count": 0, "mean_ms": 0.0, "std_ms": 0.0}
    return {
        "count": len(samples),
        "mean_ms": float(np.mean(samples)),
        "std_ms": float(np.std(samples)),
    }


def _report_summary(path: Path) -> dict | None:
    try:
        report = parse_reports(path, "json")[0]
    except (OSError, ValueError, KeyError):
        return None
    return {
        "strategy": report.strategy,
        "avg_accuracy": report.avg_accuracy,
        "avg_forgetting": report.avg_forgetting,
        "overall_performance": report.overall_performance,
        "avg_eval_time_ms": report.avg_eval_time_ms,
        "accuracies": list(report.accuracies),
    }
