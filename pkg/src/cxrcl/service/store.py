"""Append-only JSON-lines event log, content-addressed image files, and the
replayed in-memory submission table.

The log is the single source of truth: every mutation appends one event, and
a fresh store replays the log to reconstruct identical state (including the
FIFO backlog and the latency samples of finished work). Appends are
serialized under a lock; reads take consistent snapshots under the same lock.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .errors import NotFoundError, StateError, ValidationError

SUBMISSION_TYPES = ("classify", "learn")
TERMINAL_STATUSES = ("classified", "learned", "rejected", "failed")
STATUSES = ("queued", "processing") + TERMINAL_STATUSES


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


@dataclass
class Submission:
    id: int
    submitter: str
    type: str
    image_ref: str
    label: str | None
    status: str = "queued"
    prediction: dict | None = None
    created_at: str = ""
    processed_at: str | None = None
    learned_at: str | None = None
    error_detail: str | None = None
    confirmation: dict | None = None
    provenance: dict | None = None

    def to_view(self, anonymize: bool = False) -> dict:
        doc = asdict(self)
        if anonymize:
            doc.pop("submitter")
        return doc


class ImageStore:
    """Content-addressed blobs: a file per distinct sha256."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def put(self, data: bytes) -> str:
        digest = hashlib.sha256(data).hexdigest()
        path = self.root / digest
        if not path.exists():
            tmp = path.with_suffix(".tmp")
            tmp.write_bytes(data)
            tmp.replace(path)
        return digest

    def get(self, ref: str) -> bytes:
        path = self.root / ref
        if not path.exists():
            raise NotFoundError(f"image {ref} not found")
        return path.read_bytes()


class EventLog:
    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._fh = open(self.path, "a", encoding="utf-8")

    def append(self, event: dict) -> None:
        line = json.dumps(event, separators=(",", ":"))
        with self._lock:
            self._fh.write(line + "\n")
            self._fh.flush()

    def read_all(self) -> list[dict]:
        if not self.path.exists():
            return []
        events = []
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    events.append(json.loads(line))
        return events

    def close(self) -> None:
        with self._lock:
            self._fh.close()


@dataclass
class LatencySamples:
    """Per-type processing durations in milliseconds, in completion order."""

    classify: list[float] = field(default_factory=list)
    learn: list[float] = field(default_factory=list)

    def record(self, sub_type: str, elapsed_ms: float) -> None:
        getattr(self, sub_type).append(elapsed_ms)

    @property
    def total(self) -> int:
        return len(self.classify) + len(self.learn)


class SubmissionStore:
    """Submission lifecycle over the event log.

    Status transitions are restricted to queued -> processing -> one terminal
    status; at most one submission is in `processing` at any moment.
    """

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.images = ImageStore(self.data_dir / "images")
        self.log = EventLog(self.data_dir / "events.jsonl")
        self._lock = threading.RLock()
        self._submissions: dict[int, Submission] = {}
        self._pending: list[int] = []
        self._next_id = 1
        self._processing_id: int | None = None
        self.latency = LatencySamples()
        self._replay()

    # -- replay ------------------------------------------------------------

    def _replay(self) -> None:
        for event in self.log.read_all():
            kind = event["event"]
            if kind == "created":
                sub = Submission(
                    id=event["id"],
                    submitter=event["submitter"],
                    type=event["type"],
                    image_ref=event["image"],
                    label=event.get("label"),
                    created_at=event["created_at"],
                    provenance=event.get("provenance"),
                )
                self._submissions[sub.id] = sub
                self._next_id = max(self._next_id, sub.id + 1)
            elif kind == "processing":
                # a restart mid-processing re-queues the submission; the
                # status only sticks once a terminal event follows
                pass
            elif kind == "finished":
                sub = self._submissions[event["id"]]
                sub.status = event["status"]
                sub.prediction = event.get("prediction")
                sub.processed_at = event.get("processed_at")
                sub.learned_at = event.get("learned_at")
                sub.error_detail = event.get("error_detail")
                if "elapsed_ms" in event:
                    self.latency.record(sub.type, event["elapsed_ms"])
            elif kind == "confirmed":
                sub = self._submissions[event["id"]]
                sub.confirmation = {
                    "doctor": event["doctor"],
                    "label": event["label"],
                    "learn_id": event["learn_id"],
                    "at": event["at"],
                }
        self._pending = sorted(
            sid for sid, sub in self._submissions.items() if sub.status == "queued"
        )

    # -- mutations ---------------------------------------------------------

    def create(
        self,
        submitter: str,
        sub_type: str,
        image_ref: str,
        label: str | None,
        provenance: dict | None = None,
    ) -> Submission:
        if sub_type not in SUBMISSION_TYPES:
            raise ValidationError(f"unknown submission type {sub_type!r}")
        if sub_type == "learn" and label is None:
            raise ValidationError("learn submissions require a label")
        if sub_type == "classify" and label is not None:
            raise ValidationError("classify submissions must not carry a label")
        with self._lock:
            sub = Submission(
                id=self._next_id,
                submitter=submitter,
                type=sub_type,
                image_ref=image_ref,
                label=label,
                created_at=utc_now(),
                provenance=provenance,
            )
            self._next_id += 1
            self._submissions[sub.id] = sub
            self._pending.append(sub.id)
            self.log.append(
                {
                    "event": "created",
                    "id": sub.id,
                    "submitter": sub.submitter,
                    "type": sub.type,
                    "image": sub.image_ref,
                    "label": sub.label,
                    "created_at": sub.created_at,
                    "provenance": sub.provenance,
                }
            )
            return sub

    def take_next(self) -> Submission | None:
        """Move the FIFO head to `processing`; None when the queue is empty."""
        with self._lock:
            if not self._pending:
                return None
            if self._processing_id is not None:
                raise StateError(
                    f"submission {self._processing_id} is already processing"
                )
            sid = self._pending.pop(0)
            sub = self._submissions[sid]
            if sub.status != "queued":
                raise StateError(f"submission {sid} is {sub.status}, not queued")
            sub.status = "processing"
            self._processing_id = sid
            self.log.append({"event": "processing", "id": sid, "at": utc_now()})
            return sub

    def finish(
        self,
        sid: int,
        status: str,
        elapsed_ms: float,
        prediction: dict | None = None,
        processed_at: str | None = None,
        learned_at: str | None = None,
        error_detail: str | None = None,
    ) -> Submission:
        if status not in TERMINAL_STATUSES:
            raise StateError(f"{status!r} is not a terminal status")
        with self._lock:
            sub = self._submissions[sid]
            if sub.status != "processing" or self._processing_id != sid:
                raise StateError(f"submission {sid} is not processing")
            sub.status = status
            sub.prediction = prediction
            sub.processed_at = processed_at
            sub.learned_at = learned_at
            sub.error_detail = error_detail
            self._processing_id = None
            self.latency.record(sub.type, elapsed_ms)
            self.log.append(
                {
                    "event": "finished",
                    "id": sid,
                    "status": status,
                    "prediction": prediction,
                    "processed_at": processed_at,
                    "learned_at": learned_at,
                    "error_detail": error_detail,
                    "elapsed_ms": elapsed_ms,
                }
            )
            return sub

    def add_confirmation(self, sid: int, doctor: str, label: str, learn_id: int) -> None:
        with self._lock:
            sub = self._submissions[sid]
            at = utc_now()
            sub.confirmation = {
                "doctor": doctor,
                "label": label,
                "learn_id": learn_id,
                "at": at,
            }
            self.log.append(
                {
                    "event": "confirmed",
                    "id": sid,
                    "doctor": doctor,
                    "label": label,
                    "learn_id": learn_id,
                    "at": at,
                }
            )

    # -- reads ---------------------------------------------------------------

    def get(self, sid: int) -> Submission:
        with self._lock:
            try:
                return self._submissions[sid]
            except KeyError:
                raise NotFoundError(f"submission {sid} not found") from None

    def all_submissions(self) -> list[Submission]:
        with self._lock:
            return [self._submissions[sid] for sid in sorted(self._submissions)]

    def queue_depth(self) -> int:
        with self._lock:
            return len(self._pending)

    def close(self) -> None:
        self.log.close()
