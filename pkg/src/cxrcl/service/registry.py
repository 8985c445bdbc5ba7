"""The live pair of models (input validator + screening classifier), the
continual-learning state, and directory checkpoints for all of it."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..imaging import ClassLabel, Image, Sample
from ..network import (
    CheckpointError,
    Network,
    UnsupportedVersionError,
    load_checkpoint,
    save_checkpoint,
)
from ..strategies import EwcState, GdumbState, GemState, LwfState, StrategyConfig
from .store import utc_now

REGISTRY_VERSION = 1


@dataclass
class ModelRegistry:
    screening: Network
    validator: Network
    strategy_cfg: StrategyConfig
    strategy_state: object = None
    learned_count: int = 0
    checkpoint_history: list[dict] = field(default_factory=list)

    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        for p in self.screening.parameters():
            digest.update(p.astype("<f4").tobytes())
        return digest.hexdigest()[:12]

    def model_version(self) -> str:
        return f"{self.fingerprint()}+{self.learned_count}"

    # -- persistence ---------------------------------------------------------

    def save(self, directory: str | Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        save_checkpoint(self.screening, directory / "screening.ckpt")
        save_checkpoint(self.validator, directory / "validator.ckpt")
        state_meta = _save_strategy_state(self.strategy_state, directory)
        meta = {
            "version": REGISTRY_VERSION,
            "created_at": utc_now(),
            "learned_count": self.learned_count,
            "strategy": {
                "method": self.strategy_cfg.method,
                "k": self.strategy_cfg.k,
                "ewc_lambda": self.strategy_cfg.ewc_lambda,
                "temperature": self.strategy_cfg.temperature,
                "lambda_o": self.strategy_cfg.lambda_o,
            },
            "strategy_state": state_meta,
        }
        (directory / "registry.json").write_text(json.dumps(meta, indent=2) + "\n")
        self.checkpoint_history.append({"path": str(directory), "at": meta["created_at"]})
        return directory

    @classmethod
    def load(cls, directory: str | Path) -> "ModelRegistry":
        directory = Path(directory)
        meta_path = directory / "registry.json"
        if not meta_path.exists():
            raise CheckpointError(f"missing registry metadata {meta_path}")
        try:
            meta = json.loads(meta_path.read_text())
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"unreadable registry metadata: {exc}") from exc
        if meta.get("version") != REGISTRY_VERSION:
            raise UnsupportedVersionError(
                f"unsupported registry version {meta.get('version')!r}"
            )
        screening, _ = load_checkpoint(directory / "screening.ckpt")
        validator, _ = load_checkpoint(directory / "validator.ckpt")
        strategy_cfg = StrategyConfig(
            method=meta["strategy"]["method"],
            k=meta["strategy"]["k"],
            ewc_lambda=meta["strategy"]["ewc_lambda"],
            temperature=meta["strategy"]["temperature"],
            lambda_o=meta["strategy"]["lambda_o"],
        )
        state = _load_strategy_state(meta.get("strategy_state"), directory, strategy_cfg)
        return cls(
            screening=screening,
            validator=validator,
            strategy_cfg=strategy_cfg,
            strategy_state=state,
            learned_count=int(meta.get("learned_count", 0)),
        )


def _pack_samples(samples: list[Sample]) -> dict[str, np.ndarray]:
    return {
        "images": np.stack([s.image.pixels for s in samples]),
        "labels": np.array([int(s.label) for s in samples], dtype=np.int64),
        "ids": np.array([s.source_id for s in samples]),
    }


def _unpack_samples(images, labels, ids) -> list[Sample]:
    return [
        Sample(image=Image(images[i]), label=ClassLabel(int(labels[i])),
               source_id=str(ids[i]))
        for i in range(images.shape[0])
    ]


def _save_strategy_state(state, directory: Path) -> dict | None:
    if state is None:
        return None
    arrays: dict[str, np.ndarray] = {}
    if isinstance(state, EwcState):
        meta = {"kind": "ewc", "lam": state.lam, "n_tensors": len(state.anchor)}
        for i, (a, f) in enumerate(zip(state.anchor, state.fisher)):
            arrays[f"anchor_{i}"] = a
            arrays[f"fisher_{i}"] = f
        if state.history is not None:
            meta["n_tasks"] = len(state.history)
            for t, (anchor, fisher) in enumerate(state.history):
                for i, (a, f) in enumerate(zip(anchor, fisher)):
                    arrays[f"task{t}_anchor_{i}"] = a
                    arrays[f"task{t}_fisher_{i}"] = f
    elif isinstance(state, LwfState):
        save_checkpoint(state.teacher, directory / "lwf_teacher.ckpt")
        meta = {
            "kind": "lwf",
            "temperature": state.temperature,
            "lambda_o": state.lambda_o,
        }
    elif isinstance(state, GemState):
        meta = {
            "kind": "gem",
            "capacity": state.capacity,
            "experiences_seen": state.experiences_seen,
            "experience_ids": sorted(state.memory),
            "rng_state": _rng_state_json(state.rng),
        }
        for eid, stored in state.memory.items():
            for name, arr in _pack_samples(stored).items():
                arrays[f"exp{eid}_{name}"] = arr
    elif isinstance(state, GdumbState):
        meta = {
            "kind": "gdumb",
            "capacity": state.capacity,
            "rng_state": _rng_state_json(state.rng),
        }
        if state.buffer:
            arrays.update(_pack_samples(state.buffer))
    else:
        raise CheckpointError(f"cannot serialize strategy state {type(state)!r}")
    if arrays:
        np.savez(directory / "strategy_state.npz", **arrays)
        meta["arrays"] = True
    return meta


def _load_strategy_state(meta, directory: Path, cfg: StrategyConfig):
    if meta is None:
        return None
    arrays = {}
    if meta.get("arrays"):
        with np.load(directory / "strategy_state.npz") as npz:
            arrays = {k: npz[k] for k in npz.files}
    kind = meta["kind"]
    if kind == "ewc":
        n = meta["n_tensors"]
        history = None
        if "n_tasks" in meta:
            history = [
                (
                    [arrays[f"task{t}_anchor_{i}"] for i in range(n)],
                    [arrays[f"task{t}_fisher_{i}"] for i in range(n)],
                )
                for t in range(meta["n_tasks"])
            ]
        return EwcState(
            anchor=[arrays[f"anchor_{i}"] for i in range(n)],
            fisher=[arrays[f"fisher_{i}"] for i in range(n)],
            lam=meta["lam"],
            history=history,
        )
    if kind == "lwf":
        teacher, _ = load_checkpoint(directory / "lwf_teacher.ckpt")
        return LwfState(
            teacher=teacher,
            temperature=meta["temperature"],
            lambda_o=meta["lambda_o"],
        )
    if kind == "gem":
        memory = {
            eid: _unpack_samples(
                arrays[f"exp{eid}_images"],
                arrays[f"exp{eid}_labels"],
                arrays[f"exp{eid}_ids"],
            )
            for eid in meta["experience_ids"]
        }
        state = GemState(
            capacity=meta["capacity"],
            memory=memory,
            experiences_seen=meta["experiences_seen"],
            rng=_rng_from_json(meta["rng_state"]),
        )
        return state
    if kind == "gdumb":
        buffer = (
            _unpack_samples(arrays["images"], arrays["labels"], arrays["ids"])
            if arrays
            else []
        )
        return GdumbState(
            capacity=meta["capacity"],
            buffer=buffer,
            rng=_rng_from_json(meta["rng_state"]),
        )
    raise CheckpointError(f"unknown strategy state kind {kind!r}")


def _rng_state_json(rng: np.random.Generator) -> dict:
    state = rng.bit_generator.state
    return json.loads(json.dumps(state, default=int))


def _rng_from_json(state: dict) -> np.random.Generator:
    rng = np.random.default_rng()
    restored = dict(state)
    if "state" in restored and isinstance(restored["state"], dict):
        inner = dict(restored["state"])
        if "key" in inner:
            inner["key"] = np.array(inner["key"], dtype=np.uint64)
        restored["state"] = inner
    rng.bit_generator.state = restored
    return rng
