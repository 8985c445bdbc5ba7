import json
import time

import numpy as np
import pytest

from cxrcl.imaging import ClassLabel, Image, Sample, encode_png
from cxrcl.network import NetworkConfig, TrainConfig, fit, init_network, save_checkpoint
from cxrcl.service import ScreeningService, ServiceConfig
from cxrcl.strategies import StrategyConfig
from cxrcl.synth import noise_image, validator_dataset, xray_like

SIZE = 16  # 16x16 inputs keep the service tests fast
WIRE_LABELS = {"COVID-19", "Normal", "Pneumonia"}


def make_samples(n_per_class=4, n_classes=3, size=2, seed=0, prefix="s"):
    """Small linearly separable corpus: class c lights up pixel c plus noise."""
    rng = np.random.default_rng(seed)
    out = []
    for c in range(n_classes):
        for i in range(n_per_class):
            vals = rng.uniform(0.0, 0.2, size * size)
            vals[c % (size * size)] += 0.8
            out.append(
                Sample(
                    image=Image.from_flat(size, size, np.clip(vals, 0.0, 1.0)),
                    label=ClassLabel(c % 3),
                    source_id=f"{prefix}-{c}-{i}",
                )
            )
    return out


@pytest.fixture
def toy_samples():
    return make_samples(n_per_class=6, n_classes=3, size=2, seed=7)


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory):
    """Checkpoints for a screening net, a trained input validator, and users."""
    path = tmp_path_factory.mktemp("models")
    screening = init_network(NetworkConfig(layer_sizes=(SIZE * SIZE, 12, 3), seed=1))
    save_checkpoint(screening, path / "screening.ckpt", seed=1)

    corpus = validator_dataset(seed=2, n_per_class=60, size=SIZE)
    validator = init_network(NetworkConfig(layer_sizes=(SIZE * SIZE, 12, 2), seed=2))
    validator, _ = fit(
        validator,
        corpus,
        [],
        TrainConfig(max_epochs=12, batch_size=16, patience=12, lr=0.01, seed=2),
    )
    save_checkpoint(validator, path / "validator.ckpt", seed=2)

    users = {
        "users": [
            {"id": "alice", "role": "patient", "password": "pw-alice"},
            {"id": "paul", "role": "patient", "password": "pw-paul"},
            {"id": "drbob", "role": "doctor", "password": "pw-bob", "patients": ["alice"]},
            {"id": "rita", "role": "researcher", "password": "pw-rita"},
        ]
    }
    (path / "users.json").write_text(json.dumps(users))
    return path


def make_service(model_dir, data_dir, clock=time.time, strategy=None) -> ScreeningService:
    cfg = ServiceConfig(
        data_dir=data_dir,
        users_path=model_dir / "users.json",
        screening_checkpoint=model_dir / "screening.ckpt",
        validator_checkpoint=model_dir / "validator.ckpt",
        strategy=strategy or StrategyConfig(method="lwf"),
        online_train=TrainConfig(max_epochs=1, batch_size=1, patience=1, lr=0.001, seed=0),
        input_size=(SIZE, SIZE),
    )
    return ScreeningService(cfg, clock=clock)


def xray_bytes(seed=0) -> bytes:
    return encode_png(xray_like(np.random.default_rng(seed), SIZE))


def noise_bytes(seed=0) -> bytes:
    return encode_png(noise_image(np.random.default_rng(seed), SIZE))
