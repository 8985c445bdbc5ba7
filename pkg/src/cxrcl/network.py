"""Dense feedforward classifier with analytic gradients and Adam training.

Everything trains in float64 so that gradient checks against central finite
differences are tight; checkpoints store parameters as little-endian float32.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .imaging import Image, Sample

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
CHECKPOINT_VERSION = 1


class StaleCacheError(RuntimeError):
    """backward() was handed a cache from a different forward pass."""


class CheckpointError(ValueError):
    """Checkpoint file failed a byte-count or header integrity check."""


class UnsupportedVersionError(CheckpointError):
    """Checkpoint header carries a version this code does not read."""


@dataclass(frozen=True)
class NetworkConfig:
    """Layer widths input -> hidden... -> output, plus the init seed."""

    layer_sizes: tuple[int, ...]
    seed: int = 0

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2:
            raise ValueError("a network needs at least input and output layers")
        if any(s < 1 for s in sizes):
            raise ValueError(f"layer sizes must be positive, got {sizes}")
        object.__setattr__(self, "layer_sizes", sizes)


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 70
    batch_size: int = 64
    patience: int = 10
    lr: float = 0.001
    seed: int = 0

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience < 0:
            raise ValueError("patience must be >= 0")


@dataclass
class Network:
    """Per-layer weight matrices (out x in) and bias vectors."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("weights and biases must pair up, one per layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ValueError(f"layer {i} has inconsistent shapes {w.shape}/{b.shape}")
            if i > 0 and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(f"layer {i} input width does not chain")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i} contains non-finite parameters")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> list[np.ndarray]:
        """All parameter tensors in checkpoint order: W then b per layer."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def clone(self) -> "Network":
        return Network([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def flat_parameters(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.parameters()])


def init_network(cfg: NetworkConfig) -> Network:
    """Glorot-uniform initialization, deterministic in cfg.seed."""
    rng = np.random.default_rng(cfg.seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(cfg.layer_sizes[:-1], cfg.layer_sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Network(weights, biases)


def images_to_batch(images) -> np.ndarray:
    """Stack images (or already-flat vectors) into an (n, d) float64 matrix."""
    rows = [
        img.flat() if isinstance(img, Image) else np.asarray(img, dtype=np.float64)
        for img in images
    ]
    return np.stack(rows)


def samples_to_batch(samples: list[Sample]) -> tuple[np.ndarray, np.ndarray]:
    """(n, d) inputs and (n,) integer labels for a list of samples.

    Every training and Fisher/ref-gradient path funnels through here, which
    makes it the single audit point for what data reaches the optimizer.
    """
    X = images_to_batch([s.image for s in samples])
    y = np.array([int(s.label) for s in samples], dtype=np.int64)
    return X, y


@dataclass
class ForwardCache:
    net: Network
    inputs: list[np.ndarray]
    preacts: list[np.ndarray]


def forward(net: Network, batch) -> tuple[np.ndarray, ForwardCache]:
    """Logits for a batch (list of Image or (n, d) array) plus a backward cache."""
    X = batch if isinstance(batch, np.ndarray) else images_to_batch(batch)
    if X.ndim != 2 or X.shape[1] != net.layer_sizes[0]:
        raise ValueError(
            f"batch shape {X.shape} incompatible with input size {net.layer_sizes[0]}"
        )
    inputs, preacts = [], []
    a = X
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        inputs.append(a)
        z = a @ w.T + b
        preacts.append(z)
        a = np.maximum(z, 0.0) if l < net.n_layers - 1 else z
    return a, ForwardCache(net=net, inputs=inputs, preacts=preacts)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def softmax_xent(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. the logits.

    Gradient rows sum to zero (softmax minus one-hot, divided by batch size).
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape[0] != logits.shape[0]:
        raise ValueError("one label per logits row required")
    n = logits.shape[0]
    logp = log_softmax(logits)
    loss = float(-logp[np.arange(n), labels].mean())
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


def backward(net: Network, cache: ForwardCache, dlogits: np.ndarray) -> list[np.ndarray]:
    """Gradients for every parameter tensor, ordered like net.parameters()."""
    if cache.net is not net:
        raise StaleCacheError("cache was produced by a different network")
    if dlogits.shape != cache.preacts[-1].shape:
        raise StaleCacheError(
            f"upstream gradient shape {dlogits.shape} does not match the "
            f"cached forward pass {cache.preacts[-1].shape}"
        )
    grads: list[np.ndarray] = [np.empty(0)] * (2 * net.n_layers)
    dz = dlogits
    for l in range(net.n_layers - 1, -1, -1):
        grads[2 * l] = dz.T @ cache.inputs[l]
        grads[2 * l + 1] = dz.sum(axis=0)
        if l > 0:
            da = dz @ net.weights[l]
            dz = da * (cache.preacts[l - 1] > 0.0)
    return grads


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_network(cls, net: Network, lr: float = 0.001) -> "AdamState":
        return cls(
            lr=lr,
            m=[np.zeros_like(p) for p in net.parameters()],
            v=[np.zeros_like(p) for p in net.parameters()],
        )


def adam_step(net: Network, grads: list[np.ndarray], state: AdamState):
    """Bias-corrected Adam update, applied to the parameters in place."""
    params = net.parameters()
    if len(grads) != len(params):
        raise ValueError("one gradient tensor per parameter tensor required")
    state.t += 1
    b1t = 1.0 - state.beta1**state.t
    b2t = 1.0 - state.beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        p -= state.lr * (m / b1t) / (np.sqrt(v / b2t) + state.eps)
    return net, state


def accuracy(net: Network, X: np.ndarray, y: np.ndarray) -> float:
    logits, _ = forward(net, X)
    return float((logits.argmax(axis=1) == y).mean())


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_accuracy: float


def fit(
    net: Network,
    train: list[Sample],
    val: list[Sample],
    cfg: TrainConfig,
    loss_fn=None,
    penalty_fn=None,
    grad_fn=None,
) -> tuple[Network, list[EpochStats]]:
    """Mini-batch Adam training with early stopping on validation accuracy.

    Returns the network holding the parameter snapshot with the highest
    validation accuracy seen, plus per-epoch history. With an empty val list
    the training accuracy stands in for model selection. Deterministic given
    cfg.seed.

    The three hooks let continual-learning strategies reshape training while
    sharing this exact loop (so the no-hook path is their common baseline):
    loss_fn(X, logits, labels) replaces plain cross-entropy, penalty_fn(net)
    adds a parameter-space penalty (loss, grads), and grad_fn(grads) rewrites
    the batch gradient before the optimizer step.
    """
    if not train:
        raise ValueError("training set must be non-empty")
    X, y = samples_to_batch(train)
    if val:
        Xv, yv = samples_to_batch(val)
    else:
        Xv, yv = X, y
    n = X.shape[0]

    rng = np.random.default_rng(cfg.seed)
    state = AdamState.for_network(net, lr=cfg.lr)
    history: list[EpochStats] = []
    best_params = None
    best_acc = -np.inf
    stale = 0

    for epoch in range(1, cfg.max_epochs + 1):
        perm = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            logits, cache = forward(net, X[idx])
            if loss_fn is None:
                loss, dlogits = softmax_xent(logits, y[idx])
            else:
                loss, dlogits = loss_fn(X[idx], logits, y[idx])
            grads = backward(net, cache, dlogits)
            if penalty_fn is not None:
                p_loss, p_grads = penalty_fn(net)
                loss += p_loss
                grads = [g + pg for g, pg in zip(grads, p_grads)]
            if grad_fn is not None:
                grads = grad_fn(grads)
            adam_step(net, grads, state)
            batch_losses.append(loss)

        val_acc = accuracy(net, Xv, yv)
        history.append(
            EpochStats(
                epoch=epoch,
                train_loss=float(np.mean(batch_losses)),
                train_accuracy=accuracy(net, X, y),
                val_accuracy=val_acc,
            )
        )
        if val_acc > best_acc:
            best_acc = val_acc
            best_params = [p.copy() for p in net.parameters()]
            stale = 0
        else:
            stale += 1
            if stale > cfg.patience:
                break

    for p, best in zip(net.parameters(), best_params):
        p[...] = best
    return net, history


def predict(net: Network, img: Image) -> tuple[int, np.ndarray]:
    """Class index (argmax, lowest ordinal on ties) and softmax probabilities."""
    logits, _ = forward(net, img.flat()[None, :])
    probs = softmax(logits)[0]
    return int(np.argmax(probs)), probs


def save_checkpoint(
    net: Network, path: str | Path, seed: int = 0, created_at: str | None = None
) -> None:
    """Header JSON line, then little-endian float32 parameters (W, b per layer)."""
    header = {
        "version": CHECKPOINT_VERSION,
        "layer_sizes": list(net.layer_sizes),
        "seed": int(seed),
        "created_at": created_at
        or datetime.now(timezone.utc).isoformat(timespec="milliseconds"),
    }
    payload = b"".join(
        p.astype("<f4").tobytes(order="C") for p in net.parameters()
    )
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        fh.write(payload)


def load_checkpoint(path: str | Path) -> tuple[Network, dict]:
    """Load and validate a checkpoint; raises CheckpointError on corruption."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint header: {exc}") from exc
    if header.get("version") != CHECKPOINT_VERSION:
        raise UnsupportedVersionError(
            f"unsupported checkpoint version {header.get('version')!r}"
        )
    sizes = header.get("layer_sizes")
    if (
        not isinstance(sizes, list)
        or len(sizes) < 2
        or any(not isinstance(s, int) or s < 1 for s in sizes)
    ):
        raise CheckpointError(f"invalid layer_sizes in header: {sizes!r}")

    expected_floats = sum(
        fan_out * fan_in + fan_out for fan_in, fan_out in zip(sizes[:-1], sizes[1:])
    )
    if len(payload) != 4 * expected_floats:
        raise CheckpointError(
            f"payload holds {len(payload)} bytes, expected {4 * expected_floats}"
        )

    flat = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    weights, biases = [], []
    offset = 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = flat[offset : offset + fan_out * fan_in].reshape(fan_out, fan_in)
        offset += fan_out * fan_in
        b = flat[offset : offset + fan_out]
        offset += fan_out
        weights.append(w.copy())
        biases.append(b.copy())
    return Network(weights, biases), header
