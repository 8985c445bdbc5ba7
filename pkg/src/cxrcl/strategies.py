"""Continual-learning strategies behind one dispatch: naive fine-tuning,
EWC, LwF, GEM, and GDUMB.

The regularization methods (EWC, LwF) and GEM reuse the network.fit loop via
its hooks, so each reduces bit-exactly to naive fine-tuning when its own
mechanism is inert (lambda = 0, empty memory, ...).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .imaging import Sample
from .network import (
    EpochStats,
    Network,
    NetworkConfig,
    TrainConfig,
    backward,
    fit,
    forward,
    init_network,
    log_softmax,
    samples_to_batch,
    softmax_xent,
)

METHODS = ("naive", "ewc", "lwf", "gem", "gdumb")
MEMORY_METHODS = ("gem", "gdumb")

DEFAULT_EWC_LAMBDA = 100.0
DEFAULT_TEMPERATURE = 2.0
DEFAULT_LAMBDA_O = 1.0
FISHER_MAX_SAMPLES = 256
GEM_TOLERANCE = 1e-7
GEM_MAX_ITERATIONS = 10_000


class GemSolverError(RuntimeError):
    """The dual solver did not converge within its iteration budget."""


@dataclass(frozen=True)
class StrategyConfig:
    """One strategy plus its knobs; mirrors the config-file strategy block."""

    method: str
    k: int | None = None
    ewc_lambda: float = DEFAULT_EWC_LAMBDA
    ewc_per_experience: bool = False
    temperature: float = DEFAULT_TEMPERATURE
    lambda_o: float = DEFAULT_LAMBDA_O

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}, expected one of {METHODS}")
        if self.method in MEMORY_METHODS:
            if self.k is None or self.k < 1:
                raise ValueError(f"{self.method} requires a positive memory capacity k")
        elif self.k is not None:
            raise ValueError(f"{self.method} does not take a memory capacity")
        if self.ewc_lambda < 0:
            raise ValueError("ewc lambda must be >= 0")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")

    def describe(self) -> str:
        if self.method in MEMORY_METHODS:
            return f"{self.method}(k={self.k})"
        if self.method == "ewc":
            return f"ewc(lambda={self.ewc_lambda:g})"
        if self.method == "lwf":
            return f"lwf(T={self.temperature:g},lambda_o={self.lambda_o:g})"
        return self.method


def strategy_from_dict(block: dict) -> StrategyConfig:
    """Build a StrategyConfig from a config-file strategy block."""
    kwargs = {"method": block.get("method", "naive")}
    if "k" in block and block["k"] is not None:
        kwargs["k"] = int(block["k"])
    if "lambda" in block and block["lambda"] is not None:
        kwargs["ewc_lambda"] = float(block["lambda"])
    if "ewc_per_experience" in block:
        kwargs["ewc_per_experience"] = bool(block["ewc_per_experience"])
    if "temperature" in block and block["temperature"] is not None:
        kwargs["temperature"] = float(block["temperature"])
    if "lambda_o" in block and block["lambda_o"] is not None:
        kwargs["lambda_o"] = float(block["lambda_o"])
    return StrategyConfig(**kwargs)


# ---------------------------------------------------------------------------
# EWC
# ---------------------------------------------------------------------------


@dataclass
class EwcState:
    """Running anchor parameters and additively accumulated Fisher diagonal.

    With `history` set (per-experience mode), each completed experience keeps
    its own (anchor, fisher) pair and the penalty sums over all of them
    instead of using the single running anchor.
    """

    anchor: list[np.ndarray]
    fisher: list[np.ndarray]
    lam: float
    history: list[tuple[list[np.ndarray], list[np.ndarray]]] | None = None


def _anchor_penalty(params, anchor, fisher, lam):
    penalty = 0.0
    grads = []
    for p, a, f in zip(params, anchor, fisher):
        if p.shape != a.shape or p.shape != f.shape:
            raise ValueError("EWC state shapes do not match the network")
        delta = p - a
        penalty += 0.5 * lam * float((f * delta * delta).sum())
        grads.append(lam * f * delta)
    return penalty, grads


def ewc_penalty(net: Network, st: EwcState) -> tuple[float, list[np.ndarray]]:
    """Quadratic anchor penalty (lam/2) * sum F_i (theta_i - anchor_i)^2.

    Returns the penalty value and its gradient contribution per parameter
    tensor, lam * F_i * (theta_i - anchor_i). In per-experience mode the
    penalty and gradient sum over every stored (anchor, fisher) pair.
    """
    params = net.parameters()
    if st.history is not None:
        penalty = 0.0
        grads = [np.zeros_like(p) for p in params]
        for anchor, fisher in st.history:
            if len(params) != len(anchor):
                raise ValueError("EWC state does not match the network's parameters")
            task_penalty, task_grads = _anchor_penalty(params, anchor, fisher, st.lam)
            penalty += task_penalty
            for g, tg in zip(grads, task_grads):
                g += tg
        return penalty, grads
    if len(params) != len(st.anchor):
        raise ValueError("EWC state does not match the network's parameters")
    return _anchor_penalty(params, st.anchor, st.fisher, st.lam)


def estimate_fisher(net: Network, samples: list[Sample]) -> list[np.ndarray]:
    """Empirical Fisher diagonal: mean squared per-sample log-prob gradient."""
    if not samples:
        raise ValueError("Fisher estimation needs at least one sample")
    fisher = [np.zeros_like(p) for p in net.parameters()]
    for sample in samples:
        X, y = samples_to_batch([sample])
        logits, cache = forward(net, X)
        # grad of log p(y|x) is the negated cross-entropy gradient; the sign
        # vanishes under squaring
        _, dlogits = softmax_xent(logits, y)
        for f, g in zip(fisher, backward(net, cache, dlogits)):
            f += np.square(g)
    for f in fisher:
        f /= len(samples)
    return fisher


# ---------------------------------------------------------------------------
# LwF
# ---------------------------------------------------------------------------


@dataclass
class LwfState:
    """Frozen teacher snapshot taken before the current experience."""

    teacher: Network
    temperature: float = DEFAULT_TEMPERATURE
    lambda_o: float = DEFAULT_LAMBDA_O


def lwf_loss(
    student_logits: np.ndarray,
    teacher_logits: np.ndarray,
    labels: np.ndarray,
    temperature: float = DEFAULT_TEMPERATURE,
    lambda_o: float = DEFAULT_LAMBDA_O,
) -> tuple[float, np.ndarray]:
    """Cross-entropy plus temperature-softened distillation toward the teacher.

    loss = CE(student, labels)
           + lambda_o * T^2 * mean KL(softmax(teacher/T) || softmax(student/T))

    Returns the loss and its gradient w.r.t. the student logits.
    """
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    if student_logits.shape != teacher_logits.shape:
        raise ValueError("student and teacher logits must have the same shape")
    ce, dce = softmax_xent(student_logits, labels)
    n = student_logits.shape[0]
    logp = log_softmax(teacher_logits / temperature)
    logq = log_softmax(student_logits / temperature)
    p = np.exp(logp)
    kl = float((p * (logp - logq)).sum(axis=1).mean())
    distill = lambda_o * temperature**2 * kl
    ddistill = lambda_o * temperature * (np.exp(logq) - p) / n
    return ce + distill, dce + ddistill


# ---------------------------------------------------------------------------
# GEM
# ---------------------------------------------------------------------------


@dataclass
class GemState:
    """Episodic memory split per experience, capped at `capacity` samples."""

    capacity: int
    memory: dict[int, list[Sample]] = field(default_factory=dict)
    experiences_seen: int = 0
    rng: np.random.Generator = field(default_factory=np.random.default_rng)

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("memory capacity must be >= 1")

    def total_stored(self) -> int:
        return sum(len(v) for v in self.memory.values())


def flatten_grads(grads: list[np.ndarray]) -> np.ndarray:
    return np.concatenate([g.ravel() for g in grads])


def unflatten_like(flat: np.ndarray, template: list[np.ndarray]) -> list[np.ndarray]:
    out = []
    offset = 0
    for t in template:
        out.append(flat[offset : offset + t.size].reshape(t.shape))
        offset += t.size
    return out


def gem_project(
    g: np.ndarray,
    refs: list[np.ndarray],
    tol: float = GEM_TOLERANCE,
    max_iter: int = GEM_MAX_ITERATIONS,
) -> np.ndarray:
    """Project g to the closest vector with nonnegative inner product against
    every reference gradient.

    Solves min ||z - g||^2 s.t. <z, r> >= 0 for all r via the dual quadratic
    program (z = g + R^T lam, lam >= 0), using projected coordinate descent.
    Returns g itself when it is already feasible.
    """
    g = np.asarray(g, dtype=np.float64)
    if not refs:
        return g
    R = np.stack([np.asarray(r, dtype=np.float64) for r in refs])
    if R.shape[1] != g.shape[0]:
        raise ValueError("reference gradients must match the gradient length")
    b = R @ g
    if np.all(b >= 0.0):
        return g
    A = R @ R.T
    diag = np.diag(A)
    scale = max(1.0, float(np.abs(b).max()))
    lam = np.zeros(R.shape[0])
    for _ in range(max_iter):
        max_delta = 0.0
        for i in range(lam.size):
            if diag[i] <= 0.0:
                continue
            new = max(0.0, lam[i] - (A[i] @ lam + b[i]) / diag[i])
            max_delta = max(max_delta, abs(new - lam[i]))
            lam[i] = new
        if max_delta <= tol * max(1.0, float(np.abs(lam).max())):
            break

    z = g + R.T @ lam
    # the margins (A lam + b)_i equal <r_i, z>, so feasibility is checked on them
    margins = A @ lam + b
    if margins.min() < 0.0:
        # re-project exactly onto the constraint face the iterate identified;
        # this removes residual violations and rescues slow-converging
        # near-parallel constraint sets
        polished = _active_set_polish(g, R, lam, scale)
        if polished is not None:
            polished_margins = R @ polished
            if polished_margins.min() >= margins.min():
                z, margins = polished, polished_margins
    if margins.min() < 0.0:
        # half-space projection sweeps clear the last rounding-level
        # violations that an ill-conditioned active set leaves behind
        sq_norms = (R * R).sum(axis=1)
        for _ in range(50):
            worst = int(np.argmin(margins))
            if margins[worst] >= 0.0 or sq_norms[worst] <= 0.0:
                break
            z = z - (margins[worst] / sq_norms[worst]) * R[worst]
            margins = R @ z
    if margins.min() < -1e-9 * scale:
        raise GemSolverError(
            f"projection left a constraint violated by {-margins.min():.3e} "
            f"after {max_iter} dual iterations"
        )
    return z


def _active_set_polish(
    g: np.ndarray, R: np.ndarray, lam: np.ndarray, scale: float
) -> np.ndarray | None:
    """Exact projection onto the face of the currently violated/active
    constraints, with standard active-set add/drop steps."""
    eps = 1e-12 * scale
    margins = R @ (g + R.T @ lam)
    active = (lam > 0.0) | (margins < 0.0)
    best = None
    for _ in range(4 * R.shape[0] + 8):
        idxs = np.flatnonzero(active)
        if idxs.size == 0:
            return best
        ra = R[idxs]
        lam_a, *_ = np.linalg.lstsq(ra @ ra.T, -ra @ g, rcond=None)
        if lam_a.min() < -eps:
            active[idxs[int(np.argmin(lam_a))]] = False
            continue
        z = g + ra.T @ lam_a
        best = z
        margins = R @ z
        worst = int(np.argmin(margins))
        if margins[worst] >= -eps or active[worst]:
            return z
        active[worst] = True
    return best


def gem_store(st: GemState, experience_id: int, samples: list[Sample]) -> GemState:
    """Rebalance the episodic memory after a new experience.

    Every stored experience gets a quota of floor(capacity / experiences_seen)
    uniformly sampled entries; when the quota underflows to zero, exactly one
    sample from the newest experience is kept instead.
    """
    st.experiences_seen += 1
    quota = st.capacity // st.experiences_seen
    if quota == 0:
        pick = int(st.rng.integers(len(samples)))
        st.memory = {experience_id: [samples[pick]]}
        return st
    st.memory[experience_id] = _subsample(st.rng, list(samples), quota)
    for eid, stored in st.memory.items():
        if len(stored) > quota:
            st.memory[eid] = _subsample(st.rng, stored, quota)
    return st


def _subsample(rng: np.random.Generator, items: list, quota: int) -> list:
    if len(items) <= quota:
        return items
    idx = np.sort(rng.choice(len(items), size=quota, replace=False))
    return [items[i] for i in idx]


def gem_reference_grads(net: Network, memory: dict[int, list[Sample]]) -> list[np.ndarray]:
    """Flat loss gradient on each stored experience at the current parameters."""
    refs = []
    for stored in memory.values():
        X, y = samples_to_batch(stored)
        logits, cache = forward(net, X)
        _, dlogits = softmax_xent(logits, y)
        refs.append(flatten_grads(backward(net, cache, dlogits)))
    return refs


# ---------------------------------------------------------------------------
# GDUMB
# ---------------------------------------------------------------------------


@dataclass
class GdumbState:
    """Greedy class-balanced buffer of at most `capacity` samples."""

    capacity: int
    buffer: list[Sample] = field(default_factory=list)
    rng: np.random.Generator = field(default_factory=np.random.default_rng)

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("buffer capacity must be >= 1")

    def class_counts(self) -> Counter:
        return Counter(s.label for s in self.buffer)


def gdumb_update(st: GdumbState, sample: Sample) -> GdumbState:
    """Insert greedily: fill free space, else displace a random sample of a
    largest class when the incoming class is under-represented."""
    if len(st.buffer) < st.capacity:
        st.buffer.append(sample)
        return st
    counts = st.class_counts()
    c_max = max(counts.values())
    if counts[sample.label] >= c_max:
        return st
    largest = {lbl for lbl, c in counts.items() if c == c_max}
    victims = [i for i, s in enumerate(st.buffer) if s.label in largest]
    st.buffer.pop(victims[int(st.rng.integers(len(victims)))])
    st.buffer.append(sample)
    return st


def gdumb_retrain(
    cfg: NetworkConfig, buffer: list[Sample], train_cfg: TrainConfig
) -> tuple[Network, list[EpochStats]]:
    """Train a freshly initialized network on the buffer contents alone."""
    if not buffer:
        raise ValueError("cannot retrain from an empty buffer")
    net = init_network(cfg)
    return fit(net, buffer, [], train_cfg)


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------


def train_experience(
    strategy: StrategyConfig,
    net: Network,
    state,
    samples: list[Sample],
    train_cfg: TrainConfig,
):
    """Run one experience under the configured strategy.

    Returns (net, state, history). `state` threads the per-method continual
    state between experiences and starts as None.
    """
    if not samples:
        raise ValueError("experience must be non-empty")
    method = strategy.method

    if method == "naive":
        net, history = fit(net, samples, [], train_cfg)
        return net, state, history

    if method == "ewc":
        if state is None:
            state = EwcState(
                anchor=[p.copy() for p in net.parameters()],
                fisher=[np.zeros_like(p) for p in net.parameters()],
                lam=strategy.ewc_lambda,
                history=[] if strategy.ewc_per_experience else None,
            )
        net, history = fit(
            net, samples, [], train_cfg, penalty_fn=lambda n: ewc_penalty(n, state)
        )
        rng = np.random.default_rng(train_cfg.seed)
        subset = _subsample(rng, samples, FISHER_MAX_SAMPLES)
        new_fisher = estimate_fisher(net, subset)
        state.anchor = [p.copy() for p in net.parameters()]
        if state.history is not None:
            state.history.append(([a.copy() for a in state.anchor], new_fisher))
        else:
            state.fisher = [f + nf for f, nf in zip(state.fisher, new_fisher)]
        return net, state, history

    if method == "lwf":
        state = LwfState(
            teacher=net.clone(),
            temperature=strategy.temperature,
            lambda_o=strategy.lambda_o,
        )

        def distill_toward_teacher(X, logits, labels):
            teacher_logits, _ = forward(state.teacher, X)
            return lwf_loss(
                logits, teacher_logits, labels, state.temperature, state.lambda_o
            )

        net, history = fit(net, samples, [], train_cfg, loss_fn=distill_toward_teacher)
        return net, state, history

    if method == "gem":
        if state is None:
            state = GemState(
                capacity=strategy.k, rng=np.random.default_rng(train_cfg.seed)
            )

        def project_against_memory(grads):
            if not state.memory:
                return grads
            refs = gem_reference_grads(net, state.memory)
            flat = flatten_grads(grads)
            projected = gem_project(flat, refs)
            if projected is flat:
                return grads
            return unflatten_like(projected, grads)

        net, history = fit(net, samples, [], train_cfg, grad_fn=project_against_memory)
        state = gem_store(state, state.experiences_seen + 1, samples)
        return net, state, history

    if method == "gdumb":
        if state is None:
            state = GdumbState(
                capacity=strategy.k, rng=np.random.default_rng(train_cfg.seed)
            )
        for sample in samples:
            gdumb_update(state, sample)
        cfg = NetworkConfig(layer_sizes=net.layer_sizes, seed=train_cfg.seed)
        net, history = gdumb_retrain(cfg, state.buffer, train_cfg)
        return net, state, history

    raise ValueError(f"unknown method {method!r}")
