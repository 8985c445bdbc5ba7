"""Desk-scale continual-learning comparison on the drifting-blob stream.

Runs naive fine-tuning, LwF, EWC, and GDUMB through a K-experience stream of
drifting Gaussian-blob classes (plus a pooled joint-training reference) over
several seeds, and prints the per-method medians that the acceptance suite
checks: regularization and memory methods should forget no more than naive
fine-tuning, and GDUMB should land near joint training's accuracy.

The defaults mirror tests/test_acceptance.py. The test set is drawn from the
initial drift stage, so each trace reads as "how much stage-one competence
survives" and forgetting is directly visible.

Usage: python scripts/desk_scale_experiment.py [--seeds N] [--drift D] ...
"""

import argparse
import statistics
import time

import numpy as np

from cxrcl.benchmark import evaluate_percent, run_benchmark
from cxrcl.network import NetworkConfig, TrainConfig, fit, images_to_batch, init_network
from cxrcl.strategies import StrategyConfig
from cxrcl.synth import drift_stream


def joint_accuracy(stream, test, net_cfg, train_cfg) -> float:
    pool = [s for e in stream for s in e.samples]
    net = init_network(net_cfg)
    net, _ = fit(net, pool, [], train_cfg)
    X = images_to_batch([s.image for s in test])
    y = np.array([int(s.label) for s in test], dtype=np.int64)
    return evaluate_percent(net, X, y)


def run(seeds, experiences, per_class, epochs, batch, lr, drift, sigma, k,
        ewc_lambda, joint_epochs, size=32):
    layer_sizes = (size * size, 128, 64, 3)
    strategies = {
        "naive": StrategyConfig(method="naive"),
        "lwf": StrategyConfig(method="lwf"),
        "ewc": StrategyConfig(method="ewc", ewc_lambda=ewc_lambda),
        "gdumb": StrategyConfig(method="gdumb", k=k),
    }
    forgetting = {name: [] for name in strategies}
    accuracy = {name: [] for name in strategies}
    joint = []
    t0 = time.perf_counter()
    for seed in range(seeds):
        stream, test = drift_stream(
            seed=seed,
            n_experiences=experiences,
            per_class=per_class,
            test_per_class_per_stage=5,
            size=size,
            drift_span=drift,
            sigma_frac=sigma,
            test_progress=0.0,
        )
        net_cfg = NetworkConfig(layer_sizes=layer_sizes, seed=seed)
        train_cfg = TrainConfig(
            max_epochs=epochs, batch_size=batch, patience=epochs, lr=lr, seed=seed
        )
        for name, strategy in strategies.items():
            report = run_benchmark(strategy, stream, test, net_cfg, train_cfg)
            forgetting[name].append(report.avg_forgetting)
            accuracy[name].append(report.avg_accuracy)
        joint_cfg = TrainConfig(
            max_epochs=joint_epochs, batch_size=batch, patience=joint_epochs,
            lr=lr, seed=seed,
        )
        joint.append(joint_accuracy(stream, test, net_cfg, joint_cfg))
        print(f"seed {seed}: " + " | ".join(
            f"{n} f={forgetting[n][-1]:6.2f} a={accuracy[n][-1]:6.2f}" for n in strategies
        ) + f" | joint a={joint[-1]:6.2f}")

    elapsed = time.perf_counter() - t0
    print(f"\nelapsed: {elapsed:.1f}s over {seeds} seeds")
    med_f = {n: statistics.median(forgetting[n]) for n in strategies}
    med_a = {n: statistics.median(accuracy[n]) for n in strategies}
    med_joint = statistics.median(joint)
    print("median forgetting:", {n: round(v, 3) for n, v in med_f.items()})
    print("median accuracy:", {n: round(v, 3) for n, v in med_a.items()})
    print(f"median joint accuracy: {med_joint:.3f}")
    print(f"lwf <= naive forgetting: {med_f['lwf'] <= med_f['naive']}")
    print(f"ewc <= naive forgetting: {med_f['ewc'] <= med_f['naive']}")
    print(f"gdumb within 10pp of joint: {med_a['gdumb'] >= med_joint - 10.0} "
          f"(gap {med_joint - med_a['gdumb']:.2f}pp)")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--experiences", type=int, default=10)
    ap.add_argument("--per-class", type=int, default=20)
    ap.add_argument("--epochs", type=int, default=5)
    ap.add_argument("--batch", type=int, default=16)
    ap.add_argument("--lr", type=float, default=0.001)
    ap.add_argument("--drift", type=float, default=0.9)
    ap.add_argument("--sigma", type=float, default=0.28)
    ap.add_argument("--k", type=int, default=360)
    ap.add_argument("--ewc-lambda", type=float, default=1e5)
    ap.add_argument("--joint-epochs", type=int, default=20)
    args = ap.parse_args()
    run(
        seeds=args.seeds,
        experiences=args.experiences,
        per_class=args.per_class,
        epochs=args.epochs,
        batch=args.batch,
        lr=args.lr,
        drift=args.drift,
        sigma=args.sigma,
        k=args.k,
        ewc_lambda=args.ewc_lambda,
        joint_epochs=args.joint_epochs,
    )
