"""Operator command line: preprocess datasets, train models, run continual
benchmarks, serve the screening API, and inspect checkpoints.

Exit codes: 0 success, 1 operational failure, 2 input rejection. Flags
override config-file values, which override built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
from pathlib import Path

from . import benchmark as bench_mod
from . import imaging, synth
from .network import (
    CheckpointError,
    NetworkConfig,
    TrainConfig,
    init_network,
    fit,
    load_checkpoint,
    predict,
    save_checkpoint,
)
from .service.core import ScreeningService, ServiceConfig
from .strategies import StrategyConfig, strategy_from_dict

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_REJECTED = 2


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (OSError, ValueError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cxrcl")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="apply a preprocessing strategy to a dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_preprocess)

    p = sub.add_parser("train", help="train the screening or validator network")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("bench", help="run a continual-learning benchmark")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--method")
    p.add_argument("--k", type=int)
    p.add_argument("--experiences", type=int)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("serve", help="run the screening service")
    p.add_argument("--config", required=True)
    p.add_argument("--addr")
    p.set_defaults(handler=cmd_serve)

    p = sub.add_parser("classify", help="one-shot local classification")
    p.add_argument("image", help="path of the image to classify")
    p.add_argument("--config", required=True)
    p.set_defaults(handler=cmd_classify)

    p = sub.add_parser("checkpoint-inspect", help="print checkpoint header and stats")
    p.add_argument("path", help="checkpoint file to inspect")
    p.set_defaults(handler=cmd_checkpoint_inspect)

    return parser


def _load_config(path: str) -> dict:
    return json.loads(Path(path).read_text())


def _input_size(cfg: dict) -> tuple[int, int]:
    size = cfg.get("input_size", [32, 32])
    return int(size[0]), int(size[1])


def _network_cfg(cfg: dict, seed: int) -> NetworkConfig:
    block = cfg.get("network", {})
    sizes = block["layer_sizes"] if isinstance(block, dict) else block
    return NetworkConfig(layer_sizes=tuple(int(s) for s in sizes), seed=seed)


def _train_cfg(cfg: dict, seed: int) -> TrainConfig:
    block = cfg.get("train", {})
    return TrainConfig(
        max_epochs=int(block.get("epochs", 70)),
        batch_size=int(block.get("batch", 64)),
        patience=int(block.get("patience", 10)),
        lr=float(block.get("lr", 0.001)),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# preprocess
# ---------------------------------------------------------------------------


def cmd_preprocess(args) -> int:
    cfg = _load_config(args.config)
    manifest = imaging.load_manifest(cfg["manifest"])
    out_dir = Path(args.out or cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = imaging.Preprocessing(
        strategy=cfg.get("strategy", "original"),
        equalize=bool(cfg.get("equalize", False)),
    )
    crop_fraction = float(cfg.get("crop_fraction", imaging.DEFAULT_CROP_FRACTION))
    resize_to = cfg.get("resize_to")  # [w, h]; applied before equalization

    errors: list[str] = []
    new_splits: dict[str, list[imaging.SampleRef]] = {}
    for split_name in ("train", "validation", "test"):
        new_refs = []
        for ref in getattr(manifest, split_name):
            out_name = f"{ref.source_id}{ref.image_path.suffix or '.png'}"
            out_path = out_dir / out_name
            try:
                if spec.strategy == "original" and not spec.equalize and resize_to is None:
                    shutil.copyfile(ref.image_path, out_path)
                else:
                    img = imaging.load_image(ref.image_path)
                    mask = None
                    if spec.strategy == "segmented":
                        if ref.mask_path is None:
                            raise ValueError("no mask path in manifest")
                        mask = imaging.resize_like(
                            imaging.load_image(ref.mask_path), img
                        )
                    out = imaging.preprocess(
                        img,
                        imaging.Preprocessing(strategy=spec.strategy, equalize=False),
                        mask=mask,
                        crop_fraction=crop_fraction,
                    )
                    if resize_to is not None:
                        out = imaging.resize(out, int(resize_to[0]), int(resize_to[1]))
                    if spec.equalize:
                        out = imaging.equalize(out)
                    out_path = out_path.with_suffix(".png")
                    imaging.save_image(out, out_path)
            except (OSError, ValueError) as exc:
                errors.append(f"{ref.source_id}: {exc}")
                continue
            new_refs.append(
                imaging.SampleRef(
                    source_id=ref.source_id, image_path=out_path, label=ref.label
                )
            )
        new_splits[split_name] = new_refs

    derived = imaging.DatasetManifest(
        train=tuple(new_splits["train"]),
        validation=tuple(new_splits["validation"]),
        test=tuple(new_splits["test"]),
        preprocessing=spec,
    )
    imaging.save_manifest(derived, out_dir / "manifest.json")
    total = sum(len(v) for v in new_splits.values())
    print(f"preprocessed: {total} images -> {out_dir} ({spec.tag})")
    if errors:
        for line in errors:
            print(f"error: {line}", file=sys.stderr)
        print(f"failed: {len(errors)} images", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    out = Path(args.out or cfg["out"])
    size = _input_size(cfg)
    role = cfg.get("role", "screening")
    train_cfg = _train_cfg(cfg, seed)

    if role == "screening":
        manifest = imaging.load_manifest(cfg["manifest"])
        train = imaging.load_split(manifest.train, size=size, with_masks=True)
        val = imaging.load_split(manifest.validation, size=size, with_masks=True)
        if not train:
            raise ValueError("manifest has no training samples")
    elif role == "validator":
        block = cfg.get("validator", {})
        n_per_class = int(block.get("n_per_class", 80))
        corpus = synth.validator_dataset(seed, n_per_class=n_per_class, size=size[0])
        if cfg.get("manifest"):
            manifest = imaging.load_manifest(cfg["manifest"])
            positives = imaging.load_split(manifest.train, size=size, with_masks=True)
            corpus += [
                imaging.Sample(s.image, synth.VALIDATOR_VALID, f"manifest-{s.source_id}")
                for s in positives
            ]
        split = max(1, len(corpus) // 5)
        rng_order = sorted(range(len(corpus)), key=lambda i: hash((seed, i)))
        corpus = [corpus[i] for i in rng_order]
        train, val = corpus[split:], corpus[:split]
    else:
        raise ValueError(f"unknown training role {role!r}")

    net_cfg = _network_cfg(cfg, seed)
    net = init_network(net_cfg)
    net, history = fit(net, train, val, train_cfg)
    save_checkpoint(net, out, seed=seed)
    last = history[-1]
    print(f"trained: role={role} epochs={last.epoch} "
          f"val_accuracy={last.val_accuracy:.4f} -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


def cmd_bench(args) -> int:
    cfg = _load_config(args.config)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    experiences = (
        args.experiences
        if args.experiences is not None
        else int(cfg.get("experiences", bench_mod.DEFAULT_EXPERIENCES))
    )
    strategy_block = dict(cfg.get("strategy", {"method": "naive"}))
    if args.method is not None:
        strategy_block["method"] = args.method
    if args.k is not None:
        strategy_block["k"] = args.k
    strategy = strategy_from_dict(strategy_block)

    size = _input_size(cfg)
    manifest = imaging.load_manifest(cfg["manifest"])
    pool = imaging.load_split(manifest.train, size=size, with_masks=True)
    test = imaging.load_split(manifest.test, size=size, with_masks=True)
    stream = bench_mod.make_stream(pool, experiences, seed)

    net_cfg = _network_cfg(cfg, seed)
    train_cfg = _train_cfg(cfg, seed)
    report = bench_mod.run_benchmark(strategy, stream, test, net_cfg, train_cfg)

    report_path = Path(args.out or cfg.get("report_path", "benchmark_report.json"))
    fmt = cfg.get("format", "json")
    bench_mod.emit_report(report, fmt, report_path)

    print(f"strategy: {report.strategy}")
    print(f"experiences: {len(report.accuracies)}")
    print(f"avg_accuracy: {report.avg_accuracy:.4f}")
    print(f"avg_forgetting: {report.avg_forgetting:.4f}")
    print(f"overall_performance: {report.overall_performance:.4f}")
    print(f"avg_eval_time_ms: {report.avg_eval_time_ms:.4f}")
    print(f"report: {report_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# serve
# ---------------------------------------------------------------------------


def service_config_from_dict(cfg: dict) -> ServiceConfig:
    checkpoints = cfg.get("checkpoints", {})
    online = cfg.get("online", {})
    return ServiceConfig(
        data_dir=Path(cfg["data_dir"]),
        users_path=Path(cfg["users"]),
        screening_checkpoint=(
            Path(checkpoints["screening"]) if "screening" in checkpoints else None
        ),
        validator_checkpoint=(
            Path(checkpoints["validator"]) if "validator" in checkpoints else None
        ),
        strategy=strategy_from_dict(cfg.get("strategy", {"method": "lwf"})),
        online_train=TrainConfig(
            max_epochs=int(online.get("epochs", 3)),
            batch_size=int(online.get("batch", 1)),
            patience=int(online.get("patience", 3)),
            lr=float(online.get("lr", 0.001)),
            seed=int(online.get("seed", 0)),
        ),
        input_size=_input_size(cfg),
        token_ttl_seconds=float(cfg.get("token_ttl_seconds", 3600.0)),
        benchmark_report=(
            Path(cfg["benchmark_report"]) if cfg.get("benchmark_report") else None
        ),
    )


def cmd_serve(args) -> int:
    import uvicorn

    from .service.api import build_app

    cfg = _load_config(args.config)
    addr = args.addr or cfg.get("addr", "127.0.0.1:8000")
    host, _, port = addr.rpartition(":")
    service = ScreeningService(service_config_from_dict(cfg))
    app = build_app(service)
    service.start_worker()
    print(f"serving on {host}:{port} (model {service.registry.model_version()})")
    try:
        uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="warning")
    finally:
        service.close()
    return EXIT_OK


# ---------------------------------------------------------------------------
# classify
# ---------------------------------------------------------------------------


def cmd_classify(args) -> int:
    cfg = _load_config(args.config)
    checkpoints = cfg.get("checkpoints", {})
    screening, _ = load_checkpoint(checkpoints["screening"])
    validator, _ = load_checkpoint(checkpoints["validator"])
    size = _input_size(cfg)

    img = imaging.load_image(args.image)
    img = imaging.resize(img, *size)

    from .network import forward, softmax
    from .synth import VALIDATOR_VALID

    logits, _ = forward(validator, img.flat()[None, :])
    confidence = float(softmax(logits)[0, VALIDATOR_VALID])
    if confidence < 0.5:
        print(f"rejected: not a chest X-ray (confidence {confidence:.3f})")
        return EXIT_REJECTED

    label_idx, probs = predict(screening, img)
    print(f"label: {imaging.ClassLabel(label_idx).wire_name}")
    for i, p in enumerate(probs):
        print(f"prob[{imaging.ClassLabel(i).wire_name}]: {p:.6f}")
    print(f"validator_confidence: {confidence:.6f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# checkpoint-inspect
# ---------------------------------------------------------------------------


def cmd_checkpoint_inspect(args) -> int:
    net, header = load_checkpoint(args.path)
    print(f"version: {header['version']}")
    print(f"layer_sizes: {list(net.layer_sizes)}")
    print(f"seed: {header.get('seed')}")
    print(f"created_at: {header.get('created_at')}")
    n_params = sum(p.size for p in net.parameters())
    print(f"parameters: {n_params}")
    flat = net.flat_parameters()
    print(f"param_min: {flat.min():.6f}")
    print(f"param_max: {flat.max():.6f}")
    print(f"param_mean: {flat.mean():.6f}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
