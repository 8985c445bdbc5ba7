"""Seeded synthetic image generators for desk-scale experiments and fixtures.

Three families:
  * drifting Gaussian-blob classes for the continual-learning benchmark,
    where each class's blob location migrates across experiences;
  * smooth chest-film-like frames (validator positives, classify fixtures);
  * uniform-noise frames (validator negatives).
"""

from __future__ import annotations

import numpy as np

from .benchmark import Experience
from .imaging import ClassLabel, Image, Sample

N_BLOB_CLASSES = 3


def _blob(size: int, cx: float, cy: float, sigma: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    return np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2.0 * sigma**2))


def blob_sample(
    rng: np.random.Generator,
    class_id: int,
    progress: float,
    size: int = 32,
    drift_span: float = 0.5,
    sigma_frac: float = 0.17,
    source_id: str = "",
) -> Sample:
    """One image of `class_id` at drift `progress` in [0, 1].

    Class c renders a bright blob at angle 2*pi*c/3 around the frame centre;
    as progress advances the angle rotates by drift_span of the inter-class
    gap, so late experiences push each class toward its neighbour's original
    territory. Wider blobs (sigma_frac) make stages of one class overlap, so
    a model trained on any stage generalizes partway across the drift.
    """
    gap = 2.0 * np.pi / N_BLOB_CLASSES
    angle = gap * class_id + drift_span * gap * progress
    radius = size * 0.30
    cx = size / 2.0 + radius * np.cos(angle) + rng.normal(0.0, 1.0)
    cy = size / 2.0 + radius * np.sin(angle) + rng.normal(0.0, 1.0)
    sigma = size * sigma_frac * float(rng.uniform(0.9, 1.1))
    canvas = 0.75 * _blob(size, cx, cy, sigma) + rng.uniform(0.0, 0.08, (size, size))
    return Sample(
        image=Image(np.clip(canvas, 0.0, 1.0)),
        label=ClassLabel(class_id),
        source_id=source_id,
    )


def drift_stream(
    seed: int,
    n_experiences: int = 10,
    per_class: int = 20,
    test_per_class_per_stage: int = 5,
    size: int = 32,
    drift_span: float = 0.5,
    sigma_frac: float = 0.17,
    test_progress: float | None = None,
) -> tuple[list[Experience], list[Sample]]:
    """A drifting-blob experience stream plus a fixed test set.

    With test_progress=None the test set covers every drift stage. Pinning it
    (e.g. 0.0) draws the whole test set from that single stage, which turns
    the accuracy trace into a retention curve for that stage: later
    experiences overwrite it, so forgetting becomes directly visible.
    """
    rng = np.random.default_rng(seed)
    stream = []
    test: list[Sample] = []
    for k in range(n_experiences):
        progress = k / max(n_experiences - 1, 1)
        samples = []
        for c in range(N_BLOB_CLASSES):
            for j in range(per_class):
                samples.append(
                    blob_sample(
                        rng, c, progress, size, drift_span, sigma_frac,
                        source_id=f"train-e{k + 1}-c{c}-{j}",
                    )
                )
            stage = progress if test_progress is None else test_progress
            for j in range(test_per_class_per_stage):
                test.append(
                    blob_sample(
                        rng, c, stage, size, drift_span, sigma_frac,
                        source_id=f"test-e{k + 1}-c{c}-{j}",
                    )
                )
        order = rng.permutation(len(samples))
        stream.append(
            Experience(index=k + 1, samples=tuple(samples[i] for i in order))
        )
    return stream, test


def xray_like(rng: np.random.Generator, size: int = 32) -> Image:
    """A smooth frame with two bright lung-shaped lobes on a graded background."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    base = 0.18 + 0.10 * (yy / size)

    def lobe(cx_frac: float) -> np.ndarray:
        cx = size * (cx_frac + rng.normal(0.0, 0.01))
        cy = size * (0.55 + rng.normal(0.0, 0.01))
        ax = size * 0.16
        ay = size * 0.26
        d = ((xx - cx) / ax) ** 2 + ((yy - cy) / ay) ** 2
        return 1.0 / (1.0 + np.exp(6.0 * (d - 1.0)))

    canvas = base + 0.5 * (lobe(0.32) + lobe(0.68)) + rng.normal(0.0, 0.015, (size, size))
    return Image(np.clip(canvas, 0.0, 1.0))


def noise_image(rng: np.random.Generator, size: int = 32) -> Image:
    return Image(rng.uniform(0.0, 1.0, (size, size)))


VALIDATOR_INVALID = 0
VALIDATOR_VALID = 1


def validator_dataset(seed: int, n_per_class: int = 80, size: int = 32) -> list[Sample]:
    """Binary corpus for the input validator: labels 1 = plausible chest film,
    0 = junk input."""
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(n_per_class):
        samples.append(
            Sample(image=xray_like(rng, size), label=VALIDATOR_VALID,
                   source_id=f"valid-{i}")
        )
        samples.append(
            Sample(image=noise_image(rng, size), label=VALIDATOR_INVALID,
                   source_id=f"invalid-{i}")
        )
    return samples
