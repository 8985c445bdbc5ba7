"""Grayscale image type, preprocessing operations, and dataset manifests.

All operations are pure functions on immutable images: pixel buffers are
float64 in [0, 1] and marked read-only, so they are safe to share across
threads.
"""

from __future__ import annotations

import enum
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image as PILImage


class ManifestFormatError(ValueError):
    """A manifest file exists but one of its records cannot be parsed."""


class SplitOverlapError(ValueError):
    """The same source_id appears in more than one split (or twice in one)."""


class ClassLabel(enum.IntEnum):
    """Screening classes with a fixed ordinal encoding."""

    COVID19 = 0
    NORMAL = 1
    PNEUMONIA = 2

    @property
    def wire_name(self) -> str:
        return _WIRE_NAMES[self]

    @classmethod
    def from_wire(cls, name: str) -> "ClassLabel":
        try:
            return _FROM_WIRE[name]
        except KeyError:
            raise ValueError(f"unknown class label {name!r}") from None


_WIRE_NAMES = {
    ClassLabel.COVID19: "COVID-19",
    ClassLabel.NORMAL: "Normal",
    ClassLabel.PNEUMONIA: "Pneumonia",
}
_FROM_WIRE = {v: k for k, v in _WIRE_NAMES.items()}

N_CLASSES = len(ClassLabel)


@dataclass(frozen=True)
class Image:
    """A grayscale raster: 2-D float64 array of shape (height, width) in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"image must be a 2-D raster, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image contains non-finite pixels")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("pixel values must lie in [0, 1]")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def from_flat(cls, width: int, height: int, values) -> "Image":
        arr = np.asarray(values, dtype=np.float64)
        if arr.size != width * height:
            raise ValueError(
                f"expected {width * height} pixels for {width}x{height}, got {arr.size}"
            )
        return cls(arr.reshape(height, width))

    def flat(self) -> np.ndarray:
        """Row-major 1-D view of the pixels."""
        return self.pixels.ravel()


@dataclass(frozen=True)
class Sample:
    """A labelled image plus an opaque provenance identifier."""

    image: Image
    label: ClassLabel
    source_id: str


def resize(img: Image, target_w: int, target_h: int) -> Image:
    """Bilinear resize with half-pixel-centre sampling, clamped at the edges.

    Resizing to the source dimensions is a bit-exact identity.
    """
    if target_w < 1 or target_h < 1:
        raise ValueError("target dimensions must be >= 1")
    src = img.pixels
    h, w = src.shape
    xs = np.clip((np.arange(target_w) + 0.5) * (w / target_w) - 0.5, 0.0, w - 1.0)
    ys = np.clip((np.arange(target_h) + 0.5) * (h / target_h) - 0.5, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = (ys - y0)[:, None]
    top = src[y0][:, x0] * (1.0 - fx) + src[y0][:, x1] * fx
    bottom = src[y1][:, x0] * (1.0 - fx) + src[y1][:, x1] * fx
    out = top * (1.0 - fy) + bottom * fy
    return Image(np.clip(out, 0.0, 1.0))


def center_crop(img: Image, fraction: float) -> Image:
    """Centered window of size ceil(fraction*W) x ceil(fraction*H).

    The caller composes with resize() to restore the raster size.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"crop fraction must be in (0, 1], got {fraction}")
    h, w = img.pixels.shape
    cw = math.ceil(fraction * w)
    ch = math.ceil(fraction * h)
    x_off = (w - cw) // 2
    y_off = (h - ch) // 2
    return Image(img.pixels[y_off : y_off + ch, x_off : x_off + cw])


def equalize(img: Image) -> Image:
    """Histogram equalization on the 256-level quantized raster.

    Levels v = round(p*255) are remapped through
    h(v) = round((cdf(v) - cdf_min) / (N - cdf_min) * 255) with cdf_min the
    smallest nonzero cdf value; the result is rescaled to [0, 1]. An image
    occupying a single level is returned unchanged.
    """
    levels = np.rint(img.pixels * 255.0).astype(np.int64)
    counts = np.bincount(levels.ravel(), minlength=256)
    cdf = np.cumsum(counts)
    n = levels.size
    cdf_min = cdf[np.flatnonzero(counts)[0]]
    if cdf_min == n:
        return img
    lut = np.rint((cdf - cdf_min) / (n - cdf_min) * 255.0)
    return Image(lut[levels] / 255.0)


def apply_mask(img: Image, mask: Image) -> Image:
    """Zero out pixels where the mask (thresholded at 0.5) is off."""
    if mask.pixels.shape != img.pixels.shape:
        raise ValueError(
            f"mask shape {mask.pixels.shape} != image shape {img.pixels.shape}"
        )
    return Image(np.where(mask.pixels >= 0.5, img.pixels, 0.0))


STRATEGIES = ("original", "cropped", "segmented")
DEFAULT_CROP_FRACTION = 0.8


@dataclass(frozen=True)
class Preprocessing:
    strategy: str = "original"
    equalize: bool = False

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ManifestFormatError(f"unknown strategy {self.strategy!r}")

    @property
    def tag(self) -> str:
        return f"{self.strategy}-{'equalized' if self.equalize else 'plain'}"


def preprocess(
    img: Image,
    spec: Preprocessing,
    mask: Image | None = None,
    crop_fraction: float = DEFAULT_CROP_FRACTION,
) -> Image:
    """Apply one of the six strategy x equalization combinations."""
    if spec.strategy == "cropped":
        img = center_crop(img, crop_fraction)
    elif spec.strategy == "segmented":
        if mask is None:
            raise ValueError("segmented strategy requires a mask")
        img = apply_mask(img, mask)
    if spec.equalize:
        img = equalize(img)
    return img


@dataclass(frozen=True)
class SampleRef:
    source_id: str
    image_path: Path
    label: ClassLabel
    mask_path: Path | None = None


@dataclass(frozen=True)
class DatasetManifest:
    train: tuple[SampleRef, ...] = ()
    validation: tuple[SampleRef, ...] = ()
    test: tuple[SampleRef, ...] = ()
    preprocessing: Preprocessing = field(default_factory=Preprocessing)


_SPLITS = ("train", "validation", "test")


def _parse_ref(record, base: Path) -> SampleRef:
    if not isinstance(record, dict):
        raise ManifestFormatError(f"sample record must be an object, got {record!r}")
    try:
        source_id = record["id"]
        image_path = record["image_path"]
        label = ClassLabel.from_wire(record["label"])
    except (KeyError, ValueError, TypeError) as exc:
        raise ManifestFormatError(f"malformed sample record {record!r}: {exc}") from exc
    if not isinstance(source_id, str) or not isinstance(image_path, str):
        raise ManifestFormatError(f"malformed sample record {record!r}")
    mask = record.get("mask_path")
    return SampleRef(
        source_id=source_id,
        image_path=base / image_path,
        label=label,
        mask_path=base / mask if mask is not None else None,
    )


def load_manifest(path: str | Path) -> DatasetManifest:
    """Parse a manifest JSON file into resolved, disjoint, sorted splits.

    Raises FileNotFoundError for a missing file, ManifestFormatError for a
    record that does not parse, and SplitOverlapError when a source_id
    appears more than once.
    """
    path = Path(path)
    text = path.read_text()
    if not text.strip():
        return DatasetManifest()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestFormatError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ManifestFormatError("manifest root must be a JSON object")

    base = path.parent
    splits: dict[str, tuple[SampleRef, ...]] = {}
    seen: dict[str, str] = {}
    for split in _SPLITS:
        records = doc.get(split, [])
        if not isinstance(records, list):
            raise ManifestFormatError(f"split {split!r} must be an array")
        refs = sorted(
            (_parse_ref(r, base) for r in records), key=lambda r: r.source_id
        )
        for ref in refs:
            if ref.source_id in seen:
                raise SplitOverlapError(
                    f"source_id {ref.source_id!r} appears in both "
                    f"{seen[ref.source_id]!r} and {split!r}"
                )
            seen[ref.source_id] = split
        splits[split] = tuple(refs)

    pre = doc.get("preprocessing", {})
    if not isinstance(pre, dict):
        raise ManifestFormatError("preprocessing must be an object")
    preprocessing = Preprocessing(
        strategy=pre.get("strategy", "original"),
        equalize=bool(pre.get("equalize", False)),
    )
    return DatasetManifest(preprocessing=preprocessing, **splits)


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    """Write a manifest back to disk with image paths relative to it."""
    path = Path(path)

    def encode(ref: SampleRef) -> dict:
        rec = {
            "id": ref.source_id,
            "image_path": _relativize(ref.image_path, path.parent),
            "label": ref.label.wire_name,
        }
        if ref.mask_path is not None:
            rec["mask_path"] = _relativize(ref.mask_path, path.parent)
        return rec

    doc = {
        "train": [encode(r) for r in manifest.train],
        "validation": [encode(r) for r in manifest.validation],
        "test": [encode(r) for r in manifest.test],
        "preprocessing": {
            "strategy": manifest.preprocessing.strategy,
            "equalize": manifest.preprocessing.equalize,
        },
    }
    path.write_text(json.dumps(doc, indent=2) + "\n")


def _relativize(p: Path, base: Path) -> str:
    try:
        return str(p.relative_to(base))
    except ValueError:
        return str(p)


def decode_image(data: bytes) -> Image:
    """Decode 8-bit grayscale PNG/PGM bytes; color collapses to the channel mean."""
    with PILImage.open(io.BytesIO(data)) as im:
        if im.mode == "L":
            arr = np.asarray(im, dtype=np.float64)
        else:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64).mean(axis=2)
    return Image(arr / 255.0)


def load_image(path: str | Path) -> Image:
    return decode_image(Path(path).read_bytes())


def encode_png(img: Image) -> bytes:
    buf = io.BytesIO()
    data = np.rint(img.pixels * 255.0).astype(np.uint8)
    PILImage.fromarray(data, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def save_image(img: Image, path: str | Path) -> None:
    """Write as 8-bit grayscale; format follows the file extension."""
    data = np.rint(img.pixels * 255.0).astype(np.uint8)
    PILImage.fromarray(data, mode="L").save(path)


def load_split(
    refs, size: tuple[int, int] | None = None, with_masks: bool = False
) -> list[Sample]:
    """Materialize manifest references into samples, optionally resized to (w, h)."""
    samples = []
    for ref in refs:
        img = load_image(ref.image_path)
        if with_masks and ref.mask_path is not None:
            img = apply_mask(img, resize_like(load_image(ref.mask_path), img))
        if size is not None:
            img = resize(img, size[0], size[1])
        samples.append(Sample(image=img, label=ref.label, source_id=ref.source_id))
    return samples


def resize_like(img: Image, reference: Image) -> Image:
    if img.pixels.shape == reference.pixels.shape:
        return img
    return resize(img, reference.width, reference.height)
