"""Datasets of grayscale images: storage, synthesis, preprocessing, augmentation, splitting.

On disk a dataset is a UTF-8 CSV manifest with header ``id,path,class_name``
and one 8-bit binary PGM (P5) image per row. Paths are relative to the
manifest's directory. Class indices follow the order in which class names
first appear in the manifest.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import cv2
import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ConfigError, DataError, LabelError, LoadError
from .fileio import atomic_write

MANIFEST_HEADER = ["id", "path", "class_name"]
STD_EPS = 1e-8


@dataclass(frozen=True, eq=False)
class ImageSample:
    id: str
    pixels: np.ndarray  # [H, W] grayscale in [0, 255]
    label: int

    def __post_init__(self):
        if self.pixels.ndim != 2:
            raise DataError(f"sample {self.id}: pixels must be a 2-D grayscale array")
        if self.pixels.size and (self.pixels.min() < 0 or self.pixels.max() > 255):
            raise DataError(f"sample {self.id}: pixel values must lie in [0, 255]")


@dataclass
class Dataset:
    samples: list[ImageSample]
    class_names: list[str]

    def __post_init__(self):
        if not self.class_names or len(set(self.class_names)) != len(self.class_names):
            raise DataError("class_names must be non-empty and unique")
        ids = set()
        for s in self.samples:
            if not 0 <= s.label < len(self.class_names):
                raise LabelError(f"sample {s.id}: label {s.label} outside {len(self.class_names)} classes")
            if s.id in ids:
                raise DataError(f"duplicate sample id {s.id!r}")
            ids.add(s.id)

    def __len__(self):
        return len(self.samples)

    @property
    def class_count(self) -> int:
        return len(self.class_names)

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.samples]

    def subset(self, indices: Sequence[int]) -> "Dataset":
        return Dataset([self.samples[i] for i in indices], list(self.class_names))


# -- storage ---------------------------------------------------------------

def read_pgm(path: str | os.PathLike) -> np.ndarray:
    with Image.open(path) as img:
        if img.mode != "L":
            img = img.convert("L")
        return np.asarray(img, dtype=np.float64)


def pgm_bytes(pixels: np.ndarray) -> bytes:
    arr = np.clip(np.rint(pixels), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="L").save(buf, format="PPM")
    return buf.getvalue()


def write_pgm(path: str | os.PathLike, pixels: np.ndarray) -> None:
    atomic_write(path, pgm_bytes(pixels))


def load_dataset(manifest_path: str | os.PathLike) -> Dataset:
    manifest_path = Path(manifest_path)
    try:
        text = manifest_path.read_text(encoding="utf-8")
    except OSError as exc:
        raise LoadError(f"cannot read manifest {manifest_path}: {exc}") from exc
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != MANIFEST_HEADER:
        raise LoadError(f"{manifest_path}: header must be {','.join(MANIFEST_HEADER)}, got {header}")
    samples, class_names, index = [], [], {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 3:
            raise LoadError(f"{manifest_path} line {lineno}: expected 3 fields, got {len(row)}")
        sid, rel, cname = row
        if not cname:
            raise LoadError(f"{manifest_path} line {lineno} ({sid}): empty class name")
        if cname not in index:
            index[cname] = len(class_names)
            class_names.append(cname)
        img_path = manifest_path.parent / rel
        try:
            pixels = read_pgm(img_path)
        except (OSError, UnidentifiedImageError) as exc:
            raise LoadError(f"{manifest_path} line {lineno} ({sid}): cannot read image {img_path}: {exc}") from exc
        samples.append(ImageSample(sid, pixels, index[cname]))
    if not samples:
        raise LoadError(f"{manifest_path}: manifest has no rows")
    try:
        return Dataset(samples, class_names)
    except DataError as exc:
        raise LoadError(f"{manifest_path}: {exc}") from exc


def _safe_name(sample_id: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in sample_id)


def save_dataset(ds: Dataset, out_dir: str | os.PathLike, manifest_name: str = "manifest.csv") -> Path:
    """Write every sample as ``images/<id>.pgm`` plus a manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MANIFEST_HEADER)
    for s in ds.samples:
        rel = f"images/{_safe_name(s.id)}.pgm"
        write_pgm(out_dir / rel, s.pixels)
        w.writerow([s.id, rel, ds.class_names[s.label]])
    manifest = out_dir / manifest_name
    atomic_write(manifest, buf.getvalue())
    return manifest


def write_features_csv(path: str | os.PathLike, ids: Sequence[str], labels: Sequence[int],
                       features: np.ndarray) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "label"] + [f"f{j}" for j in range(features.shape[1])])
    for sid, lab, row in zip(ids, labels, features):
        w.writerow([sid, int(lab)] + [repr(float(v)) for v in row])
    atomic_write(path, buf.getvalue())


def read_features_csv(path: str | os.PathLike) -> tuple[list[str], np.ndarray, np.ndarray]:
    rows = list(csv.reader(io.StringIO(Path(path).read_text())))
    body = rows[1:]
    ids = [r[0] for r in body]
    labels = np.array([int(r[1]) for r in body], dtype=np.int64)
    feats = np.array([[float(v) for v in r[2:]] for r in body], dtype=np.float64)
    return ids, labels, feats


# -- synthetic data ----------------------------------------------------------

_SHAPES = ("disc", "square", "bar")
_CENTRES = ((0.3, 0.3), (0.3, 0.7), (0.7, 0.5), (0.7, 0.25), (0.5, 0.75))


def _draw(kind: str, side: int, cy: float, cx: float, scale: float) -> np.ndarray:
    yy, xx = np.mgrid[0:side, 0:side] + 0.5
    r = side * scale
    if kind == "disc":
        return (yy - cy) ** 2 + (xx - cx) ** 2 <= (0.7 * r) ** 2
    if kind == "square":
        return (np.abs(yy - cy) <= r * 1.15) & (np.abs(xx - cx) <= r * 1.15)
    return (np.abs(yy - cy) <= r * 0.3) & (np.abs(xx - cx) <= r * 2.6)


def synthesize_dataset(rng_seed: int, n_per_class: int, class_count: int, side: int,
                       noise_std: float = 10.0) -> Dataset:
    """Bright disc / square / bar (cycling by class) at a class-dependent spot, plus noise.

    Position jitters by up to 1/16 of the side; classes beyond the third reuse
    the shapes at a larger scale.
    """
    if not 2 <= class_count <= 5:
        raise ConfigError(f"class_count must be in [2, 5], got {class_count}")
    if side < 16:
        raise ConfigError(f"side must be >= 16, got {side}")
    if n_per_class < 1:
        raise ConfigError("n_per_class must be >= 1")
    rng = np.random.default_rng(rng_seed)
    names = [f"class{c}_{_SHAPES[c % 3]}" for c in range(class_count)]
    samples = []
    for c in range(class_count):
        kind = _SHAPES[c % 3]
        scale = 0.14 if c < 3 else 0.2
        fy, fx = _CENTRES[c]
        for i in range(n_per_class):
            jy, jx = rng.uniform(-side / 16, side / 16, size=2)
            mask = _draw(kind, side, fy * side + jy, fx * side + jx, scale)
            img = np.where(mask, 190.0, 50.0) + rng.normal(0.0, noise_std, size=(side, side))
            img = np.clip(np.rint(img), 0, 255)
            samples.append(ImageSample(f"c{c}_{i:05d}", img, c))
    return Dataset(samples, names)


# -- preprocessing -----------------------------------------------------------

def preprocess(sample: ImageSample | np.ndarray, target_side: int) -> np.ndarray:
    """Scale to [0, 1], bilinear-resize to ``target_side``, replicate to 3 channels, standardize.

    Standardization uses the per-image mean and std; the std is floored at
    1e-8 so constant images come out as all zeros.
    """
    if target_side < 8:
        raise ConfigError(f"target_side must be >= 8, got {target_side}")
    pixels = sample.pixels if isinstance(sample, ImageSample) else np.asarray(sample, dtype=np.float64)
    img = pixels.astype(np.float64) / 255.0
    if img.shape != (target_side, target_side):
        img = cv2.resize(img, (target_side, target_side), interpolation=cv2.INTER_LINEAR)
    img = np.repeat(img[:, :, None], 3, axis=2)
    img = img - img.mean()
    return img / max(float(img.std()), STD_EPS)


def preprocess_dataset(ds: Dataset, target_side: int) -> np.ndarray:
    if not len(ds):
        return np.zeros((0, target_side, target_side, 3))
    return np.stack([preprocess(s, target_side) for s in ds.samples])


# -- augmentation --------------------------------------------------------------

@dataclass
class AugmentConfig:
    copies_per_image: int = 3
    keep_originals: bool = True
    hflip: bool = True
    vflip: bool = True
    max_rotation: float = 15.0  # degrees
    max_shift: float = 0.1  # fraction of the side
    seed: int = 0

    def __post_init__(self):
        if self.copies_per_image < 0:
            raise ConfigError("copies_per_image must be >= 0")
        if not 0 <= self.max_rotation <= 15 or not 0 <= self.max_shift <= 0.1:
            raise ConfigError("rotation is limited to 15 degrees and shift to 10% of the side")


def random_transform(pixels: np.ndarray, rng: np.random.Generator, cfg: AugmentConfig) -> np.ndarray:
    img = np.asarray(pixels, dtype=np.float64)
    if cfg.hflip and rng.random() < 0.5:
        img = img[:, ::-1]
    if cfg.vflip and rng.random() < 0.5:
        img = img[::-1, :]
    h, w = img.shape
    angle = rng.uniform(-cfg.max_rotation, cfg.max_rotation)
    ty, tx = rng.uniform(-cfg.max_shift, cfg.max_shift, size=2) * (h, w)
    m = cv2.getRotationMatrix2D(((w - 1) / 2.0, (h - 1) / 2.0), angle, 1.0)
    m[:, 2] += (tx, ty)
    out = cv2.warpAffine(np.ascontiguousarray(img), m, (w, h), flags=cv2.INTER_LINEAR,
                         borderMode=cv2.BORDER_REPLICATE)
    return np.clip(out, 0.0, 255.0)


def augment(ds: Dataset, cfg: AugmentConfig) -> Dataset:
    """Add ``copies_per_image`` random variants of every sample, keeping its label.

    Output order: for each input sample, the original (when kept) followed
    by its variants.
    """
    if cfg.copies_per_image == 0:
        return ds if cfg.keep_originals else Dataset([], list(ds.class_names))
    rng = np.random.default_rng([cfg.seed, 7])
    out = []
    for s in ds.samples:
        if cfg.keep_originals:
            out.append(s)
        for k in range(cfg.copies_per_image):
            out.append(ImageSample(f"{s.id}#aug{k}", random_transform(s.pixels, rng, cfg), s.label))
    return Dataset(out, list(ds.class_names))


# -- splitting / labels --------------------------------------------------------

def stratified_test_counts(class_sizes: Sequence[int], test_fraction: float) -> list[int]:
    """Per-class test counts: ``ceil(fraction * N)`` in total, shared by largest remainder."""
    n = sum(class_sizes)
    total = math.ceil(test_fraction * n - 1e-9)
    quotas = [test_fraction * s for s in class_sizes]
    counts = [math.floor(q + 1e-9) for q in quotas]
    remainders = sorted(range(len(quotas)), key=lambda c: (-(quotas[c] - counts[c]), c))
    for c in remainders[: max(0, total - sum(counts))]:
        counts[c] += 1
    return [min(cnt, s) for cnt, s in zip(counts, class_sizes)]


def train_test_split(ds: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Stratified partition; both sides keep the original sample order."""
    if not 0 < test_fraction < 1:
        raise ConfigError(f"test_fraction must be in (0, 1), got {test_fraction}")
    labels = ds.labels
    by_class = [np.flatnonzero(labels == c) for c in range(ds.class_count)]
    counts = stratified_test_counts([len(ix) for ix in by_class], test_fraction)
    rng = np.random.default_rng([seed, 11])
    test_idx = []
    for ix, k in zip(by_class, counts):
        test_idx.extend(rng.permutation(ix)[:k].tolist())
    test_set = set(test_idx)
    train_idx = [i for i in range(len(ds)) if i not in test_set]
    if not test_idx or not train_idx:
        raise ConfigError(f"test_fraction {test_fraction} leaves one side of the split empty")
    return ds.subset(train_idx), ds.subset(sorted(test_idx))


def to_one_hot(labels: Sequence[int], n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise LabelError(f"labels must lie in [0, {n_classes})")
    out = np.zeros((labels.shape[0], n_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out
