"""Manifests, frames, frame sampling, capture windows and seeded dataset splits."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .expressions import CLASS_NAMES, ExpressionClass
from .images import ensure_gray, preprocess, read_image
from .landmarks import flat_profile, read_sidecar


class ManifestError(ValueError):
    pass


# --------------------------------------------------------------------------
# Manifest
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Record:
    image: str
    label: ExpressionClass
    subject: str = ""
    asd: bool = False
    landmarks: str | None = None
    timestamp: float | None = None

    def to_line(self) -> str:
        parts = [f"image={self.image}"]
        if self.landmarks:
            parts.append(f"landmarks={self.landmarks}")
        parts.append(f"label={self.label.label}")
        if self.subject:
            parts.append(f"subject={self.subject}")
        parts.append(f"asd={int(self.asd)}")
        if self.timestamp is not None:
            parts.append(f"ts={self.timestamp:g}")
        return " ".join(parts)


@dataclass
class DatasetManifest:
    records: list[Record] = field(default_factory=list)
    root: Path = Path(".")

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def labels(self) -> np.ndarray:
        return np.array([int(r.label) for r in self.records], dtype=np.int64)

    def asd_counts(self) -> dict[str, int]:
        pos = sum(r.asd for r in self.records)
        return {"positive": pos, "negative": len(self.records) - pos}

    def subset(self, indices) -> "DatasetManifest":
        return DatasetManifest([self.records[i] for i in indices], self.root)

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.root / p


_KEYS = {"image", "landmarks", "label", "subject", "asd", "ts"}


def parse_manifest_line(line: str, lineno: int = 0) -> Record:
    fields = {}
    for tok in line.split():
        key, sep, value = tok.partition("=")
        if not sep or key not in _KEYS:
            raise ManifestError(f"line {lineno}: unrecognized field {tok!r}")
        if key in fields:
            raise ManifestError(f"line {lineno}: duplicate field {key!r}")
        fields[key] = value
    for req in ("image", "label"):
        if not fields.get(req):
            raise ManifestError(f"line {lineno}: missing or empty {req}=")
    try:
        label = ExpressionClass.parse(fields["label"])
    except ValueError:
        raise ManifestError(f"line {lineno}: unknown label {fields['label']!r}; "
                            f"valid labels: {', '.join(CLASS_NAMES)}") from None
    asd = fields.get("asd", "0")
    if asd not in ("0", "1"):
        raise ManifestError(f"line {lineno}: asd must be 0 or 1, got {asd!r}")
    ts = None
    if "ts" in fields:
        try:
            ts = float(fields["ts"])
        except ValueError:
            raise ManifestError(f"line {lineno}: bad timestamp {fields['ts']!r}") from None
        if not ts >= 0:
            raise ManifestError(f"line {lineno}: timestamp must be nonnegative, got {ts}")
    if "landmarks" in fields and not fields["landmarks"]:
        raise ManifestError(f"line {lineno}: empty landmarks path")
    return Record(fields["image"], label, fields.get("subject", ""), asd == "1",
                  fields.get("landmarks"), ts)


def load_manifest(path) -> DatasetManifest:
    """Read ``key=value`` records, one per line; ``#`` starts a comment line."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    records = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        records.append(parse_manifest_line(stripped, lineno))
    return DatasetManifest(records, path.parent)


def write_manifest(manifest: DatasetManifest, path) -> None:
    Path(path).write_text("".join(r.to_line() + "\n" for r in manifest.records))


@dataclass
class Dataset:
    """Preprocessed images (N x S x S x 1 on [0, 1]) with labels and optional landmark profiles."""
    images: np.ndarray
    labels: np.ndarray
    aux: np.ndarray | None = None

    def __len__(self):
        return len(self.labels)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.images[idx], self.labels[idx], None if self.aux is None else self.aux[idx])


def load_dataset(manifest: DatasetManifest, size: int, with_landmarks: bool = False,
                 raw_size: tuple[int, int] | None = None) -> Dataset:
    imgs, aux = [], []
    for r in manifest.records:
        imgs.append(preprocess(read_image(manifest.resolve(r.image), raw_size), size))
        if with_landmarks:
            if not r.landmarks:
                raise ManifestError(f"record {r.image} has no landmarks sidecar")
            aux.append(flat_profile(read_sidecar(manifest.resolve(r.landmarks))))
    images = np.stack(imgs) if imgs else np.zeros((0, size, size, 1))
    return Dataset(images, manifest.labels, np.stack(aux) if with_landmarks and aux else None)


# --------------------------------------------------------------------------
# Frames and sampling
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Frame:
    pixels: np.ndarray  # H x W x 1 grayscale on 0..255
    timestamp: float

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=np.float64)
        if p.ndim == 2:
            p = p[..., None]
        if p.ndim != 3 or p.shape[2] != 1 or p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError(f"frame must be H x W x 1, got {p.shape}")
        if p.min() < 0 or p.max() > 255:
            raise ValueError("frame values must lie in [0, 255]")
        object.__setattr__(self, "pixels", p)


@dataclass(frozen=True)
class SamplePolicy:
    fps: float = 30.0
    keep_rate: float = 1 / 6
    variance_max: bool = False
    seed: int | None = 0

    def __post_init__(self):
        if not 0 < self.keep_rate <= 1:
            raise ValueError(f"keep rate must be in (0, 1], got {self.keep_rate}")
        if not self.variance_max and self.keep_rate < 1 and self.seed is None:
            raise ValueError("random frame dropping needs a seed")


def keep_count(n: int, keep_rate: float) -> int:
    return 0 if n == 0 else max(1, min(n, int(round(n * keep_rate))))


def sample_frames(frames: Sequence[Frame], policy: SamplePolicy = SamplePolicy()) -> list[Frame]:
    """Drop frames down to ``keep_rate`` of the input, preserving order.

    Random mode keeps a seeded uniform subset. Variance-max mode splits the
    clip into k equal segments, keeps the first frame, then takes from each
    later segment the frame farthest (L2) from the last kept one; ties keep
    the earliest frame. Segmenting keeps the picks spread over time.
    """
    n = len(frames)
    k = keep_count(n, policy.keep_rate)
    if k == n:
        return list(frames)
    if not policy.variance_max:
        rng = np.random.default_rng(policy.seed)
        idx = np.sort(rng.choice(n, size=k, replace=False))
        return [frames[i] for i in idx]

    flat = np.stack([f.pixels.reshape(-1) for f in frames])
    bounds = [i * n // k for i in range(k + 1)]
    chosen = [0]
    for lo, hi in zip(bounds[1:-1], bounds[2:]):
        d = np.linalg.norm(flat[lo:hi] - flat[chosen[-1]], axis=1)
        chosen.append(lo + int(np.argmax(d)))
    return [frames[i] for i in chosen]


def window_schedule(frames: Sequence[Frame], start: float = 0.0, spacing: float = 10.0,
                    windows: int = 4, width: float | None = None) -> list[list[Frame]]:
    """Group frames into capture windows ``[start + k*spacing, start + k*spacing + width)``."""
    if not spacing > 0:
        raise ValueError(f"spacing must be > 0, got {spacing}")
    if windows < 1:
        raise ValueError(f"need at least one window, got {windows}")
    width = spacing if width is None else width
    if not width > 0:
        raise ValueError(f"window width must be > 0, got {width}")
    out = []
    for k in range(windows):
        lo = start + k * spacing
        win = [f for f in frames if lo <= f.timestamp < lo + width]
        if not win:
            raise ValueError(f"window {k} at t+{k * spacing:g}s ([{lo:g}, {lo + width:g}) s) has no frames")
        out.append(win)
    return out


def window_label(offset: float) -> str:
    return "t" if offset == 0 else f"t+{offset:g}s"


_FRAME_NUM = re.compile(r"(\d+)")


def load_frame_dir(directory, fps: float = 30.0, raw_size: tuple[int, int] | None = None) -> list[Frame]:
    """Numbered frame files (pgm/ppm, or raw with ``raw_size``) sorted by number;
    frame i gets timestamp i / fps."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"frame directory not found: {directory}")
    suffixes = {".raw", ".bin", ".gray"} if raw_size else {".pgm", ".ppm", ".pnm"}
    files = [p for p in directory.iterdir() if p.suffix.lower() in suffixes]

    def key(p):
        nums = _FRAME_NUM.findall(p.stem)
        return (int(nums[-1]) if nums else -1, p.name)

    frames = []
    for i, p in enumerate(sorted(files, key=key)):
        frames.append(Frame(ensure_gray(read_image(p, raw_size)), i / fps))
    return frames


# --------------------------------------------------------------------------
# Splits
# --------------------------------------------------------------------------

def _labels_of(items) -> np.ndarray:
    if isinstance(items, DatasetManifest):
        return items.labels
    return np.asarray(items, dtype=np.int64)


def split_indices(labels, ratio: float = 0.8, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Stratified seeded train/test split of positions ``0..n-1``.

    The test size is round(n * (1 - ratio)), apportioned over classes by
    largest remainder with at least one train and one test item per class.
    """
    labels = _labels_of(labels)
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    rng = np.random.default_rng(seed)
    classes = np.unique(labels)
    groups = {}
    for c in classes:
        idx = np.flatnonzero(labels == c)
        if len(idx) < 2:
            raise ValueError(f"class {ExpressionClass(int(c)).label} has {len(idx)} record(s); "
                             "stratified splitting needs at least 2")
        groups[c] = rng.permutation(idx)
    n = len(labels)
    n_test = min(max(int(round(n * (1 - ratio))), len(classes)), n - len(classes))
    quota = {c: len(g) * n_test / n for c, g in groups.items()}
    alloc = {c: min(max(int(np.floor(q)), 1), len(groups[c]) - 1) for c, q in quota.items()}
    # largest remainder, ties by class index
    order = sorted(classes, key=lambda c: (-(quota[c] - np.floor(quota[c])), c))
    while sum(alloc.values()) != n_test:
        step = 1 if sum(alloc.values()) < n_test else -1
        moved = False
        for c in (order if step > 0 else order[::-1]):
            new = alloc[c] + step
            if 1 <= new <= len(groups[c]) - 1:
                alloc[c] = new
                moved = True
                if sum(alloc.values()) == n_test:
                    break
        if not moved:
            break
    test = np.sort(np.concatenate([groups[c][:alloc[c]] for c in classes]))
    train = np.sort(np.concatenate([groups[c][alloc[c]:] for c in classes]))
    return train, test


def split_dataset(manifest: DatasetManifest, ratio: float = 0.8, seed: int = 0):
    train, test = split_indices(manifest, ratio, seed)
    return manifest.subset(train), manifest.subset(test)


def kfold_indices(labels, k: int = 5, seed: int = 0) -> list[np.ndarray]:
    """Seeded near-equal folds; class-grouped shuffled items are dealt round-robin,
    so sizes differ by at most one and classes spread evenly."""
    labels = _labels_of(labels)
    n = len(labels)
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if n < k:
        raise ValueError(f"{n} records cannot be split into {k} folds")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    dealt = perm[np.argsort(labels[perm], kind="stable")]
    return [np.sort(dealt[i::k]) for i in range(k)]


def kfold(manifest: DatasetManifest, k: int = 5, seed: int = 0) -> list[DatasetManifest]:
    return [manifest.subset(f) for f in kfold_indices(manifest, k, seed)]
