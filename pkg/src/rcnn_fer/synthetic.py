"""Seeded synthetic stand-ins for face data: one geometric template per class plus noise."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import Dataset, DatasetManifest, Frame, Record, write_manifest
from .expressions import N_CLASSES, ExpressionClass
from .images import resize, write_image

SIZE = 64


def templates(size: int = SIZE) -> np.ndarray:
    """Seven distinct patterns on [0, 1], shape 7 x size x size."""
    y, x = np.mgrid[0:size, 0:size] / (size - 1)
    r = np.hypot(x - 0.5, y - 0.5)
    pats = [
        (np.floor(y * 8) % 2),                              # horizontal stripes
        (np.floor(x * 8) % 2),                              # vertical stripes
        (np.floor(x * 4) + np.floor(y * 4)) % 2,            # checkerboard
        (r < 0.3).astype(float),                            # disc
        (np.abs(x - y) < 0.12).astype(float),               # diagonal bar
        ((np.abs(x - 0.5) < 0.08) | (np.abs(y - 0.5) < 0.08)).astype(float),  # cross
        (np.floor(r * 10) % 2),                             # rings
    ]
    return np.stack(pats).astype(np.float64)


def make_dataset(per_class: int = 40, noise: float = 0.05, seed: int = 0,
                 size: int = SIZE) -> tuple[np.ndarray, np.ndarray]:
    """``per_class`` noisy copies of each template, images N x size x size x 1 on [0, 1].

    Samples are ordered class by class.
    """
    rng = np.random.default_rng(seed)
    tpl = templates(size)
    imgs, labels = [], []
    for c in range(N_CLASSES):
        for _ in range(per_class):
            imgs.append(np.clip(tpl[c] + rng.normal(0.0, noise, tpl[c].shape), 0.0, 1.0))
            labels.append(c)
    return np.stack(imgs)[..., None], np.array(labels, dtype=np.int64)


def to_profile(images: np.ndarray, size: int) -> np.ndarray:
    """Resize [0, 1] images to ``size`` through the 0..255 pipeline."""
    if images.shape[1] == size:
        return images
    return np.stack([resize(im * 255.0, size) / 255.0 for im in images])


def synthetic_dataset(size: int = 32, per_class: int = 40, noise: float = 0.05, seed: int = 0) -> Dataset:
    images, labels = make_dataset(per_class, noise, seed)
    return Dataset(to_profile(images, size), labels)


def write_synthetic(out_dir, per_class: int = 40, noise: float = 0.05, seed: int = 0,
                    asd_fraction: float = 0.5) -> Path:
    """Write PGM files and a manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    images, labels = make_dataset(per_class, noise, seed)
    rng = np.random.default_rng(seed + 1)
    records = []
    for i, (img, lab) in enumerate(zip(images, labels)):
        name = f"images/{i:04d}_{ExpressionClass(int(lab)).label}.pgm"
        write_image(img * 255.0, out_dir / name)
        records.append(Record(name, ExpressionClass(int(lab)), f"s{i % 10:02d}",
                              bool(rng.random() < asd_fraction)))
    path = out_dir / "manifest.txt"
    write_manifest(DatasetManifest(records, out_dir), path)
    return path


def class_frames(cls: int, n: int, fps: float = 30.0, start: float = 0.0, noise: float = 0.05,
                 seed: int = 0) -> list[Frame]:
    """A run of ``n`` noisy frames of one template at ``fps`` (0..255 pixels)."""
    rng = np.random.default_rng(seed)
    tpl = templates()[cls]
    return [Frame(np.clip(tpl + rng.normal(0.0, noise, tpl.shape), 0, 1)[..., None] * 255.0,
                  start + i / fps) for i in range(n)]


def write_frame_dir(out_dir, schedule: list[tuple[int, float]], fps: float = 30.0,
                    noise: float = 0.05, seed: int = 0) -> Path:
    """Write numbered PGM frames whose class follows ``schedule`` of (class, seconds) runs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    i = 0
    for run, (cls, seconds) in enumerate(schedule):
        for f in class_frames(cls, int(round(seconds * fps)), fps, noise=noise, seed=seed + run):
            write_image(f.pixels, out_dir / f"frame_{i:05d}.pgm")
            i += 1
    return out_dir
