"""68-point facial landmarks and the nose-anchored polar feature profile."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

N_POINTS = 68
# 1-based indices in the usual 68-point frontal layout
NOSE_POINTS = tuple(range(28, 37))
NOSE_BRIDGE_TOP, NOSE_BRIDGE_TIP = 28, 31
LEFT_EYE_OUTER, RIGHT_EYE_OUTER = 37, 46
PROFILE_LENGTH = N_POINTS * 4


class LandmarkError(ValueError):
    pass


@dataclass(frozen=True)
class LandmarkSet:
    points: np.ndarray  # 68 x 2, row i is landmark i + 1

    def __post_init__(self):
        p = np.array(self.points, dtype=np.float64)
        if p.shape != (N_POINTS, 2):
            raise LandmarkError(f"expected {N_POINTS} (x, y) points, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise LandmarkError("landmark coordinates must be finite")
        if interocular(p) <= 0:
            raise LandmarkError("outer eye corners 37 and 46 coincide")
        p.setflags(write=False)
        object.__setattr__(self, "points", p)

    def point(self, index: int) -> np.ndarray:
        return self.points[index - 1]


def interocular(points: np.ndarray) -> float:
    return float(np.linalg.norm(points[RIGHT_EYE_OUTER - 1] - points[LEFT_EYE_OUTER - 1]))


def head_center(points: np.ndarray) -> np.ndarray:
    return points[[i - 1 for i in NOSE_POINTS]].mean(axis=0)


def normalize_face(landmarks: LandmarkSet) -> LandmarkSet:
    """Translate the nose centroid to the origin, turn the nose bridge
    (28 -> 31) to point along -y, and scale interocular distance to 1."""
    p = landmarks.points - head_center(landmarks.points)
    bridge = p[NOSE_BRIDGE_TIP - 1] - p[NOSE_BRIDGE_TOP - 1]
    if np.linalg.norm(bridge) == 0:
        raise LandmarkError("degenerate nose bridge: points 28 and 31 coincide")
    theta = -np.pi / 2 - np.arctan2(bridge[1], bridge[0])
    c, s = np.cos(theta), np.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    p = p @ rot.T
    p = p / interocular(p)
    return LandmarkSet(p)


def profile_features(landmarks: LandmarkSet) -> np.ndarray:
    """68 x 4 matrix of (x, y, radius, angle) per landmark.

    The angle of a point sitting exactly on the origin is 0.
    """
    p = landmarks.points
    r = np.hypot(p[:, 0], p[:, 1])
    ang = np.where(r == 0, 0.0, np.arctan2(p[:, 1], p[:, 0]))
    return np.column_stack([p[:, 0], p[:, 1], r, ang])


def flat_profile(landmarks: LandmarkSet) -> np.ndarray:
    """Normalize then profile, flattened to 272 values."""
    return profile_features(normalize_face(landmarks)).reshape(-1)


def read_sidecar(path) -> LandmarkSet:
    """Parse a sidecar of 68 ``index x y`` lines (1-based index)."""
    path = Path(path)
    points = np.full((N_POINTS, 2), np.nan)
    seen = set()
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3:
            raise LandmarkError(f"{path}:{lineno}: expected 'index x y', got {line!r}")
        try:
            idx, x, y = int(parts[0]), float(parts[1]), float(parts[2])
        except ValueError:
            raise LandmarkError(f"{path}:{lineno}: malformed numbers in {line!r}") from None
        if not 1 <= idx <= N_POINTS or idx in seen:
            raise LandmarkError(f"{path}:{lineno}: bad or repeated landmark index {idx}")
        seen.add(idx)
        points[idx - 1] = (x, y)
    if len(seen) != N_POINTS:
        raise LandmarkError(f"{path}: expected {N_POINTS} landmarks, found {len(seen)}")
    return LandmarkSet(points)


def write_sidecar(landmarks: LandmarkSet, path) -> None:
    lines = [f"{i + 1} {x:.6f} {y:.6f}" for i, (x, y) in enumerate(landmarks.points)]
    Path(path).write_text("\n".join(lines) + "\n")


def template_face() -> LandmarkSet:
    """A plausible frontal 68-point layout in pixel-like coordinates (y down)."""
    pts = []
    # jaw 1-17
    for t in np.linspace(np.pi, 0, 17):
        pts.append((50 + 40 * np.cos(t), 55 + 45 * np.sin(t) * 0.9 + 5))
    # eyebrows 18-27
    for x in np.linspace(18, 42, 5):
        pts.append((x, 30 - 4 * np.sin((x - 18) / 24 * np.pi)))
    for x in np.linspace(58, 82, 5):
        pts.append((x, 30 - 4 * np.sin((x - 58) / 24 * np.pi)))
    # nose bridge 28-31, nose base 32-36
    for y in np.linspace(38, 56, 4):
        pts.append((50.0, y))
    for x in np.linspace(42, 58, 5):
        pts.append((x, 61 - 2 * np.cos((x - 50) / 8 * np.pi / 2)))
    # eyes 37-42 and 43-48
    for cx in (30.0, 70.0):
        for t in np.linspace(np.pi, -np.pi * 2 / 3, 6):
            pts.append((cx + 9 * np.cos(t), 40 - 4 * np.sin(t)))
    # mouth 49-68
    for t in np.linspace(np.pi, -np.pi + 2 * np.pi / 12, 12):
        pts.append((50 + 16 * np.cos(t), 76 - 7 * np.sin(t)))
    for t in np.linspace(np.pi, -np.pi + 2 * np.pi / 8, 8):
        pts.append((50 + 10 * np.cos(t), 76 - 3 * np.sin(t)))
    return LandmarkSet(np.array(pts))
