"""Binary netpbm (P5/P6) and raw frame I/O, grayscale conversion, bilinear resize."""
from __future__ import annotations

from pathlib import Path

import numpy as np

LUMA = (0.299, 0.587, 0.114)


class ImageFormatError(ValueError):
    pass


def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        ch = data[pos:pos + 1]
        if ch == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise ImageFormatError("truncated netpbm header")
    return data[start:pos], pos


def decode_netpbm(data: bytes) -> np.ndarray:
    """Decode P5 (grayscale) or P6 (RGB) bytes to an H x W x C float array on 0..255."""
    magic, pos = _read_token(data, 0)
    if magic not in (b"P5", b"P6"):
        raise ImageFormatError(f"unsupported netpbm magic {magic!r}; expected P5 or P6")
    channels = 1 if magic == b"P5" else 3
    fields = []
    for _ in range(3):
        tok, pos = _read_token(data, pos)
        try:
            fields.append(int(tok))
        except ValueError:
            raise ImageFormatError(f"non-integer header field {tok!r}") from None
    width, height, maxval = fields
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise ImageFormatError(f"bad netpbm header: {width}x{height} maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height * channels
    need = count * dtype.itemsize
    body = data[pos:pos + need]
    if len(body) < need:
        raise ImageFormatError(f"truncated pixel data: expected {need} bytes, got {len(body)}")
    px = np.frombuffer(body, dtype=dtype).astype(np.float64).reshape(height, width, channels)
    if maxval != 255:
        px = px * (255.0 / maxval)
    return px


def read_image(path, raw_size: tuple[int, int] | None = None) -> np.ndarray:
    """Read a PGM/PPM file, or a headerless 8-bit dump when ``raw_size`` (W, H) is given.

    Raw dumps are grayscale if their length is W*H and RGB if it is 3*W*H.
    """
    data = Path(path).read_bytes()
    if raw_size is None:
        return decode_netpbm(data)
    w, h = raw_size
    if len(data) == w * h:
        c = 1
    elif len(data) == 3 * w * h:
        c = 3
    else:
        raise ImageFormatError(f"{path}: {len(data)} bytes does not match raw size {w}x{h} (gray or RGB)")
    return np.frombuffer(data, dtype=np.uint8).astype(np.float64).reshape(h, w, c)


def encode_netpbm(img: np.ndarray) -> bytes:
    img = np.asarray(img)
    if img.ndim == 2:
        img = img[..., None]
    h, w, c = img.shape
    if c not in (1, 3):
        raise ImageFormatError(f"cannot encode {c}-channel image")
    px = np.clip(np.floor(np.asarray(img, dtype=np.float64) + 0.5), 0, 255).astype(np.uint8)
    magic = b"P5" if c == 1 else b"P6"
    return magic + f"\n{w} {h}\n255\n".encode() + px.tobytes()


def write_image(img: np.ndarray, path) -> None:
    Path(path).write_bytes(encode_netpbm(img))


def to_grayscale(rgb: np.ndarray) -> np.ndarray:
    """Luma 0.299 R + 0.587 G + 0.114 B, rounded half-up to an integer level."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected an H x W x 3 image, got shape {rgb.shape}")
    y = rgb[..., 0] * LUMA[0] + rgb[..., 1] * LUMA[1] + rgb[..., 2] * LUMA[2]
    return np.floor(y + 0.5)[..., None]


def ensure_gray(img: np.ndarray) -> np.ndarray:
    if img.ndim == 2:
        return img[..., None]
    if img.shape[2] == 3:
        return to_grayscale(img)
    if img.shape[2] == 1:
        return img
    raise ValueError(f"expected 1 or 3 channels, got {img.shape[2]}")


def resize(frame: np.ndarray, size: int | tuple[int, int] = 64) -> np.ndarray:
    """Bilinear resize of H x W x 1 with corner-aligned sampling, clamped to [0, 255]."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim == 2:
        frame = frame[..., None]
    h, w = frame.shape[:2]
    if h < 2 or w < 2:
        raise ValueError(f"cannot resize a degenerate {h}x{w} frame")
    oh, ow = (size, size) if isinstance(size, int) else size
    if oh < 1 or ow < 1:
        raise ValueError(f"bad target size {oh}x{ow}")
    ys = np.arange(oh) * ((h - 1) / (oh - 1)) if oh > 1 else np.zeros(1)
    xs = np.arange(ow) * ((w - 1) / (ow - 1)) if ow > 1 else np.zeros(1)
    y0 = np.minimum(np.floor(ys).astype(int), h - 1)
    x0 = np.minimum(np.floor(xs).astype(int), w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    dy = (ys - y0)[:, None, None]
    dx = (xs - x0)[None, :, None]
    a = frame[y0][:, x0]
    b = frame[y0][:, x1]
    c = frame[y1][:, x0]
    d = frame[y1][:, x1]
    # lerp form keeps constant images exactly constant
    top = a + dx * (b - a)
    bottom = c + dx * (d - c)
    out = top + dy * (bottom - top)
    return np.clip(out, 0.0, 255.0)


def preprocess(img: np.ndarray, size: int) -> np.ndarray:
    """Raw 0..255 image of any channel count -> size x size x 1 on [0, 1]."""
    return resize(ensure_gray(img), size) / 255.0
