"""Output writers: atomic files, CSV, JSON and PPM scatter rasters."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def atomic_write_bytes(path, data: bytes) -> None:
    """Write to a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def json_dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def write_json(path, obj) -> None:
    atomic_write_text(path, json_dumps(obj))


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    atomic_write_text(path, csv_text(header, rows))


def write_samples_csv(path, samples: np.ndarray) -> None:
    samples = np.asarray(samples)
    header = [f"x{i}" for i in range(samples.shape[1])]
    write_csv(path, header, samples.tolist())


def read_samples_csv(path) -> np.ndarray:
    """Coordinates (the ``x*`` columns) of a samples or dataset CSV."""
    with open(path, newline="") as fh:
        header = next(csv.reader(fh))
    cols = [i for i, name in enumerate(header) if name.startswith("x")]
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2, usecols=cols)


def ppm_scatter(points: np.ndarray, width: int = 256, height: int = 256,
                extent: tuple[float, float, float, float] = (-3.0, 3.0, -3.0, 3.0)) -> bytes:
    """Rasterise 2-D points as a binary PPM: ``P6``, width, height, 255, RGB rows top-down."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2:
        raise ValueError("PPM scatter needs (N, 2) points")
    x_lo, x_hi, y_lo, y_hi = extent
    img = np.full((height, width, 3), 255, dtype=np.uint8)
    col = np.floor((points[:, 0] - x_lo) / (x_hi - x_lo) * width).astype(np.int64)
    row = np.floor((y_hi - points[:, 1]) / (y_hi - y_lo) * height).astype(np.int64)
    keep = (col >= 0) & (col < width) & (row >= 0) & (row < height)
    img[row[keep], col[keep]] = (20, 40, 160)
    return f"P6\n{width} {height}\n255\n".encode("ascii") + img.tobytes()


def ppm_tiles(images: np.ndarray, side: int = 8, per_row: int = 8, lo: float = -1.0, hi: float = 1.0) -> bytes:
    """Lay out flattened ``side x side`` grayscale images as a grid in one PPM."""
    images = np.asarray(images, dtype=np.float64)
    n = len(images)
    rows = max(1, -(-n // per_row))
    canvas = np.zeros((rows * side, per_row * side))
    for k, img in enumerate(images):
        r, c = divmod(k, per_row)
        canvas[r * side : (r + 1) * side, c * side : (c + 1) * side] = img.reshape(side, side)
    grey = np.clip(np.round((canvas - lo) / (hi - lo) * 255), 0, 255).astype(np.uint8)
    rgb = np.repeat(grey[:, :, None], 3, axis=2)
    h, w = grey.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + rgb.tobytes()


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
