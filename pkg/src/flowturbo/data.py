"""Seeded toy datasets with class labels for conditional training."""
from __future__ import annotations

import numpy as np

from .errors import DomainError

KINDS = ("moons", "gmm", "checkerboard", "spiral", "shapes8")
_ALIASES = {
    "twomoons": "moons",
    "two_moons": "moons",
    "gaussianmixture": "gmm",
    "gaussian_mixture": "gmm",
    "shapes": "shapes8",
}


def _moons(n, rng):
    y = rng.integers(0, 2, size=n)
    theta = rng.uniform(0.0, np.pi, size=n)
    upper = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    lower = np.stack([1.0 - np.cos(theta), 0.5 - np.sin(theta)], axis=1)
    x = np.where(y[:, None] == 0, upper, lower)
    x = x + rng.normal(0.0, 0.08, size=x.shape)
    # roughly zero mean, unit spread
    return (x - [0.5, 0.25]) * 1.6, y


def _gmm(n, rng, modes=8, radius=2.0, std=0.15):
    y = rng.integers(0, modes, size=n)
    ang = 2 * np.pi * y / modes
    centres = radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    return centres + rng.normal(0.0, std, size=(n, 2)), y


def _checkerboard(n, rng, cells=4, half=2.0):
    # pick a black cell uniformly, then a point uniformly inside it
    size = 2 * half / cells
    black = [(i, j) for i in range(cells) for j in range(cells) if (i + j) % 2 == 0]
    pick = rng.integers(0, len(black), size=n)
    ij = np.array(black)[pick]
    x = -half + (ij + rng.uniform(size=(n, 2))) * size
    return x, (ij[:, 0] % 2).astype(np.int64)


def _spiral(n, rng):
    y = rng.integers(0, 2, size=n)
    r = np.sqrt(rng.uniform(size=n))
    theta = 3.0 * np.pi * r + np.pi * y
    x = 2.2 * r[:, None] * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    return x + rng.normal(0.0, 0.05, size=(n, 2)), y


def _shapes8(n, rng):
    """8x8 grayscale glyphs in [-1, 1]: 0 filled square, 1 plus sign, 2 ring."""
    y = rng.integers(0, 3, size=n)
    ii, jj = np.mgrid[0:8, 0:8]
    out = np.empty((n, 64))
    for k in range(n):
        s = int(rng.integers(3, 6))
        r0, c0 = rng.integers(0, 9 - s, size=2)
        inside = (ii >= r0) & (ii < r0 + s) & (jj >= c0) & (jj < c0 + s)
        if y[k] == 0:
            img = inside
        elif y[k] == 1:
            mid_r, mid_c = r0 + s // 2, c0 + s // 2
            img = inside & ((ii == mid_r) | (jj == mid_c))
        else:
            edge = (ii == r0) | (ii == r0 + s - 1) | (jj == c0) | (jj == c0 + s - 1)
            img = inside & edge
        out[k] = np.where(img, 1.0, -1.0).ravel()
    return out + rng.normal(0.0, 0.05, size=out.shape), y


_SAMPLERS = {
    "moons": (_moons, 2, 2),
    "gmm": (_gmm, 2, 8),
    "checkerboard": (_checkerboard, 2, 2),
    "spiral": (_spiral, 2, 2),
    "shapes8": (_shapes8, 64, 3),
}


class ToyDataset:
    """Infinite sampler over one toy distribution.

    ``sample`` draws from the generator it is given, so a training loop that
    owns one seeded generator stays reproducible.
    """

    def __init__(self, kind: str = "moons", seed: int = 0):
        key = kind.lower()
        key = _ALIASES.get(key, key)
        if key not in _SAMPLERS:
            raise DomainError(f"unknown dataset {kind!r}; choose from {', '.join(KINDS)}")
        self.kind = key
        self.seed = seed
        self._fn, self.dim, self.num_classes = _SAMPLERS[key]
        self._rng = np.random.default_rng(seed)

    def sample(self, n: int, rng: np.random.Generator | None = None) -> tuple[np.ndarray, np.ndarray]:
        if n < 0:
            raise DomainError("sample count must be non-negative")
        x, y = self._fn(n, self._rng if rng is None else rng)
        return np.ascontiguousarray(x, dtype=np.float64), np.asarray(y, dtype=np.int64)

    def __repr__(self):
        return f"ToyDataset({self.kind!r}, seed={self.seed})"
