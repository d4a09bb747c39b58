"""Reproducible sampling: a splitmix64 stream plus point and tangent samplers.

Uniforms take the top 53 bits of each 64-bit output; normals use the cosine
branch of Box-Muller on two consecutive uniforms.  Nothing here depends on
numpy's generators, so the same seed gives the same samples everywhere.
"""

from __future__ import annotations

import math

import numpy as np

MASK = (1 << 64) - 1
DEFAULT_CONIC_MARGIN = 0.2


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        return z ^ (z >> 31)

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * 2.0 ** -53

    def normal(self) -> float:
        u1, u2 = self.uniform(), self.uniform()
        return math.sqrt(-2.0 * math.log1p(-u1)) * math.cos(2.0 * math.pi * u2)

    def uniforms(self, shape) -> np.ndarray:
        size = int(np.prod(shape))
        return np.array([self.uniform() for _ in range(size)]).reshape(shape)

    def normals(self, shape) -> np.ndarray:
        size = int(np.prod(shape))
        return np.array([self.normal() for _ in range(size)]).reshape(shape)

    def spawn(self, tag: int) -> "SplitMix64":
        """Independent stream keyed by ``tag`` (used per suite section)."""
        return SplitMix64(self.next_u64() ^ ((tag * 0xD1B54A32D192ED03) & MASK))


def sample_points(rng: SplitMix64, box, count: int) -> np.ndarray:
    box = np.asarray(box, float)
    lo, hi = box[:, 0], box[:, 1]
    return lo + (hi - lo) * rng.uniforms((count, len(box)))


def sample_tangents(rng: SplitMix64, nav, x, count: int,
                    margin: float = DEFAULT_CONIC_MARGIN) -> np.ndarray:
    """h-unit tangent vectors at ``x`` inside the conic domain.

    Components are standard normal, reflected y -> -y when W_0 < 0, scaled to
    unit h-length and rejected when W_0 < margin.
    """
    x = np.asarray(x, float)
    hv, w = nav.h(x), nav.W(x)
    wl = hv @ w
    out = []
    tries = 0
    while len(out) < count:
        tries += 1
        if tries > 1000 * count + 1000:
            raise RuntimeError("tangent sampler could not satisfy the conic margin")
        y = rng.normals(len(x))
        norm = math.sqrt(y @ hv @ y)
        if norm == 0.0:
            continue
        y = y / norm
        w0 = wl @ y
        if w0 < 0:
            y, w0 = -y, -w0
        if w0 < max(margin, 1e-6):
            continue
        out.append(y)
    return np.array(out).reshape(count, len(x))


def sample_transverse(rng: SplitMix64, y: np.ndarray, min_sine: float = 0.1) -> np.ndarray:
    """Random vectors u (one per row of ``y``) that are not nearly parallel to y."""
    y = np.atleast_2d(y)
    out = np.empty_like(y)
    for k, yk in enumerate(y):
        while True:
            u = rng.normals(len(yk))
            c = abs(u @ yk) / (np.linalg.norm(u) * np.linalg.norm(yk))
            if math.sqrt(max(1.0 - c * c, 0.0)) >= min_sine:
                out[k] = u
                break
    return out
