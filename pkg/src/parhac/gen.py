"""Instance generators: random families and small hand-built gadgets."""
from __future__ import annotations

import math

import numpy as np

from .core import Instance, LinkageKind


def gen_uniform(n: int, k: int, seed: int = 0, kind="centroid") -> Instance:
    """n points uniform in [0, 1]^k, deterministic per seed."""
    if n < 2:
        raise ValueError("n must be at least 2")
    rng = np.random.default_rng(seed)
    return Instance(rng.random((n, k)), None, LinkageKind.parse(kind))


def gen_chain(n: int, eps_gap: float, kind="centroid") -> Instance:
    """Collinear points where the gap after point i (1-based) is 1 + i * eps_gap.

    Every merge changes the gaps next to it, so exact HAC has to resolve the
    chain from the left one pair at a time.
    """
    if n < 3:
        raise ValueError("n must be at least 3")
    if not eps_gap > 0:
        raise ValueError("eps_gap must be positive")
    gaps = 1.0 + eps_gap * np.arange(1, n)
    x = np.concatenate([[0.0], np.cumsum(gaps)])
    return Instance(x[:, None], None, LinkageKind.parse(kind))


def gen_sphere_center(k: int, weight_center: float, radius: float = 1.0,
                      min_sep: float = 1.2, seed: int = 0, attempts: int = 20_000,
                      kind="centroid") -> Instance:
    """Heavy point at the origin plus a greedy packing of the radius-``radius`` sphere.

    Directions are drawn uniformly and accepted when the new point is at
    least ``min_sep`` from every accepted one.  With min_sep > radius each
    sphere point is closer to the centre than to any other sphere point, so
    exact centroid HAC absorbs them into the centre one by one.  Point 0 is
    the centre.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    rng = np.random.default_rng(seed)
    pts: list[np.ndarray] = []
    dirs = rng.standard_normal((attempts, k))
    dirs *= radius / np.linalg.norm(dirs, axis=1, keepdims=True)
    for p in dirs:
        if all(np.linalg.norm(p - q) >= min_sep for q in pts):
            pts.append(p)
    coords = np.vstack([np.zeros((1, k)), np.array(pts)])
    weights = np.concatenate([[weight_center], np.ones(len(pts))])
    return Instance(coords, weights, LinkageKind.parse(kind))


def gen_nonmon_triangle(kind="centroid") -> Instance:
    """Unit equilateral triangle."""
    return Instance(np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]]), None,
                    LinkageKind.parse(kind))


def gen_nonmon_2approx(gamma: float, kind="centroid") -> Instance:
    """Three points with minimum distance 1 where a 2-approximate merge leaves gamma.

    x = (-s, 0), y = (s, 0), z = (0, gamma) with s = sqrt(1 - gamma^2), so
    d(x, z) = d(y, z) = 1 and d(x, y) = 2s <= 2.  Merging x and y is
    2-approximate and puts their centroid at the origin, gamma from z.
    """
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    s = math.sqrt(1.0 - gamma * gamma)
    return Instance(np.array([[-s, 0.0], [s, 0.0], [0.0, gamma]]), None, LinkageKind.parse(kind))
