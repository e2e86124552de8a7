"""Deterministic low-discrepancy samplers used by all validators.

Every "for all v on the sphere" condition in this package is certified on
one of these reproducible samples, with the resolution recorded by the
caller. Nothing here uses global random state.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import norm as _gauss
from scipy.stats.qmc import Halton


def halton_points(n: int, dim: int, seed_skip: int = 0) -> np.ndarray:
    """First n Halton points in [0,1)^dim (unscrambled, deterministic)."""
    h = Halton(d=dim, scramble=False)
    if seed_skip:
        h.fast_forward(seed_skip)
    return h.random(n)


def sphere_directions(n: int, dim: int, symmetric: bool = True,
                      seed_skip: int = 0) -> np.ndarray:
    """n (or 2n, when symmetrized) unit vectors in R^dim, low-discrepancy.

    Always includes the coordinate axes first, so closed-form witnesses at
    basis vectors are in every sample.
    """
    if dim == 1:
        return np.array([[1.0], [-1.0]]) if symmetric else np.array([[1.0]])
    axes = np.eye(dim)
    n_rand = max(n - dim, 0)
    if n_rand:
        u = halton_points(n_rand, dim, seed_skip=seed_skip + 20)
        g = _gauss.ppf(np.clip(u, 1e-12, 1 - 1e-12))
        nrm = np.linalg.norm(g, axis=1, keepdims=True)
        nrm[nrm == 0] = 1.0
        pts = np.vstack([axes, g / nrm])
    else:
        pts = axes[:n]
    if symmetric:
        pts = np.vstack([pts, -pts])
    return pts


def box_points(n: int, lower, upper, seed_skip: int = 0) -> np.ndarray:
    """n low-discrepancy points in the box [lower, upper]."""
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    u = halton_points(n, len(lower), seed_skip=seed_skip)
    return lower + u * (upper - lower)


def ball_points(n: int, center, radius: float, lower=None, upper=None,
                seed_skip: int = 0) -> np.ndarray:
    """n deterministic points in the Euclidean ball, clipped to a box if given.

    Includes the center itself.
    """
    center = np.asarray(center, float)
    dim = len(center)
    u = halton_points(max(n - 1, 0) * 3 + 8, dim + 1, seed_skip=seed_skip)
    g = _gauss.ppf(np.clip(u[:, :dim], 1e-12, 1 - 1e-12))
    nrm = np.linalg.norm(g, axis=1, keepdims=True)
    nrm[nrm == 0] = 1.0
    r = radius * u[:, dim:] ** (1.0 / dim)
    pts = center + g / nrm * r
    if lower is not None:
        lo, up = np.asarray(lower, float), np.asarray(upper, float)
        keep = np.all((pts >= lo) & (pts <= up), axis=1)
        pts = pts[keep]
    pts = np.vstack([center, pts[:max(n - 1, 0)]])
    return pts


def grid_points(lower, upper, step: float) -> np.ndarray:
    """Axis-aligned lattice covering the box with the given spacing."""
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    axes = [np.arange(lo, up + step * 0.5, step) for lo, up in zip(lower, upper)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)
