"""Analysis of the horizontal distribution: rank-minimality radii, the
index-n equal-rank sets, orthonormal frames, and Hausdorff distance
between unit-sphere sections of subspaces.

Rank radii are grid-scan estimates against the chart Euclidean distance;
the scan spacing travels with every estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .sampling import sphere_directions
from .structure import RANK_CUTOFF, SubFinslerStructure, rank, rank_many


@dataclass(frozen=True)
class RankRadiusEstimate:
    """Largest scanned radius on which the rank at x is still minimal.

    ``r_hat`` is None when the minimality holds all the way to the scan cap
    (the unbounded case).
    """

    x: tuple[float, ...]
    r_hat: Optional[float]  # None = unbounded (holds at the cap)
    r_cap: float
    grid_step: float

    @property
    def unbounded(self) -> bool:
        return self.r_hat is None

    def at_least(self, r: float) -> bool:
        return self.unbounded or self.r_hat >= r


def _ball_grid(x: np.ndarray, r: float, step: float, lower, upper) -> np.ndarray:
    """Chart-anchored lattice of the given spacing cut to the ball and box,
    plus x itself.

    Anchoring at the chart origin (multiples of ``step``) rather than at x
    keeps axis-aligned loci such as coordinate hyperplanes on the lattice,
    so thin rank-drop sets are seen by the scan.
    """
    axes = [step * np.arange(math.ceil((x[i] - r) / step - 1e-9),
                             math.floor((x[i] + r) / step + 1e-9) + 1)
            for i in range(len(x))]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    pts = np.concatenate([pts, x[None, :]], axis=0)
    keep = np.linalg.norm(pts - x, axis=1) <= r + 1e-12
    pts = pts[keep]
    lo, up = np.asarray(lower, float), np.asarray(upper, float)
    keep = np.all((pts >= lo - 1e-12) & (pts <= up + 1e-12), axis=1)
    return np.clip(pts[keep], lo, up)


def rank_radius(S: SubFinslerStructure, x, r_cap: float,
                grid_step: float) -> RankRadiusEstimate:
    """Scan of the rank-minimality radius at x, in multiples of grid_step."""
    x = np.asarray(x, float)
    rx = rank(S, x)
    radii = np.arange(grid_step, r_cap + grid_step * 0.5, grid_step)
    r_hat: Optional[float] = None
    best = 0.0
    for r in radii:
        pts = _ball_grid(x, r, grid_step, S.domain.lower, S.domain.upper)
        if pts.shape[0] and rank_many(S, pts).min() < rx:
            r_hat = best
            break
        best = float(r)
    if r_hat is None and best >= r_cap - grid_step * 0.5:
        return RankRadiusEstimate(tuple(x), None, r_cap, grid_step)
    return RankRadiusEstimate(tuple(x), best if r_hat is None else r_hat,
                              r_cap, grid_step)


def gn_membership(S: SubFinslerStructure, x, n: int,
                  grid_step: float) -> bool:
    """Whether the rank-minimality radius at x reaches 1/n (scanned)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    est = rank_radius(S, x, r_cap=1.0 / n, grid_step=grid_step)
    return est.at_least(1.0 / n)


def orthonormal_frame(S: SubFinslerStructure, x) -> np.ndarray:
    """Sequential Gram-Schmidt frame of the horizontal space at x.

    Pivots a maximal independent column subset of psi(x) (largest residual
    first is not used: columns are taken in order, skipping dependent ones),
    then orthonormalizes sequentially. Returns a (k, n) array of rows.
    """
    A = S.psi(np.asarray(x, float))
    smax = np.linalg.svd(A, compute_uv=False)
    scale = smax[0] if len(smax) and smax[0] > 0 else 1.0
    frame: list[np.ndarray] = []
    for j in range(A.shape[1]):
        v = A[:, j].astype(float)
        for w in frame:
            v = v - (v @ w) * w
        nrm = np.linalg.norm(v)
        if nrm > RANK_CUTOFF * scale * 10:
            frame.append(v / nrm)
    if not frame:
        raise ValueError(f"zero horizontal space at {x}")
    return np.stack(frame, axis=0)


def subspace_sphere_sample(basis: np.ndarray, n_dirs: int) -> np.ndarray:
    """Deterministic sample of the Euclidean unit sphere of span(basis)."""
    B = np.asarray(basis, float)
    if B.ndim != 2 or B.shape[0] == 0:
        raise ValueError("basis must be a nonempty (k, d) array")
    # orthonormalize so coefficient-sphere points map to unit vectors
    Q, R = np.linalg.qr(B.T)
    if np.linalg.matrix_rank(R, tol=1e-12) < B.shape[0]:
        raise ValueError("basis vectors are dependent")
    k = B.shape[0]
    if k == 2:
        # equally spaced angles: quasi-random circle samples leave chord
        # gaps ~3x the mean, which inflates sampled Hausdorff distances
        th = np.pi * np.arange(2 * n_dirs) / n_dirs
        coeffs = np.stack([np.cos(th), np.sin(th)], axis=1)
    else:
        coeffs = sphere_directions(n_dirs, k, symmetric=True)
    return coeffs @ Q.T


def sphere_hausdorff(V_basis, W_basis, norm: Callable[[np.ndarray], np.ndarray],
                     n_dirs: int = 256) -> float:
    """Hausdorff distance between the two unit-sphere sections, sampled.

    ``norm`` maps a batch of vectors (N, d) to their norm values (N,); the
    sup-inf is computed exactly over the deterministic direction sample.
    """
    A = subspace_sphere_sample(np.asarray(V_basis, float), n_dirs)
    B = subspace_sphere_sample(np.asarray(W_basis, float), n_dirs)
    diffs = A[:, None, :] - B[None, :, :]
    flat = diffs.reshape(-1, A.shape[1])
    D = np.asarray(norm(flat), float).reshape(A.shape[0], B.shape[0])
    return float(max(D.min(axis=1).max(), D.min(axis=0).max()))


def euclidean_norm_batch(V: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.atleast_2d(V), axis=1)
