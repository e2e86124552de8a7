"""Monotone sequences of smooth Finsler metric fields approximating the
generalised metric from below.

The cover is a lazy dyadic lattice: cells are half-open boxes (cores) that
tile the chart, each carrying a dilated support box and an anchor norm.
A cell is a leaf when its anchor norm passes the strict sandwich
``minorant < norm < rho`` on its own support; otherwise it splits into
2^n children. Near rank-drop loci the certified neighborhoods shrink
rapidly, so the tree refines there and cell sizes are strongly
non-uniform — only cells touched by evaluations are ever materialized.

Anchor norms extend ``rho(z, .)`` from the horizontal space V_z by the sum
``base(v_V) + lambda' |v_tail|`` with ``lambda' = (lambda_n + 1) + max of
the previous field on the sphere``; the triangle inequality then makes the
extension strictly dominate the previous field with a margin controlled
by the genuine gap on V_z rather than by lambda'. For Hilbert fiber
norms the kinked sum is replaced in closed form by a sum of two
nondegenerate quadratic norms (smooth, strongly convex, at most O(s_reg)
above the sum); in the general case the extension is smoothed by the
power-mean construction.

The partition of unity is exact by construction: each cell's bump has a
plateau equal to 1 on its core, multiplied by notch factors vanishing at
foreign anchors, then normalized. Cores tile the chart, so the
normalized bumps sum to 1; anchors are lattice points of the support
box, so cells hugging a rank-drop locus can anchor on the locus itself
and may then share an anchor with a neighbor — cells with the same
anchor do not notch each other, and at a shared anchor z the field
evaluates to a convex mix of norms all built at z.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .distribution import gn_membership, orthonormal_frame, sphere_hausdorff, \
    subspace_sphere_sample
from .norms import (
    MetricField,
    NormConstructionError,
    PAIR_POWER,
    SmoothNorm,
    _base_gram,
    _complement_dirs,
    _frame_gram,
    build_anchor_norm,
)
from .polyfield import ChartDomain
from .sampling import box_points, halton_points, sphere_directions
from .structure import (
    RANK_CUTOFF,
    SubFinslerStructure,
    rank_many,
    rho_values,
)


class AssemblyError(RuntimeError):
    """Cover refinement exhausted without a certified anchor norm."""


# ---------------------------------------------------------------------------
# smooth bump ingredients


def smoothstep(u):
    """C-infinity transition: 0 for u <= 0, 1 for u >= 1."""
    u = np.asarray(u, float)
    lo = u <= 0.0
    hi = u >= 1.0
    mid = ~(lo | hi)
    out = np.where(hi, 1.0, 0.0)
    if np.any(mid):
        um = u[mid]
        e1 = np.exp(-1.0 / um)
        e2 = np.exp(-1.0 / (1.0 - um))
        out[mid] = e1 / (e1 + e2)
    return out if out.shape else float(out)


def plateau_decay(t, inner: float, outer: float):
    """1 for t <= inner, smooth decay to 0 at t >= outer."""
    return 1.0 - smoothstep((np.asarray(t, float) - inner) / (outer - inner))


# ---------------------------------------------------------------------------
# cover cells


@dataclass(frozen=True)
class CoverCell:
    """One dyadic cell: half-open core box, dilated support, anchor."""

    level: int
    index: tuple[int, ...]
    spacing: float            # core side length s
    center: tuple[float, ...]
    support_half: float       # b = s (1 + overlap) / 2, per axis
    anchor: tuple[float, ...]
    min_rank: int

    @property
    def core_half(self) -> float:
        return self.spacing / 2.0

    def support_contains(self, x) -> bool:
        c = np.asarray(self.center)
        return bool(np.max(np.abs(np.asarray(x, float) - c)) <= self.support_half)

    def core_contains(self, x) -> bool:
        x = np.asarray(x, float)
        lo = np.asarray(self.index) * self.spacing
        return bool(np.all(x >= lo) and np.all(x < lo + self.spacing))

    def support_corners(self) -> np.ndarray:
        c = np.asarray(self.center)
        signs = np.array(list(itertools.product((-1.0, 1.0), repeat=len(c))))
        return c + self.support_half * signs


@dataclass(frozen=True)
class CoverParams:
    overlap: float = 0.1
    anchor_grid: int = 4      # anchor candidates per axis inside the core
    n_sphere: int = 24        # sphere directions per cell certificate
    n_ball: int = 4           # interior support samples (corners always used)
    max_depth: int = 26       # dyadic splits below the base lattice
    margin: float = 0.95      # base cell diameter safety factor vs 1/n

    def __post_init__(self):
        if not 0.0 < self.overlap < 1.0:
            raise ValueError("overlap must be in (0, 1)")


def base_spacing(n: int, dim: int, params: CoverParams) -> float:
    """Base lattice spacing: support diameter strictly below 1/n."""
    return params.margin / (n * math.sqrt(dim) * (1.0 + params.overlap))


def _anchor_candidates(index, spacing, m, support_half, lower,
                       upper) -> np.ndarray:
    """Global-lattice candidate points inside the support box and chart.

    Candidates are multiples of spacing/m over the whole support (not just
    the core): a cell whose support touches a rank-drop locus must be able
    to anchor there, because rho is unbounded across any cell anchored at
    higher rank next to the locus, no matter how far it refines.  Lattice
    hyperplanes through 0 (the coordinate rank-drop loci of the built-in
    structures) are hit exactly.  Neighboring cells may share an anchor.
    """
    axes = []
    for i, lo, up in zip(index, lower, upper):
        c = (i + 0.5) * spacing
        step = spacing / m
        j0 = math.ceil((max(c - support_half, lo) - 1e-15) / step)
        j1 = math.floor((min(c + support_half, up) + 1e-15) / step)
        coords = step * np.arange(j0, j1 + 1)
        axes.append(coords if len(coords) else np.array(
            [min(max(c, lo), up)]))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1)


def make_cell(S: SubFinslerStructure, level: int, index, spacing: float,
              params: CoverParams) -> CoverCell:
    """Geometry plus the min-rank anchor of one cell (pure in its inputs)."""
    index = tuple(index)
    center = tuple((np.asarray(index, float) + 0.5) * spacing)
    cand = _anchor_candidates(index, spacing, params.anchor_grid,
                              spacing * (1.0 + params.overlap) / 2.0,
                              S.domain.lower, S.domain.upper)
    ranks = rank_many(S, cand)
    min_rank = int(ranks.min())
    best = np.where(ranks == min_rank)[0]
    d2 = np.sum((cand[best] - np.asarray(center)) ** 2, axis=1)
    order = sorted(range(len(best)),
                   key=lambda i: (d2[i], tuple(cand[best[i]])))
    anchor = tuple(cand[best[order[0]]])
    return CoverCell(level=level, index=index, spacing=spacing, center=center,
                     support_half=spacing * (1.0 + params.overlap) / 2.0,
                     anchor=anchor, min_rank=min_rank)


def build_cover(S: SubFinslerStructure, n: int,
                params: Optional[CoverParams] = None,
                box: Optional[ChartDomain] = None) -> list[CoverCell]:
    """The base-level cover for index n: overlapping lattice cells of
    support diameter < 1/n with min-rank anchors (scanned on the candidate
    grid; ties resolved toward the cell center, then lexicographically).
    """
    params = params or CoverParams()
    box = box or S.domain
    lo, up = np.asarray(box.lower), np.asarray(box.upper)
    s = base_spacing(n, box.dim, params)
    ranges = [range(int(math.floor(l / s)), int(math.floor(u / s)) + 1)
              for l, u in zip(lo, up)]
    return [make_cell(S, 0, idx, s, params)
            for idx in itertools.product(*ranges)]


# ---------------------------------------------------------------------------
# partition of unity


def _notch_radius(zi, zj, bi: float, bj: float) -> float:
    return min(0.45 * float(np.linalg.norm(np.asarray(zi) - np.asarray(zj))),
               bi, bj)


def partition_weights(cells: Sequence[CoverCell], x) -> np.ndarray:
    """Normalized bump values of the given cells at x.

    Exactness: the plateau is 1 on each (closed) core, anchors of other
    cells inside a support are notched out (cells sharing the anchor keep
    each other), and cores tile the chart, so the raw sum is positive and
    the normalized weights at any anchor concentrate on the cells anchored
    there.
    """
    x = np.asarray(x, float)
    raw = np.zeros(len(cells))
    for i, cell in enumerate(cells):
        t = np.abs(x - np.asarray(cell.center))
        p = float(np.prod(plateau_decay(t, cell.core_half, cell.support_half)))
        if p > 0.0:
            for j, other in enumerate(cells):
                if j == i or other.anchor == cell.anchor:
                    continue
                zj = np.asarray(other.anchor)
                if np.max(np.abs(zj - np.asarray(cell.center))) <= cell.support_half:
                    r = _notch_radius(cell.anchor, other.anchor,
                                      cell.support_half, other.support_half)
                    if r > 0:
                        p *= float(smoothstep(np.linalg.norm(x - zj) / r))
        raw[i] = p
    total = raw.sum()
    if total <= 0.0:
        raise AssemblyError(f"no bump covers {x.tolist()}; cover incomplete")
    return raw / total


class PartitionOfUnity:
    """Bumps for a fixed (finite, eager) cell list; used by the validators."""

    def __init__(self, cells: Sequence[CoverCell]):
        if not cells:
            raise ValueError("need at least one cell")
        self.cells = list(cells)

    def weights(self, x) -> np.ndarray:
        return partition_weights(self.cells, x)

    def max_defect(self, points) -> float:
        """Max |sum phi - 1| over points (0 by normalization) plus the max
        anchor defect |sum of phi over cells anchored at z - 1| (cells may
        share an anchor on a rank-drop locus)."""
        worst = 0.0
        for x in np.atleast_2d(np.asarray(points, float)):
            w = self.weights(x)
            worst = max(worst, abs(float(w.sum()) - 1.0))
        for anchor in {c.anchor for c in self.cells}:
            w = self.weights(np.asarray(anchor))
            own = sum(w[i] for i, c in enumerate(self.cells)
                      if c.anchor == anchor)
            worst = max(worst, abs(float(own) - 1.0))
        return worst


partition_of_unity = PartitionOfUnity


# ---------------------------------------------------------------------------
# the metric field


@dataclass(frozen=True)
class _Leaf:
    cell: CoverCell
    norm: SmoothNorm
    constants: dict


class FinslerMetricField(MetricField):
    """F_n(x, v) = sum_i phi_i(x) n_i(v) over the lazy dyadic cover.

    ``blend`` is "norm" (convex combination of anchor norms) or "gram"
    (convex combination of the quadratic forms; Hilbert structures only),
    the latter giving a genuine Riemannian metric field.
    """

    def __init__(self, S: SubFinslerStructure, n: int,
                 minorant: Optional[MetricField] = None,
                 eps_n: Optional[float] = None,
                 lambda_n: Optional[float] = None,
                 params: Optional[CoverParams] = None,
                 box: Optional[ChartDomain] = None,
                 blend: str = "norm"):
        if n < 1:
            raise ValueError("sequence index n must be >= 1")
        if blend not in ("norm", "gram"):
            raise ValueError(f"unknown blend {blend!r}")
        if blend == "gram" and not S.is_sub_riemannian:
            raise NormConstructionError(
                "gram blending needs a Hilbert fiber norm")
        self.S = S
        self.n = int(n)
        self.minorant = minorant
        self.eps_n = float(eps_n) if eps_n is not None else 1.0 / n
        self.lambda_n = float(lambda_n) if lambda_n is not None else float(n)
        self.params = params or CoverParams()
        self.box = box or S.domain
        self.blend = blend
        self.base_s = base_spacing(n, self.box.dim, self.params)
        # deterministic overestimate of every tail weight lambda' in this
        # field (lambda' = lambda_n + 1 + 1.01 * minorant sphere max, and
        # the minorant's sphere max is below its own seed); used only by
        # the refinement predictor, never by the certification itself
        prev_seed = getattr(minorant, "lam_seed", 0.0) or 0.0
        self.lam_seed = (self.lambda_n + 1.0) + 1.02 * prev_seed
        # tilt budget for the norm blend: the l^p pair hides its tail term
        # at near-horizontal directions, so the upper cap alone no longer
        # limits how far the anchor subspace may tilt across a cell.  The
        # next level's domination seam does: at a direction v with tail
        # theta from the *next* anchor subspace, this field contributes
        # about lambda' (theta + tau) (tau = this cell's tilt) while the
        # next level offers max((1 - a) rho, Lambda_{n+1} theta); sweeping
        # theta shows it stays above iff lambda' tau is at most about
        # (lambda_{n+1} + 1) / Lambda_{n+1} of rho.  Certification rejects
        # cells beyond 0.6 of that budget (0.6 leaves room for the next
        # level's own deflation and the seam premium of the l^p mean).
        next_gap = self.lambda_n + 2.0
        self.tilt_kappa = 0.6 * next_gap / (next_gap + 1.02 * self.lam_seed)
        # state: (level, index) -> _Leaf | "split"
        self._cells: dict = {}
        self._weights_cache: dict = {}
        # per-point caches: support samples are shared between sibling
        # cells, levels, and the refinement predictor, and the minorant
        # is a fixed completed field, so both probes and minorant values
        # can be keyed by the point alone
        self._probe_cache: dict = {}
        self._mnr_cache: dict = {}
        self._dirs = self._make_dirs()
        self._vcoeffs: dict[int, np.ndarray] = {}
        self.stats = {"leaves": 0, "splits": 0, "predicted_splits": 0}

    # -- shared deterministic direction samples -----------------------------

    def _make_dirs(self) -> np.ndarray:
        d = self.S.n
        eye = np.eye(d)
        return np.concatenate(
            [eye, -eye, sphere_directions(self.params.n_sphere, d)], axis=0)

    def _coeff_sphere(self, k: int) -> np.ndarray:
        if k not in self._vcoeffs:
            if k == 1:
                self._vcoeffs[k] = np.array([[1.0], [-1.0]])
            else:
                eye = np.eye(k)
                self._vcoeffs[k] = np.concatenate(
                    [eye, -eye, sphere_directions(2 * self.params.n_sphere, k)])
        return self._vcoeffs[k]

    # -- minorant ------------------------------------------------------------

    def _minorant_values(self, x, V) -> np.ndarray:
        if self.minorant is None:
            return np.zeros(np.atleast_2d(V).shape[0])
        return np.asarray(self.minorant.values(x, V), float)

    def _minorant_probe(self, pt) -> tuple[np.ndarray, np.ndarray]:
        """Minorant values at the shared ambient directions and at the
        horizontal sphere of pt, cached per point (the minorant is a
        completed field, so the values never change)."""
        return self._minorant_probe_many([pt])[0]

    def _minorant_probe_many(self, pts) -> list[tuple[np.ndarray, np.ndarray]]:
        """Batched _minorant_probe: one grouped field evaluation for all
        cache misses (the blend weights differ per point but the leaf
        norms are shared, so the norm evaluations concatenate)."""
        keys = [np.asarray(pt, float).tobytes() for pt in pts]
        missing = [(k, pt) for k, pt in zip(keys, pts)
                   if k not in self._mnr_cache]
        if missing:
            n_amb = len(self._dirs)
            blocks = []
            for _, pt in missing:
                hd = self._horizontal_probe(pt)[0]
                blocks.append(self._dirs if hd is None
                              else np.concatenate([self._dirs, hd]))
            if self.minorant is None:
                vals = [np.zeros(len(b)) for b in blocks]
            elif isinstance(self.minorant, FinslerMetricField) and \
                    self.minorant.blend == "norm":
                vals = self.minorant._values_blocks(
                    [pt for _, pt in missing], blocks)
            else:
                vals = [self._minorant_values(pt, b)
                        for (_, pt), b in zip(missing, blocks)]
            if len(self._mnr_cache) > 400000:
                self._mnr_cache.clear()
            for (k, _), v in zip(missing, vals):
                self._mnr_cache[k] = (v[:n_amb], v[n_amb:])
        return [self._mnr_cache[k] for k in keys]

    def _values_blocks(self, pts, blocks) -> list[np.ndarray]:
        """values(pts[i], blocks[i]) for several points at once, grouping
        points that share a leaf set so each leaf norm is evaluated on one
        concatenated batch of directions."""
        wl = [self.weights_at(pt) for pt in pts]
        groups: dict = {}
        for i, (leaves, _) in enumerate(wl):
            groups.setdefault(tuple(id(lf) for lf in leaves), []).append(i)
        out: list = [None] * len(pts)
        for idxs in groups.values():
            leaves = wl[idxs[0]][0]
            V = np.concatenate([blocks[i] for i in idxs])
            M = np.stack([np.asarray(lf.norm.values(V), float)
                          for lf in leaves])
            bounds = np.cumsum([len(blocks[i]) for i in idxs])[:-1]
            for i, seg in zip(idxs, np.split(np.arange(len(V)), bounds)):
                out[i] = wl[i][1] @ M[:, seg]
        return out

    # -- cell certification --------------------------------------------------

    def _support_samples(self, cell: CoverCell) -> np.ndarray:
        pts = [np.asarray(cell.anchor, float), np.asarray(cell.center)]
        pts.extend(cell.support_corners())
        if self.params.n_ball:
            c = np.asarray(cell.center)
            h = halton_points(self.params.n_ball, len(c), seed_skip=3)
            pts.extend(c + (2.0 * h - 1.0) * cell.support_half)
        P = np.clip(np.stack(pts), self.box.lower, self.box.upper)
        return np.unique(P, axis=0)

    def _deflation(self, rho_sph_max: float) -> tuple[float, float]:
        """Scheduled gap below rho at this level: the anchor targets
        (1 - a) rho and the upper test reserves (1 - u) rho, with
        a_n > u_n > a_{n+1} interleaved (a_n = c/n, u_n the midpoint of
        a_n and a_{n+1}).  The interleaving hands every level a guaranteed
        domination margin ~ c/n^2 over its predecessor, instead of the
        vanishing leftover slack of the previous certification — without
        it the certified radii collapse geometrically in n.  The factor c
        caps the anchor deviation a * rho_max within the eps_n budget."""
        c = min(0.45, 0.4 / max(rho_sph_max, 1e-12))
        n = self.n
        a = c / n
        u = c * (2 * n + 1) / (2 * n * (n + 1))
        return a, u

    def _horizontal_probe(self, pt):
        """Horizontal sphere directions at pt, their exact rho values, and
        the sampled horizontal sphere max (the ambient direction samples
        are almost surely non-horizontal when the distribution is proper,
        so the upper sandwich must be probed on the horizontal sphere of
        each point explicitly).  Cached per point."""
        return self._horizontal_probe_many(np.asarray(pt, float)[None, :])[0]

    def _horizontal_probe_many(self, pts) -> list:
        """Batched _horizontal_probe: the morphism matrices, fiber grams,
        and SVDs of all cache misses run as one stacked computation."""
        pts = np.asarray(pts, float)
        keys = [p.tobytes() for p in pts]
        miss = [i for i, k in enumerate(keys) if k not in self._probe_cache]
        if miss:
            if len(self._probe_cache) > 400000:
                self._probe_cache.clear()
            if self.S.is_sub_riemannian:
                X = pts[miss]
                A = self.S.psi_many(X)                       # (N, n, d)
                G = self.S.sigma.gram.eval_many(X)
                d = A.shape[2]
                L = np.linalg.cholesky(G.reshape(len(X), d, d))
                M = np.linalg.solve(L, A.transpose(0, 2, 1)).transpose(0, 2, 1)
                U, s, _ = np.linalg.svd(M, full_matrices=False)
                for j, i in enumerate(miss):
                    sj = s[j]
                    r = int((sj > RANK_CUTOFF * sj[0]).sum()) \
                        if sj.size and sj[0] > 0 else 0
                    if r == 0:
                        self._probe_cache[keys[i]] = (None, None, 0, 0.0)
                        continue
                    coeffs = self._coeff_sphere(r)
                    hdirs = coeffs @ U[j][:, :r].T
                    rho_h = np.sqrt(coeffs ** 2 @ (1.0 / sj[:r] ** 2))
                    self._probe_cache[keys[i]] = (hdirs, rho_h, r,
                                                  float(rho_h.max()))
            else:
                for i in miss:
                    self._probe_cache[keys[i]] = \
                        self._horizontal_probe_raw(pts[i])
        return [self._probe_cache[k] for k in keys]

    def _horizontal_probe_raw(self, pt):
        fr = orthonormal_frame(self.S, pt)
        kx = fr.shape[0]
        if kx == 0:
            return None, None, 0, 0.0
        coeffs = self._coeff_sphere(kx)
        hdirs = coeffs @ fr
        if self.S.is_sub_riemannian:
            Bp = _base_gram(self.S, pt, fr)
            rho_h = np.sqrt(np.maximum(
                np.einsum("ni,ij,nj->n", coeffs, Bp, coeffs), 0.0))
        else:
            rho_h = np.asarray(rho_values(self.S, pt, hdirs), float)
        return hdirs, rho_h, kx, float(np.max(rho_h))

    def _too_coarse(self, cell: CoverCell) -> bool:
        """Cheap refinement predictor (no minorant evaluations).

        Estimates the binding upper test at a few support corners with the
        deterministic tail-weight seed Lambda_n >= lambda' and the l^p
        pair extension form; a cell whose estimate already violates the
        reserved cap (1 - u) rho is split without attempting the full
        certification.  Only a heuristic: certification remains the gate,
        a wrong verdict here costs one tree level or one failed certify.
        """
        S = self.S
        z = np.asarray(cell.anchor, float)
        if S.is_sub_riemannian:
            frame, B, k = _frame_gram(S, z)
            if k == 0:
                return True
            Bt = frame.T @ B @ frame
            rho_sph = math.sqrt(max(float(np.max(np.diag(B))), 1e-30))
        else:
            frame = orthonormal_frame(S, z)
            k = frame.shape[0]
            if k == 0:
                return True
            rho_z = np.asarray(
                rho_values(S, z, self._coeff_sphere(k) @ frame), float)
            Bt = frame.T @ frame * float(np.min(rho_z)) ** 2
            rho_sph = float(np.max(rho_z))
        a, _ = self._deflation(rho_sph)
        Btd = (1.0 - a) ** 2 * Bt
        P = frame.T @ frame
        corners = np.clip(cell.support_corners(), self.box.lower,
                          self.box.upper)
        picks = corners[[0, len(corners) // 2, -1]]
        for (hdirs, rho_h, kx, rho_max) in self._horizontal_probe_many(picks):
            if hdirs is None:
                continue
            _, u_pt = self._deflation(rho_max)
            tail = np.linalg.norm(hdirs - hdirs @ P, axis=1)
            flat = np.sqrt(np.maximum(
                np.einsum("ni,ij,nj->n", hdirs, Btd, hdirs), 0.0))
            est = (flat ** PAIR_POWER
                   + (self.lam_seed * tail) ** PAIR_POWER) ** (1.0 / PAIR_POWER)
            if np.any(est >= (1.0 - u_pt) * rho_h):
                return True
            if np.any(self.lam_seed * tail >= self.tilt_kappa * rho_h):
                return True
        return False

    def _post_checks(self, cell: CoverCell, norm, k: int,
                     frame: Optional[np.ndarray] = None,
                     tilt_weight: float = 0.0) -> bool:
        """Strict sandwich at the support samples: minorant below on both
        the ambient and horizontal samples, (1 - u) rho above on the
        horizontal sphere of each point (which carries all the finite rho
        content — ambient samples are almost surely non-horizontal when
        the distribution is proper, and coincide with the horizontal
        sphere at full rank), the transverse floor lambda_n at equal-rank
        points, and (norm blend) the tilt budget lambda' tail <=
        tilt_kappa rho on each neighboring horizontal sphere."""
        S = self.S
        dirs = self._dirs
        nvals = np.asarray(norm.values(dirs), float)
        P = frame.T @ frame if frame is not None else None
        pts = self._support_samples(cell)
        probes = self._horizontal_probe_many(pts)
        # one batched own-norm evaluation over every horizontal sphere
        live = [pr[0] for pr in probes if pr[0] is not None]
        if live:
            flat = np.asarray(norm.values(np.concatenate(live)), float)
            splits = iter(np.split(flat,
                                   np.cumsum([len(b) for b in live])[:-1]))
            nvh_list = [next(splits) if pr[0] is not None else None
                        for pr in probes]
        else:
            nvh_list = [None] * len(pts)
        # the minorant-independent gates first (cheap rejection)
        for pt, (hdirs, rho_h, kx, rho_max), nvh in zip(pts, probes,
                                                        nvh_list):
            if hdirs is None:
                continue
            _, u_pt = self._deflation(rho_max)
            if np.any(nvh >= (1.0 - u_pt) * rho_h):
                return False
            if tilt_weight > 0.0 and P is not None:
                tail = np.linalg.norm(hdirs - hdirs @ P, axis=1)
                if np.any(tilt_weight * tail >= self.tilt_kappa * rho_h):
                    return False
            if kx == k:
                cd = _complement_dirs(S, pt, k)
                if cd is not None and len(cd):
                    cv = np.asarray(norm.values(cd), float)
                    if np.any(cv < self.lambda_n - 1e-12):
                        return False
        for (m_amb, m_h), nvh in zip(self._minorant_probe_many(pts),
                                     nvh_list):
            if np.any(m_amb >= nvals):
                return False
            if nvh is not None and np.any(m_h >= nvh):
                return False
        return True

    def _anchor_frame(self, cell: CoverCell):
        z = np.asarray(cell.anchor, float)
        frame, B, k = _frame_gram(self.S, z)
        if k == 0:
            return None
        m_z = self._minorant_probe(z)[0]
        m_max = float(np.max(m_z, initial=0.0))
        lam_ext = self.lambda_n + 1.0
        lambda_prime = lam_ext + (1.01 * m_max if m_max > 0 else 0.0)
        return z, frame, k, B, m_z, lam_ext, lambda_prime

    def _finish_leaf(self, cell, norm, k, B, constants) -> Optional[_Leaf]:
        """Anchor-sphere closeness to rho and the support checks."""
        coeffs = self._coeff_sphere(k)
        rho_v = np.sqrt(np.maximum(
            np.einsum("ni,ij,nj->n", coeffs, B, coeffs), 0.0))
        frame = constants.pop("_frame")
        dev = float(np.max(np.abs(
            np.asarray(norm.values(coeffs @ frame), float) - rho_v)))
        if dev > self.eps_n:
            return None
        tilt_weight = (constants.get("lambda_prime", 0.0)
                       if self.blend == "norm" else 0.0)
        if not self._post_checks(cell, norm, k, frame, tilt_weight):
            return None
        constants["deviation_at_anchor"] = dev
        return _Leaf(cell=cell, norm=norm, constants=constants)

    def _certify_sum(self, cell: CoverCell) -> Optional[_Leaf]:
        """Hilbert-case anchor for the norm blend: the deflated base gram
        is extended by the l^p pair of quadratic norms

            n(v) = (A(v)^p + B(v)^p)^(1/p),
            A = sqrt(v.(Bt + s^2 T).v),  B = sqrt(v.(lam'^2 T + s^2 Bt).v),

        which tracks max(A, B): the transverse floor lam' is kept while
        near-horizontal directions pay only a (B/A)^p / p relative premium
        over the base, so the admissible tilt of nearby horizontal
        subspaces does not shrink like 1/lam'.  Domination of the minorant
        is certified on the sampled sphere; the constants follow the
        strictness chain with conservative sphere extrema bounds."""
        pre = self._anchor_frame(cell)
        if pre is None:
            return None
        z, frame, k, B, m_z, lam_ext, lambda_prime = pre
        dirs = self._dirs
        rho_sph = math.sqrt(max(float(np.linalg.eigvalsh(B).max()), 1e-30))
        a, u = self._deflation(rho_sph)
        Bt = (1.0 - a) ** 2 * (frame.T @ B @ frame)
        Bt = 0.5 * (Bt + Bt.T)
        T = np.eye(self.S.n) - frame.T @ frame
        T = 0.5 * (T + T.T)
        # the regularizer must stay well inside the a - u reserve so the
        # O(s) inflation cannot push the anchor values past the cap
        s_reg = min(0.05 * self.eps_n / (1.0 + rho_sph), 0.3 * (a - u))
        if k == self.S.n:
            # full rank: no transverse part; split the base quadratic
            Qa, Qb = Bt, s_reg ** 2 * Bt
        else:
            Qa = Bt + s_reg ** 2 * T
            Qb = lambda_prime ** 2 * T + s_reg ** 2 * Bt
        try:
            nprime = SmoothNorm(quad_pair=(Qa, Qb), pair_power=PAIR_POWER)
        except NormConstructionError:
            return None
        np_dirs = np.asarray(nprime.values(dirs), float)
        margin = float(np.min(np_dirs - m_z))
        if margin <= 0:
            return None
        eva = np.linalg.eigvalsh(Qa)
        evb = np.linalg.eigvalsh(Qb)
        # sphere extrema bounds of the pair norm (conservative both ways:
        # the l^p combination lies between max(A, B) and A + B)
        n_max = math.sqrt(max(eva[-1], 0.0)) + math.sqrt(max(evb[-1], 0.0))
        n_min = max(math.sqrt(max(eva[0], 0.0)), math.sqrt(max(evb[0], 0.0)))
        if n_min <= 0:
            return None
        eps_prime = min(0.75 * self.eps_n, 0.9 * margin)
        # the last term keeps delta * sphere-max inside the eps_n closeness
        # budget next to the deflation's a * rho share
        delta = 0.9 * min(1.0 / lam_ext, eps_prime / n_max,
                          0.4 * self.eps_n / n_max)
        eps_dprime = 0.9 * delta * n_min
        norm = SmoothNorm(quad_pair=((1.0 - delta) ** 2 * Qa,
                                     (1.0 - delta) ** 2 * Qb),
                          pair_power=PAIR_POWER)
        # the strictness chain, literally
        assert lam_ext * (1.0 - delta) > self.lambda_n
        assert eps_dprime < delta * n_min
        assert delta < eps_prime / n_max
        constants = {"eps_prime": eps_prime, "eps_dprime": eps_dprime,
                     "delta": delta, "delta_prime": 0.0,
                     "lambda_prime": lambda_prime, "s_reg": s_reg,
                     "deflate": a, "upper_reserve": u,
                     "k": k, "_frame": frame}
        return self._finish_leaf(cell, norm, k, B, constants)

    def _certify_gram(self, cell: CoverCell) -> Optional[_Leaf]:
        """Riemannian-variant anchor: one quadratic form whose matrix
        dominates the previous field's blended matrix on the support (a
        matrix inequality, so the gram blend stays monotone pointwise in
        every direction); the tail weight is raised until it clears the
        Schur complement of the previous matrix."""
        pre = self._anchor_frame(cell)
        if pre is None:
            return None
        z, frame, k, B, m_z, lam_ext, lambda_prime = pre
        dirs = self._dirs
        rho_sph = math.sqrt(max(float(np.linalg.eigvalsh(B).max()), 1e-30))
        a, u = self._deflation(rho_sph)
        Bt = (1.0 - a) ** 2 * (frame.T @ B @ frame)
        Bt = 0.5 * (Bt + Bt.T)
        T = np.eye(self.S.n) - frame.T @ frame
        grams = []
        if isinstance(self.minorant, FinslerMetricField) and \
                self.minorant.blend == "gram":
            grams = [self.minorant.gram_at(np.clip(
                pt, self.box.lower, self.box.upper))
                for pt in self._support_samples(cell)]
        if k < self.S.n:
            for _ in range(60):
                Q1 = Bt + lambda_prime ** 2 * T
                if all(np.linalg.eigvalsh(Q1 - G * (1.0 + 1e-9)).min() > 0
                       for G in grams):
                    break
                lambda_prime *= 1.3
            else:
                return None
        else:
            Q1 = Bt
            if any(np.linalg.eigvalsh(Q1 - G * (1.0 + 1e-9)).min() <= 0
                   for G in grams):
                return None
        Q1 = 0.5 * (Q1 + Q1.T)
        ev = np.linalg.eigvalsh(Q1)
        if ev[0] <= 0:
            return None
        n_min, n_max = math.sqrt(ev[0]), math.sqrt(ev[-1])
        np_dirs = np.sqrt(np.einsum("ni,ij,nj->n", dirs, Q1, dirs))
        margin = float(np.min(np_dirs - m_z))
        if margin <= 0:
            return None
        eps_prime = min(0.75 * self.eps_n, 0.9 * margin)
        delta = 0.9 * min(1.0 / lam_ext, eps_prime / n_max,
                          0.4 * self.eps_n / n_max)
        eps_dprime = 0.9 * delta * n_min
        Q = (1.0 - delta) ** 2 * Q1
        # the down-scaling must not break the matrix domination
        if any(np.linalg.eigvalsh(Q - G).min() <= 0 for G in grams):
            return None
        norm = SmoothNorm(quad=Q)
        assert lam_ext * (1.0 - delta) > self.lambda_n
        assert eps_dprime < delta * n_min
        assert delta < eps_prime / n_max
        constants = {"eps_prime": eps_prime, "eps_dprime": eps_dprime,
                     "delta": delta, "delta_prime": 0.0,
                     "lambda_prime": lambda_prime,
                     "deflate": a, "upper_reserve": u,
                     "k": k, "_frame": frame}
        return self._finish_leaf(cell, norm, k, B, constants)

    def _certify_general(self, cell: CoverCell) -> Optional[_Leaf]:
        z = np.asarray(cell.anchor, float)
        frame = orthonormal_frame(self.S, z)
        if frame.shape[0] == 0:
            return None
        rho_z = np.asarray(rho_values(
            self.S, z, self._coeff_sphere(frame.shape[0]) @ frame), float)
        a, u = self._deflation(float(np.max(rho_z)))
        r_req = float(np.max(np.linalg.norm(
            cell.support_corners() - z, axis=1)))
        try:
            res = build_anchor_norm(
                self.S, cell.anchor, eps=self.eps_n, lam=self.lambda_n,
                minorant=self.minorant, smoothing="power_mean",
                n_sphere=self.params.n_sphere, n_ball=2 ** self.S.n + 4,
                r_list=[r_req], deflate=a, upper_reserve=u)
        except NormConstructionError:
            return None
        if not self._post_checks(cell, res.norm, res.frame.shape[0]):
            return None
        constants = dict(res.constants)
        constants.update({"deflate": a, "upper_reserve": u})
        return _Leaf(cell=cell, norm=res.norm, constants=constants)

    def _certify(self, cell: CoverCell) -> Optional[_Leaf]:
        if self.blend == "gram":
            return self._certify_gram(cell)
        if self.S.is_sub_riemannian:
            return self._certify_sum(cell)
        return self._certify_general(cell)

    # -- lazy tree -----------------------------------------------------------

    def _cell_geometry(self, level: int, index: tuple) -> CoverCell:
        return make_cell(self.S, level, index, self.base_s / 2 ** level,
                         self.params)

    def _state(self, level: int, index: tuple):
        key = (level, index)
        st = self._cells.get(key)
        if st is None:
            cell = self._cell_geometry(level, index)
            if level < self.params.max_depth and self._too_coarse(cell):
                st = "split"
                self.stats["predicted_splits"] += 1
            else:
                leaf = self._certify(cell)
                if leaf is not None:
                    st = leaf
                    self.stats["leaves"] += 1
                else:
                    st = "split"
                    self.stats["splits"] += 1
            if st == "split" and level >= self.params.max_depth:
                raise AssemblyError(
                    f"no certified anchor norm for cell {key} of "
                    f"{self.S.name or 'structure'} at n={self.n} within "
                    f"{self.params.max_depth} refinement levels")
            self._cells[key] = st
        return st

    def _base_indices_near(self, x) -> list[tuple]:
        s = self.base_s
        b = s * (1.0 + self.params.overlap) / 2.0
        x = np.asarray(x, float)
        lo = np.asarray(self.box.lower)
        up = np.asarray(self.box.upper)
        ranges = []
        for a in range(len(x)):
            kmin = max(int(math.ceil((x[a] - b) / s - 0.5)),
                       int(math.floor(lo[a] / s)))
            kmax = min(int(math.floor((x[a] + b) / s - 0.5)),
                       int(math.floor(up[a] / s)))
            ranges.append(range(kmin, kmax + 1))
        return [idx for idx in itertools.product(*ranges)]

    def _descend(self, level: int, index: tuple, x: tuple, out: list):
        # hot path: plain float arithmetic, no array allocation
        s = self.base_s / 2 ** level
        b = s * (1.0 + self.params.overlap) / 2.0
        for xi, i in zip(x, index):
            if abs(xi - (i + 0.5) * s) >= b:
                return
        st = self._state(level, index)
        if st == "split":
            for child in itertools.product(*[(2 * i, 2 * i + 1)
                                             for i in index]):
                self._descend(level + 1, child, x, out)
        else:
            out.append(st)

    def leaves_at(self, x) -> list[_Leaf]:
        """All certified leaves whose support contains x, materializing on
        demand; deterministic order."""
        xt = tuple(float(c) for c in np.asarray(x, float))
        out: list[_Leaf] = []
        for idx in self._base_indices_near(xt):
            self._descend(0, idx, xt, out)
        out.sort(key=lambda lf: (lf.cell.level, lf.cell.index))
        if not out:
            raise AssemblyError(f"no leaf covers {list(xt)}")
        return out

    # -- evaluation ----------------------------------------------------------

    def weights_at(self, x) -> tuple[list[_Leaf], np.ndarray]:
        key = tuple(float(c) for c in np.asarray(x, float))
        hit = self._weights_cache.get(key)
        if hit is not None:
            return hit
        leaves = self.leaves_at(key)
        phi = partition_weights([lf.cell for lf in leaves], key)
        if len(self._weights_cache) >= 400000:
            self._weights_cache.clear()
        self._weights_cache[key] = (leaves, phi)
        return leaves, phi

    def values(self, x, V) -> np.ndarray:
        V = np.atleast_2d(np.asarray(V, float))
        leaves, phi = self.weights_at(x)
        if self.blend == "gram":
            Q = self.gram_at(x, _leaves=(leaves, phi))
            return np.sqrt(np.maximum(
                np.einsum("ni,ij,nj->n", V, Q, V), 0.0))
        out = np.zeros(V.shape[0])
        for lf, p in zip(leaves, phi):
            if p > 0.0:
                out += p * np.asarray(lf.norm.values(V), float)
        return out

    def __call__(self, x, v) -> float:
        return float(self.values(x, np.asarray(v, float)[None, :])[0])

    def gram_at(self, x, _leaves=None) -> np.ndarray:
        if self.blend != "gram":
            raise ValueError("gram_at needs a gram-blended field")
        leaves, phi = _leaves if _leaves is not None else self.weights_at(x)
        Q = np.zeros((self.S.n, self.S.n))
        for lf, p in zip(leaves, phi):
            if p > 0.0:
                Q += p * lf.norm.quad
        return Q

    def anchors_materialized(self) -> list[_Leaf]:
        return sorted((st for st in self._cells.values() if st != "split"),
                      key=lambda lf: (lf.cell.level, lf.cell.index))

    def serialize(self) -> dict:
        return {
            "structure": self.S.name,
            "n": self.n,
            "blend": self.blend,
            "eps_n": self.eps_n,
            "lambda_n": self.lambda_n,
            "base_spacing": self.base_s,
            "overlap": self.params.overlap,
            "cells": [
                {"level": lf.cell.level,
                 "index": list(lf.cell.index),
                 "anchor": list(lf.cell.anchor),
                 "min_rank": lf.cell.min_rank,
                 "constants": lf.constants,
                 "norm": lf.norm.serialize()}
                for lf in self.anchors_materialized()
            ],
        }


# ---------------------------------------------------------------------------
# assembly and sequence helpers


def assemble_F(S: SubFinslerStructure, n: int,
               minorant: Optional[MetricField] = None,
               eps_n: Optional[float] = None,
               lambda_n: Optional[float] = None,
               params: Optional[CoverParams] = None,
               box: Optional[ChartDomain] = None,
               blend: str = "norm") -> FinslerMetricField:
    """The n-th Finsler metric field (defaults eps_n = 1/n, lambda_n = n)."""
    return FinslerMetricField(S, n, minorant=minorant, eps_n=eps_n,
                              lambda_n=lambda_n, params=params, box=box,
                              blend=blend)


def build_sequence(S: SubFinslerStructure, N: int,
                   params: Optional[CoverParams] = None,
                   box: Optional[ChartDomain] = None,
                   blend: str = "norm") -> list[FinslerMetricField]:
    """F_1 .. F_N, each built strictly above its predecessor (F_0 = 0)."""
    fields: list[FinslerMetricField] = []
    minorant: Optional[MetricField] = None
    for n in range(1, N + 1):
        F = assemble_F(S, n, minorant=minorant, params=params, box=box,
                       blend=blend)
        fields.append(F)
        minorant = F
    return fields


def riemannian_variant(S: SubFinslerStructure, N: int,
                       params: Optional[CoverParams] = None,
                       box: Optional[ChartDomain] = None
                       ) -> list[FinslerMetricField]:
    """Gram-blended (genuinely Riemannian) sequence for Hilbert fiber norms."""
    if not S.is_sub_riemannian:
        raise NormConstructionError(
            "the Riemannian variant needs a Hilbert fiber norm")
    return build_sequence(S, N, params=params, box=box, blend="gram")


# ---------------------------------------------------------------------------
# sequence validation


def _complement_basis(frame: np.ndarray, d: int) -> np.ndarray:
    """Orthonormal rows spanning the orthogonal complement of span(frame)."""
    k = frame.shape[0]
    if k >= d:
        return np.zeros((0, d))
    Q, _ = np.linalg.qr(np.asarray(frame, float).T, mode="complete")
    return Q[:, k:].T


@dataclass(frozen=True)
class SequenceValidation:
    """Sampled check of the four guarantees of the approximating sequence.

    a) strict monotone sandwich minorant < F_n < rho;
    b) F_n >= n transversally on the equal-rank set G_n;
    c) anchor closeness |F_n(z, .) - rho(z, .)| <= eps_n on V_z;
    d) every sampled x in G_n sees a nearby anchor z with F_n(x, v) >=
       F_n(z, v) and Hausdorff-close sphere sections of V_z and V_x.
    Failures carry witnesses, never exceptions.
    """

    item_a: bool
    item_b: bool
    item_c: bool
    item_d: bool
    counts: dict
    witnesses: dict
    min_margin_a: float

    @property
    def all_pass(self) -> bool:
        return self.item_a and self.item_b and self.item_c and self.item_d


def validate_sequence(S: SubFinslerStructure,
                      fields: Sequence[FinslerMetricField],
                      n_points: int = 12, n_dirs: int = 16,
                      seed_skip: int = 0, anchor_cap: int = 40,
                      hausdorff_dirs: int = 96) -> SequenceValidation:
    """Validate a)-d) on deterministic samples (see SequenceValidation)."""
    if not fields:
        raise ValueError("need at least one field")
    box = fields[0].box
    d = S.n
    lo = np.asarray(box.lower, float)
    up = np.asarray(box.upper, float)
    X = lo + (up - lo) * box_points(n_points, [0.0] * d, [1.0] * d,
                                    seed_skip=seed_skip)
    dirs = sphere_directions(n_dirs, d, seed_skip=seed_skip + 1)
    ok = {"a": True, "b": True, "c": True, "d": True}
    wit: dict = {}
    counts = {"a": 0, "b": 0, "c": 0, "d": 0}
    min_margin = math.inf

    def fail(item, info):
        if ok[item]:
            wit[item] = info
        ok[item] = False

    # --- a) strict sandwich at sampled (x, v) ------------------------------
    for x in X:
        rho = rho_values(S, x, dirs)
        prev = np.zeros(len(dirs))
        for F in fields:
            vals = np.asarray(F.values(x, dirs), float)
            counts["a"] += len(dirs)
            low = vals - prev
            finite = np.isfinite(rho)
            high = rho[finite] - vals[finite]
            if low.size:
                min_margin = min(min_margin, float(low.min()))
            if high.size:
                min_margin = min(min_margin, float(high.min()))
            if np.any(low <= 0.0):
                j = int(np.argmin(low))
                fail("a", {"n": F.n, "x": tuple(x), "v": tuple(dirs[j]),
                           "minorant": float(prev[j]), "value": float(vals[j])})
            if np.any(high <= 0.0):
                j = int(np.argmin(rho - vals))
                fail("a", {"n": F.n, "x": tuple(x), "v": tuple(dirs[j]),
                           "value": float(vals[j]), "rho": float(rho[j])})
            if np.any(~np.isfinite(vals)):
                fail("a", {"n": F.n, "x": tuple(x), "reason": "F not finite"})
            prev = vals

    # gn membership is scan-based; reuse verdicts across items b) and d)
    gn_cache: dict = {}

    def in_gn(x, n):
        key = (tuple(x), n)
        if key not in gn_cache:
            gn_cache[key] = gn_membership(S, x, n,
                                          grid_step=min(0.35 / n, 0.1))
        return gn_cache[key]

    # --- b) transverse floor F_n >= n on G_n -------------------------------
    ranks = rank_many(S, X)
    for F in fields:
        for x, kx in zip(X, ranks):
            if kx >= d or not in_gn(x, F.n):
                continue
            comp = _complement_basis(orthonormal_frame(S, x), d)
            vdirs = subspace_sphere_sample(comp, max(4, n_dirs // 2))
            vals = np.asarray(F.values(x, vdirs), float)
            counts["b"] += len(vdirs)
            if np.any(vals < F.n):
                j = int(np.argmin(vals))
                fail("b", {"n": F.n, "x": tuple(x), "v": tuple(vdirs[j]),
                           "value": float(vals[j])})

    # --- c) anchor closeness -----------------------------------------------
    for F in fields:
        leaves = F.anchors_materialized()
        anchors = sorted({lf.cell.anchor for lf in leaves})
        if len(anchors) > anchor_cap:
            step = len(anchors) / anchor_cap
            anchors = [anchors[int(i * step)] for i in range(anchor_cap)]
        for z in anchors:
            frame = orthonormal_frame(S, np.asarray(z))
            vdirs = subspace_sphere_sample(frame, max(4, n_dirs // 2))
            rho_z = rho_values(S, z, vdirs)
            vals = np.asarray(F.values(z, vdirs), float)
            counts["c"] += len(vdirs)
            gap = np.abs(vals - rho_z)
            if np.any(gap > F.eps_n + 1e-9):
                j = int(np.argmax(gap))
                fail("c", {"n": F.n, "z": z, "v": tuple(vdirs[j]),
                           "gap": float(gap[j]), "eps_n": F.eps_n})

    # --- d) nearby minimal anchor below the field --------------------------
    for F in fields:
        r_n = 1.0 / F.n
        for x in X:
            if not in_gn(x, F.n):
                continue
            leaves, phi = F.weights_at(x)
            anchors = sorted({lf.cell.anchor
                              for lf, p in zip(leaves, phi) if p > 0.0})
            frame_x = orthonormal_frame(S, x)
            Fx = np.asarray(F.values(x, dirs), float)
            Fz = {z: np.asarray(F.values(np.asarray(z), dirs), float)
                  for z in anchors}
            haus: dict = {}

            def haus_ok(z):
                if z not in haus:
                    if np.linalg.norm(np.asarray(z) - x) > r_n:
                        haus[z] = False
                    else:
                        nz = lambda W: (np.asarray(
                            F.values(np.asarray(z), W), float)
                            + np.linalg.norm(np.atleast_2d(W), axis=1))
                        dh = sphere_hausdorff(
                            orthonormal_frame(S, np.asarray(z)), frame_x,
                            nz, n_dirs=hausdorff_dirs)
                        haus[z] = dh < r_n
                return haus[z]

            for j in range(len(dirs)):
                counts["d"] += 1
                order = sorted(anchors, key=lambda z: Fz[z][j])
                if not any(Fz[z][j] <= Fx[j] + 1e-9 and haus_ok(z)
                           for z in order):
                    fail("d", {"n": F.n, "x": tuple(x),
                               "v": tuple(dirs[j]),
                               "value": float(Fx[j]),
                               "anchor_values": {z: float(Fz[z][j])
                                                 for z in anchors}})
                    break

    return SequenceValidation(ok["a"], ok["b"], ok["c"], ok["d"],
                              counts, wit, min_margin)


@dataclass(frozen=True)
class ProbeColumn:
    """One (x, v) probe: the column n -> F_n(x, v) and its verdicts."""

    x: tuple
    v: tuple
    values: tuple
    rho: float  # inf for non-horizontal v
    monotone: bool
    horizontal: bool
    gap: Optional[float]  # rho - F_N for horizontal probes
    beta: Optional[float]  # transverse weight of the decomposition
    divergence_ok: Optional[bool]

    @property
    def ok(self) -> bool:
        if not self.monotone:
            return False
        if self.horizontal:
            return self.gap is not None and self.gap > -1e-9
        return bool(self.divergence_ok)


@dataclass(frozen=True)
class ConvergenceReport:
    columns: tuple

    @property
    def all_pass(self) -> bool:
        return all(col.ok for col in self.columns)


def convergence_probe(S: SubFinslerStructure,
                      fields: Sequence[FinslerMetricField],
                      probes: Sequence[tuple]) -> ConvergenceReport:
    """Column F_1(x,v) .. F_N(x,v) per probe with convergence verdicts.

    Horizontal probes report the remaining gap rho - F_N (monotone
    approach from below). Non-horizontal probes are decomposed as
    v = v' + beta w with v' horizontal and w a unit transverse vector;
    whenever x lies in G_n the column must clear the divergence floor
    beta n - rho(x, v').
    """
    if not fields:
        raise ValueError("need at least one field")
    box = fields[0].box
    cols = []
    for x, v in probes:
        x = np.asarray(x, float)
        v = np.asarray(v, float)
        if not box.contains(x):
            raise ValueError(f"probe point {x.tolist()} outside the box")
        vals = [float(F(x, v)) for F in fields]
        mono = all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
        rho = float(rho_values(S, x, v[None, :])[0])
        horizontal = math.isfinite(rho)
        gap = beta = None
        div_ok = None
        if horizontal:
            gap = rho - vals[-1]
        else:
            frame = orthonormal_frame(S, x)
            v_h = frame.T @ (frame @ v)
            tail = v - v_h
            beta = float(np.linalg.norm(tail))
            rho_h = float(rho_values(S, x, v_h[None, :])[0]) \
                if np.linalg.norm(v_h) > 0 else 0.0
            div_ok = True
            for F, val in zip(fields, vals):
                if gn_membership(S, x, F.n, grid_step=min(0.35 / F.n, 0.1)):
                    if val < beta * F.n - rho_h - 1e-9:
                        div_ok = False
        cols.append(ProbeColumn(tuple(x), tuple(v), tuple(vals), rho,
                                mono, horizontal, gap, beta, div_ok))
    return ConvergenceReport(tuple(cols))
