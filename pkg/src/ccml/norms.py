"""Norm constructions: subspace extension, smooth approximation by
support-point power means, and the anchor norm with its neighborhood
guarantees.

Every "for all v on the sphere" condition is certified on a deterministic
low-discrepancy sample; the margins and resolutions are recorded in the
returned objects rather than assumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .distribution import orthonormal_frame
from .sampling import ball_points, sphere_directions
from .structure import RANK_CUTOFF, SubFinslerStructure, rank, rho_values


class NormConstructionError(ValueError):
    """A strict inequality required by a construction failed at a sample."""


#: l^p exponent used when an anchor extension combines its base quadratic
#: norm with the transverse tail-weight quadratic.  With a plain sum the
#: tail weight lambda' is charged in full against the slightly tilted
#: horizontal subspaces of nearby points, which forces certified
#: neighborhoods of size ~ margin / lambda'; the l^p combination reduces
#: that charge to a relative (lambda' theta / base)^p / p premium, so the
#: admissible tilt is ~ (p * margin)^(1/p) / lambda' instead.
PAIR_POWER = 8.0


# ---------------------------------------------------------------------------
# norm specifications


class Norm:
    """Base class: a norm on R^d evaluatable on batches of vectors."""

    d: int

    def values(self, V: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, v) -> float:
        v = np.asarray(v, float)
        if v.ndim == 1:
            return float(self.values(v[None, :])[0])
        return self.values(v)

    def sphere_max(self, n_dirs: int = 512) -> float:
        """Max over the Euclidean unit sphere (closed form where available)."""
        dirs = sphere_directions(n_dirs, self.d)
        return float(np.max(self.values(dirs)))

    def sphere_min(self, n_dirs: int = 512) -> float:
        dirs = sphere_directions(n_dirs, self.d)
        return float(np.min(self.values(dirs)))


@dataclass(frozen=True)
class ExplicitPNorm(Norm):
    """Weighted p-norm (sum_i w_i |v_i|^p)^(1/p); p = inf is max_i w_i |v_i|."""

    p: float
    weights: tuple[float, ...]

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if any(w <= 0 for w in self.weights):
            raise ValueError("weights must be positive")

    @property
    def d(self) -> int:
        return len(self.weights)

    def values(self, V: np.ndarray) -> np.ndarray:
        V = np.atleast_2d(np.asarray(V, float))
        w = np.asarray(self.weights)
        if math.isinf(self.p):
            return np.max(w * np.abs(V), axis=1)
        return np.sum(w * np.abs(V) ** self.p, axis=1) ** (1.0 / self.p)

    def sphere_max(self, n_dirs: int = 512) -> float:
        w = np.asarray(self.weights)
        if math.isinf(self.p):
            return float(w.max())
        if self.p >= 2:
            return float(w.max() ** (1.0 / self.p))
        a = 2.0 / (2.0 - self.p)
        return float(np.sum(w ** a) ** ((2.0 - self.p) / (2.0 * self.p)))


def euclidean_norm(d: int) -> ExplicitPNorm:
    return ExplicitPNorm(p=2.0, weights=(1.0,) * d)


@dataclass(frozen=True)
class ScaledNorm(Norm):
    factor: float
    inner: Norm

    def __post_init__(self):
        if self.factor <= 0:
            raise ValueError("scale factor must be positive")

    @property
    def d(self) -> int:
        return self.inner.d

    def values(self, V: np.ndarray) -> np.ndarray:
        return self.factor * self.inner.values(V)


class ExtensionNorm(Norm):
    """Norm on R^d built from a norm on a subspace V.

    With an orthonormal basis whose first k rows span V, the value at
    ``v = sum_i alpha_i e_i`` is ``base(proj_V v) + lambda_prime |alpha_tail|``.
    """

    def __init__(self, basis: np.ndarray, k: int,
                 base: Callable[[np.ndarray], np.ndarray],
                 lambda_prime: float):
        self.basis = np.asarray(basis, float)  # (d, d), rows orthonormal
        self.k = int(k)
        self.base = base
        self.lambda_prime = float(lambda_prime)
        self.d = self.basis.shape[1]

    def values(self, V: np.ndarray) -> np.ndarray:
        V = np.atleast_2d(np.asarray(V, float))
        alpha = V @ self.basis.T
        proj = alpha[:, :self.k] @ self.basis[:self.k]
        tail = np.linalg.norm(alpha[:, self.k:], axis=1)
        return np.asarray(self.base(proj), float) + self.lambda_prime * tail


class SmoothNorm(Norm):
    """Smooth strongly convex norm, in one of two evaluatable forms.

    Power-mean form: ``(sum_h (h.v)^{2m})^{1/(2m)} + euclid_coef |v|`` over a
    symmetric finite support set H. Quadratic form: ``sqrt(v^T Q v)`` with Q
    symmetric positive definite. Quadratic-pair form: the l^p combination
    ``(A(v)^p + B(v)^p)^{1/p}`` of two quadratic norms ``A = sqrt(v^T Qa v)``,
    ``B = sqrt(v^T Qb v)`` with both forms positive definite — a smooth
    strongly convex stand-in for the kinked sum ``base(v_V) + lambda'
    |v_tail|`` of an extension norm built from a Hilbert base.  ``pair_power
    = 1`` is the plain sum; larger powers track ``max(A, B)`` instead, so
    directions where the transverse part B is small pay only an
    ``(B/A)^p / p`` relative premium over the base part rather than the full
    ``B`` — which is what keeps the tail weight from binding on nearby
    tilted horizontal subspaces.
    """

    def __init__(self, support_points: Optional[np.ndarray] = None,
                 power: int = 2, euclid_coef: float = 0.0,
                 quad: Optional[np.ndarray] = None,
                 quad_pair: Optional[tuple] = None,
                 pair_power: float = 1.0):
        self.achieved_deviation: Optional[float] = None
        self.quad_pair = None
        self.pair_power = 1.0
        if quad_pair is not None:
            if pair_power < 1.0:
                raise ValueError("pair_power must be >= 1")
            self.pair_power = float(pair_power)
            A = 0.5 * (np.asarray(quad_pair[0], float)
                       + np.asarray(quad_pair[0], float).T)
            B = 0.5 * (np.asarray(quad_pair[1], float)
                       + np.asarray(quad_pair[1], float).T)
            if np.linalg.eigvalsh(A).min() <= 0 or np.linalg.eigvalsh(B).min() <= 0:
                raise NormConstructionError("both pair forms must be SPD")
            self.quad_pair = (A, B)
            self.d = A.shape[0]
            self.quad = None
            self.support_points = None
            self.power = 2
            self.euclid_coef = 0.0
        elif quad is not None:
            self.quad = np.asarray(quad, float)
            self.d = self.quad.shape[0]
            self.support_points = None
            self.power = 2
            self.euclid_coef = 0.0
            ev = np.linalg.eigvalsh(self.quad)
            if ev.min() <= 0:
                raise NormConstructionError("quadratic form must be SPD")
        else:
            H = np.asarray(support_points, float)
            if H.ndim != 2 or H.shape[0] == 0:
                raise ValueError("support_points must be a nonempty (M, d) array")
            if power < 2 or power % 2:
                raise ValueError("power must be an even integer >= 2")
            self.support_points = H
            self.power = int(power)
            self.euclid_coef = float(euclid_coef)
            self.quad = None

    @property
    def is_quadratic(self) -> bool:
        return self.quad is not None

    def values(self, V: np.ndarray) -> np.ndarray:
        V = np.atleast_2d(np.asarray(V, float))
        if self.quad_pair is not None:
            A, B = self.quad_pair
            qa = np.sqrt(np.maximum(np.einsum("ni,ij,nj->n", V, A, V), 0.0))
            qb = np.sqrt(np.maximum(np.einsum("ni,ij,nj->n", V, B, V), 0.0))
            p = self.pair_power
            if p == 1.0:
                return qa + qb
            m = np.maximum(qa, qb)
            out = np.zeros_like(m)
            pos = m > 0
            ra = np.divide(qa, m, out=np.zeros_like(m), where=pos)
            rb = np.divide(qb, m, out=np.zeros_like(m), where=pos)
            out[pos] = m[pos] * (ra[pos] ** p + rb[pos] ** p) ** (1.0 / p)
            return out
        if self.is_quadratic:
            return np.sqrt(np.maximum(np.einsum("ni,ij,nj->n", V, self.quad, V),
                                      0.0))
        T = np.abs(V @ self.support_points.T)  # (N, M)
        s = T.max(axis=1)
        out = np.zeros(V.shape[0])
        pos = s > 0
        if np.any(pos):
            R = T[pos] / s[pos, None]
            A = np.sum(R ** self.power, axis=1)
            out[pos] = s[pos] * A ** (1.0 / self.power)
        return out + self.euclid_coef * np.linalg.norm(V, axis=1)

    def gradient(self, v) -> np.ndarray:
        v = np.asarray(v, float)
        if self.quad_pair is not None:
            A, B = self.quad_pair
            qa, qb = A @ v, B @ v
            a = math.sqrt(max(v @ qa, 1e-300))
            b = math.sqrt(max(v @ qb, 1e-300))
            p = self.pair_power
            if p == 1.0:
                return qa / a + qb / b
            m = max(a, b)
            f = m * ((a / m) ** p + (b / m) ** p) ** (1.0 / p)
            return ((a / f) ** (p - 1.0) * qa / a
                    + (b / f) ** (p - 1.0) * qb / b)
        if self.is_quadratic:
            q = self.quad @ v
            return q / math.sqrt(max(v @ q, 1e-300))
        t = v @ self.support_points.T
        s = np.abs(t).max()
        if s == 0:
            return np.zeros_like(v)
        r = t / s
        A = np.sum(np.abs(r) ** self.power)
        B = (np.sign(t) * np.abs(r) ** (self.power - 1)) @ self.support_points
        g = B / A ** ((self.power - 1) / self.power)
        nv = np.linalg.norm(v)
        if self.euclid_coef and nv > 0:
            g = g + self.euclid_coef * v / nv
        return g

    def hessian_sq_sampled(self, v, h: float = 1e-5) -> np.ndarray:
        """Central-difference Hessian of value^2 at v."""
        v = np.asarray(v, float)
        d = len(v)
        H = np.zeros((d, d))
        def f2(w):
            return float(self.values(w[None, :])[0]) ** 2
        for i in range(d):
            for j in range(i, d):
                ei = np.zeros(d); ei[i] = h
                ej = np.zeros(d); ej[j] = h
                val = (f2(v + ei + ej) - f2(v + ei - ej)
                       - f2(v - ei + ej) + f2(v - ei - ej)) / (4 * h * h)
                H[i, j] = H[j, i] = val
        return H

    def serialize(self) -> dict:
        if self.quad_pair is not None:
            return {"kind": "quadratic_pair",
                    "quad_a": self.quad_pair[0].tolist(),
                    "quad_b": self.quad_pair[1].tolist(),
                    "pair_power": self.pair_power}
        if self.is_quadratic:
            return {"kind": "quadratic", "quad": self.quad.tolist()}
        return {"kind": "power_mean",
                "support_points": self.support_points.tolist(),
                "power": self.power,
                "euclid_coef": self.euclid_coef}


# ---------------------------------------------------------------------------
# metric fields (the minorant interface)


class MetricField:
    """A fiberwise norm field: values(x, V) -> floats (inf allowed)."""

    def values(self, x, V: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class ZeroField(MetricField):
    def values(self, x, V: np.ndarray) -> np.ndarray:
        return np.zeros(np.atleast_2d(V).shape[0])


class RhoField(MetricField):
    """The generalised metric of a structure as a field (inf off range)."""

    def __init__(self, S: SubFinslerStructure):
        self.S = S

    def values(self, x, V: np.ndarray) -> np.ndarray:
        return rho_values(self.S, x, np.atleast_2d(V))


# ---------------------------------------------------------------------------
# Step A: subspace extension


def complete_basis(V_basis: np.ndarray, d: int) -> tuple[np.ndarray, int]:
    """Orthonormal basis of R^d whose first k rows span span(V_basis)."""
    B = np.atleast_2d(np.asarray(V_basis, float))
    frame: list[np.ndarray] = []
    for row in B:
        v = row.astype(float)
        for w in frame:
            v = v - (v @ w) * w
        nrm = np.linalg.norm(v)
        if nrm > 1e-12:
            frame.append(v / nrm)
    k = len(frame)
    if k == 0:
        raise ValueError("V_basis spans only the zero space")
    for i in range(d):
        v = np.zeros(d)
        v[i] = 1.0
        for w in frame:
            v = v - (v @ w) * w
        nrm = np.linalg.norm(v)
        if nrm > 1e-9:
            frame.append(v / nrm)
        if len(frame) == d:
            break
    return np.stack(frame, axis=0), k


def extend_norm(V_basis, base: Callable[[np.ndarray], np.ndarray],
                minorant: Optional[Norm], lam: float,
                n_check: int = 256,
                inflation: Optional[float] = None) -> ExtensionNorm:
    """Extend a norm on a subspace V to R^d, dominating a minorant.

    ``base`` evaluates batches of vectors lying in V. The tail weight is
    ``lam + max`` of the minorant on the unit sphere; when that max is only
    sampled (no closed form) it is inflated by 1% to keep the strict
    domination guarantee.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    B = np.atleast_2d(np.asarray(V_basis, float))
    d = B.shape[1]
    basis, k = complete_basis(B, d)
    if minorant is None:
        mmax = 0.0
    elif type(minorant).sphere_max is not Norm.sphere_max:
        # closed-form sphere max available on the subclass
        mmax = minorant.sphere_max()
        if inflation is None:
            inflation = 1.0
    else:
        mmax = minorant.sphere_max(n_dirs=n_check * 4)
        if inflation is None:
            inflation = 1.01
    lambda_prime = lam + (inflation or 1.0) * mmax

    # precondition: base > minorant strictly on the V sphere
    if minorant is not None and k > 0:
        coeffs = sphere_directions(n_check, k)
        dirs = coeffs @ basis[:k]
        bvals = np.asarray(base(dirs), float)
        mvals = minorant.values(dirs)
        bad = np.where(bvals <= mvals)[0]
        if len(bad):
            i = int(bad[0])
            raise NormConstructionError(
                f"base norm does not dominate the minorant on V at direction "
                f"{dirs[i].tolist()}: base={bvals[i]:.6g} <= "
                f"minorant={mvals[i]:.6g}")
    return ExtensionNorm(basis, k, base, lambda_prime)


def quadratic_extension(V_basis, base_gram_fn, lam: float,
                        minorant_sphere_max: float) -> SmoothNorm:
    """Hilbert-case extension: base scalar product on V plus the tail weight
    squared on the orthogonal complement. Returns a quadratic SmoothNorm.
    """
    B = np.atleast_2d(np.asarray(V_basis, float))
    d = B.shape[1]
    basis, k = complete_basis(B, d)
    Ek = basis[:k]
    G = base_gram_fn(Ek)  # (k, k) Gram of base on the frame rows
    lambda_prime = lam + minorant_sphere_max
    Q = Ek.T @ G @ Ek + lambda_prime ** 2 * (np.eye(d) - Ek.T @ Ek)
    Q = 0.5 * (Q + Q.T)
    return SmoothNorm(quad=Q)


# ---------------------------------------------------------------------------
# Step B: smooth approximation of an arbitrary norm


def dual_support_points(target: Callable[[np.ndarray], np.ndarray], d: int,
                        n_points: int, n_dense: int = 2048) -> np.ndarray:
    """Symmetric sample of the dual unit sphere of the target norm.

    Each sampled direction g is scaled by the sampled dual norm
    ``max_u g.u / target(u)``, giving points h with ``h.v <= target(v)`` up
    to the dual sampling resolution.
    """
    G = sphere_directions(n_points, d)
    U = sphere_directions(n_dense, d)
    tvals = np.asarray(target(U), float)
    if np.any(tvals <= 0):
        raise NormConstructionError("target norm vanishes on the sphere")
    dual = np.empty(G.shape[0])
    chunk = max(1, 10_000_000 // max(U.shape[0], 1))
    for i0 in range(0, G.shape[0], chunk):
        ratios = (G[i0:i0 + chunk] @ U.T) / tvals[None, :]
        dual[i0:i0 + chunk] = ratios.max(axis=1)
    return G / dual[:, None]


def _extension_support_candidates(ext: ExtensionNorm, factor: float):
    """Support sets for an extension norm, as a base-dual x tail product.

    ``base(v_V) + lambda' |v_tail|`` is the support function of the product
    of the base dual ball and the tail sphere of radius lambda', so sampling
    each factor separately keeps the coverage error second order per factor
    instead of requiring a full-dimensional dual covering.
    """
    d = ext.d
    k = ext.k
    Ek, Et = ext.basis[:k], ext.basis[k:]
    m_base, m_tail = 128, 64
    while True:
        if k == 1:
            b = float(np.asarray(ext.base(Ek), float)[0])
            P = np.array([[1.0 / b], [-1.0 / b]])
        else:
            base_k = lambda C: np.asarray(ext.base(np.atleast_2d(C) @ Ek), float)
            P = dual_support_points(base_k, k, m_base,
                                    n_dense=max(8 * m_base, 4096))
        HV = P @ Ek
        dt = d - k
        if dt == 0:
            yield factor * HV
        else:
            if dt == 1:
                HT = ext.lambda_prime * np.concatenate([Et, -Et])
            else:
                HT = ext.lambda_prime * (sphere_directions(m_tail, dt) @ Et)
            H = (HV[:, None, :] + HT[None, :, :]).reshape(-1, d)
            yield factor * H
        m_base *= 2
        m_tail *= 2


def smooth_norm_approx(target: Norm, tol: float, n_validate: int = 10_000,
                       max_support: int = 20_000) -> SmoothNorm:
    """Smooth norm within tol of the target on the validation sphere sample.

    The construction is a support-point power mean: the even power 2m is
    chosen so the power-mean excess over the max, a factor M^(1/(2m)), stays
    below half the tolerance; the support sample must cover the other half.
    A weighted 2-norm target is already smooth and is returned as a single
    quadratic with zero deviation.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    d = target.d
    if isinstance(target, ExplicitPNorm) and target.p == 2.0:
        out = SmoothNorm(quad=np.diag(target.weights))
        out.achieved_deviation = 0.0
        return out
    if isinstance(target, SmoothNorm) and target.is_quadratic:
        out = SmoothNorm(quad=target.quad.copy())
        out.achieved_deviation = 0.0
        return out
    if (isinstance(target, ScaledNorm) and isinstance(target.inner, SmoothNorm)
            and target.inner.is_quadratic):
        out = SmoothNorm(quad=target.factor ** 2 * target.inner.quad)
        out.achieved_deviation = 0.0
        return out
    Vcheck = sphere_directions(n_validate // 2, d)
    tcheck = np.asarray(target(Vcheck), float)
    tmax = float(tcheck.max())

    ext, factor = None, 1.0
    if isinstance(target, ExtensionNorm):
        ext = target
    elif isinstance(target, ScaledNorm) and isinstance(target.inner, ExtensionNorm):
        ext, factor = target.inner, target.factor
    if ext is not None:
        candidates = _extension_support_candidates(ext, factor)
    else:
        def _generic():
            n_pts = 64 if d <= 2 else 512
            while True:
                yield dual_support_points(target, d, n_pts,
                                          n_dense=max(4 * n_pts, 2048))
                n_pts *= 2
        candidates = _generic()

    last_dev = math.inf
    for H in candidates:
        M = H.shape[0]
        ratio = 1.0 + tol / (2.0 * tmax)
        power = 2 * max(1, math.ceil(math.log(M) / (2.0 * math.log(ratio))))
        norm = SmoothNorm(support_points=H, power=power, euclid_coef=0.0)
        dev = float(np.max(np.abs(norm.values(Vcheck) - tcheck)))
        if dev <= tol:
            norm.achieved_deviation = dev
            return norm
        last_dev = min(last_dev, dev)
        if 4 * M > max_support:
            raise NormConstructionError(
                f"smooth approximation tolerance {tol} unachievable within "
                f"{max_support} support points (achieved {last_dev:.3e})")
    raise AssertionError("unreachable: candidate generator is infinite")


# ---------------------------------------------------------------------------
# Step C: the anchor norm with neighborhood guarantees


@dataclass(frozen=True)
class AnchorResult:
    """Smooth strongly convex norm anchored at xbar, with its certificates.

    ``constants`` records the chained strictness parameters
    (eps_prime, eps_dprime, delta, delta_prime, lambda_prime); ``r_U`` is the
    largest tested radius on which the sandwich minorant < norm < rho held
    at every sample.
    """

    norm: SmoothNorm
    r_U: float
    constants: dict
    xbar: tuple[float, ...]
    eps: float
    lam: float
    frame: np.ndarray          # (k, n) orthonormal rows spanning D_xbar
    basis: np.ndarray          # (n, n) completion, first k rows = frame
    diagnostics: dict = field(default_factory=dict)


def _minorant_values(minorant: Optional[MetricField], x,
                     V: np.ndarray) -> np.ndarray:
    if minorant is None:
        return np.zeros(np.atleast_2d(V).shape[0])
    return np.asarray(minorant.values(x, V), float)


def _full_sphere_sample(basis: np.ndarray, n_dirs: int,
                        seed_skip: int = 0) -> np.ndarray:
    """Ambient sphere sample that always contains the +-basis directions."""
    d = basis.shape[1]
    dirs = sphere_directions(n_dirs, d, seed_skip=seed_skip)
    return np.concatenate([basis, -basis, dirs], axis=0)


def _frame_gram(S: SubFinslerStructure, x) -> tuple[np.ndarray, np.ndarray, int]:
    """Orthonormal horizontal frame and the gram of rho on it in one SVD.

    Hilbert fiber norms only: the frame rows are the left singular
    vectors of psi G^{-1/2}, and on that basis the gram of rho(x, .) is
    diag(1 / s^2).  Returns (frame, gram, rank)."""
    A = S.psi(np.asarray(x, float))
    G = S.sigma.gram_at(x)
    L = np.linalg.cholesky(G)
    M = np.linalg.solve(L, A.T).T
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    r = int((s > RANK_CUTOFF * s[0]).sum()) if s.size and s[0] > 0 else 0
    return U[:, :r].T, np.diag(1.0 / s[:r] ** 2), r


def _base_gram(S: SubFinslerStructure, xbar, frame: np.ndarray) -> np.ndarray:
    """Gram matrix of rho(xbar, .) on the frame rows.

    Valid when the fiber norm is Hilbert, so rho(xbar, .) is quadratic on
    the horizontal space: rho(x, v)^2 = v^T K^+ v with K = psi G^{-1}
    psi^T (the minimum of c^T G c over psi c = v), inverted through the
    SVD of psi G^{-1/2} with the same relative rank cutoff rho itself
    uses, so the retained range matches the horizontal space.  Non-Hilbert
    fiber norms fall back to polarization of rho (quadratic on the
    horizontal space only if the caller knows it is)."""
    k = frame.shape[0]
    if S.sigma.is_hilbert:
        A = S.psi(np.asarray(xbar, float))
        G = S.sigma.gram_at(xbar)
        L = np.linalg.cholesky(G)
        M = np.linalg.solve(L, A.T).T        # M M^T = psi G^{-1} psi^T
        U, s, _ = np.linalg.svd(M, full_matrices=False)
        r = int((s > RANK_CUTOFF * s[0]).sum()) if len(s) and s[0] > 0 else 0
        if r == 0:
            return np.zeros((k, k))
        C = (frame @ U[:, :r]) / s[:r]
        B = C @ C.T
        return 0.5 * (B + B.T)
    plus, minus, idx = [], [], []
    for i in range(k):
        for j in range(i, k):
            plus.append(frame[i] + frame[j])
            minus.append(frame[i] - frame[j])
            idx.append((i, j))
    vp = rho_values(S, xbar, np.asarray(plus))
    vm = rho_values(S, xbar, np.asarray(minus))
    B = np.zeros((k, k))
    for (i, j), p, m in zip(idx, vp, vm):
        B[i, j] = B[j, i] = (p ** 2 - m ** 2) / 4.0
    return B


def _complement_dirs(S: SubFinslerStructure, x, k: int,
                     n_mix: int = 4) -> Optional[np.ndarray]:
    """Unit directions spanning V_x^perp (basis rows plus a few mixtures)."""
    A = S.psi(np.asarray(x, float))
    n = A.shape[0]
    if k >= n:
        return None
    U, s, _ = np.linalg.svd(A)
    comp = U[:, k:].T  # (n-k, n)
    if comp.shape[0] == 0:
        return None
    dirs = [comp, -comp]
    if comp.shape[0] > 1 and n_mix:
        coeffs = sphere_directions(n_mix, comp.shape[0])
        dirs.append(coeffs @ comp)
    return np.concatenate(dirs, axis=0)


def _anchor_ball_ok(S: SubFinslerStructure, result_norm: Norm,
                    minorant: Optional[MetricField], xbar: np.ndarray,
                    r: float, lam: float, k: int, dirs: np.ndarray,
                    n_ball: int, seed_skip: int = 0,
                    upper_reserve: float = 0.0):
    """Check the sandwich and the transverse lower bound on a sampled ball.

    Returns (ok, witness_or_None). Non-horizontal directions pass the upper
    bound trivially (rho infinite there). A positive ``upper_reserve`` u
    strengthens the upper test to norm <= (1 - u) rho, reserving a
    guaranteed gap below rho for later approximants to squeeze into.
    """
    pts = ball_points(n_ball, xbar, r, S.domain.lower, S.domain.upper,
                      seed_skip=seed_skip)
    cap = 1.0 - upper_reserve
    nv = np.asarray(result_norm(dirs), float)
    for x in pts:
        mv = _minorant_values(minorant, x, dirs)
        bad = np.where(mv >= nv)[0]
        if len(bad):
            i = int(bad[0])
            return False, ("minorant >= norm", tuple(x), tuple(dirs[i]),
                           float(mv[i]), float(nv[i]))
        rv = rho_values(S, x, dirs)
        finite = np.isfinite(rv)
        bad = np.where(finite & (nv >= cap * rv))[0]
        if len(bad):
            i = int(bad[0])
            return False, ("norm >= rho", tuple(x), tuple(dirs[i]),
                           float(nv[i]), float(rv[i]))
        # the ambient sample rarely hits the horizontal subspace at x, so
        # probe the horizontal sphere there explicitly (rho finite on it)
        fr = orthonormal_frame(S, x)
        kx = fr.shape[0]
        if kx:
            if kx > 1:
                hco = np.concatenate([np.eye(kx), -np.eye(kx),
                                      sphere_directions(8, kx,
                                                        seed_skip=seed_skip)])
            else:
                hco = np.array([[1.0], [-1.0]])
            hdirs = hco @ fr
            rvh = rho_values(S, x, hdirs)
            nvh = np.asarray(result_norm(hdirs), float)
            fin = np.isfinite(rvh)
            bad = np.where(fin & (nvh >= cap * rvh))[0]
            if len(bad):
                i = int(bad[0])
                return False, ("norm >= rho", tuple(x), tuple(hdirs[i]),
                               float(nvh[i]), float(rvh[i]))
        if rank(S, x) == k:
            cd = _complement_dirs(S, x, k)
            if cd is not None and len(cd):
                cv = np.asarray(result_norm(cd), float)
                bad = np.where(cv < lam - 1e-12)[0]
                if len(bad):
                    i = int(bad[0])
                    return False, ("norm < lambda on V_x_perp", tuple(x),
                                   tuple(cd[i]), float(cv[i]), lam)
    return True, None


def build_anchor_norm(S: SubFinslerStructure, xbar, eps: float, lam: float,
                      minorant: Optional[MetricField] = None,
                      smoothing: str = "power_mean",
                      n_sphere: int = 256, n_ball: int = 64,
                      r_max: float = 0.5, r_levels: int = 12,
                      r_list: Optional[Sequence[float]] = None,
                      deflate: float = 0.0,
                      upper_reserve: float = 0.0) -> AnchorResult:
    """Smooth strongly convex norm anchored at xbar.

    Guarantees, certified by sampling: i) within eps of rho(xbar, .) on the
    horizontal unit sphere at xbar; ii) strictly between the minorant and
    rho on a tested ball of radius r_U; iii) at least lam transversally at
    sampled equal-rank points of the ball.

    ``smoothing`` is "power_mean" (general fiber norms) or "quadratic"
    (Hilbert fiber norms only: the extension is induced by a scalar product,
    already smooth and strongly convex, so the smoothing step is omitted).

    ``deflate`` = a shifts the anchor target from rho to (1 - a) rho and
    ``upper_reserve`` = u < a tightens the ball test to norm <= (1 - u) rho;
    together they reserve a scheduled gap below rho so that a sequence of
    anchor constructions with interleaved a_1 > u_1 > a_2 > ... retains a
    guaranteed domination margin at every level (a, u must keep a * rho
    within the eps budget; both default to 0).
    """
    if eps <= 0 or lam <= 0:
        raise ValueError("eps and lam must be positive")
    if not 0.0 <= upper_reserve <= deflate < 1.0:
        raise ValueError("need 0 <= upper_reserve <= deflate < 1")
    if smoothing not in ("power_mean", "quadratic"):
        raise ValueError(f"unknown smoothing mode {smoothing!r}")
    if smoothing == "quadratic" and not S.is_sub_riemannian:
        raise NormConstructionError(
            "quadratic smoothing requires a Hilbert fiber norm")
    xbar = np.asarray(xbar, float)
    n = S.n
    frame = orthonormal_frame(S, xbar)
    k = frame.shape[0]
    basis, _ = complete_basis(frame, n)

    # horizontal sphere at xbar and the precondition minorant < rho there
    if k > 1:
        coeffs = sphere_directions(max(n_sphere // 2, 2 * k), k)
        Vdirs = np.concatenate([np.eye(k), -np.eye(k), coeffs]) @ frame
    else:
        Vdirs = np.concatenate([frame, -frame], axis=0)
    rho_V = rho_values(S, xbar, Vdirs)
    if not np.all(np.isfinite(rho_V)):
        raise NormConstructionError(
            f"rho(xbar, .) infinite on a horizontal direction at {xbar.tolist()}")
    m_V = _minorant_values(minorant, xbar, Vdirs)
    base_V = (1.0 - deflate) * rho_V
    margin_V = float(np.min(base_V - m_V))
    if margin_V <= 0:
        i = int(np.argmin(base_V - m_V))
        raise NormConstructionError(
            f"minorant not strictly below the anchor base at direction "
            f"{Vdirs[i].tolist()}: {m_V[i]:.6g} >= {base_V[i]:.6g}")

    # Step 1: extension with tail weight (lam + 1) + minorant sphere max
    dirs_full = _full_sphere_sample(basis, n_sphere)
    m_full = _minorant_values(minorant, xbar, dirs_full)
    m_max = float(m_full.max(initial=0.0))
    lam_ext = lam + 1.0
    lambda_prime = lam_ext + (1.01 * m_max if m_max > 0 else 0.0)

    if smoothing == "quadratic":
        # Hilbert case: base(v_V) is sqrt(v_V^T B v_V), and the kinked sum
        # base(v_V) + lambda' |v_tail| is replaced by the smooth l^p pair
        # of sqrt(v (B~ + s^2 T) v) and sqrt(v (lambda'^2 T + s^2 B~) v):
        # close to max of the two, so near the horizontal subspace the
        # tail weight contributes only a (tail/base)^p relative premium
        # while the transverse floor lambda' is retained; domination of
        # the minorant is re-certified on the sampled sphere below.
        B = _base_gram(S, xbar, frame)
        Bt = (1.0 - deflate) ** 2 * (frame.T @ B @ frame)
        T = np.eye(n) - frame.T @ frame
        s_reg = 0.05 * eps / (1.0 + float(np.max(rho_V)))
        if deflate > upper_reserve:
            s_reg = min(s_reg, 0.3 * (deflate - upper_reserve))
        nprime: Norm = SmoothNorm(quad_pair=(Bt + s_reg ** 2 * T,
                                             lambda_prime ** 2 * T
                                             + s_reg ** 2 * Bt),
                                  pair_power=PAIR_POWER)
    else:
        base = lambda W: (1.0 - deflate) * rho_values(S, xbar, W)
        nprime = ExtensionNorm(basis, k, base, lambda_prime)

    np_full = np.asarray(nprime(dirs_full), float)
    n_max, n_min = float(np_full.max()), float(np_full.min())
    margin_sphere = float(np.min(np_full - m_full))
    if margin_sphere <= 0 or n_min <= 0:
        raise NormConstructionError(
            "extension norm fails strict domination of the minorant on the "
            f"sampled sphere (margin {margin_sphere:.3e})")

    # Step 2: the strictness chain (the last cap keeps delta's share of the
    # anchor deviation inside the eps budget next to the deflation's)
    eps_prime = min(0.9 * margin_sphere, 0.75 * eps)
    delta = 0.9 * min(1.0 / lam_ext, eps_prime / n_max, 0.4 * eps / n_max)
    eps_dprime = 0.9 * delta * n_min
    # Step 3 headroom and smoothing
    headroom = lam_ext * (1.0 - delta) - lam
    margin_scaled = float(np.min((1.0 - delta) * np_full - m_full))
    if smoothing == "quadratic":
        delta_prime = 0.0
        final = SmoothNorm(quad_pair=tuple(
            (1.0 - delta) ** 2 * Q for Q in nprime.quad_pair),
            pair_power=nprime.pair_power)
    else:
        delta_prime = 0.9 * min(headroom, 0.25 * eps, margin_scaled,
                                delta * float(rho_V.min()))
        if delta_prime <= 0:
            raise NormConstructionError(
                f"no admissible delta_prime (headroom {headroom:.3e}, "
                f"scaled margin {margin_scaled:.3e})")
        smooth = smooth_norm_approx(ScaledNorm(1.0 - delta, nprime),
                                    tol=delta_prime / 2.0)
        if smooth.is_quadratic:
            final = smooth
        else:
            final = SmoothNorm(support_points=smooth.support_points,
                               power=smooth.power,
                               euclid_coef=delta_prime / 2.0)
    # the chain, literally
    assert lam_ext * (1.0 - delta) - delta_prime > lam
    assert eps_dprime < delta * n_min
    assert delta < eps_prime / n_max

    dev = float(np.max(np.abs(np.asarray(final(Vdirs), float) - rho_V)))
    if dev > eps:
        raise NormConstructionError(
            f"anchor deviation {dev:.3e} exceeds eps={eps:.3e} at xbar")

    if r_list is None:
        r_list = [r_max * 0.5 ** j for j in range(r_levels)]
    r_U = 0.0
    last_witness = None
    for r in sorted(r_list, reverse=True):
        ok, witness = _anchor_ball_ok(S, final, minorant, xbar, r, lam, k,
                                      dirs_full, n_ball,
                                      upper_reserve=upper_reserve)
        if ok:
            r_U = float(r)
            break
        last_witness = witness
    if r_U == 0.0:
        raise NormConstructionError(
            f"anchor sandwich failed down to the smallest tested radius; "
            f"witness: {last_witness}")

    return AnchorResult(
        norm=final, r_U=r_U,
        constants={"eps_prime": eps_prime, "eps_dprime": eps_dprime,
                   "delta": delta, "delta_prime": delta_prime,
                   "lambda_prime": lambda_prime},
        xbar=tuple(xbar), eps=eps, lam=lam, frame=frame, basis=basis,
        diagnostics={"deviation_at_xbar": dev, "margin_sphere": margin_sphere,
                     "minorant_sphere_max": m_max, "smoothing": smoothing,
                     "k": k})


@dataclass(frozen=True)
class AnchorReport:
    item_i: bool
    item_ii: bool
    item_iii: bool
    deviation: float
    witnesses: dict

    @property
    def all_pass(self) -> bool:
        return self.item_i and self.item_ii and self.item_iii


def verify_anchor(S: SubFinslerStructure, anchor: AnchorResult,
                  minorant: Optional[MetricField] = None,
                  n_sphere: int = 256, n_ball: int = 64,
                  seed_skip: int = 1) -> AnchorReport:
    """Re-check the three anchor conclusions at fresh deterministic samples."""
    xbar = np.asarray(anchor.xbar, float)
    frame = anchor.frame
    k = frame.shape[0]
    witnesses: dict = {}

    # i) closeness on the horizontal sphere at xbar
    if k > 1:
        coeffs = sphere_directions(max(n_sphere // 2, 2 * k), k,
                                   seed_skip=seed_skip)
        Vdirs = np.concatenate([np.eye(k), -np.eye(k), coeffs]) @ frame
    else:
        Vdirs = np.concatenate([frame, -frame], axis=0)
    rho_V = rho_values(S, xbar, Vdirs)
    devs = np.abs(np.asarray(anchor.norm(Vdirs), float) - rho_V)
    deviation = float(devs.max())
    item_i = deviation <= anchor.eps + 1e-12
    if not item_i:
        i = int(np.argmax(devs))
        witnesses["item_i"] = (tuple(Vdirs[i]), float(devs[i]))

    # ii) + iii) sandwich and transverse bound on the certified ball
    dirs_full = _full_sphere_sample(anchor.basis, n_sphere,
                                    seed_skip=seed_skip)
    ok, witness = _anchor_ball_ok(S, anchor.norm, minorant, xbar, anchor.r_U,
                                  anchor.lam, k, dirs_full, n_ball,
                                  seed_skip=seed_skip)
    item_ii = item_iii = True
    if not ok:
        if witness[0] == "norm < lambda on V_x_perp":
            item_iii = False
            witnesses["item_iii"] = witness
        else:
            item_ii = False
            witnesses["item_ii"] = witness
    return AnchorReport(item_i, item_ii, item_iii, deviation, witnesses)
