"""Sub-Finsler structures and the generalised metric they induce.

A structure is a box chart domain, a rank-d trivial bundle, a continuous
fiber norm, and d polynomial vector fields (the bundle morphism columns).
The induced generalised metric is the minimal fiber cost of representing
a tangent vector through the morphism, Infinite off the horizontal space.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .polyfield import ChartDomain, PolyField, lie_hull

#: relative least-squares residual below which a vector counts as horizontal
TOL_RANGE = 1e-8

#: singular value cutoff factor for numerical rank
RANK_CUTOFF = 1e-10


class DegenerateGramError(ValueError):
    """Fiber Gram matrix is not SPD at the requested point."""


class SolverError(RuntimeError):
    """Convex fiber minimization did not converge."""


@functools.total_ordering
@dataclass(frozen=True)
class GenMetricValue:
    """Value of the generalised metric: a finite nonnegative number or Infinite."""

    value: float
    infinite: bool = False

    def __post_init__(self):
        if not self.infinite and self.value < 0:
            raise ValueError("finite generalised metric values must be >= 0")

    @staticmethod
    def finite(v: float) -> "GenMetricValue":
        return GenMetricValue(float(v))

    @staticmethod
    def inf() -> "GenMetricValue":
        return GenMetricValue(math.inf, infinite=True)

    @property
    def is_finite(self) -> bool:
        return not self.infinite

    def __float__(self) -> float:
        return math.inf if self.infinite else self.value

    def __eq__(self, other) -> bool:
        if isinstance(other, GenMetricValue):
            return float(self) == float(other)
        return float(self) == other

    def __lt__(self, other) -> bool:
        o = float(other) if isinstance(other, GenMetricValue) else other
        return float(self) < o

    def __repr__(self) -> str:
        return "Infinite" if self.infinite else f"Finite({self.value!r})"


@dataclass(frozen=True)
class FiberNorm:
    """Continuous fiber norm: Hilbert (Gram field) or weighted p-norm.

    ``gram`` is a PolyField R^n -> R^(d*d) giving a symmetric positive
    definite matrix at each point (row-major). ``weights`` is a PolyField
    R^n -> R^d with positive entries; ``p`` in [1, inf].
    """

    kind: str  # "hilbert" | "weighted_p"
    gram: Optional[PolyField] = None
    p: float = 2.0
    weights: Optional[PolyField] = None

    def __post_init__(self):
        if self.kind == "hilbert":
            if self.gram is None:
                raise ValueError("hilbert fiber norm needs a gram PolyField")
        elif self.kind == "weighted_p":
            if self.weights is None:
                raise ValueError("weighted_p fiber norm needs a weights PolyField")
            if self.p < 1:
                raise ValueError("p must be >= 1")
        else:
            raise ValueError(f"unknown fiber norm kind {self.kind!r}")

    @staticmethod
    def euclidean(d: int, n: int) -> "FiberNorm":
        eye = np.eye(d).ravel()
        return FiberNorm(kind="hilbert", gram=PolyField.constant(n, eye))

    @staticmethod
    def weighted(p: float, weights: PolyField) -> "FiberNorm":
        return FiberNorm(kind="weighted_p", p=p, weights=weights)

    @property
    def is_hilbert(self) -> bool:
        return self.kind == "hilbert"

    def gram_at(self, x) -> np.ndarray:
        g = self.gram.eval(x)
        d = int(round(math.isqrt(len(g))))
        G = g.reshape(d, d)
        if not np.allclose(G, G.T, atol=1e-12):
            raise DegenerateGramError(f"gram not symmetric at {x}")
        if np.linalg.eigvalsh(G).min() <= 1e-10:
            raise DegenerateGramError(f"gram not SPD at {x}")
        return G

    def sigma(self, x, u) -> float:
        """Fiber norm of u in E_x."""
        u = np.asarray(u, float)
        if self.is_hilbert:
            G = self.gram_at(x)
            return math.sqrt(max(u @ G @ u, 0.0))
        w = self.weights.eval(x)
        if np.any(w <= 0):
            raise ValueError(f"fiber weights must be positive at {x}")
        if math.isinf(self.p):
            return float(np.max(w * np.abs(u)))
        return float(np.sum(w * np.abs(u) ** self.p) ** (1.0 / self.p))


@dataclass(frozen=True)
class SubFinslerStructure:
    """The tuple (chart box, rank-d bundle, fiber norm, morphism columns)."""

    domain: ChartDomain
    fields: tuple[PolyField, ...]  # d polynomial vector fields on R^n
    sigma: FiberNorm
    name: str = ""
    declared_step: Optional[int] = None

    def __post_init__(self):
        n = self.domain.dim
        if len(self.fields) < 1:
            raise ValueError("need at least one morphism column")
        for f in self.fields:
            if f.dim_in != n or f.dim_out != n:
                raise ValueError("each morphism column must be an n->n field")
        object.__setattr__(self, "fields", tuple(self.fields))

    @property
    def n(self) -> int:
        return self.domain.dim

    @property
    def d(self) -> int:
        return len(self.fields)

    @property
    def is_sub_riemannian(self) -> bool:
        return self.sigma.is_hilbert

    def psi(self, x) -> np.ndarray:
        """The n x d morphism matrix at x."""
        return np.stack([f.eval(x) for f in self.fields], axis=1)

    def psi_many(self, X) -> np.ndarray:
        """Batched morphism matrices, shape (N, n, d)."""
        return np.stack([f.eval_many(X) for f in self.fields], axis=2)


# ---------------------------------------------------------------------------
# generalised metric


def _range_residuals(A: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Euclidean distance of each row of V to range(A)."""
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    r = int((s > RANK_CUTOFF * s[0]).sum()) if len(s) and s[0] > 0 else 0
    if r == 0:
        return np.linalg.norm(V, axis=1)
    Ur = U[:, :r]
    proj = V @ Ur @ Ur.T
    return np.linalg.norm(V - proj, axis=1)


def _min_pnorm_fiber(sigma: FiberNorm, x, A: np.ndarray, v: np.ndarray) -> float:
    """Minimize the weighted p-norm over the affine solution set of A u = v."""
    import cvxpy as cp

    d = A.shape[1]
    w = sigma.weights.eval(x)
    scale = w if math.isinf(sigma.p) else w ** (1.0 / sigma.p)
    u0, *_ = np.linalg.lstsq(A, v, rcond=None)
    _, s, Vt = np.linalg.svd(A)
    cut = RANK_CUTOFF * (s[0] if len(s) else 1.0)
    null = Vt[(s > cut).sum():].T if len(s) else np.eye(d)
    if null.shape[1] == 0:
        vec = scale * np.abs(u0)
        return float(np.max(vec)) if math.isinf(sigma.p) else float(
            np.linalg.norm(vec, sigma.p))
    z = cp.Variable(null.shape[1])
    u = u0 + null @ z
    p = "inf" if math.isinf(sigma.p) else sigma.p
    prob = cp.Problem(cp.Minimize(cp.pnorm(cp.multiply(scale, u), p)))
    prob.solve(solver=cp.CLARABEL)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise SolverError(f"fiber p-norm solve failed: {prob.status}")
    return float(prob.value)


def horizontal_norm(S: SubFinslerStructure, x, v,
                    tol_range: float = TOL_RANGE) -> GenMetricValue:
    """The generalised metric rho(x, v); Infinite iff v is outside range psi(x)."""
    vals = horizontal_norm_many(S, x, np.asarray(v, float)[None, :], tol_range)
    return vals[0]


def horizontal_norm_many(S: SubFinslerStructure, x, V,
                         tol_range: float = TOL_RANGE) -> list[GenMetricValue]:
    """rho(x, v) for a batch of vectors V at a fixed point x."""
    x = np.asarray(x, float)
    V = np.asarray(V, float)
    if V.ndim != 2 or V.shape[1] != S.n:
        raise ValueError(f"vector batch has shape {V.shape}, expected (N, {S.n})")
    A = S.psi(x)
    vnorms = np.linalg.norm(V, axis=1)
    resid = _range_residuals(A, V)
    horiz = resid <= tol_range * np.maximum(vnorms, 1e-300)
    out: list[GenMetricValue] = [GenMetricValue.inf()] * V.shape[0]
    zero = vnorms == 0.0
    idx = np.where(horiz | zero)[0]
    if len(idx) == 0:
        return out
    if S.sigma.is_hilbert:
        G = S.sigma.gram_at(x)
        L = np.linalg.cholesky(G)
        B = np.linalg.solve(L, A.T).T  # A L^{-T}: whitened morphism
        Bp = np.linalg.pinv(B, rcond=RANK_CUTOFF)
        U = V[idx] @ Bp.T
        vals = np.linalg.norm(U, axis=1)
        for i, val in zip(idx, vals):
            out[i] = GenMetricValue.finite(val)
    else:
        for i in idx:
            if zero[i]:
                out[i] = GenMetricValue.finite(0.0)
            else:
                out[i] = GenMetricValue.finite(
                    _min_pnorm_fiber(S.sigma, x, A, V[i]))
    return out


def rho_values(S: SubFinslerStructure, x, V,
               tol_range: float = TOL_RANGE) -> np.ndarray:
    """Batch rho(x, v) as floats with math.inf for the Infinite branch."""
    return np.array([float(g) for g in horizontal_norm_many(S, x, V, tol_range)])


def rank(S: SubFinslerStructure, x) -> int:
    """Numerical rank of psi(x) with relative singular value cutoff."""
    s = np.linalg.svd(S.psi(x), compute_uv=False)
    if len(s) == 0 or s[0] == 0.0:
        return 0
    return int((s > RANK_CUTOFF * s[0]).sum())


def rank_many(S: SubFinslerStructure, X) -> np.ndarray:
    """Batched numerical rank of psi over points X, shape (N,)."""
    X = np.asarray(X, float)
    mats = S.psi_many(X)
    s = np.linalg.svd(mats, compute_uv=False)
    smax = s[:, 0]
    safe = np.where(smax > 0, smax, 1.0)
    r = (s > RANK_CUTOFF * safe[:, None]).sum(axis=1)
    return np.where(smax > 0, r, 0)


def is_horizontal(S: SubFinslerStructure, x, v, tol: float = TOL_RANGE) -> bool:
    """Membership of v in the horizontal space at x, up to the residual tol."""
    v = np.asarray(v, float)
    resid = _range_residuals(S.psi(x), v[None, :])[0]
    return bool(resid <= tol * max(np.linalg.norm(v), 1.0))


@dataclass(frozen=True)
class HormanderReport:
    """Per-sample minimal bracket-generating step, or failure at step_max."""

    step_max: int
    points: np.ndarray
    steps: tuple[Optional[int], ...]  # None = not spanning within step_max

    @property
    def all_pass(self) -> bool:
        return all(s is not None for s in self.steps)

    def max_step(self) -> Optional[int]:
        if not self.all_pass:
            return None
        return max(self.steps)


def check_hormander(S: SubFinslerStructure, samples,
                    step_max: int) -> HormanderReport:
    """Least bracket depth whose Lie hull spans R^n at each sample point."""
    X = np.atleast_2d(np.asarray(samples, float))
    hull = lie_hull(S.fields, step_max)
    by_step: dict[int, list[PolyField]] = {}
    for f, s in hull:
        by_step.setdefault(s, []).append(f)
    steps: list[Optional[int]] = []
    n = S.n
    for x in X:
        vecs: list[np.ndarray] = []
        found: Optional[int] = None
        for s in range(1, step_max + 1):
            for f in by_step.get(s, []):
                vecs.append(f.eval(x))
            if vecs:
                M = np.stack(vecs, axis=0)
                sv = np.linalg.svd(M, compute_uv=False)
                r = int((sv > RANK_CUTOFF * sv[0]).sum()) if sv[0] > 0 else 0
                if r == n:
                    found = s
                    break
        steps.append(found)
    return HormanderReport(step_max=step_max, points=X, steps=tuple(steps))


def lsc_probe(S: SubFinslerStructure, tail: Sequence[tuple], limit: tuple,
              slack: float = 1e-6) -> bool:
    """Lower semicontinuity probe along a finite convergent sequence.

    True iff rho at the limit is below the min of rho over the last quarter
    of the tail, plus slack; Infinite is absorbing on the right. When the
    limit value is Infinite, a finite probe cannot observe the liminf, so
    it accepts either an Infinite tail or a strictly diverging tail trend
    (last-quarter min above the previous quarter's min).
    """
    x_inf, v_inf = limit
    rho_lim = horizontal_norm(S, x_inf, v_inf)
    q = max(len(tail) // 4, 1)
    last_q = [float(horizontal_norm(S, xk, vk)) for xk, vk in tail[-q:]]
    tail_min = min(last_q)
    if math.isinf(tail_min):
        return True
    if rho_lim.infinite:
        prev = tail[-2 * q:-q] or tail[:1]
        prev_min = min(float(horizontal_norm(S, xk, vk)) for xk, vk in prev)
        return tail_min > prev_min + slack
    return float(rho_lim) <= tail_min + slack
