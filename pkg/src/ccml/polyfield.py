"""Polynomial scalar/vector fields on box chart domains.

All smooth objects in this package are polynomial maps with explicit
coefficients, so Jacobians and Lie brackets are exact and field equality
is canonical-form equality (graded lexicographic monomial order).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

Monomial = tuple[int, ...]
Terms = dict[Monomial, float]


def _canon(terms: Terms) -> tuple[tuple[Monomial, float], ...]:
    """Canonical form: zero coefficients dropped, graded-lex order."""
    items = [(e, c) for e, c in terms.items() if c != 0.0]
    items.sort(key=lambda t: (sum(t[0]), t[0]))
    return tuple(items)


@dataclass(frozen=True)
class ChartDomain:
    """Axis-aligned box chart domain in R^n."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo, up = np.asarray(self.lower, float), np.asarray(self.upper, float)
        if lo.ndim != 1 or lo.shape != up.shape:
            raise ValueError("lower/upper must be 1-d points of equal dimension")
        if not np.all(lo < up):
            raise ValueError("box must have nonempty interior (lower < upper)")

    @property
    def dim(self) -> int:
        return len(self.lower)

    def contains(self, x, tol: float = 1e-12) -> bool:
        x = np.asarray(x, float)
        lo = np.asarray(self.lower)
        up = np.asarray(self.upper)
        return bool(np.all(x >= lo - tol) and np.all(x <= up + tol))

    def clip(self, x):
        return np.clip(np.asarray(x, float), self.lower, self.upper)

    def center(self):
        return 0.5 * (np.asarray(self.lower) + np.asarray(self.upper))


class PolyField:
    """Exact polynomial map R^n -> R^m.

    ``entries[i]`` maps a monomial exponent multi-index to its real
    coefficient. Construction normalizes to canonical form, so ``==`` and
    ``hash`` compare polynomials, not representations.
    """

    __slots__ = ("dim_in", "dim_out", "entries", "_cache")

    def __init__(self, dim_in: int, entries: Sequence[Terms]):
        if dim_in < 1:
            raise ValueError("dim_in must be positive")
        self.dim_in = int(dim_in)
        self.dim_out = len(entries)
        canon_entries = []
        for terms in entries:
            for exps in terms:
                if len(exps) != dim_in:
                    raise ValueError(
                        f"monomial {exps} has {len(exps)} exponents, expected {dim_in}")
                if any(e < 0 or int(e) != e for e in exps):
                    raise ValueError(f"exponents must be nonnegative integers: {exps}")
            canon_entries.append(_canon(terms))
        self.entries = tuple(canon_entries)
        self._cache = {}

    # -- construction helpers ------------------------------------------------

    @staticmethod
    def zero(dim_in: int, dim_out: int) -> "PolyField":
        return PolyField(dim_in, [{} for _ in range(dim_out)])

    @staticmethod
    def constant(dim_in: int, values: Sequence[float]) -> "PolyField":
        z = (0,) * dim_in
        return PolyField(dim_in, [{z: float(v)} for v in values])

    @staticmethod
    def coordinate(dim_in: int, i: int) -> "PolyField":
        """The scalar field x_i."""
        e = tuple(1 if j == i else 0 for j in range(dim_in))
        return PolyField(dim_in, [{e: 1.0}])

    @staticmethod
    def identity(n: int) -> "PolyField":
        cols = []
        for i in range(n):
            e = tuple(1 if j == i else 0 for j in range(n))
            cols.append({e: 1.0})
        return PolyField(n, cols)

    # -- algebra -------------------------------------------------------------

    def __eq__(self, other) -> bool:
        return (isinstance(other, PolyField) and self.dim_in == other.dim_in
                and self.entries == other.entries)

    def __hash__(self) -> int:
        return hash((self.dim_in, self.entries))

    def __repr__(self) -> str:
        return f"PolyField({self.dim_in}->{self.dim_out}, {self.entries})"

    def is_zero(self) -> bool:
        return all(len(e) == 0 for e in self.entries)

    def __add__(self, other: "PolyField") -> "PolyField":
        self._check_same_shape(other)
        out = []
        for a, b in zip(self.entries, other.entries):
            terms: Terms = dict(a)
            for e, c in b:
                terms[e] = terms.get(e, 0.0) + c
            out.append(terms)
        return PolyField(self.dim_in, out)

    def __sub__(self, other: "PolyField") -> "PolyField":
        return self + other.scale(-1.0)

    def scale(self, c: float) -> "PolyField":
        return PolyField(
            self.dim_in, [{e: c * co for e, co in ent} for ent in self.entries])

    def _check_same_shape(self, other: "PolyField"):
        if self.dim_in != other.dim_in or self.dim_out != other.dim_out:
            raise ValueError(
                f"shape mismatch: {self.dim_in}->{self.dim_out} vs "
                f"{other.dim_in}->{other.dim_out}")

    def component(self, i: int) -> "PolyField":
        return PolyField(self.dim_in, [dict(self.entries[i])])

    def partial(self, j: int) -> "PolyField":
        """Exact partial derivative d/dx_j, componentwise."""
        out = []
        for ent in self.entries:
            terms: Terms = {}
            for e, c in ent:
                if e[j] > 0:
                    de = list(e)
                    de[j] -= 1
                    terms[tuple(de)] = terms.get(tuple(de), 0.0) + c * e[j]
            out.append(terms)
        return PolyField(self.dim_in, out)

    def mul_scalar_field(self, g: "PolyField") -> "PolyField":
        """Product with a scalar PolyField (dim_out == 1)."""
        if g.dim_out != 1 or g.dim_in != self.dim_in:
            raise ValueError("g must be a scalar field on the same domain")
        gterms = g.entries[0]
        out = []
        for ent in self.entries:
            terms: Terms = {}
            for e1, c1 in ent:
                for e2, c2 in gterms:
                    e = tuple(a + b for a, b in zip(e1, e2))
                    terms[e] = terms.get(e, 0.0) + c1 * c2
            out.append(terms)
        return PolyField(self.dim_in, out)

    def sign_normalized(self) -> "PolyField":
        """Flip sign so the first canonical coefficient is positive."""
        for ent in self.entries:
            if ent:
                return self if ent[0][1] > 0 else self.scale(-1.0)
        return self

    def max_degree(self) -> int:
        degs = [sum(e) for ent in self.entries for e, _ in ent]
        return max(degs, default=0)

    # -- evaluation ----------------------------------------------------------

    def _eval_tables(self):
        """(exponent matrix, coefficient matrix) for vectorized evaluation."""
        tab = self._cache.get("tables")
        if tab is None:
            monos = sorted({e for ent in self.entries for e, _ in ent},
                           key=lambda e: (sum(e), e))
            index = {e: i for i, e in enumerate(monos)}
            E = np.array(monos, dtype=np.int64).reshape(len(monos), self.dim_in)
            C = np.zeros((self.dim_out, len(monos)))
            for i, ent in enumerate(self.entries):
                for e, c in ent:
                    C[i, index[e]] = c
            tab = (E, C)
            self._cache["tables"] = tab
        return tab

    def eval(self, x) -> np.ndarray:
        """Evaluate at a single point x in R^n."""
        x = np.asarray(x, float)
        if x.shape != (self.dim_in,):
            raise ValueError(f"point has shape {x.shape}, expected ({self.dim_in},)")
        return self.eval_many(x[None, :])[0]

    def eval_many(self, X) -> np.ndarray:
        """Evaluate at a batch of points, shape (N, n) -> (N, m)."""
        X = np.asarray(X, float)
        if X.ndim != 2 or X.shape[1] != self.dim_in:
            raise ValueError(f"batch has shape {X.shape}, expected (N, {self.dim_in})")
        E, C = self._eval_tables()
        if E.shape[0] == 0:
            return np.zeros((X.shape[0], self.dim_out))
        # monomial values: prod_j X[:, j] ** E[k, j]
        M = np.prod(X[:, None, :] ** E[None, :, :], axis=2)
        return M @ C.T

    def jacobian_field(self) -> list["PolyField"]:
        """Column j is the PolyField of partials d/dx_j."""
        cols = self._cache.get("jac")
        if cols is None:
            cols = [self.partial(j) for j in range(self.dim_in)]
            self._cache["jac"] = cols
        return cols

    def jacobian(self, x) -> np.ndarray:
        """Exact m x n Jacobian matrix at x."""
        cols = self.jacobian_field()
        return np.stack([c.eval(x) for c in cols], axis=1)

    def jacobian_many(self, X) -> np.ndarray:
        """Batched Jacobians, shape (N, m, n)."""
        cols = self.jacobian_field()
        return np.stack([c.eval_many(X) for c in cols], axis=2)


def lie_bracket(X: PolyField, Y: PolyField) -> PolyField:
    """Lie bracket [X, Y] = DY.X - DX.Y of vector fields on R^n, exact."""
    n = X.dim_in
    if X.dim_out != n or Y.dim_in != n or Y.dim_out != n:
        raise ValueError("lie_bracket needs two n->n vector fields on the same R^n")
    out = PolyField.zero(n, n)
    dX = X.jacobian_field()
    dY = Y.jacobian_field()
    for j in range(n):
        Xj = X.component(j)
        Yj = Y.component(j)
        out = out + dY[j].mul_scalar_field(Xj) - dX[j].mul_scalar_field(Yj)
    return out


def lie_hull(generators: Sequence[PolyField],
             step_max: int) -> list[tuple[PolyField, int]]:
    """Iterated brackets [v1, [v2, ... [v_{j-1}, v_j] ...]] up to depth step_max.

    Returns (field, step) pairs; zero fields are dropped and duplicates
    (up to overall sign) are kept once, at their lowest step.
    """
    if step_max < 1:
        raise ValueError("step_max must be >= 1")
    gens = list(generators)
    if not gens:
        return []
    n = gens[0].dim_in
    for g in gens:
        if g.dim_in != n or g.dim_out != n:
            raise ValueError("generators must all be n->n fields on the same R^n")

    seen: set[PolyField] = set()
    result: list[tuple[PolyField, int]] = []
    frontier: list[PolyField] = []
    for g in gens:
        if g.is_zero():
            continue
        key = g.sign_normalized()
        if key not in seen:
            seen.add(key)
            result.append((g, 1))
            frontier.append(g)
    for step in range(2, step_max + 1):
        new_frontier: list[PolyField] = []
        for g in gens:
            for w in frontier:
                b = lie_bracket(g, w)
                if b.is_zero():
                    continue
                key = b.sign_normalized()
                if key not in seen:
                    seen.add(key)
                    result.append((b, step))
                    new_frontier.append(b)
        frontier = new_frontier
        if not frontier:
            break
    return result
