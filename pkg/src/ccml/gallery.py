"""Built-in reference structures with known properties.

Each entry bundles a structure with its reference values; every value
carries a provenance tag ("exact" for closed-form facts, "derived" for
values produced by a named independent oracle).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .polyfield import ChartDomain, PolyField
from .sampling import box_points
from .structure import FiberNorm, SubFinslerStructure, check_hormander


@dataclass(frozen=True)
class Reference:
    quantity: str       # e.g. "distance", "rho", "hormander_step", "rank"
    args: tuple         # quantity-specific arguments (points, vectors, ...)
    value: float
    provenance: str     # "exact" | "derived"
    oracle: str         # description of where the value comes from

    def __post_init__(self):
        if self.provenance not in ("exact", "derived"):
            raise ValueError(f"unknown provenance tag {self.provenance!r}")
        if not self.oracle:
            raise ValueError("every reference needs an oracle description")


@dataclass(frozen=True)
class GalleryEntry:
    name: str
    structure: SubFinslerStructure
    references: tuple[Reference, ...]

    def reference(self, quantity: str) -> list[Reference]:
        return [r for r in self.references if r.quantity == quantity]


DIDO_DISTANCE = 2.0 * math.sqrt(math.pi)  # shortest unit-area planar loop


def _heisenberg_fields() -> tuple[PolyField, PolyField]:
    # X1 = d/dx - (y/2) d/dz, X2 = d/dy + (x/2) d/dz
    X1 = PolyField(3, [{(0, 0, 0): 1.0}, {}, {(0, 1, 0): -0.5}])
    X2 = PolyField(3, [{}, {(0, 0, 0): 1.0}, {(1, 0, 0): 0.5}])
    return X1, X2


def _box(n: int) -> ChartDomain:
    return ChartDomain((-1.0,) * n, (1.0,) * n)


def _entry_euclidean(n: int) -> GalleryEntry:
    fields = tuple(
        PolyField(n, [({(0,) * n: 1.0} if i == j else {}) for i in range(n)])
        for j in range(n))
    S = SubFinslerStructure(_box(n), fields, FiberNorm.euclidean(n, n),
                            name=f"euclidean{n}", declared_step=1)
    refs = (
        Reference("hormander_step", (), 1, "exact",
                  "coordinate fields span at step 1"),
        Reference("distance", ((0.0,) * n, (1.0,) + (0.0,) * (n - 1)), 1.0,
                  "exact", "straight segment in a Euclidean structure"),
        Reference("rank", ((0.0,) * n,), n, "exact", "identity morphism"),
    )
    return GalleryEntry(f"euclidean{n}", S, refs)


def _entry_heisenberg() -> GalleryEntry:
    X1, X2 = _heisenberg_fields()
    S = SubFinslerStructure(_box(3), (X1, X2), FiberNorm.euclidean(2, 3),
                            name="heisenberg", declared_step=2)
    refs = (
        Reference("distance", ((0.0, 0.0, 0.0), (1.0, 0.0, 0.0)), 1.0,
                  "exact", "planar projection bounds below, segment attains"),
        Reference("distance", ((0.0, 0.0, 0.0), (0.0, 0.0, 1.0)),
                  DIDO_DISTANCE, "derived",
                  "isoperimetric oracle: shortest planar loop enclosing unit "
                  "area is a circle of length 2*sqrt(pi)"),
        Reference("hormander_step", (), 2, "derived",
                  "bracket table: [X1, X2] = d/dz"),
        Reference("rho", ((0.0, 0.0, 0.0), (1.0, 0.0, 0.0)), 1.0, "exact",
                  "unit horizontal frame vector"),
    )
    return GalleryEntry("heisenberg", S, refs)


def _entry_grushin() -> GalleryEntry:
    X1 = PolyField(2, [{(0, 0): 1.0}, {}])          # d/dx
    X2 = PolyField(2, [{}, {(1, 0): 1.0}])          # x d/dy
    S = SubFinslerStructure(_box(2), (X1, X2), FiberNorm.euclidean(2, 2),
                            name="grushin", declared_step=2)
    refs = (
        Reference("rank", ((0.0, 0.5),), 1, "derived",
                  "column inspection on the degenerate line"),
        Reference("rank", ((0.5, 0.0),), 2, "derived", "column inspection"),
        Reference("distance", ((0.0, 0.0), (1.0, 0.0)), 1.0, "exact",
                  "horizontal segment along the x-axis"),
        Reference("rho_vertical", (0.5,), 2.0, "derived",
                  "single-constraint min-norm: rho((x,y), e2) = 1/|x|"),
        Reference("hormander_step", (), 2, "derived",
                  "bracket table: [X1, X2] = d/dy"),
    )
    return GalleryEntry("grushin", S, refs)


def _entry_martinet() -> GalleryEntry:
    # X1 = d/dx, X2 = d/dy + (x^2/2) d/dz; step 3 on {x = 0}, step 2 off it
    X1 = PolyField(3, [{(0, 0, 0): 1.0}, {}, {}])
    X2 = PolyField(3, [{}, {(0, 0, 0): 1.0}, {(2, 0, 0): 0.5}])
    S = SubFinslerStructure(_box(3), (X1, X2), FiberNorm.euclidean(2, 3),
                            name="martinet", declared_step=3)
    refs = (
        Reference("hormander_step", ((0.0, 0.0, 0.0),), 3, "derived",
                  "bracket table: [X1, [X1, X2]] = d/dz, lower brackets "
                  "degenerate on {x = 0}"),
        Reference("hormander_step", ((0.5, 0.0, 0.0),), 2, "derived",
                  "bracket table: [X1, X2] = x d/dz nonzero off {x = 0}"),
    )
    return GalleryEntry("martinet", S, refs)


def _entry_heisenberg_linf() -> GalleryEntry:
    X1, X2 = _heisenberg_fields()
    weights = PolyField.constant(3, (1.0, 1.0))
    S = SubFinslerStructure(_box(3), (X1, X2),
                            FiberNorm.weighted(math.inf, weights),
                            name="heisenberg_linf", declared_step=2)
    refs = (
        Reference("parallelogram_defect",
                  ((0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0)), 2.0,
                  "derived",
                  "closed-form max-norm preimages: rho(e1 +- e2) = 1 while "
                  "rho(e1) = rho(e2) = 1, defect |1 + 1 - 2 - 2| = 2"),
        Reference("hormander_step", (), 2, "derived",
                  "bracket table (fiber norm does not enter)"),
    )
    return GalleryEntry("heisenberg_linf", S, refs)


def _entry_overdetermined_line() -> GalleryEntry:
    # n = 1, d = 2, psi = [1 1]: two controls drive one coordinate
    f1 = PolyField(1, [{(0,): 1.0}])
    f2 = PolyField(1, [{(0,): 1.0}])
    S = SubFinslerStructure(_box(1), (f1, f2), FiberNorm.euclidean(2, 1),
                            name="overdetermined_line", declared_step=1)
    refs = (
        Reference("rho", ((0.0,), (1.0,)), 1.0 / math.sqrt(2.0), "derived",
                  "pseudoinverse closed form: min |u| with u1 + u2 = 1"),
        Reference("hormander_step", (), 1, "exact", "rank 1 everywhere"),
    )
    return GalleryEntry("overdetermined_line", S, refs)


_BUILDERS = {
    "euclidean2": lambda: _entry_euclidean(2),
    "euclidean3": lambda: _entry_euclidean(3),
    "heisenberg": _entry_heisenberg,
    "grushin": _entry_grushin,
    "martinet": _entry_martinet,
    "heisenberg_linf": _entry_heisenberg_linf,
    "overdetermined_line": _entry_overdetermined_line,
}


def names() -> list[str]:
    return sorted(_BUILDERS)


def builtin(name: str, validate: bool = True) -> GalleryEntry:
    """A fully validated gallery entry by name.

    Validation runs the bracket-generation check at a handful of box points
    (plus the entry's special loci) against the declared step.
    """
    if name not in _BUILDERS:
        raise KeyError(
            f"unknown gallery entry {name!r}; available: {', '.join(names())}")
    entry = _BUILDERS[name]()
    if validate:
        S = entry.structure
        pts = box_points(8, S.domain.lower, S.domain.upper)
        pts = np.vstack([pts, np.zeros((1, S.n))])
        report = check_hormander(S, pts, step_max=S.declared_step)
        if not report.all_pass:
            raise AssertionError(
                f"gallery entry {name} fails bracket generation within its "
                f"declared step {S.declared_step}")
    return entry
