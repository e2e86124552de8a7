"""Built-in structures: registry behavior and reference-value regression."""

import math

import numpy as np
import pytest

from ccml import gallery
from ccml.structure import check_hormander, rank, rho_values


def test_registry_names():
    assert set(gallery.names()) == {
        "euclidean2", "euclidean3", "heisenberg", "grushin", "martinet",
        "heisenberg_linf", "overdetermined_line",
    }


def test_unknown_name_raises():
    with pytest.raises(KeyError, match="available"):
        gallery.builtin("carnot_free_step_3")


def test_every_reference_names_its_oracle():
    for name in gallery.names():
        for ref in gallery.builtin(name, validate=False).references:
            assert ref.provenance in ("exact", "derived")
            assert len(ref.oracle) > 0


@pytest.mark.parametrize("name", gallery.names())
def test_declared_step_holds_on_box_samples(name):
    # builtin(validate=True) runs this check itself; do it explicitly too
    entry = gallery.builtin(name)
    S = entry.structure
    pts = np.vstack([np.zeros((1, S.n)),
                     0.6 * np.ones((1, S.n)),
                     -0.35 * np.ones((1, S.n))])
    assert check_hormander(S, pts, S.declared_step).all_pass


def test_hormander_step_references():
    for name in gallery.names():
        entry = gallery.builtin(name, validate=False)
        for ref in entry.reference("hormander_step"):
            pts = [ref.args[0]] if ref.args else [(0.0,) * entry.structure.n]
            report = check_hormander(entry.structure, pts,
                                     entry.structure.declared_step)
            assert report.steps[0] == ref.value


def test_rank_references():
    for name in ("grushin", "euclidean2", "euclidean3"):
        entry = gallery.builtin(name, validate=False)
        for ref in entry.reference("rank"):
            assert rank(entry.structure, ref.args[0]) == ref.value


def test_rho_references():
    for name in gallery.names():
        entry = gallery.builtin(name, validate=False)
        for ref in entry.reference("rho"):
            x, v = ref.args
            val = rho_values(entry.structure, x, np.atleast_2d(v))[0]
            assert val == pytest.approx(ref.value, rel=1e-9)


def test_grushin_vertical_reference():
    entry = gallery.builtin("grushin", validate=False)
    (ref,) = entry.reference("rho_vertical")
    x0 = ref.args[0]
    val = rho_values(entry.structure, (x0, 0.0), np.array([[0.0, 1.0]]))[0]
    assert val == pytest.approx(ref.value, rel=1e-12)
    assert val == pytest.approx(1.0 / abs(x0), rel=1e-12)


def test_dido_constant():
    assert gallery.DIDO_DISTANCE == pytest.approx(2 * math.sqrt(math.pi))


def test_martinet_step_profile():
    S = gallery.builtin("martinet").structure
    on_plane = check_hormander(S, [[0.0, 0.3, -0.2]], 3)
    off_plane = check_hormander(S, [[0.4, 0.3, -0.2]], 3)
    assert on_plane.steps == (3,)
    assert off_plane.steps == (2,)
