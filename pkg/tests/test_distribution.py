"""Rank radii, the index-n equal-rank sets, frames, sphere Hausdorff."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ccml.distribution import (
    euclidean_norm_batch,
    gn_membership,
    orthonormal_frame,
    rank_radius,
    sphere_hausdorff,
    subspace_sphere_sample,
)


class TestRankRadius:
    def test_grushin_off_line(self, grushin):
        est = rank_radius(grushin, (0.3, 0.0), r_cap=1.0, grid_step=0.05)
        assert not est.unbounded
        # true radius is 0.3 (distance to the rank-1 line), scan resolution 1
        assert est.r_hat == pytest.approx(0.3, abs=est.grid_step)

    def test_grushin_on_line_unbounded(self, grushin):
        est = rank_radius(grushin, (0.0, 0.5), r_cap=0.5, grid_step=0.05)
        assert est.unbounded
        assert est.at_least(0.5)

    def test_constant_rank_unbounded(self, heisenberg):
        est = rank_radius(heisenberg, (0.2, 0.2, 0.0), r_cap=0.5,
                          grid_step=0.1)
        assert est.unbounded

    def test_estimate_carries_resolution(self, grushin):
        est = rank_radius(grushin, (0.3, 0.0), r_cap=1.0, grid_step=0.05)
        assert est.grid_step == 0.05 and est.r_cap == 1.0


class TestGnMembership:
    def test_grushin_examples(self, grushin):
        assert gn_membership(grushin, (0.3, 0.0), 4, grid_step=0.05)
        assert not gn_membership(grushin, (0.1, 0.0), 4, grid_step=0.05)
        assert gn_membership(grushin, (0.0, 0.5), 4, grid_step=0.05)

    @settings(max_examples=20, deadline=None)
    @given(st.floats(-0.9, 0.9), st.floats(-0.9, 0.9), st.integers(2, 8))
    def test_monotone_in_n(self, grushin, x1, x2, n):
        # the sets grow with n: membership at n persists at every larger index
        if gn_membership(grushin, (x1, x2), n, grid_step=0.04):
            assert gn_membership(grushin, (x1, x2), n + 1, grid_step=0.04)

    def test_rejects_bad_index(self, grushin):
        with pytest.raises(ValueError):
            gn_membership(grushin, (0.0, 0.0), 0, grid_step=0.1)


class TestOrthonormalFrame:
    def test_grushin_full_rank(self, grushin):
        F = orthonormal_frame(grushin, (0.5, 0.0))
        assert np.allclose(F, np.eye(2))

    def test_grushin_degenerate(self, grushin):
        F = orthonormal_frame(grushin, (0.0, 0.3))
        assert F.shape == (1, 2)
        assert np.allclose(F, [[1.0, 0.0]])

    def test_dependent_columns_skipped(self, overdetermined_line):
        F = orthonormal_frame(overdetermined_line, (0.0,))
        assert F.shape == (1, 1)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(-0.9, 0.9), st.floats(-0.9, 0.9), st.floats(-0.9, 0.9))
    def test_rows_orthonormal(self, heisenberg, a, b, c):
        F = orthonormal_frame(heisenberg, (a, b, c))
        assert F.shape == (2, 3)
        assert np.allclose(F @ F.T, np.eye(2), atol=1e-10)


class TestSphereSample:
    def test_unit_vectors_in_span(self):
        B = np.array([[2.0, 0.0, 0.0], [0.0, 1.0, 1.0]])
        pts = subspace_sphere_sample(B, 32)
        assert np.allclose(np.linalg.norm(pts, axis=1), 1.0)
        # all samples orthogonal to the normal of span(B)
        normal = np.array([0.0, 1.0, -1.0]) / np.sqrt(2)
        assert np.max(np.abs(pts @ normal)) < 1e-10

    def test_rejects_dependent_basis(self):
        with pytest.raises(ValueError):
            subspace_sphere_sample(np.array([[1.0, 0.0], [2.0, 0.0]]), 8)


class TestSphereHausdorff:
    def test_identical_subspaces(self):
        assert sphere_hausdorff(np.eye(2), np.eye(2),
                                euclidean_norm_batch) == 0.0

    def test_orthogonal_lines(self):
        h = sphere_hausdorff(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]),
                             euclidean_norm_batch)
        assert h == pytest.approx(np.sqrt(2.0), rel=1e-12)

    def test_small_rotation_chord(self):
        th = 0.1
        W = np.array([[np.cos(th), np.sin(th)]])
        h = sphere_hausdorff(np.array([[1.0, 0.0]]), W, euclidean_norm_batch)
        assert h == pytest.approx(2 * np.sin(th / 2), rel=1e-9)

    def test_symmetry(self):
        V = np.array([[1.0, 0.0, 0.0]])
        W = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        ab = sphere_hausdorff(V, W, euclidean_norm_batch)
        ba = sphere_hausdorff(W, V, euclidean_norm_batch)
        assert ab == pytest.approx(ba, rel=1e-12)
