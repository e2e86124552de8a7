"""Horizontal paths, CC distance estimates, grid distances, and the
derived first-order checks (speed, differentials, Lipschitz bounds)."""

import math

import numpy as np
import pytest

from ccml.distance import (
    ControlOptParams,
    HorizontalPath,
    PathError,
    cc_distance_upper,
    cc_length,
    distance_convergence,
    finsler_distance_grid,
    horizontal_differential,
    integrate,
    lip_bound_check,
    metric_speed_check,
    parallelogram_check,
    stencil_anisotropy,
)
from ccml.finsler import build_sequence
from ccml.polyfield import ChartDomain, PolyField

FAST = ControlOptParams(K=8, restarts=2, opt_substeps=2, substeps=8,
                        maxiter=80)


@pytest.fixture(scope="module")
def eucl_seq(euclidean2):
    return build_sequence(euclidean2, 3)


class TestIntegrate:
    def test_straight_segment_heisenberg(self, heisenberg):
        # constant control (1, 0) moves along x with no vertical drift
        path = integrate(heisenberg, (0, 0, 0), np.tile([1.0, 0.0], (4, 1)))
        assert np.allclose(path.endpoint, (1.0, 0.0, 0.0), atol=1e-10)
        assert cc_length(heisenberg, path) == pytest.approx(1.0, abs=1e-10)

    def test_circle_controls_lift_area(self, heisenberg):
        # rotating controls close the planar projection; the vertical
        # displacement equals the signed enclosed area
        K = 64
        r = 1.0 / math.sqrt(math.pi)
        ts = (np.arange(K) + 0.5) / K
        U = 2 * math.pi * r * np.stack(
            [-np.sin(2 * math.pi * ts), np.cos(2 * math.pi * ts)], axis=1)
        path = integrate(heisenberg, (r, 0.0, 0.0), U, substeps=8)
        assert np.allclose(path.endpoint, (r, 0.0, 1.0), atol=2e-3)
        assert cc_length(heisenberg, path) == pytest.approx(
            2 * math.sqrt(math.pi), rel=1e-3)

    def test_interpolation_consistency(self, grushin):
        path = integrate(grushin, (0.2, 0.0), np.tile([0.5, 0.5], (3, 1)))
        assert np.allclose(path.state_at(0.0), (0.2, 0.0))
        assert np.allclose(path.state_at(1.0), path.endpoint)
        v = path.velocity_at(grushin, 0.5)
        x = path.state_at(0.5)
        assert np.allclose(v, grushin.psi(x) @ [0.5, 0.5])

    def test_start_outside_box_rejected(self, grushin):
        with pytest.raises(PathError):
            integrate(grushin, (3.0, 0.0), [[1.0, 0.0]])

    def test_escape_detected(self, euclidean2):
        with pytest.raises(PathError):
            integrate(euclidean2, (0.9, 0.0), np.tile([2.0, 0.0], (4, 1)))


class TestCCDistanceUpper:
    def test_heisenberg_horizontal_reference(self, heisenberg):
        est = cc_distance_upper(heisenberg, (0, 0, 0), (1, 0, 0), params=FAST)
        assert est.endpoint_gap < 1e-4
        assert est.value == pytest.approx(1.0, abs=5e-3)

    def test_grushin_axis_reference(self, grushin):
        est = cc_distance_upper(grushin, (0, 0), (1, 0), params=FAST)
        assert est.value == pytest.approx(1.0, abs=5e-3)

    def test_overdetermined_split_control(self, overdetermined_line):
        est = cc_distance_upper(overdetermined_line, (0.0,), (1.0,),
                                params=FAST)
        assert est.value == pytest.approx(1.0 / math.sqrt(2.0), abs=5e-3)

    def test_point_outside_box_rejected(self, heisenberg):
        with pytest.raises(PathError):
            cc_distance_upper(heisenberg, (0, 0, 0), (2, 0, 0), params=FAST)


class TestFinslerDistanceGrid:
    def test_euclidean_straight_line(self, eucl_seq):
        F = eucl_seq[-1]
        g = finsler_distance_grid(F, (-0.5, 0.0), (0.5, 0.0), 0.1)
        # F_n is a strict minorant of |.|, so the grid value sits below 1
        assert 0.5 < g.value < 1.0
        assert g.value <= 1.0 + g.error_bar
        assert g.snap_distance == pytest.approx(0.0, abs=1e-12)

    def test_refinement_shrinks_error(self, eucl_seq):
        F = eucl_seq[-1]
        a = finsler_distance_grid(F, (-0.4, 0.0), (0.4, 0.0), 0.2)
        b = finsler_distance_grid(F, (-0.4, 0.0), (0.4, 0.0), 0.1)
        assert b.error_bar < a.error_bar
        assert abs(a.value - b.value) <= a.error_bar + b.error_bar

    def test_coincident_endpoints(self, eucl_seq):
        g = finsler_distance_grid(eucl_seq[0], (0.3, 0.3), (0.3, 0.3), 0.1)
        assert g.value == 0.0

    def test_node_mask_corridor_matches_full(self, eucl_seq):
        F = eucl_seq[-1]
        full = finsler_distance_grid(F, (-0.4, 0.0), (0.4, 0.0), 0.1)
        tube = finsler_distance_grid(
            F, (-0.4, 0.0), (0.4, 0.0), 0.1,
            node_mask=lambda X: np.abs(X[:, 1]) <= 0.3)
        assert tube.n_nodes < full.n_nodes
        assert tube.value == pytest.approx(full.value, abs=1e-12)

    def test_node_mask_disconnects(self, eucl_seq):
        with pytest.raises(ValueError, match="disconnected"):
            finsler_distance_grid(
                eucl_seq[0], (-0.4, 0.0), (0.4, 0.0), 0.1,
                node_mask=lambda X: np.abs(X[:, 0]) > 0.35)

    def test_node_mask_shape_checked(self, eucl_seq):
        with pytest.raises(ValueError, match="one bool per node"):
            finsler_distance_grid(eucl_seq[0], (-0.4, 0.0), (0.4, 0.0), 0.1,
                                  node_mask=lambda X: np.array([True]))

    def test_anisotropy_small(self):
        assert stencil_anisotropy(2) < 0.03
        assert stencil_anisotropy(3) < 0.05


class TestDistanceConvergence:
    def test_euclidean_column(self, euclidean2, eucl_seq):
        rep = distance_convergence(euclidean2, eucl_seq, (-0.5, 0.0),
                                   (0.5, 0.0), 0.1, opt_params=FAST)
        assert rep.all_pass
        assert rep.d_cc_upper == pytest.approx(1.0, abs=5e-3)
        assert rep.final_value < rep.d_cc_upper + rep.rows[-1].error_bar


class TestMetricSpeed:
    def test_straight_path_quotients(self, euclidean2):
        path = integrate(euclidean2, (-0.5, -0.2),
                         np.tile([0.8, 0.4], (4, 1)))
        rep = metric_speed_check(euclidean2, path, [0.25, 0.6],
                                 [0.02, 0.05], opt_params=FAST)
        for row in rep.rows:
            assert row.speed == pytest.approx(math.hypot(0.8, 0.4), rel=1e-9)
            assert row.rel_gap < 0.03


class TestHorizontalDifferential:
    def test_heisenberg_coordinates(self, heisenberg):
        f_x = PolyField(3, [{(1, 0, 0): 1.0}])
        f_z = PolyField(3, [{(0, 0, 1): 1.0}])
        x = (0.0, 0.0, 0.0)
        assert horizontal_differential(
            heisenberg, f_x, x).dual_norm == pytest.approx(1.0)
        # dz annihilates the horizontal space at the origin
        assert horizontal_differential(
            heisenberg, f_z, x).dual_norm == pytest.approx(0.0, abs=1e-12)

    def test_grushin_transverse_slope(self, grushin):
        f_y = PolyField(2, [{(0, 1): 1.0}])
        for x0 in (0.3, -0.7):
            hd = horizontal_differential(grushin, f_y, (x0, 0.0))
            assert hd.dual_norm == pytest.approx(abs(x0), rel=1e-12)

    def test_linf_fiber_dual(self, heisenberg_linf):
        f_x = PolyField(3, [{(1, 0, 0): 1.0}])
        hd = horizontal_differential(heisenberg_linf, f_x, (0, 0, 0))
        assert hd.dual_norm == pytest.approx(1.0)

    def test_vector_valued_rejected(self, heisenberg):
        f2 = PolyField(3, [{(1, 0, 0): 1.0}, {(0, 1, 0): 1.0}])
        with pytest.raises(ValueError):
            horizontal_differential(heisenberg, f2, (0, 0, 0))


class TestLipBound:
    def test_euclidean_linear(self, euclidean2):
        f = PolyField(2, [{(1, 0): 2.0}])
        rep = lip_bound_check(euclidean2, f, (0.1, -0.2), opt_params=FAST)
        assert rep.ok
        assert rep.dual_norm == pytest.approx(2.0)
        assert rep.lip_estimate >= 2.0 - rep.tol

    def test_heisenberg_height(self, heisenberg):
        # f = z varies like d_CC^2 near the center: pointwise slope 0
        f = PolyField(3, [{(0, 0, 1): 1.0}])
        rep = lip_bound_check(heisenberg, f, (0.0, 0.0, 0.0),
                              opt_params=FAST)
        assert rep.dual_norm == pytest.approx(0.0, abs=1e-12)
        assert rep.ok


class TestParallelogram:
    def test_hilbert_fiber_defect_zero(self, heisenberg):
        rep = parallelogram_check(heisenberg, n_points=10, n_pairs=6)
        assert rep.max_rel_defect < 1e-10

    def test_linf_fiber_defect_two(self, heisenberg_linf):
        rep = parallelogram_check(heisenberg_linf, n_points=10, n_pairs=8)
        assert rep.max_rel_defect > 0.0
        x = (0.0, 0.0, 0.0)
        e1 = heisenberg_linf.psi(x)[:, 0]
        e2 = heisenberg_linf.psi(x)[:, 1]
        assert rep.defect_at(heisenberg_linf, x, e1, e2) == pytest.approx(2.0)
