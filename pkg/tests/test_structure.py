"""Generalised metric, ranks, bracket generation, semicontinuity probes."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ccml.polyfield import ChartDomain, PolyField
from ccml.structure import (
    FiberNorm,
    GenMetricValue,
    SubFinslerStructure,
    check_hormander,
    horizontal_norm,
    is_horizontal,
    lsc_probe,
    rank,
    rank_many,
    rho_values,
)

SQRT2 = math.sqrt(2.0)


class TestGenMetricValue:
    def test_ordering_with_infinite(self):
        a = GenMetricValue.finite(2.0)
        b = GenMetricValue.finite(3.0)
        inf = GenMetricValue.inf()
        assert a < b < inf
        assert not inf < inf
        assert float(inf) == math.inf

    def test_finite_roundtrip(self):
        assert float(GenMetricValue.finite(1.25)) == 1.25


class TestRho:
    def test_heisenberg_frame_vectors(self, heisenberg):
        vals = rho_values(heisenberg, (0, 0, 0),
                          np.array([[1.0, 0, 0], [0, 1.0, 0]]))
        assert np.allclose(vals, [1.0, 1.0])

    def test_heisenberg_vertical_infinite(self, heisenberg):
        v = horizontal_norm(heisenberg, (0, 0, 0), (0, 0, 1.0))
        assert v.infinite

    def test_grushin_vertical_cost(self, grushin):
        # rho((x, y), e2) = 1/|x| off the degenerate line
        for x0 in (0.5, 0.25, -0.8):
            val = horizontal_norm(grushin, (x0, 0.3), (0, 1.0))
            assert float(val) == pytest.approx(1.0 / abs(x0), rel=1e-10)

    def test_grushin_vertical_infinite_on_line(self, grushin):
        assert horizontal_norm(grushin, (0.0, 0.2), (0, 1.0)).infinite

    def test_overdetermined_pseudoinverse(self, overdetermined_line):
        val = horizontal_norm(overdetermined_line, (0.0,), (1.0,))
        assert float(val) == pytest.approx(1.0 / SQRT2, rel=1e-12)

    def test_linf_fiber_minimum(self, heisenberg_linf):
        # min-max representation of e1 + e2 costs 1, not sqrt(2)
        val = horizontal_norm(heisenberg_linf, (0, 0, 0), (1.0, 1.0, 0.0))
        assert float(val) == pytest.approx(1.0, abs=1e-6)

    def test_zero_vector_costs_zero(self, heisenberg):
        assert float(horizontal_norm(heisenberg, (0.1, 0.2, 0.3),
                                     (0, 0, 0))) == 0.0

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-0.9, 0.9), st.floats(-0.9, 0.9), st.floats(-0.9, 0.9),
           st.floats(0.1, 5.0))
    def test_homogeneity(self, heisenberg, a, b, z, c):
        x = (a, b, z)
        A = heisenberg.psi(np.asarray(x, float))
        v = A @ np.array([0.7, -0.3])
        assert float(horizontal_norm(heisenberg, x, c * v)) == pytest.approx(
            c * float(horizontal_norm(heisenberg, x, v)), rel=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-0.9, 0.9), st.floats(-0.9, 0.9),
           st.floats(-1.0, 1.0), st.floats(-1.0, 1.0),
           st.floats(-1.0, 1.0), st.floats(-1.0, 1.0))
    def test_triangle_inequality(self, heisenberg, a, b, u1, u2, w1, w2):
        x = np.array([a, b, 0.1])
        A = heisenberg.psi(x)
        v, w = A @ np.array([u1, u2]), A @ np.array([w1, w2])
        lhs = float(horizontal_norm(heisenberg, x, v + w))
        rhs = (float(horizontal_norm(heisenberg, x, v))
               + float(horizontal_norm(heisenberg, x, w)))
        assert lhs <= rhs + 1e-9

    def test_parallelogram_identity_hilbert(self, heisenberg):
        x = np.array([0.3, -0.2, 0.1])
        A = heisenberg.psi(x)
        v, w = A @ np.array([1.0, 0.5]), A @ np.array([-0.25, 2.0])
        q = lambda u: float(horizontal_norm(heisenberg, x, u)) ** 2
        assert q(v + w) + q(v - w) == pytest.approx(2 * q(v) + 2 * q(w),
                                                    rel=1e-10)


class TestRank:
    def test_grushin_rank_map(self, grushin):
        assert rank(grushin, (0.0, 0.4)) == 1
        assert rank(grushin, (0.3, 0.4)) == 2
        X = np.array([[0.0, 0.1], [0.5, 0.5], [-0.7, 0.0]])
        assert list(rank_many(grushin, X)) == [1, 2, 2]

    def test_heisenberg_constant_rank(self, heisenberg):
        X = np.array([[0, 0, 0], [0.5, -0.5, 0.25], [1, 1, 1]], float)
        assert list(rank_many(heisenberg, X)) == [2, 2, 2]

    def test_is_horizontal(self, grushin):
        assert is_horizontal(grushin, (0.0, 0.0), (1.0, 0.0))
        assert not is_horizontal(grushin, (0.0, 0.0), (0.0, 1.0))


class TestHormander:
    def test_heisenberg_step_two(self, heisenberg):
        report = check_hormander(heisenberg, [[0, 0, 0], [0.5, 0.5, 0.5]], 2)
        assert report.steps == (2, 2)
        assert report.all_pass and report.max_step() == 2

    def test_martinet_mixed_steps(self, martinet):
        report = check_hormander(martinet, [[0, 0, 0], [0.5, 0, 0]], 3)
        assert report.steps == (3, 2)

    def test_failure_is_none(self):
        # a single field on R^2 never spans
        f = PolyField(2, [{(0, 0): 1.0}, {}])
        S = SubFinslerStructure(ChartDomain((-1.0, -1.0), (1.0, 1.0)), (f,),
                                FiberNorm.euclidean(1, 2))
        report = check_hormander(S, [[0.0, 0.0]], 4)
        assert report.steps == (None,)
        assert not report.all_pass
        assert report.max_step() is None

    def test_euclidean_step_one(self, euclidean2):
        report = check_hormander(euclidean2, [[0.2, -0.3]], 1)
        assert report.steps == (1,)


class TestLscProbe:
    def test_constant_sequence(self, heisenberg):
        tail = [((0, 0, 0), (1.0, 0, 0))] * 8
        assert lsc_probe(heisenberg, tail, ((0, 0, 0), (1.0, 0, 0)))

    def test_grushin_diverging_to_infinite(self, grushin):
        # rho((1/k, 0), e2) = k grows; the limit on the line is Infinite
        tail = [((1.0 / k, 0.0), (0.0, 1.0)) for k in range(2, 18)]
        assert lsc_probe(grushin, tail, ((0.0, 0.0), (0.0, 1.0)))

    def test_infinite_tail_infinite_limit(self, grushin):
        tail = [((0.0, 0.1 / k), (0.0, 1.0)) for k in range(1, 9)]
        assert lsc_probe(grushin, tail, ((0.0, 0.0), (0.0, 1.0)))

    def test_violation_detected(self, grushin):
        # approaching a point where rho jumps DOWN would break lsc; simulate
        # by pairing a high-cost tail with a cheaper limit reversed
        tail = [((0.5, 0.0), (0.0, 1.0))] * 8      # rho = 2
        limit = ((1.0, 0.0), (0.0, 1.0))           # rho = 1 <= 2: fine
        assert lsc_probe(grushin, tail, limit)
        tail = [((1.0, 0.0), (0.0, 1.0))] * 8      # rho = 1
        limit = ((0.5, 0.0), (0.0, 1.0))           # rho = 2 > 1: violation
        assert not lsc_probe(grushin, tail, limit)


class TestValidation:
    def test_field_arity_checked(self):
        f = PolyField(2, [{(0, 0): 1.0}])  # 2 -> 1, not a vector field
        with pytest.raises(ValueError):
            SubFinslerStructure(ChartDomain((-1.0, -1.0), (1.0, 1.0)), (f,),
                                FiberNorm.euclidean(1, 2))

    def test_fiber_norm_needs_data(self):
        with pytest.raises(ValueError):
            FiberNorm(kind="hilbert")
        with pytest.raises(ValueError):
            FiberNorm(kind="weighted_p", p=0.5,
                      weights=PolyField.constant(2, (1.0, 1.0)))
