"""Extension norms, smooth approximation, and the anchor construction."""

import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ccml.norms import (
    AnchorResult,
    ExplicitPNorm,
    ExtensionNorm,
    NormConstructionError,
    ScaledNorm,
    SmoothNorm,
    build_anchor_norm,
    euclidean_norm,
    extend_norm,
    smooth_norm_approx,
    verify_anchor,
)
from ccml.sampling import sphere_directions


class TestExplicitPNorm:
    def test_values(self):
        n = ExplicitPNorm(p=1.0, weights=(1.0, 2.0))
        assert n([1.0, 1.0]) == pytest.approx(3.0)
        m = ExplicitPNorm(p=math.inf, weights=(1.0, 3.0))
        assert m([2.0, 1.0]) == pytest.approx(3.0)

    def test_sphere_max_closed_form(self):
        # weighted-1 norm max over the Euclidean sphere: |w| in l2
        n = ExplicitPNorm(p=1.0, weights=(3.0, 4.0))
        assert n.sphere_max() == pytest.approx(5.0, rel=1e-12)
        sampled = float(np.max(n.values(sphere_directions(4096, 2))))
        assert sampled <= n.sphere_max() + 1e-9

    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            ExplicitPNorm(p=0.5, weights=(1.0,))
        with pytest.raises(ValueError):
            ExplicitPNorm(p=2.0, weights=(0.0,))


class TestExtendNorm:
    def test_reference_instance(self):
        # V = span{e1} in R^2, base 2|a|, Euclidean minorant, lam = 3
        base = lambda W: 2.0 * np.abs(np.atleast_2d(W)[:, 0])
        n = extend_norm(np.array([[1.0, 0.0]]), base, euclidean_norm(2),
                        lam=3.0)
        assert n.lambda_prime == pytest.approx(4.0)
        assert n([1.0, 0.0]) == pytest.approx(2.0)
        assert n([0.0, 1.0]) == pytest.approx(4.0)
        assert n([1.0, 1.0]) == pytest.approx(6.0)
        # guarantees at a transverse basis vector
        assert n([0.0, 1.0]) >= 3.0
        assert n([0.0, 1.0]) > 1.0

    def test_full_space_reduces_to_base(self):
        base = lambda W: np.linalg.norm(np.atleast_2d(W), axis=1)
        n = extend_norm(np.eye(3), base, None, lam=1.0)
        v = np.array([0.3, -0.4, 1.2])
        assert n(v) == pytest.approx(np.linalg.norm(v), rel=1e-12)

    def test_precondition_violation_reports_witness(self):
        # base below the minorant on V
        base = lambda W: 0.5 * np.linalg.norm(np.atleast_2d(W), axis=1)
        with pytest.raises(NormConstructionError, match="dominate"):
            extend_norm(np.array([[1.0, 0.0]]), base, euclidean_norm(2),
                        lam=1.0)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(2, 5), st.integers(1, 4), st.floats(1.0, 10.0),
           st.integers(0, 10 ** 6))
    def test_stated_guarantees_random_instances(self, d, k, lam, seed):
        k = min(k, d)
        rng = np.random.default_rng(seed)
        V = rng.standard_normal((k, d))
        w_base = tuple(rng.uniform(2.5, 4.0, k))
        w_min = tuple(rng.uniform(0.2, 1.0, d))
        minorant = ExplicitPNorm(p=2.0, weights=w_min)
        base_norm = ExplicitPNorm(p=2.0, weights=w_base)

        def base(W):
            # coefficients of W in the orthonormalized V-frame
            Q, _ = np.linalg.qr(np.asarray(V, float).T, mode="reduced")
            return base_norm.values(np.atleast_2d(W) @ Q)

        n = extend_norm(V, base, minorant, lam=lam)
        dirs = sphere_directions(200, d)
        vals = n.values(dirs)
        assert np.all(vals > minorant.values(dirs))
        # restriction to V agrees with the base
        coeffs = sphere_directions(64, k) if k > 1 else np.array([[1.0], [-1.0]])
        Vdirs = coeffs @ n.basis[:k]
        assert np.allclose(n.values(Vdirs), np.asarray(base(Vdirs)),
                           atol=1e-12)
        # at least lam transversally
        if k < d:
            tail = n.basis[k:]
            assert np.all(n.values(tail) >= lam)


class TestSmoothNormApprox:
    def test_euclidean_returned_quadratic(self):
        s = smooth_norm_approx(euclidean_norm(3), 0.01)
        assert s.is_quadratic
        assert s.achieved_deviation == 0.0
        assert s([0.0, 3.0, 4.0]) == pytest.approx(5.0)

    def test_linf_within_tolerance(self):
        target = ExplicitPNorm(p=math.inf, weights=(1.0, 1.0))
        s = smooth_norm_approx(target, 0.05)
        dirs = sphere_directions(2000, 2, seed_skip=7)
        dev = np.max(np.abs(s.values(dirs) - target.values(dirs)))
        assert dev <= 0.05

    def test_weighted_l1_within_tolerance(self):
        target = ExplicitPNorm(p=1.0, weights=(1.0, 2.0))
        s = smooth_norm_approx(target, 0.1)
        dirs = sphere_directions(2000, 2, seed_skip=7)
        assert np.max(np.abs(s.values(dirs) - target.values(dirs))) <= 0.1

    def test_unachievable_tolerance_reports_deviation(self):
        target = ExplicitPNorm(p=math.inf, weights=(1.0, 1.0, 1.0))
        with pytest.raises(NormConstructionError, match="achieved"):
            smooth_norm_approx(target, 1e-9, max_support=256)

    def test_rejects_nonpositive_tol(self):
        with pytest.raises(ValueError):
            smooth_norm_approx(euclidean_norm(2), 0.0)


class TestSmoothNorm:
    def _power_mean_instance(self):
        target = ExplicitPNorm(p=1.0, weights=(1.0, 1.5))
        s = smooth_norm_approx(target, 0.05)
        return SmoothNorm(support_points=s.support_points, power=s.power,
                          euclid_coef=0.1)

    def test_homogeneity(self):
        s = self._power_mean_instance()
        dirs = sphere_directions(100, 2)
        for c in (0.25, 2.0, 17.0):
            assert np.allclose(s.values(c * dirs), c * s.values(dirs),
                               rtol=1e-12)

    def test_gradient_matches_finite_differences(self):
        s = self._power_mean_instance()
        v = np.array([0.6, -0.8])
        g = s.gradient(v)
        h = 1e-6
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            fd = (s(v + e) - s(v - e)) / (2 * h)
            assert g[i] == pytest.approx(fd, abs=1e-5)

    def test_strong_convexity_sampled_hessians(self):
        s = self._power_mean_instance()
        rng_dirs = sphere_directions(50, 2, seed_skip=3)
        floor = s.euclid_coef ** 2 / 2 - 1e-9
        for v in rng_dirs[:50]:
            H = s.hessian_sq_sampled(v)
            assert np.linalg.eigvalsh(H).min() >= floor

    def test_quadratic_requires_spd(self):
        with pytest.raises(NormConstructionError):
            SmoothNorm(quad=np.array([[1.0, 0.0], [0.0, -1.0]]))

    def test_serialize_roundtrip_fields(self):
        s = self._power_mean_instance()
        blob = s.serialize()
        assert blob["kind"] == "power_mean"
        assert blob["power"] == s.power
        q = SmoothNorm(quad=np.eye(2)).serialize()
        assert q["kind"] == "quadratic"


class TestBuildAnchorNorm:
    @pytest.mark.parametrize("mode", ["power_mean", "quadratic"])
    def test_heisenberg_origin(self, heisenberg, mode):
        a = build_anchor_norm(heisenberg, (0, 0, 0), eps=0.1, lam=10.0,
                              smoothing=mode)
        assert a.diagnostics["deviation_at_xbar"] <= 0.1
        assert a.norm([0.0, 0.0, 1.0]) >= 10.0
        assert a.r_U > 0
        assert verify_anchor(heisenberg, a).all_pass

    def test_constants_chain(self, heisenberg):
        a = build_anchor_norm(heisenberg, (0, 0, 0), eps=0.1, lam=10.0)
        c = a.constants
        lam_ext = a.lam + 1.0
        assert lam_ext * (1 - c["delta"]) - c["delta_prime"] > a.lam
        assert c["delta"] > 0 and c["eps_prime"] > 0 and c["eps_dprime"] > 0

    def test_euclidean_full_rank(self, euclidean2):
        a = build_anchor_norm(euclidean2, (0.2, 0.3), eps=0.05, lam=2.0)
        dirs = sphere_directions(200, 2)
        dev = np.max(np.abs(np.asarray(a.norm(dirs)) - 1.0))
        assert dev <= 0.05
        assert verify_anchor(euclidean2, a).all_pass

    def test_grushin_full_rank_point(self, grushin):
        a = build_anchor_norm(grushin, (1.0, 0.0), eps=0.05, lam=5.0,
                              smoothing="quadratic")
        assert a.diagnostics["deviation_at_xbar"] <= 0.05
        assert a.r_U > 0
        assert verify_anchor(grushin, a).all_pass

    def test_quadratic_mode_requires_hilbert(self, heisenberg_linf):
        with pytest.raises(NormConstructionError):
            build_anchor_norm(heisenberg_linf, (0, 0, 0), eps=0.1, lam=2.0,
                              smoothing="quadratic")

    def test_rejects_bad_parameters(self, heisenberg):
        with pytest.raises(ValueError):
            build_anchor_norm(heisenberg, (0, 0, 0), eps=-1.0, lam=1.0)
        with pytest.raises(ValueError):
            build_anchor_norm(heisenberg, (0, 0, 0), eps=0.1, lam=1.0,
                              smoothing="nope")


class TestVerifyAnchor:
    def test_tightened_eps_fails_item_i(self, heisenberg):
        a = build_anchor_norm(heisenberg, (0, 0, 0), eps=0.1, lam=10.0,
                              smoothing="quadratic")
        squeezed = dataclasses.replace(
            a, eps=a.diagnostics["deviation_at_xbar"] / 2)
        report = verify_anchor(heisenberg, squeezed)
        assert not report.item_i
        assert "item_i" in report.witnesses
        assert not report.all_pass

    def test_raised_lambda_fails_item_iii(self, heisenberg):
        a = build_anchor_norm(heisenberg, (0, 0, 0), eps=0.1, lam=10.0,
                              smoothing="quadratic")
        raised = dataclasses.replace(a, lam=100.0)
        report = verify_anchor(heisenberg, raised)
        assert not report.item_iii
        assert "item_iii" in report.witnesses
