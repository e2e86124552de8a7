"""Covers, partitions of unity, metric fields, and sequence validation."""

import dataclasses

import numpy as np
import pytest

from ccml.finsler import (
    AssemblyError,
    CoverParams,
    PartitionOfUnity,
    assemble_F,
    base_spacing,
    build_cover,
    build_sequence,
    convergence_probe,
    partition_weights,
    riemannian_variant,
    validate_sequence,
)
from ccml.norms import NormConstructionError, ScaledNorm
from ccml.polyfield import ChartDomain
from ccml.sampling import box_points, grid_points, sphere_directions
from ccml.structure import rho_values


@pytest.fixture(scope="module")
def heis_seq(heisenberg):
    return build_sequence(heisenberg, 5)


@pytest.fixture(scope="module")
def grushin_seq(grushin):
    return build_sequence(grushin, 4)


@pytest.fixture(scope="module")
def eucl_seq(euclidean2):
    return build_sequence(euclidean2, 6)


class TestCover:
    def test_support_diameter_below_one_over_n(self, grushin):
        p = CoverParams()
        for n in (1, 3, 7):
            cells = build_cover(grushin, n, params=p)
            for c in cells:
                diam = 2 * c.support_half * np.sqrt(2)
                assert diam < 1.0 / n

    def test_grushin_cells_on_line_anchor_there(self, grushin):
        cells = build_cover(grushin, 4)
        hit = 0
        for c in cells:
            if abs(c.center[0]) <= c.support_half:  # support meets {x1 = 0}
                assert c.anchor[0] == 0.0
                assert c.min_rank == 1
                hit += 1
        assert hit > 0

    def test_euclidean_anchors_at_centers(self, euclidean2):
        for c in build_cover(euclidean2, 3):
            assert np.allclose(c.anchor, c.center)

    def test_small_box_single_cell(self, euclidean2):
        box = ChartDomain((0.01, 0.01), (0.3, 0.3))
        cells = build_cover(euclidean2, 1, box=box)
        assert len(cells) == 1

    def test_cores_tile(self, euclidean2):
        cells = build_cover(euclidean2, 2)
        for x in 0.99 * (2 * box_points(40, [0, 0], [1, 1]) - 1):
            assert sum(c.core_contains(x) for c in cells) == 1

    def test_rejects_bad_overlap(self):
        with pytest.raises(ValueError):
            CoverParams(overlap=0.0)


class TestPartitionOfUnity:
    def test_single_cell_identically_one(self, euclidean2):
        box = ChartDomain((0.01, 0.01), (0.3, 0.3))
        cells = build_cover(euclidean2, 1, box=box)
        w = partition_weights(cells, (0.12, 0.2))
        assert w.shape == (1,) and w[0] == 1.0

    def test_normalized_and_nonnegative(self, grushin):
        cells = build_cover(grushin, 3)
        for x in 2 * box_points(25, [0, 0], [1, 1], seed_skip=2) - 1:
            w = partition_weights(cells, x)
            assert np.all(w >= 0.0)
            assert w.sum() == pytest.approx(1.0, abs=1e-12)

    def test_grushin_grid_defect(self, grushin):
        pou = PartitionOfUnity(build_cover(grushin, 4))
        pts = grid_points((-0.99, -0.99), (0.99, 0.99), 0.11)
        assert pou.max_defect(pts) <= 1e-10

    def test_anchor_weight_concentrates(self, grushin):
        cells = build_cover(grushin, 4)
        for c in cells[::7]:
            w = partition_weights(cells, np.asarray(c.anchor))
            own = sum(wi for wi, other in zip(w, cells)
                      if other.anchor == c.anchor)
            assert own == pytest.approx(1.0, abs=1e-12)

    def test_empty_cell_list_rejected(self):
        with pytest.raises(ValueError):
            PartitionOfUnity([])


class TestFinslerMetricField:
    def test_norm_axioms_sampled(self, heisenberg, heis_seq):
        F = heis_seq[1]
        dirs = sphere_directions(20, 3, seed_skip=9)
        for x in 2 * box_points(4, [0] * 3, [1] * 3, seed_skip=4) - 1:
            vals = F.values(x, dirs)
            assert np.all(vals > 0)
            # homogeneity
            assert np.allclose(F.values(x, 3.5 * dirs), 3.5 * vals,
                               rtol=1e-12)
            # triangle inequality on pairs
            m = len(dirs) // 2
            pair = F.values(x, dirs[:m] + dirs[m:])
            assert np.all(pair <= vals[:m] + vals[m:] + 1e-9)

    def test_strict_sandwich_at_points(self, heisenberg, heis_seq):
        dirs = sphere_directions(16, 3, seed_skip=11)
        for x in 2 * box_points(5, [0] * 3, [1] * 3, seed_skip=6) - 1:
            rho = rho_values(heisenberg, x, dirs)
            prev = np.zeros(len(dirs))
            for F in heis_seq:
                vals = F.values(x, dirs)
                finite = np.isfinite(rho)
                assert np.all(vals[finite] < rho[finite])
                assert np.all(vals > prev)
                prev = vals

    def test_field_equals_anchor_norm_at_anchor(self, heis_seq):
        F = heis_seq[0]
        F((0.3, -0.2, 0.5), (1.0, 0.0, 0.0))  # materialize some leaves
        lf = F.anchors_materialized()[0]
        z = np.asarray(lf.cell.anchor)
        dirs = sphere_directions(12, 3)
        assert np.allclose(F.values(z, dirs), lf.norm.values(dirs),
                           atol=1e-10)

    def test_transverse_floor(self, heisenberg, heis_seq):
        for F in heis_seq:
            val = F((0.1, 0.4, -0.2), (0.0, 0.0, 1.0))
            assert val >= F.n

    def test_serialize_fields(self, heis_seq):
        blob = heis_seq[0].serialize()
        assert blob["structure"] and blob["n"] == 1
        assert blob["cells"] and "norm" in blob["cells"][0]
        assert blob["cells"][0]["constants"]["deviation_at_anchor"] <= 1.0

    def test_rejects_bad_index_and_blend(self, heisenberg):
        with pytest.raises(ValueError):
            assemble_F(heisenberg, 0)
        with pytest.raises(ValueError):
            assemble_F(heisenberg, 1, blend="cubic")


@pytest.fixture(scope="module")
def gseq(heisenberg):
    return riemannian_variant(heisenberg, 4)


class TestRiemannianVariant:

    def test_requires_hilbert(self, heisenberg_linf):
        with pytest.raises(NormConstructionError):
            riemannian_variant(heisenberg_linf, 2)

    def test_gram_spd(self, gseq):
        for x in 2 * box_points(5, [0] * 3, [1] * 3, seed_skip=8) - 1:
            for g in gseq:
                Q = g.gram_at(x)
                assert np.allclose(Q, Q.T)
                assert np.linalg.eigvalsh(Q).min() > 0

    def test_parallelogram_identity(self, gseq):
        g = gseq[2]
        x = (0.25, -0.4, 0.1)
        rng = np.random.default_rng(0)
        for _ in range(20):
            v, w = rng.standard_normal((2, 3))
            a = g(x, v + w) ** 2 + g(x, v - w) ** 2
            b = 2 * g(x, v) ** 2 + 2 * g(x, w) ** 2
            assert a == pytest.approx(b, rel=1e-12)

    def test_monotone_below_rho(self, heisenberg, gseq):
        dirs = sphere_directions(12, 3, seed_skip=13)
        for x in 2 * box_points(4, [0] * 3, [1] * 3, seed_skip=10) - 1:
            rho = rho_values(heisenberg, x, dirs)
            prev = np.zeros(len(dirs))
            for g in gseq:
                vals = g.values(x, dirs)
                finite = np.isfinite(rho)
                assert np.all(vals[finite] < rho[finite])
                assert np.all(vals > prev)
                prev = vals


class TestValidateSequence:
    def test_euclidean_all_pass(self, euclidean2, eucl_seq):
        rep = validate_sequence(euclidean2, eucl_seq, n_points=8, n_dirs=10)
        assert rep.all_pass
        assert rep.counts["a"] > 0 and rep.counts["c"] > 0
        assert rep.min_margin_a > 0

    def test_grushin_all_pass(self, grushin, grushin_seq):
        rep = validate_sequence(grushin, grushin_seq, n_points=8, n_dirs=10)
        assert rep.all_pass
        assert rep.counts["b"] > 0  # rank-1 line points were sampled

    def test_adversarial_scaling_fails_item_a(self, heisenberg):
        seq = build_sequence(heisenberg, 2)
        validate_sequence(heisenberg, seq, n_points=4, n_dirs=6)
        F = seq[1]
        for key, st in list(F._cells.items()):
            if st != "split":
                F._cells[key] = dataclasses.replace(
                    st, norm=ScaledNorm(3.0, st.norm))
        F._weights_cache.clear()
        rep = validate_sequence(heisenberg, seq, n_points=4, n_dirs=6)
        assert not rep.item_a
        assert "a" in rep.witnesses
        assert not rep.all_pass

    def test_rejects_empty(self, heisenberg):
        with pytest.raises(ValueError):
            validate_sequence(heisenberg, [])


class TestConvergenceProbe:
    def test_heisenberg_columns(self, heisenberg, heis_seq):
        rep = convergence_probe(heisenberg, heis_seq, [
            ((0.0, 0.0, 0.0), (1.0, 0.0, 0.0)),
            ((0.0, 0.0, 0.0), (0.0, 0.0, 1.0)),
        ])
        horiz, vert = rep.columns
        assert rep.all_pass
        assert horiz.horizontal and horiz.rho == pytest.approx(1.0)
        assert horiz.gap < 0.3  # closing in on rho from below
        assert not vert.horizontal and vert.beta == pytest.approx(1.0)
        assert all(b >= a for a, b in zip(vert.values, vert.values[1:]))
        assert vert.values[-1] >= len(heis_seq)

    def test_grushin_divergent_column(self, grushin, grushin_seq):
        rep = convergence_probe(grushin, grushin_seq,
                                [((0.0, 0.0), (0.0, 1.0))])
        col = rep.columns[0]
        assert col.ok and col.divergence_ok
        for n, val in enumerate(col.values, start=1):
            assert val >= n

    def test_probe_outside_box_rejected(self, grushin, grushin_seq):
        with pytest.raises(ValueError):
            convergence_probe(grushin, grushin_seq, [((3.0, 0.0), (1.0, 0.0))])
