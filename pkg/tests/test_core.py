import numpy as np
import pytest

import oracles
from tntz import (
    ContractViolationError,
    ModeNode,
    StructuralError,
    TnTensor,
    full,
    norm,
    promote_cp_node,
    random_blended,
    random_cp,
    random_tt,
    to_tt,
)
from tntz.core import INTERIOR, LEFT_BOUNDARY, RIGHT_BOUNDARY, entries


class TestPromoteCpNode:
    def test_identity_factor_interior(self):
        node = ModeNode("cp", np.eye(2))
        d = promote_cp_node(node, INTERIOR)
        expected = np.zeros((2, 2, 2))
        for a in range(2):
            for i in range(2):
                expected[a, i, a] = 1.0 if a == i else 0.0
        assert np.array_equal(d, expected)

    def test_all_ones_left_boundary(self):
        node = ModeNode("cp", np.ones((3, 2)))
        d = promote_cp_node(node, LEFT_BOUNDARY)
        assert d.shape == (1, 3, 2)
        assert np.array_equal(d, np.ones((1, 3, 2)))

    def test_interior_contracted_with_ones_gives_row_sums(self):
        rng = np.random.default_rng(3)
        u = rng.standard_normal((4, 3))
        d = promote_cp_node(ModeNode("cp", u), INTERIOR)
        # independent loop evaluation of ones @ D @ ones
        out = np.zeros(4)
        for i in range(4):
            for a in range(3):
                for b in range(3):
                    out[i] += d[a, i, b]
        assert np.allclose(out, u.sum(axis=1), atol=1e-13)

    def test_right_boundary_shape(self):
        u = np.arange(12.0).reshape(4, 3)
        d = promote_cp_node(ModeNode("cp", u), RIGHT_BOUNDARY)
        assert d.shape == (3, 4, 1)
        assert np.array_equal(d[:, :, 0], u.T)

    def test_rejects_tt_node(self):
        node = ModeNode("tt", np.ones((1, 3, 1)))
        with pytest.raises(ContractViolationError):
            promote_cp_node(node, INTERIOR)


class TestFull:
    def test_all_ones_cp_gives_rank_count(self):
        t = TnTensor([ModeNode("cp", np.ones((2, 3))), ModeNode("cp", np.ones((2, 3)))])
        assert np.array_equal(full(t), np.full((2, 2), 3.0))

    def test_rank1_tt_is_outer_product(self):
        u, v = np.array([1.0, 2.0, 3.0]), np.array([4.0, 5.0])
        t = TnTensor([
            ModeNode("tt", u.reshape(1, 3, 1)),
            ModeNode("tt", v.reshape(1, 2, 1)),
        ])
        assert np.array_equal(full(t), np.outer(u, v))

    def test_blended_chain_matches_oracle(self):
        rng = np.random.default_rng(0)
        cp = ModeNode("cp", rng.standard_normal((3, 2)))
        tt = ModeNode("tt", rng.standard_normal((2, 4, 3)))
        tucker = ModeNode("tt", rng.standard_normal((3, 2, 1)),
                          rng.standard_normal((5, 2)))
        t = TnTensor([cp, tt, tucker])
        assert t.shape == (3, 4, 5)
        assert np.allclose(full(t), oracles.dense_full_reference(t), atol=1e-12)

    @pytest.mark.parametrize("seed", range(20))
    def test_random_blended_matches_oracle(self, seed):
        t = random_blended((3, 4, 5), seed=seed)
        ref = oracles.dense_full_reference(t)
        scale = max(np.abs(ref).max(), 1.0)
        assert np.abs(full(t) - ref).max() <= 1e-12 * scale

    def test_promotion_leaves_full_unchanged(self):
        for seed in range(10):
            t = random_blended((3, 2, 4, 3), seed=seed)
            promoted = to_tt(t)
            f0, f1 = full(t), full(promoted)
            assert np.abs(f0 - f1).max() <= 1e-12 * max(np.abs(f0).max(), 1.0)

    def test_batched_full_slices_equal_elements(self):
        t = random_tt((3, 4, 2), 3, seed=7, batch_size=5)
        fb = full(t)
        for b in range(5):
            assert np.array_equal(fb[b], full(t.batch_element(b)))


class TestMetadata:
    def test_tt_rank_chain(self):
        t = random_tt((15,) * 4, 20, seed=0)
        assert t.ranks == [1, 20, 20, 20, 1]

    def test_single_mode_ranks(self):
        t = random_tt((7,), (), seed=0)
        assert t.ranks == [1, 1]

    def test_cp_dof_counts_factor_entries(self):
        t = random_cp((3, 4, 5), 5, seed=1)
        assert t.dof() == 5 * (3 + 4 + 5)

    def test_dof_excludes_batch_replication(self):
        t = random_tt((3, 4), 2, seed=2, batch_size=6)
        assert t.dof() == random_tt((3, 4), 2, seed=2).dof()

    def test_numel(self):
        assert random_tt((2, 3, 4), 1, seed=0).numel() == 24


class TestNorm:
    def test_zero_tensor(self):
        t = TnTensor([ModeNode("tt", np.zeros((1, 3, 2))),
                      ModeNode("tt", np.zeros((2, 4, 1)))])
        assert norm(t) == 0.0

    def test_rank1_unit_vectors(self):
        u = np.array([0.6, 0.8])
        t = TnTensor([ModeNode("tt", u.reshape(1, 2, 1)),
                      ModeNode("tt", u.reshape(1, 2, 1))])
        assert abs(norm(t) - 1.0) <= 1e-12

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_dense_frobenius(self, seed):
        t = random_blended((4, 3, 5), seed=seed)
        dense = np.linalg.norm(full(t))
        assert abs(norm(t) - dense) <= 1e-10 * max(dense, 1.0)


class TestValidation:
    def test_rank_chain_mismatch_rejected(self):
        with pytest.raises(StructuralError):
            TnTensor([ModeNode("tt", np.ones((1, 3, 2))),
                      ModeNode("tt", np.ones((3, 4, 1)))])

    def test_boundary_rank_must_be_one(self):
        with pytest.raises(StructuralError):
            TnTensor([ModeNode("tt", np.ones((2, 3, 1)))])

    def test_cp_tt_junction_requires_exact_rank(self):
        cp = ModeNode("cp", np.ones((3, 2)))
        with pytest.raises(StructuralError):
            TnTensor([cp, ModeNode("tt", np.ones((3, 4, 1)))])

    def test_factor_width_checked(self):
        with pytest.raises(StructuralError):
            ModeNode("tt", np.ones((1, 3, 1)), factor=np.ones((5, 2)))

    def test_batch_consistency_checked(self):
        good = ModeNode("tt", np.ones((2, 1, 3, 1)), batched=True)
        bad = ModeNode("tt", np.ones((1, 3, 1)))
        with pytest.raises(StructuralError):
            TnTensor([good], batch_size=3)
        with pytest.raises(StructuralError):
            TnTensor([bad], batch_size=2)

    def test_empty_chain_rejected(self):
        with pytest.raises(ContractViolationError):
            TnTensor([])


class TestEntries:
    def test_matches_dense_lookups(self):
        t = random_blended((4, 5, 3), seed=11)
        ft = full(t)
        rng = np.random.default_rng(0)
        idx = np.column_stack([rng.integers(0, s, 50) for s in t.shape])
        vals = entries(t, idx)
        ref = np.array([ft[tuple(row)] for row in idx])
        assert np.abs(vals - ref).max() <= 1e-12 * max(np.abs(ref).max(), 1.0)

    def test_negative_indices_normalize(self):
        t = random_tt((4, 5), 2, seed=1)
        ft = full(t)
        assert np.allclose(entries(t, np.array([[-1, -2]])), ft[3, 3], atol=1e-13)

    def test_out_of_bounds_rejected(self):
        t = random_tt((4, 5), 2, seed=1)
        with pytest.raises(ContractViolationError):
            entries(t, np.array([[4, 0]]))
