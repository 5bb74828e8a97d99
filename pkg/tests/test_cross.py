import numpy as np
import pytest

import oracles
from tntz import (
    ContractViolationError,
    CrossConfig,
    EvaluationError,
    StructuralError,
    cross_approximate,
    discrete_argopt,
    elementwise,
    full,
    maxvol,
    random_tt,
)
from tntz.core import entries


class TestMaxvol:
    def test_identity_padded_with_zero_rows(self):
        a = np.vstack([np.eye(3), np.zeros((4, 3))])
        result = maxvol(a, 0.01)
        assert sorted(result.rows) == [0, 1, 2]

    def test_three_by_two_example(self):
        a = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]])
        result = maxvol(a, 0.0)
        rows, _ = oracles.brute_force_maxvol(a)
        assert sorted(result.rows) == sorted(rows) == [0, 1]

    def test_random_beats_random_subsets(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((50, 5))
        result = maxvol(a, 0.01)
        best = abs(np.linalg.det(a[result.rows]))
        for _ in range(1000):
            subset = rng.choice(50, 5, replace=False)
            assert best >= abs(np.linalg.det(a[subset])) * (1 - 1e-12)
        assert np.abs(result.coeffs).max() <= 1.01

    @pytest.mark.parametrize("seed", range(25))
    def test_postcondition_on_random_matrices(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(5, 40))
        r = int(rng.integers(1, min(n, 8) + 1))
        a = rng.standard_normal((n, r))
        result = maxvol(a, 0.01)
        assert np.abs(result.coeffs).max() <= 1.01 + 1e-12
        assert len(set(result.rows)) == r

    def test_volume_monotone(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((60, 6))
        result = maxvol(a, 0.0)
        hist = result.volume_history
        assert all(b >= a_ - 1e-12 for a_, b in zip(hist, hist[1:]))

    def test_rank_deficient_reports_count(self):
        a = np.ones((6, 3))
        a[:, 1] = 2 * a[:, 0]
        with pytest.raises(StructuralError, match="2 of 3|[12] of 3"):
            maxvol(a, 0.01)

    def test_greedy_within_half_of_exhaustive(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            a = rng.standard_normal((8, 3))
            greedy = abs(np.linalg.det(a[maxvol(a, 0.01).rows]))
            _, best = oracles.brute_force_maxvol(a)
            assert greedy >= 0.5 * best

    def test_wide_matrix_rejected(self):
        with pytest.raises(ContractViolationError):
            maxvol(np.ones((2, 3)), 0.01)


class TestCrossApproximate:
    def test_constant_function_rank_one(self):
        counter = {"n": 0}

        def f(idx):
            counter["n"] += len(idx)
            return np.ones(len(idx))

        t, log = cross_approximate(f, (5, 5, 5), CrossConfig(target_eps=1e-10, seed=0,
                                                             initial_rank=1,
                                                             validation_size=20))
        assert t.ranks == [1, 1, 1, 1]
        assert np.abs(full(t) - 1.0).max() <= 1e-12
        assert log.total_evaluations < 125

    def test_index_sum_recovered(self):
        def f(idx):
            return idx.sum(axis=1).astype(np.float64)

        t, log = cross_approximate(f, (8, 8, 8, 8),
                                   CrossConfig(target_eps=1e-10, seed=0))
        grid = np.indices((8, 8, 8, 8)).sum(axis=0)
        err = np.linalg.norm(full(t) - grid) / np.linalg.norm(grid)
        assert err <= 1e-10
        assert max(t.ranks) <= 3

    def test_recovers_random_tt_from_entry_lookup(self):
        target = random_tt((6, 6, 6), 3, seed=5)
        ft = full(target)

        def f(idx):
            return np.array([ft[tuple(row)] for row in idx])

        cfg = CrossConfig(target_eps=1e-8, seed=1, initial_rank=3,
                          validation_size=150)
        t, log = cross_approximate(f, (6, 6, 6), cfg)
        assert log.final_validation_error <= 1e-8
        assert log.total_evaluations <= 20 * target.dof()
        err = np.linalg.norm(full(t) - ft) / np.linalg.norm(ft)
        assert err <= 1e-7

    def test_single_mode(self):
        values = np.arange(7.0) ** 2

        def f(idx):
            return values[idx[:, 0]]

        t, _ = cross_approximate(f, (7,), CrossConfig(target_eps=1e-12, seed=0,
                                                      validation_size=10))
        assert np.allclose(full(t), values, atol=1e-13)

    def test_raising_function_names_index(self):
        def f(idx):
            vals = idx.sum(axis=1).astype(np.float64)
            if np.any((idx[:, 0] == 2) & (idx[:, 1] == 3)):
                raise ValueError("boom")
            return vals

        with pytest.raises(EvaluationError) as info:
            cross_approximate(f, (4, 4), CrossConfig(seed=0, validation_size=50))
        assert info.value.index is not None

    def test_non_finite_aborts(self):
        def f(idx):
            vals = np.ones(len(idx))
            vals[(idx[:, 0] == 1) & (idx[:, 1] == 1)] = np.inf
            return vals

        with pytest.raises(EvaluationError):
            cross_approximate(f, (3, 3), CrossConfig(seed=0, validation_size=50))

    def test_evaluation_budget(self):
        def f(idx):
            return np.cos(idx.sum(axis=1).astype(np.float64))

        cfg = CrossConfig(target_eps=1e-9, seed=2, max_iters=8, initial_rank=2,
                          rank_increment=1, validation_size=50)
        t, log = cross_approximate(f, (8, 8, 8, 8), cfg)
        max_rank = max(t.ranks)
        budget = cfg.max_iters * 4 * max_rank ** 2 * 8
        assert log.total_evaluations <= budget

    def test_validation_error_tracks_true_error(self):
        def f(idx):
            s = idx.sum(axis=1).astype(np.float64)
            return 1.0 / (1.0 + s)

        cfg = CrossConfig(target_eps=1e-13, seed=3, max_iters=2, initial_rank=2,
                          validation_size=400)
        t, log = cross_approximate(f, (6, 6, 6), cfg)
        grid = np.stack(np.meshgrid(*[np.arange(6)] * 3, indexing="ij"))
        ref = 1.0 / (1.0 + grid.sum(axis=0))
        true_err = np.linalg.norm(full(t) - ref) / np.linalg.norm(ref)
        if true_err > 1e-13:
            assert log.final_validation_error <= 2 * true_err
            assert log.final_validation_error >= true_err / 2


class TestElementwise:
    def test_identity_recovers_input(self):
        t = random_tt((5, 5, 5), 2, seed=6)
        out = elementwise(t, lambda x: x,
                          CrossConfig(target_eps=1e-10, seed=0, initial_rank=2))
        f0 = full(t)
        assert np.linalg.norm(full(out) - f0) <= 1e-10 * np.linalg.norm(f0)

    def test_exp_of_zero_tensor(self):
        t = random_tt((4, 4), 1, seed=7) * 0.0
        out = elementwise(t, np.exp, CrossConfig(target_eps=1e-10, seed=0,
                                                 initial_rank=1,
                                                 validation_size=30))
        assert np.abs(full(out) - 1.0).max() <= 1e-12
        assert out.ranks == [1, 1, 1]

    def test_reciprocal_of_shifted_positive(self):
        base = random_tt((6, 6, 6), 2, seed=8)
        shift = float(np.abs(full(base)).max()) + 1.0
        t = base + shift
        out = elementwise(t, lambda x: 1.0 / x,
                          CrossConfig(target_eps=1e-9, seed=1, max_iters=30))
        ref = 1.0 / full(t)
        assert np.linalg.norm(full(out) - ref) / np.linalg.norm(ref) <= 1e-6

    def test_non_finite_abort_names_index(self):
        t = random_tt((4, 4), 2, seed=9) * 0.0  # all zeros
        with pytest.raises(EvaluationError):
            elementwise(t, lambda x: 1.0 / x, CrossConfig(seed=0,
                                                          validation_size=20))


class TestDiscreteArgopt:
    def test_unique_spike_found(self):
        def f(idx):
            return ((idx[:, 0] == 2) & (idx[:, 1] == 3)).astype(np.float64)

        wins = 0
        for seed in range(20):
            cfg = CrossConfig(target_eps=1e-6, seed=seed, max_iters=20,
                              validation_size=200)
            best_idx, best_val, _ = discrete_argopt(f, (6, 6), cfg, "max")
            wins += best_idx == (2, 3) and best_val == 1.0
        assert wins >= 18

    def test_constant_function(self):
        def f(idx):
            return np.full(len(idx), 3.25)

        _, best_val, _ = discrete_argopt(f, (4, 4), CrossConfig(seed=0), "max")
        assert best_val == 3.25

    def test_quadratic_max(self):
        def f(idx):
            return -((idx[:, 0] - 2.0) ** 2) - (idx[:, 1] - 1.0) ** 2

        wins = 0
        for seed in range(20):
            cfg = CrossConfig(target_eps=1e-6, seed=seed, max_iters=20,
                              validation_size=200)
            best_idx, best_val, _ = discrete_argopt(f, (5, 5), cfg, "max")
            wins += best_idx == (2, 1)
        assert wins >= 18

    def test_min_sense(self):
        def f(idx):
            return (idx[:, 0] - 1.0) ** 2 + 5.0

        best_idx, best_val, _ = discrete_argopt(
            f, (4, 4), CrossConfig(seed=0, validation_size=200), "min")
        assert best_idx[0] == 1
        assert best_val == 5.0

    def test_best_value_among_samples(self):
        seen = []

        def f(idx):
            vals = np.sin(idx.sum(axis=1).astype(np.float64))
            seen.extend(vals.tolist())
            return vals

        _, best_val, log = discrete_argopt(f, (5, 5), CrossConfig(seed=4), "max")
        assert any(abs(best_val - v) < 1e-15 for v in seen)


class TestCrossStack:
    def test_stacked_fit_matches_individual(self):
        from tntz.cross import cross_approximate_stack

        base = random_tt((5, 5, 5), 2, seed=10)
        from tntz.arithmetic import stack
        batched = stack([base] * 3)
        cfg = CrossConfig(target_eps=1e-9, seed=0, initial_rank=2)
        t_stack, _ = cross_approximate_stack(
            lambda idx: entries(batched, idx), (5, 5, 5), 3, cfg)
        t_single, _ = cross_approximate(
            lambda idx: entries(base, idx), (5, 5, 5), cfg)
        assert t_stack.batch_size == 3
        ref = full(t_single)
        for b in range(3):
            got = full(t_stack.batch_element(b))
            assert np.abs(got - ref).max() <= 1e-12 * max(np.abs(ref).max(), 1.0)
