import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ttiga.tensor_train import (
    AmenOptions,
    CrossOracle,
    MaxvolError,
    TtMatrix,
    TtShapeError,
    TtTensor,
    amen_solve,
    load_tt,
    maxvol,
    save_tt,
    tt_add,
    tt_cross,
    tt_dot,
    tt_from_full,
    tt_info,
    tt_matrix_from_full,
    tt_matvec,
    tt_norm,
    tt_round,
    tt_scale,
    tt_sub,
)


def laplacian_tt(n: int) -> TtMatrix:
    L = (2 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)) * (n + 1) ** 2
    Id = np.eye(n)
    A = tt_add(
        tt_add(TtMatrix.rank_one([L, Id, Id]), TtMatrix.rank_one([Id, L, Id])),
        TtMatrix.rank_one([Id, Id, L]),
    )
    return tt_round(A, 1e-14)


class TestArithmetic:
    def test_add_matches_dense(self):
        rng = np.random.default_rng(0)
        a = TtTensor.random((5, 6, 7), (3, 4), rng)
        b = TtTensor.random((5, 6, 7), (2, 5), rng)
        assert np.abs(tt_add(a, b).full() - (a.full() + b.full())).max() < 1e-13

    def test_scale_and_sub(self):
        rng = np.random.default_rng(1)
        a = TtTensor.random((4, 4, 4), (2, 2), rng)
        assert np.allclose(tt_scale(a, -2.0).full(), -2.0 * a.full(), atol=1e-13)
        assert np.abs(tt_sub(a, a).full()).max() < 1e-13

    def test_dot_vs_norm(self):
        rng = np.random.default_rng(2)
        x = TtTensor.random((5, 5, 5), (3, 3), rng)
        assert abs(tt_dot(x, x) - tt_norm(x) ** 2) < 1e-12 * tt_norm(x) ** 2

    def test_matvec_identity(self):
        rng = np.random.default_rng(3)
        x = TtTensor.random((5, 6, 7), (2, 3), rng)
        y = tt_round(tt_matvec(TtMatrix.identity((5, 6, 7)), x), 1e-12)
        assert np.abs(y.full() - x.full()).max() < 1e-12 * tt_norm(x)

    def test_matvec_matches_dense(self):
        rng = np.random.default_rng(4)
        A = TtMatrix(
            [
                rng.standard_normal((1, 4, 4, 3)),
                rng.standard_normal((3, 5, 5, 2)),
                rng.standard_normal((2, 6, 6, 1)),
            ]
        )
        x = TtTensor.random((4, 5, 6), (2, 2), rng)
        ref = A.full() @ x.full().ravel()
        assert np.allclose(tt_matvec(A, x).full().ravel(), ref, atol=1e-10)

    def test_shape_mismatch(self):
        rng = np.random.default_rng(5)
        a = TtTensor.random((4, 4, 4), (2, 2), rng)
        b = TtTensor.random((4, 5, 4), (2, 2), rng)
        with pytest.raises(TtShapeError):
            tt_add(a, b)
        with pytest.raises(TtShapeError):
            tt_matvec(TtMatrix.identity((4, 4, 5)), a)

    def test_transpose(self):
        rng = np.random.default_rng(6)
        A = TtMatrix(
            [
                rng.standard_normal((1, 3, 3, 2)),
                rng.standard_normal((2, 4, 4, 2)),
                rng.standard_normal((2, 3, 3, 1)),
            ]
        )
        assert np.allclose(A.transpose().full(), A.full().T, atol=1e-13)


class TestRounding:
    def test_rank_one_stays_rank_one(self):
        t = TtTensor.rank_one([np.arange(1.0, 5), np.ones(6), np.arange(3.0)])
        r = tt_round(t, 1e-12)
        assert r.ranks == (1, 1, 1, 1)
        assert np.abs(r.full() - t.full()).max() < 1e-14 * max(1, tt_norm(t))

    def test_self_sum_recompresses(self):
        rng = np.random.default_rng(7)
        a = TtTensor.random((6, 6, 6), (3, 3), rng)
        s = tt_round(tt_add(a, a), 1e-12)
        assert all(rs <= ra for rs, ra in zip(s.ranks, a.ranks))
        assert np.abs(s.full() - 2 * a.full()).max() < 1e-12 * tt_norm(a)

    @pytest.mark.parametrize("eps", [1e-2, 1e-6, 1e-10])
    def test_error_bound_random(self, eps):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((8, 8, 8))
        t = tt_from_full(X)
        r = tt_round(t, eps)
        assert np.linalg.norm(r.full() - X) <= eps * np.linalg.norm(X) + 1e-14

    def test_zero_tensor(self):
        z = tt_round(TtTensor.zeros((4, 5, 6)), 1e-8)
        assert z.ranks == (1, 1, 1, 1)
        assert np.all(z.full() == 0.0)

    def test_round_trip_from_full(self):
        rng = np.random.default_rng(9)
        for shape in [(4, 4, 4), (12, 12, 12), (3, 7, 5)]:
            X = rng.standard_normal(shape)
            assert np.abs(tt_from_full(X).full() - X).max() < 1e-12 * np.linalg.norm(X)

    def test_matrix_round_trip(self):
        rng = np.random.default_rng(10)
        X = rng.standard_normal((3, 3, 4, 4, 2, 2))
        M = tt_matrix_from_full(X, 1e-13)
        dense = M.full()
        ref = X.transpose(0, 2, 4, 1, 3, 5).reshape(24, 24)
        assert np.abs(dense - ref).max() < 1e-11


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), eps=st.sampled_from([1e-3, 1e-6, 1e-9]))
def test_round_error_bound_property(seed, eps):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((6, 7, 5))
    r = tt_round(tt_from_full(X), eps)
    assert np.linalg.norm(r.full() - X) <= eps * np.linalg.norm(X) + 1e-14


class TestMaxvol:
    def test_identity_rows(self):
        M = np.vstack([np.eye(4), np.zeros((8, 4))])
        assert sorted(maxvol(M)) == [0, 1, 2, 3]

    def test_monte_carlo_dominance(self):
        rng = np.random.default_rng(20)
        M = rng.standard_normal((50, 5))
        sel = maxvol(M)
        vol = abs(np.linalg.det(M[sel]))
        subsets = np.array([rng.choice(50, 5, replace=False) for _ in range(100_000)])
        vols = np.abs(np.linalg.det(M[subsets]))
        assert vol >= vols.max() * (1 - 1e-12)

    def test_dominance_certificate(self):
        rng = np.random.default_rng(21)
        M = rng.standard_normal((200, 8))
        sel = maxvol(M, tol=1.01)
        C = np.linalg.solve(M[sel].T, M.T).T
        assert np.abs(C).max() <= 1.01 + 1e-9

    def test_duplicate_rows_lowest_index(self):
        v = np.array([10.0, 0.0])
        M = np.vstack([v, v, [0.0, 10.0], [0.1, 0.2], [0.3, 0.1]])
        sel = set(maxvol(M).tolist())
        assert sel == {0, 2}
        assert np.array_equal(maxvol(M), maxvol(M))

    def test_rank_deficient_raises(self):
        M = np.zeros((10, 3))
        M[:, 0] = np.arange(10)
        M[:, 1] = 2 * np.arange(10)  # dependent columns
        M[:, 2] = np.arange(10) + 1
        with pytest.raises(MaxvolError):
            maxvol(M)

    def test_tol_validation(self):
        with pytest.raises(ValueError):
            maxvol(np.eye(3), tol=0.5)


class TestCross:
    def test_separable_rank_one(self):
        def f(idx):
            return (
                np.sin(idx[:, 0] + 1.0)
                * np.cos(0.3 * idx[:, 1])
                / (idx[:, 2] + 2.0)
            )

        res = tt_cross(
            CrossOracle(f, (16, 16, 16)), eps=1e-10, rng=np.random.default_rng(0)
        )
        assert res.ranks == (1, 1, 1, 1)
        grid = np.indices((16, 16, 16)).reshape(3, -1).T
        ref = f(grid).reshape(16, 16, 16)
        assert np.abs(res.tensor.full() - ref).max() < 1e-13 * np.abs(ref).max()
        assert res.converged

    def test_two_term_sum(self):
        def f(idx):
            a = np.sin(idx[:, 0]) * np.cos(idx[:, 1]) * (idx[:, 2] + 1.0)
            b = np.exp(-0.1 * idx[:, 0]) * idx[:, 1] * np.cos(0.2 * idx[:, 2])
            return a + b

        res = tt_cross(
            CrossOracle(f, (16, 16, 16)), eps=1e-10, rng=np.random.default_rng(1)
        )
        assert max(res.ranks) <= 2
        grid = np.indices((16, 16, 16)).reshape(3, -1).T
        ref = f(grid).reshape(16, 16, 16)
        err = np.linalg.norm(res.tensor.full() - ref) / np.linalg.norm(ref)
        assert err <= 1e-9
        assert res.holdout_error <= 1e-10

    def test_constant_field(self):
        res = tt_cross(
            CrossOracle(lambda idx: np.full(idx.shape[0], 3.5), (8, 8, 8)),
            eps=1e-10,
            rng=np.random.default_rng(2),
        )
        assert res.ranks == (1, 1, 1, 1)
        assert np.abs(res.tensor.full() - 3.5).max() < 1e-12

    def test_synthetic_tt_rank_recovery(self):
        rng = np.random.default_rng(3)
        target = tt_round(TtTensor.random((12, 12, 12), (3, 3), rng), 1e-14)

        res = tt_cross(
            CrossOracle(lambda idx: target.gather(idx), (12, 12, 12)),
            eps=1e-10,
            rng=np.random.default_rng(4),
        )
        assert max(res.ranks) <= 3 + 2
        err = np.linalg.norm(res.tensor.full() - target.full())
        assert err <= 1e-9 * tt_norm(target)

    def test_noise_against_scale_resolves_to_zero(self):
        rng = np.random.default_rng(5)

        def noisy_zero(idx):
            return 1e-16 * rng.standard_normal(idx.shape[0])

        res = tt_cross(
            CrossOracle(noisy_zero, (12, 12, 12)),
            eps=1e-10,
            rng=np.random.default_rng(6),
            scale=1.0,
        )
        assert res.ranks == (1, 1, 1, 1)
        assert np.all(res.tensor.full() == 0.0)
        assert res.converged

    def test_scalar_oracle_adapter(self):
        oracle = CrossOracle.from_scalar(lambda t: float(t[0] + t[1] * t[2]), (4, 4, 4))
        res = tt_cross(oracle, 1e-12, rng=np.random.default_rng(7))
        grid = np.indices((4, 4, 4)).reshape(3, -1).T
        ref = (grid[:, 0] + grid[:, 1] * grid[:, 2]).reshape(4, 4, 4)
        assert np.abs(res.tensor.full() - ref).max() < 1e-10


class TestAmen:
    def test_identity_system(self):
        rng = np.random.default_rng(30)
        f = TtTensor.random((6, 7, 8), (3, 2), rng)
        res = amen_solve(TtMatrix.identity((6, 7, 8)), f, 1e-12)
        assert res.residual <= 1e-14
        assert res.converged
        assert np.abs(res.solution.full() - f.full()).max() < 1e-10 * tt_norm(f)

    def test_laplacian_vs_dense_solve(self):
        rng = np.random.default_rng(31)
        A = laplacian_tt(8)
        f = tt_round(TtTensor.random((8, 8, 8), (2, 2), rng), 1e-14)
        res = amen_solve(A, f, 1e-8)
        assert res.converged
        ref = np.linalg.solve(A.full(), f.full().ravel())
        err = np.linalg.norm(res.solution.full().ravel() - ref) / np.linalg.norm(ref)
        assert err < 1e-8

    def test_scaling_equivariance(self):
        rng = np.random.default_rng(32)
        A = laplacian_tt(8)
        f = tt_round(TtTensor.random((8, 8, 8), (2, 2), rng), 1e-14)
        u1 = amen_solve(A, f, 1e-9).solution
        u2 = amen_solve(A, tt_round(tt_scale(f, 2.0), 1e-14), 1e-9).solution
        diff = tt_norm(tt_sub(u2, tt_scale(u1, 2.0))) / tt_norm(u2)
        assert diff < 1e-7

    def test_residual_certificate(self):
        rng = np.random.default_rng(33)
        A = laplacian_tt(8)
        f = tt_round(TtTensor.random((8, 8, 8), (2, 2), rng), 1e-14)
        res = amen_solve(A, f, 1e-8)
        recomputed = tt_norm(tt_sub(f, tt_matvec(A, res.solution))) / tt_norm(f)
        assert abs(recomputed - res.residual) <= 1e-12

    def test_zero_rhs(self):
        res = amen_solve(TtMatrix.identity((4, 4, 4)), TtTensor.zeros((4, 4, 4)), 1e-8)
        assert res.converged
        assert np.all(res.solution.full() == 0.0)

    def test_nonconvergence_flagged(self):
        rng = np.random.default_rng(34)
        A = laplacian_tt(16)
        f = tt_round(TtTensor.random((16, 16, 16), (3, 3), rng), 1e-14)
        res = amen_solve(A, f, 1e-30, AmenOptions(max_sweeps=1))
        assert not res.converged
        assert res.residual > 0

    def test_cg_local_path(self):
        rng = np.random.default_rng(35)
        A = laplacian_tt(12)
        f = tt_round(TtTensor.random((12, 12, 12), (2, 2), rng), 1e-14)
        res = amen_solve(A, f, 1e-8, AmenOptions(direct_solve_max=16))
        assert res.converged
        ref = np.linalg.solve(A.full(), f.full().ravel())
        err = np.linalg.norm(res.solution.full().ravel() - ref) / np.linalg.norm(ref)
        assert err < 1e-7


class TestSerialization:
    def test_tensor_round_trip(self, tmp_path):
        rng = np.random.default_rng(40)
        t = TtTensor.random((5, 6, 7), (3, 4), rng)
        path = tmp_path / "t.tt"
        save_tt(path, t)
        back = load_tt(path)
        assert isinstance(back, TtTensor)
        assert back.mode_sizes == t.mode_sizes and back.ranks == t.ranks
        for a, b in zip(back.cores, t.cores):
            assert np.array_equal(a, b)

    def test_matrix_round_trip(self, tmp_path):
        rng = np.random.default_rng(41)
        M = TtMatrix(
            [
                rng.standard_normal((1, 3, 4, 2)),
                rng.standard_normal((2, 5, 5, 3)),
                rng.standard_normal((3, 4, 3, 1)),
            ]
        )
        path = tmp_path / "m.tt"
        save_tt(path, M)
        back = load_tt(path)
        assert isinstance(back, TtMatrix)
        assert back.row_sizes == M.row_sizes and back.col_sizes == M.col_sizes
        for a, b in zip(back.cores, M.cores):
            assert np.array_equal(a, b)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.tt"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(ValueError):
            load_tt(path)

    def test_info(self):
        t = TtTensor.ones((8, 8, 8))
        info = tt_info(t)
        assert info["full_entries"] == 512
        assert info["n_params"] == 24
        assert info["compression_ratio"] == 512 / 24
