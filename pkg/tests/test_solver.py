import types

import numpy as np
import pytest
import scipy.ndimage
from support import best_subset_support

from rotprox import (
    BlurDownsample,
    Identity,
    PlanarImage,
    SoftThreshold,
    SolverDivergence,
    TVProx,
    UnfoldingConfig,
    degrade,
    estimate_lipschitz,
    gaussian_kernel,
    ista_solve,
    ista_step,
    psnr,
    rotate_image,
)
from rotprox.synthetic import synthetic_image


class TestOperators:
    def test_adjoint_inner_products(self):
        rng = np.random.default_rng(31)
        ops = [Identity()]
        for s in (1, 2, 3):
            ops.append(BlurDownsample(gaussian_kernel(5, 1.0), s))
            ops.append(BlurDownsample(rng.standard_normal((5, 5)), s))
        for op in ops:
            x = PlanarImage(rng.standard_normal((12, 12, 2)))
            ax = op.apply(x)
            y = PlanarImage(rng.standard_normal(ax.data.shape), mesh=ax.mesh)
            lhs = float(np.sum(ax.data * y.data))
            rhs = float(np.sum(x.data * op.adjoint(y).data))
            assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))

    def test_downsample_keeps_upper_left(self):
        rng = np.random.default_rng(32)
        plane = rng.standard_normal((12, 12))
        kernel = rng.standard_normal((5, 5))
        for s in (2, 3):
            got = BlurDownsample(kernel, s).apply(PlanarImage(plane[:, :, None]))
            want = scipy.ndimage.correlate(plane, kernel, mode="constant", cval=0.0)[::s, ::s]
            assert np.max(np.abs(got.data[:, :, 0] - want)) <= 1e-12

    def test_delta_kernel_identity(self):
        delta = np.zeros((3, 3))
        delta[1, 1] = 1.0
        x = synthetic_image(16, 14)
        y = degrade(BlurDownsample(delta, 1), x, 0.0, seed=0)
        np.testing.assert_array_equal(y.data, x.data)

    def test_mesh_bookkeeping(self):
        op = BlurDownsample(gaussian_kernel(3, 0.8), 2)
        x = PlanarImage(np.zeros((8, 8, 1)), mesh=0.25)
        coarse = op.apply(x)
        assert coarse.mesh == 0.5
        assert op.adjoint(coarse).mesh == 0.25
        assert op.domain_shape(coarse) == (8, 8, 1)

    def test_kernel_and_scale_validation(self):
        with pytest.raises(ValueError, match="odd"):
            BlurDownsample(np.ones((4, 4)), 2)
        with pytest.raises(ValueError, match="square"):
            BlurDownsample(np.ones((3, 5)), 2)
        with pytest.raises(ValueError, match="scale"):
            BlurDownsample(np.ones((3, 3)), 0)
        op = BlurDownsample(np.ones((3, 3)), 3)
        with pytest.raises(ValueError, match="divide"):
            op.apply(PlanarImage(np.zeros((10, 10, 1))))

    def test_degrade_seeded(self):
        x = synthetic_image(8, 15)
        a = degrade(Identity(), x, 0.1, seed=7)
        b = degrade(Identity(), x, 0.1, seed=7)
        c = degrade(Identity(), x, 0.1, seed=8)
        np.testing.assert_array_equal(a.data, b.data)
        assert np.any(a.data != c.data)
        with pytest.raises(ValueError, match=">= 0"):
            degrade(Identity(), x, -0.1, seed=0)
        assert degrade(Identity(), x, 0.0, seed=0) is x


class TestLipschitz:
    def test_identity_is_one(self):
        lip = estimate_lipschitz(Identity(), PlanarImage(np.zeros((8, 8, 1))))
        assert abs(lip - 1.0) <= 1e-12

    def test_matches_dense_singular_value(self):
        # build the operator matrix column by column, compare sigma_max^2
        op = BlurDownsample(gaussian_kernel(3, 0.8), 2)
        cols = []
        for i in range(8):
            for j in range(8):
                e = np.zeros((8, 8, 1))
                e[i, j, 0] = 1.0
                cols.append(op.apply(PlanarImage(e)).data.ravel())
        sigma_sq = np.linalg.svd(np.array(cols).T, compute_uv=False).max() ** 2
        y = op.apply(PlanarImage(np.zeros((8, 8, 1))))
        assert abs(estimate_lipschitz(op, y) - sigma_sq) <= 1e-5 * sigma_sq


class TestIstaSolve:
    def test_objective_monotone_soft_threshold(self):
        x_true = synthetic_image(16, 13)
        op = BlurDownsample(gaussian_kernel(5, 1.0), 2)
        y = degrade(op, x_true, 0.05, seed=30)
        cfg = UnfoldingConfig(100, None, SoftThreshold(0.02), record_objective=True)
        _, trace = ista_solve(y, op, cfg)
        assert len(trace) == 101
        assert all(b <= a + 1e-12 for a, b in zip(trace, trace[1:]))
        assert trace[-1] < trace[0]

    def test_objective_monotone_tv(self):
        x_true = synthetic_image(16, 13)
        op = BlurDownsample(gaussian_kernel(5, 1.0), 2)
        y = degrade(op, x_true, 0.05, seed=30)
        prox = TVProx(0.02, tol=1e-10, max_iter=2000)
        _, trace = ista_solve(y, op, UnfoldingConfig(40, None, prox, record_objective=True))
        assert all(b <= a + 1e-9 for a, b in zip(trace, trace[1:]))

    def test_sparse_support_matches_exhaustive_search(self):
        op = Identity()
        for seed in range(5):
            rng = np.random.default_rng(100 + seed)
            idx = rng.choice(64, size=3, replace=False)
            data = np.zeros(64)
            data[idx] = rng.uniform(0.5, 1.0, 3) * rng.choice([-1.0, 1.0], 3)
            x_true = PlanarImage(data.reshape(8, 8, 1))
            y = degrade(op, x_true, 0.01, seed=200 + seed)
            sol, _ = ista_solve(y, op, UnfoldingConfig(5, 1.0, SoftThreshold(0.2)))
            support = frozenset(np.flatnonzero(sol.data.ravel()).tolist())
            assert support == best_subset_support(y.data, 3)

    def test_identity_fixed_point(self):
        rng = np.random.default_rng(33)
        y = PlanarImage(rng.standard_normal((8, 8, 1)))
        cfg = UnfoldingConfig(5, 1.0, SoftThreshold(0.2))
        sol, _ = ista_solve(y, Identity(), cfg)
        again = ista_step(sol, y, Identity(), cfg)
        np.testing.assert_array_equal(again.data, sol.data)

    def test_zero_steps_returns_adjoint(self):
        rng = np.random.default_rng(34)
        y = PlanarImage(rng.standard_normal((8, 8, 1)))
        sol, trace = ista_solve(y, Identity(), UnfoldingConfig(0, None, SoftThreshold(0.1)))
        assert sol is y
        assert trace == []
        _, trace = ista_solve(
            y, Identity(), UnfoldingConfig(0, None, SoftThreshold(0.1), record_objective=True)
        )
        assert len(trace) == 1

    def test_oversized_step_rejected(self):
        y = PlanarImage(np.ones((8, 8, 1)))
        with pytest.raises(ValueError, match="exceeds"):
            ista_solve(y, Identity(), UnfoldingConfig(3, 2.0, SoftThreshold(0.1)))

    def test_config_validation(self):
        with pytest.raises(ValueError, match="steps"):
            UnfoldingConfig(-1, None, SoftThreshold(0.1))
        with pytest.raises(ValueError, match="step_size"):
            UnfoldingConfig(3, 0.0, SoftThreshold(0.1))
        with pytest.raises(ValueError, match="resolved"):
            ista_step(
                PlanarImage(np.ones((4, 4, 1))),
                PlanarImage(np.ones((4, 4, 1))),
                Identity(),
                UnfoldingConfig(3, None, SoftThreshold(0.1)),
            )

    def test_divergent_prox_detected(self):
        calls = {"n": 0}

        def bad_prox(img):
            calls["n"] += 1
            if calls["n"] >= 3:
                return types.SimpleNamespace(data=np.full_like(img.data, np.nan), mesh=img.mesh)
            return img

        y = PlanarImage(np.ones((4, 4, 1)))
        with pytest.raises(SolverDivergence) as err:
            ista_solve(y, Identity(), UnfoldingConfig(10, 0.5, bad_prox))
        assert err.value.step == 3

    def test_quarter_turn_covariance(self):
        # identity operator + pointwise prox: the whole solve commutes exactly
        x_true = synthetic_image(16, 16)
        y = degrade(Identity(), x_true, 0.1, seed=35)
        cfg = UnfoldingConfig(5, 1.0, SoftThreshold(0.05))
        direct, _ = ista_solve(rotate_image(y, np.pi / 2), Identity(), cfg)
        rotated, _ = ista_solve(y, Identity(), cfg)
        np.testing.assert_array_equal(direct.data, rotate_image(rotated, np.pi / 2).data)


class TestUtilities:
    def test_gaussian_kernel_shape(self):
        k = gaussian_kernel(5, 1.3)
        assert abs(k.sum() - 1.0) <= 1e-14
        np.testing.assert_array_equal(k, k.T)
        np.testing.assert_array_equal(k, k[::-1, ::-1])
        assert k[2, 2] == k.max()
        np.testing.assert_array_equal(gaussian_kernel(1, 2.0), [[1.0]])

    def test_gaussian_kernel_validation(self):
        with pytest.raises(ValueError, match="odd"):
            gaussian_kernel(4, 1.0)
        with pytest.raises(ValueError, match="sigma"):
            gaussian_kernel(3, 0.0)

    def test_psnr_values(self):
        ref = PlanarImage(np.zeros((4, 4, 1)))
        same = PlanarImage(np.zeros((4, 4, 1)))
        off = PlanarImage(np.full((4, 4, 1), 0.1))
        assert psnr(same, ref) == np.inf
        np.testing.assert_allclose(psnr(off, ref), 20.0, rtol=1e-12)
        with pytest.raises(ValueError, match="mismatch"):
            psnr(PlanarImage(np.zeros((4, 5, 1))), ref)
