"""Oracles and invariants for the transform/convolution/eigen primitives."""

import time

import numpy as np
import pytest

from chanest.numerics import (TransformQ, apply_transform, circular_convolution,
                              dft_matrix, hermitian_eig, is_hermitian)


class TestDftMatrix:
    def test_one_point(self):
        assert np.allclose(dft_matrix(1), [[1.0]])

    def test_two_point(self):
        expected = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
        assert np.max(np.abs(dft_matrix(2) - expected)) < 1e-15

    def test_unitary_m8(self):
        f = dft_matrix(8)
        assert np.max(np.abs(f @ f.conj().T - np.eye(8))) < 1e-14

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            dft_matrix(0)


def _all_kinds(m=8):
    return [TransformQ.identity(m), TransformQ.dft(m), TransformQ.dft2(m),
            TransformQ.kron_dft(2, m // 2)]


class TestApplyTransform:
    def test_identity_passthrough(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(6) + 1j * rng.standard_normal(6)
        out = apply_transform(TransformQ.identity(6), x)
        assert np.array_equal(out, x)

    def test_dft_roundtrip(self):
        rng = np.random.default_rng(1)
        q = TransformQ.dft(16)
        x = rng.standard_normal(16) + 1j * rng.standard_normal(16)
        back = apply_transform(q, apply_transform(q, x), direction="adjoint")
        assert np.max(np.abs(back - x)) < 1e-12

    def test_dft2_matches_dense(self):
        rng = np.random.default_rng(2)
        q = TransformQ.dft2(4)
        dense = q.as_matrix()
        assert dense.shape == (8, 4)
        x = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        assert np.max(np.abs(q.forward(x) - dense @ x)) < 1e-12
        y = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        assert np.max(np.abs(q.adjoint(y) - dense.conj().T @ y)) < 1e-12

    def test_kron_matches_explicit_kron(self):
        q = TransformQ.kron_dft(3, 4)
        dense = np.kron(dft_matrix(3), dft_matrix(4))
        assert np.max(np.abs(q.as_matrix() - dense)) < 1e-12

    def test_orthonormal_columns_all_kinds(self):
        for q in _all_kinds():
            mat = q.as_matrix()
            assert np.max(np.abs(mat.conj().T @ mat - np.eye(q.m))) < 1e-12, q.kind

    def test_matrix_input_applies_columnwise(self):
        rng = np.random.default_rng(3)
        for q in _all_kinds():
            x = rng.standard_normal((q.m, 3)) + 1j * rng.standard_normal((q.m, 3))
            dense = q.as_matrix()
            assert np.max(np.abs(q.forward(x) - dense @ x)) < 1e-12

    def test_dft_isometry(self):
        rng = np.random.default_rng(4)
        q = TransformQ.dft(32)
        for _ in range(20):
            x = rng.standard_normal(32) + 1j * rng.standard_normal(32)
            assert abs(np.linalg.norm(q.forward(x)) - np.linalg.norm(x)) < 1e-12

    def test_dimension_mismatch(self):
        q = TransformQ.dft(8)
        with pytest.raises(ValueError):
            q.forward(np.zeros(7))
        with pytest.raises(ValueError):
            apply_transform(q, np.zeros(8), direction="sideways")

    def test_subquadratic_scaling(self):
        """Wall time at K=2^16 stays far below 50x the K=2^12 time."""
        rng = np.random.default_rng(5)
        times = {}
        for k in (2**12, 2**16):
            q = TransformQ.dft(k)
            x = rng.standard_normal(k) + 1j * rng.standard_normal(k)
            q.forward(x)   # warm-up
            best = np.inf
            for _ in range(5):
                t0 = time.perf_counter()
                for _ in range(20):
                    q.forward(x)
                best = min(best, time.perf_counter() - t0)
            times[k] = best
        assert times[2**16] < 50 * times[2**12]


class TestCircularConvolution:
    def test_identity_kernel(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal(12)
        e1 = np.zeros(12)
        e1[0] = 1.0
        assert np.max(np.abs(circular_convolution(e1, x) - x)) < 1e-12

    def test_shift_kernel(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal(9)
        e2 = np.zeros(9)
        e2[1] = 1.0
        assert np.max(np.abs(circular_convolution(e2, x) - np.roll(x, 1))) < 1e-12

    def test_matches_direct_sum_k16(self):
        rng = np.random.default_rng(8)
        a, x = rng.standard_normal(16), rng.standard_normal(16)
        direct = np.array([sum(a[k] * x[(j - k) % 16] for k in range(16))
                           for j in range(16)])
        assert np.max(np.abs(circular_convolution(a, x) - direct)) < 1e-12

    @pytest.mark.parametrize("k", [4, 8, 16, 64])
    def test_direct_sum_property(self, k):
        """FFT path equals the O(K^2) direct sum on 100 random pairs."""
        rng = np.random.default_rng(100 + k)
        shift = np.arange(k)[:, None] - np.arange(k)[None, :]
        for _ in range(100):
            a, x = rng.standard_normal(k), rng.standard_normal(k)
            direct = (a[shift % k] * x[None, :]).sum(axis=1)
            scale = max(np.max(np.abs(direct)), 1.0)
            assert np.max(np.abs(circular_convolution(a, x) - direct)) < 1e-12 * scale

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            circular_convolution(np.zeros(4), np.zeros(5))


class TestHermitianEig:
    def test_identity(self):
        lam, _ = hermitian_eig(np.eye(4))
        assert np.allclose(lam, 1.0)

    def test_diagonal_matrix(self):
        lam, vec = hermitian_eig(np.diag([3.0, 1.0]))
        assert np.allclose(lam, [1.0, 3.0])
        # axis eigenvectors up to phase
        assert abs(abs(vec[1, 0]) - 1.0) < 1e-12
        assert abs(abs(vec[0, 1]) - 1.0) < 1e-12

    def test_reconstruction_random(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
        x = 0.5 * (x + x.conj().T)
        lam, vec = hermitian_eig(x)
        recon = (vec * lam) @ vec.conj().T
        assert np.max(np.abs(recon - x)) < 1e-10 * max(np.max(np.abs(lam)), 1.0)
        assert np.all(np.diff(lam) >= 0)
        assert np.max(np.abs(vec.conj().T @ vec - np.eye(6))) < 1e-12

    def test_rejects_non_hermitian(self):
        x = np.arange(9.0).reshape(3, 3)
        assert not is_hermitian(x)
        with pytest.raises(ValueError):
            hermitian_eig(x)

    def test_noise_shift_keeps_floor(self):
        """Eigenvalues of C + sigma2 I stay above sigma2 for PSD C."""
        rng = np.random.default_rng(10)
        for _ in range(10):
            a = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
            c = a @ a.conj().T
            sigma2 = rng.uniform(0.1, 2.0)
            lam, _ = hermitian_eig(c + sigma2 * np.eye(5))
            assert lam.min() >= sigma2 - 1e-10
