"""Deterministic complex linear algebra and FFT primitives.

Everything here is pure: functions take immutable inputs and return new
arrays, so values can be shared freely between threads.  Complex matrices
are plain ``numpy`` arrays of dtype complex128 in row-major order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Tolerances are fixed here; tests may monkeypatch but production code
# must not.
HERMITIAN_RTOL = 1e-12   # max|X - X^H| <= HERMITIAN_RTOL * max|X|
CONV_IMAG_RTOL = 1e-10   # imaginary residue allowed after an FFT round trip
EIG_RECON_RTOL = 1e-10   # eigendecomposition reconstruction residual


def dft_matrix(m):
    """Unitary DFT matrix, [F]_{jk} = exp(-2i pi jk / m) / sqrt(m)."""
    if m < 1:
        raise ValueError("dimension must be >= 1")
    idx = np.arange(m)
    return np.exp(-2j * np.pi * np.outer(idx, idx) / m) / np.sqrt(m)


@dataclass(frozen=True)
class TransformQ:
    """Orthonormal-column transform applied with FFT cost.

    ``kind`` is one of ``identity``, ``dft``, ``dft2`` or ``kron_dft``.
    The transform maps C^m -> C^k where k == m for identity/dft and
    kron_dft, and k == 2m for dft2 (zero-padded double-length spectrum,
    the natural basis for Toeplitz filter coefficients).  Columns are
    orthonormal for every kind: Q^H Q = I.
    """

    kind: str
    m: int
    k: int
    dims: tuple = ()   # (m_h, m_v) for kron_dft

    @classmethod
    def identity(cls, m):
        return cls("identity", m, m)

    @classmethod
    def dft(cls, m):
        return cls("dft", m, m)

    @classmethod
    def dft2(cls, m):
        return cls("dft2", m, 2 * m)

    @classmethod
    def kron_dft(cls, m_h, m_v):
        return cls("kron_dft", m_h * m_v, m_h * m_v, (m_h, m_v))

    def forward(self, x):
        """Apply Q to a vector or to each column of a matrix."""
        x = np.asarray(x)
        if x.shape[0] != self.m:
            raise ValueError(f"expected leading dimension {self.m}, got {x.shape[0]}")
        if self.kind == "identity":
            return x.astype(np.complex128, copy=True)
        if self.kind == "dft":
            return np.fft.fft(x, axis=0) / np.sqrt(self.m)
        if self.kind == "dft2":
            return np.fft.fft(x, n=self.k, axis=0) / np.sqrt(self.k)
        if self.kind == "kron_dft":
            m_h, m_v = self.dims
            blocks = x.reshape(m_h, m_v, -1)
            out = np.fft.fft2(blocks, axes=(0, 1)) / np.sqrt(self.m)
            return out.reshape(self.m, -1) if x.ndim > 1 else out.reshape(self.m)
        raise ValueError(f"unknown transform kind {self.kind!r}")

    def adjoint(self, y):
        """Apply Q^H to a vector or to each column of a matrix."""
        y = np.asarray(y)
        if y.shape[0] != self.k:
            raise ValueError(f"expected leading dimension {self.k}, got {y.shape[0]}")
        if self.kind == "identity":
            return y.astype(np.complex128, copy=True)
        if self.kind == "dft":
            return np.fft.ifft(y, axis=0) * np.sqrt(self.m)
        if self.kind == "dft2":
            return (np.fft.ifft(y, axis=0) * np.sqrt(self.k))[: self.m]
        if self.kind == "kron_dft":
            m_h, m_v = self.dims
            blocks = y.reshape(m_h, m_v, -1)
            out = np.fft.ifft2(blocks, axes=(0, 1)) * np.sqrt(self.m)
            return out.reshape(self.m, -1) if y.ndim > 1 else out.reshape(self.m)
        raise ValueError(f"unknown transform kind {self.kind!r}")

    def as_matrix(self):
        """Dense k x m matrix, for oracles and small problems only."""
        return self.forward(np.eye(self.m))

    def sandwich(self, weights, x):
        """Q^H diag(weights) Q x without materializing any m x m matrix."""
        fwd = self.forward(x)
        w = np.asarray(weights)
        return self.adjoint(fwd * (w[:, None] if fwd.ndim > 1 else w))


def apply_transform(q, x, direction="forward"):
    """Matrix-free application of Q (``forward``) or Q^H (``adjoint``)."""
    if direction == "forward":
        return q.forward(x)
    if direction == "adjoint":
        return q.adjoint(x)
    raise ValueError(f"direction must be 'forward' or 'adjoint', got {direction!r}")


def circular_convolution(a, x):
    """Cyclic convolution of two equal-length real vectors via FFT.

    [a * x]_j = sum_k a_k x_{(j-k) mod n}.  The imaginary residue of the
    FFT round trip is asserted small and discarded.
    """
    a = np.asarray(a, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if a.shape != x.shape or a.ndim != 1:
        raise ValueError(f"length mismatch: {a.shape} vs {x.shape}")
    out = np.fft.ifft(np.fft.fft(a) * np.fft.fft(x))
    residue = np.max(np.abs(out.imag))
    scale = np.linalg.norm(x) + np.linalg.norm(a)
    if residue > CONV_IMAG_RTOL * max(scale, 1e-300):
        raise FloatingPointError(f"imaginary residue {residue:.3e} exceeds tolerance")
    return out.real


def is_hermitian(x, rtol=HERMITIAN_RTOL):
    x = np.asarray(x)
    scale = max(np.max(np.abs(x)), 1e-300)
    return np.max(np.abs(x - x.conj().T)) <= rtol * scale


def hermitian_eig(x):
    """Eigendecomposition of a Hermitian matrix.

    Returns (eigenvalues ascending, eigenvectors as columns) such that
    X = V diag(lam) V^H.  Raises on non-Hermitian input.
    """
    x = np.asarray(x, dtype=np.complex128)
    if not is_hermitian(x):
        raise ValueError("matrix is not Hermitian within tolerance")
    lam, vec = np.linalg.eigh(x)
    return lam, vec
