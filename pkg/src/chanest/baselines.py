"""Benchmark estimators: ML covariance estimation and genie-aided OMP.

The ML route estimates the channel covariance first (either the full
positive-semidefinite projection of the sample covariance or its
circulant restriction, which diagonalizes in the DFT basis and costs
O(M T log M)) and then plugs it into the Wiener filter.  The compressive
route approximates each channel as a sparse combination of steering
vectors from an oversampled DFT dictionary, with the sparsity level
chosen by a genie that sees the true channels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import TransformQ, hermitian_eig


def ml_full(sample_cov, sigma2):
    """Unconstrained ML covariance estimate P_+(S - sigma2 I).

    ``sample_cov`` is the unscaled sample covariance (1/T) sum y y^H; the
    projection P_+ zeroes the negative eigenvalues of the noise-corrected
    matrix.
    """
    s = np.asarray(sample_cov)
    lam, vec = hermitian_eig(s)
    lam = np.clip(lam - sigma2, 0.0, None)
    return (vec * lam) @ vec.conj().T


def ml_circulant_estimate(batch):
    """Wiener estimate through the circulant-constrained ML covariance.

    The periodogram s = (1/T) sum |F y_t|^2 (unitary F, so a pure-noise
    bin has expectation sigma2) is noise-corrected and clipped to get the
    estimated eigenvalues; the filter is diagonal in the DFT basis.
    """
    q = TransformQ.dft(batch.m)
    spectrum = batch.spectral_stat(q) * batch.sigma2 / batch.n_snapshots
    eigs = np.clip(spectrum - batch.sigma2, 0.0, None)
    gains = eigs / (eigs + batch.sigma2)
    return q.sandwich(gains, batch.observations)


def build_dictionary(m, oversampling=4):
    """Oversampled DFT frame of unit-norm steering vectors, m x (ov*m)."""
    if oversampling < 1:
        raise ValueError("oversampling must be >= 1")
    width = oversampling * m
    grid = np.arange(width)
    return np.exp(2j * np.pi * np.outer(np.arange(m), grid) / width) / np.sqrt(m)


@dataclass
class SparseApprox:
    """Support set and least-squares coefficients of a row-sparse fit."""

    support: list
    coefficients: np.ndarray   # (len(support), n_snapshots)
    k: int

    def reconstruct(self, dictionary):
        return dictionary[:, self.support] @ self.coefficients


def omp_mmv(observations, dictionary, k):
    """Simultaneous orthogonal matching pursuit over multiple snapshots.

    Greedy: select the atom with the largest residual correlation energy
    summed over snapshots, refit all coefficients by least squares on the
    enlarged support, update residuals.  The residual norm is checked to
    be nonincreasing at every step.
    """
    y = np.asarray(observations)
    d = np.asarray(dictionary)
    if not 1 <= k <= y.shape[0]:
        raise ValueError("sparsity level must be in [1, m]")
    approx, _ = _omp_path(y, d, k)
    return approx


def _omp_path(y, d, k_max):
    """Run OMP to k_max, returning the final fit and every stage's fit."""
    support = []
    residual = y.copy()
    res_norm = np.linalg.norm(residual)
    floor = 1e-12 * max(res_norm, 1.0)   # roundoff slack once the fit is exact
    stages = []
    for _ in range(k_max):
        scores = np.sum(np.abs(d.conj().T @ residual) ** 2, axis=1)
        scores[support] = -1.0
        support.append(int(np.argmax(scores)))
        coeffs, *_ = np.linalg.lstsq(d[:, support], y, rcond=None)
        residual = y - d[:, support] @ coeffs
        new_norm = np.linalg.norm(residual)
        if new_norm > res_norm * (1 + 1e-10) + floor:
            raise FloatingPointError("residual increased during pursuit")
        res_norm = new_norm
        stages.append(SparseApprox(support=list(support), coefficients=coeffs.copy(),
                                   k=len(support)))
    return stages[-1], stages


def genie_omp_estimate(batch, dictionary, k_max=16, objective=None):
    """Sparse estimate whose sparsity level a genie picks per batch.

    All levels k = 1..k_max reuse one pursuit pass (the greedy selection
    sequence is nested).  ``objective`` maps a candidate estimate to a
    score to minimize; by default the Frobenius error against the true
    channels, which makes the result an upper bound on what any fixed-k
    rule could achieve.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    if objective is None:
        def objective(est):
            return np.linalg.norm(batch.channels - est)
    _, stages = _omp_path(batch.observations, dictionary, k_max)
    best, best_score = None, np.inf
    for approx in stages:
        est = approx.reconstruct(dictionary)
        score = objective(est)
        if score < best_score:
            best, best_score = est, score
    return best
