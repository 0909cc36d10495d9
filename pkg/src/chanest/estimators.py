"""MMSE channel estimators: genie, gridded, structured, and fast variants.

The gridded estimator mixes a bank of candidate Wiener filters with
posterior softmax weights computed from the scaled sample covariance.
Replacing every candidate filter with Q^H diag(w) Q collapses the mixing
into the transform domain (structured estimator), and a shift-invariant
coefficient bank collapses it further into two circular convolutions
(fast estimator, O(M log M) per estimate).
"""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import channel
from .numerics import TransformQ, circular_convolution

log = logging.getLogger(__name__)

RIDGE = 1e-12          # Tikhonov term for rank-deficient fitting Grams
GRAM_SINGULAR_RTOL = 1e-10


def stable_softmax(logits):
    """Softmax with max subtraction; exact for a single logit."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


def _eigenpairs(cov):
    if hasattr(cov, "eig"):
        return cov.eig()
    from .numerics import hermitian_eig

    return hermitian_eig(np.asarray(cov))


def genie_filter(cov, sigma2):
    """Wiener filter C (C + sigma2 I)^{-1} for a known covariance.

    Computed in the shared eigenbasis, W = V diag(lam/(lam+sigma2)) V^H,
    which keeps the result exactly self-adjoint with gains in [0, 1).
    """
    if sigma2 <= 0:
        raise ValueError("noise variance must be positive")
    lam, vec = _eigenpairs(cov)
    lam = np.clip(lam, 0.0, None)
    gains = lam / (lam + sigma2)
    return (vec * gains) @ vec.conj().T


def filter_offset(cov, sigma2, n_snapshots):
    """Log-volume offset T log|I - W| of a Wiener filter, computed stably.

    Equals T * sum_m [log sigma2 - log(lam_m + sigma2)] over covariance
    eigenvalues; the log1p form avoids cancellation at high SNR.
    """
    if sigma2 <= 0:
        raise ValueError("noise variance must be positive")
    lam, _ = _eigenpairs(cov)
    lam = np.clip(lam, 0.0, None)
    return -n_snapshots * float(np.sum(np.log1p(lam / sigma2)))


@dataclass
class FilterBank:
    """Bank of candidate filters with their posterior log-offsets.

    Dense banks store the full filters (n, m, m); structured banks store
    the fitted coefficient columns (k, n) for a shared transform.  The
    snapshot count and noise variance are pinned because the offsets
    depend on both.
    """

    offsets: np.ndarray
    n_snapshots: int
    sigma2: float
    m: int
    dense_filters: np.ndarray | None = None
    q: TransformQ | None = None
    weight_vectors: np.ndarray | None = None

    @property
    def size(self):
        return self.offsets.shape[0]

    def check_batch(self, batch):
        if batch.n_snapshots != self.n_snapshots:
            raise ValueError(
                f"bank built for T={self.n_snapshots}, batch has T={batch.n_snapshots}")
        if not np.isclose(batch.sigma2, self.sigma2, rtol=1e-12):
            raise ValueError(
                f"bank built for sigma2={self.sigma2}, batch has {batch.sigma2}")


@functools.lru_cache(maxsize=8)
def _fit_context(q):
    """Dense transform matrix and a solver for the fitting normal equations."""
    qmat = q.as_matrix()
    if q.k == q.m:
        return qmat, None   # orthonormal square transform: Gram is identity
    gram = np.abs(qmat @ qmat.conj().T) ** 2
    eigs = np.linalg.eigvalsh(gram)
    if eigs[0] < GRAM_SINGULAR_RTOL * eigs[-1]:
        log.info("fit Gram for %s transform is rank deficient; using %g ridge",
                 q.kind, RIDGE)
        gram = gram + RIDGE * np.eye(q.k)
    return qmat, cho_factor(gram)


def fit_structured_weights(dense_filter, q):
    """Least-squares coefficients w minimizing ||W - Q^H diag(w) Q||_F.

    Solved in closed form via the normal equations G w = v with
    G_jk = |[Q Q^H]_jk|^2 and v_j = Re [Q W Q^H]_jj.  For an orthonormal
    square transform this reduces to w = Re diag(Q W Q^H); redundant
    transform rows (k > m) make G singular and a small ridge is applied.
    """
    qmat, factor = _fit_context(q)
    v = np.einsum("km,mk->k", qmat, dense_filter @ qmat.conj().T).real
    if factor is None:
        return v
    return cho_solve(factor, v)


def dense_from_weights(weights, q):
    """Materialize Q^H diag(w) Q (for oracles and bank construction)."""
    qmat = q.as_matrix()
    return qmat.conj().T @ (np.asarray(weights)[:, None] * qmat)


def build_filter_bank(prior, n_filters, m, n_snapshots, sigma2, rng,
                      transform=None, quadrature_points=channel.DEFAULT_QUAD_POINTS):
    """Draw filter-bank parameters from the prior and build the bank.

    Parameter samples are random draws from the (continuous) prior; each
    yields a synthesized covariance, its Wiener filter and log offset.
    With ``transform`` given, coefficient vectors are fitted and the dense
    filters are dropped.
    """
    if n_filters < 1:
        raise ValueError("need at least one filter")
    spectra = [prior.sample(rng) for _ in range(n_filters)]
    models = channel.covariance_ula_many(spectra, m, quadrature_points)
    stacked = np.stack([mo.matrix for mo in models])
    lams, vecs = np.linalg.eigh(stacked)
    lams = np.clip(lams, 0.0, None)

    offsets = -n_snapshots * np.sum(np.log1p(lams / sigma2), axis=1)
    gains = lams / (lams + sigma2)
    if transform is None:
        filters = np.einsum("nik,nk,njk->nij", vecs, gains, vecs.conj())
        return FilterBank(offsets=offsets, n_snapshots=n_snapshots, sigma2=sigma2,
                          m=m, dense_filters=filters)
    weights = np.empty((transform.k, n_filters))
    for i in range(n_filters):
        w_dense = (vecs[i] * gains[i]) @ vecs[i].conj().T
        weights[:, i] = fit_structured_weights(w_dense, transform)
    return FilterBank(offsets=offsets, n_snapshots=n_snapshots, sigma2=sigma2,
                      m=m, q=transform, weight_vectors=weights)


def structured_bank_from_dense(bank, q):
    """Fit coefficient vectors for every dense filter of an existing bank."""
    if bank.dense_filters is None:
        raise ValueError("source bank has no dense filters")
    weights = np.empty((q.k, bank.size))
    for i in range(bank.size):
        weights[:, i] = fit_structured_weights(bank.dense_filters[i], q)
    return FilterBank(offsets=bank.offsets.copy(), n_snapshots=bank.n_snapshots,
                      sigma2=bank.sigma2, m=bank.m, q=q, weight_vectors=weights)


def gridded_estimate(bank, batch):
    """Posterior-weighted mixture of dense candidate filters applied to Y."""
    if bank.dense_filters is None:
        raise ValueError("gridded estimation needs a dense bank")
    bank.check_batch(batch)
    stat = batch.scaled_sample_cov
    logits = np.einsum("nij,ji->n", bank.dense_filters, stat).real + bank.offsets
    if not np.all(np.isfinite(logits)):
        raise FloatingPointError("non-finite filter score; corrupt input statistic")
    weights = stable_softmax(logits)
    mixed = np.tensordot(weights, bank.dense_filters, axes=1)
    return mixed @ batch.observations


def structured_estimate(bank, batch):
    """Transform-domain mixture; never materializes an m x m matrix."""
    if bank.weight_vectors is None:
        raise ValueError("structured estimation needs fitted coefficient vectors")
    bank.check_batch(batch)
    stat = batch.spectral_stat(bank.q)
    if stat.shape[0] != bank.q.k:
        raise ValueError("spectral statistic dimension does not match transform")
    logits = bank.weight_vectors.T @ stat + bank.offsets
    if not np.all(np.isfinite(logits)):
        raise FloatingPointError("non-finite filter score; corrupt input statistic")
    weights = stable_softmax(logits)
    gains = bank.weight_vectors @ weights
    return bank.q.sandwich(gains, batch.observations)


def reverse_kernel(w):
    """Index-reversed copy on the circle: out[j] = w[(-j) mod k]."""
    return np.roll(np.asarray(w)[::-1], 1)


@dataclass
class FeKernel:
    """Shift-invariant coefficient bank collapsed into one kernel.

    ``w0`` is the generating Wiener gain sampled on the DFT grid;
    ``w0_reversed`` its circular reversal; ``b`` the (constant) log
    offsets.  Estimation costs two length-k circular convolutions plus
    the DFT sandwich.
    """

    w0: np.ndarray
    w0_reversed: np.ndarray
    b: np.ndarray
    q: TransformQ
    n_snapshots: int
    sigma2: float

    def check_batch(self, batch):
        if batch.n_snapshots != self.n_snapshots:
            raise ValueError(
                f"kernel built for T={self.n_snapshots}, batch has T={batch.n_snapshots}")
        if not np.isclose(batch.sigma2, self.sigma2, rtol=1e-12):
            raise ValueError(
                f"kernel built for sigma2={self.sigma2}, batch has {batch.sigma2}")


def build_fe_kernel(sigma_as, m, n_snapshots, sigma2, power=1.0):
    """Fast-estimator kernel for the single-path Laplace model.

    The kernel holds the continuous Wiener gain f/(f + sigma2) of the
    zero-centered path sampled on the DFT grid; offsets come from the
    circulant covariance surrogate and are shift invariant, hence equal.
    """
    spec = channel.AngularSpectrum(paths=((0.0, 1.0),), sigma_as=sigma_as, power=power)
    f = channel.spectrum_on_dft_grid(spec, m)
    w0 = f / (f + sigma2)
    offset = -n_snapshots * float(np.sum(np.log1p(f / sigma2)))
    b = np.full(m, offset)
    return FeKernel(w0=w0, w0_reversed=reverse_kernel(w0), b=b,
                    q=TransformQ.dft(m), n_snapshots=n_snapshots, sigma2=sigma2)


def fast_estimate(kernel, batch):
    """Two circular convolutions plus an FFT sandwich; O(MT log M) total."""
    kernel.check_batch(batch)
    stat = batch.spectral_stat(kernel.q)
    weights = stable_softmax(circular_convolution(kernel.w0_reversed, stat) + kernel.b)
    gains = circular_convolution(kernel.w0, weights)
    return kernel.q.sandwich(gains, batch.observations)
