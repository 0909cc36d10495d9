"""Conditionally Gaussian channel simulator.

Channels are zero-mean complex Gaussian given an angular power spectrum;
the spectrum itself is random (path angles, gains, and for the placed-user
scenario the path loss).  Covariance matrices are synthesized from the
spectrum by quadrature: Toeplitz for a uniform linear array, nested
block-Toeplitz for a rectangular array, plus the circulant approximation
whose eigenbasis is the DFT.

Power normalization: every per-path density integrates to one over a
period, path gains sum to one, and the covariance trace is pinned to
M * power (power defaults to 1).  With unit power the per-antenna channel
energy is 1, so SNR = 1/sigma^2 and a zero estimate has normalized MSE 1.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import toeplitz
from scipy.special import jv

from .numerics import hermitian_eig

DEFAULT_QUAD_POINTS = 16384    # composite midpoint; avoids both endpoint
                               # singularities of the transformed spectrum
                               # and the density kink at the path center
TRACE_TOL = 1e-6


def wrap_angle(theta):
    """Map angles into [-pi, pi)."""
    return np.mod(np.asarray(theta) + np.pi, 2 * np.pi) - np.pi


def laplace_density(theta, delta, sigma_as):
    """Laplace angular power density, normalized over one period.

    Distance is the wrap-around distance on [-pi, pi); the normalizer is
    2 sigma_as (1 - exp(-pi/sigma_as)).
    """
    if sigma_as <= 0:
        raise ValueError("angular spread must be positive")
    dist = np.abs(wrap_angle(np.asarray(theta) - delta))
    z = 2.0 * sigma_as * (1.0 - np.exp(-np.pi / sigma_as))
    return np.exp(-dist / sigma_as) / z


@dataclass(frozen=True)
class AngularSpectrum:
    """Mixture of Laplace paths describing the angular power density.

    ``paths`` holds (center, gain) pairs; centers are azimuth radians for
    ULA geometry and (azimuth, elevation) pairs for URA geometry.  Gains
    must sum to one.  ``power`` scales the total channel energy (trace of
    the covariance becomes M * power); it absorbs path loss in the
    placed-user scenario.
    """

    paths: tuple
    sigma_as: float
    geometry: str = "ula"
    power: float = 1.0

    def __post_init__(self):
        gains = np.array([g for _, g in self.paths], dtype=float)
        if abs(gains.sum() - 1.0) > 1e-12:
            raise ValueError(f"path gains must sum to 1, got {gains.sum()!r}")
        if self.sigma_as <= 0:
            raise ValueError("angular spread must be positive")

    def density(self, theta):
        """Azimuth power density g(theta); integrates to 1 over a period."""
        theta = np.asarray(theta, dtype=float)
        out = np.zeros_like(theta, dtype=float)
        for center, gain in self.paths:
            az = center[0] if self.geometry == "ura" else center
            out += gain * laplace_density(theta, az, self.sigma_as)
        return out

    def density_2d(self, theta, phi):
        """Separable azimuth x elevation density for URA geometry.

        The elevation factor is an unnormalized Laplace on [-pi/2, pi/2];
        total power is fixed later by the covariance trace constraint.
        """
        if self.geometry != "ura":
            raise ValueError("2-D density requires ura geometry")
        theta = np.asarray(theta, dtype=float)
        phi = np.asarray(phi, dtype=float)
        out = np.zeros(np.broadcast(theta, phi).shape, dtype=float)
        for (az, el), gain in self.paths:
            g_az = laplace_density(theta, az, self.sigma_as)
            g_el = np.exp(-np.abs(phi - el) / self.sigma_as)
            out = out + gain * g_az * g_el
        return out


def transformed_spectrum(u, spectrum):
    """Density of the covariance eigenvalue variable u = pi sin(theta).

    f(u) = 2 pi [g(arcsin(u/pi)) + g(pi - arcsin(u/pi))] / sqrt(pi^2 - u^2)
    for |u| < pi; the endpoints are integrable singularities and raise.
    (1/2pi) * integral of f over [-pi, pi) equals the total power 1.
    """
    u = np.asarray(u, dtype=float)
    if np.any(np.abs(u) >= np.pi):
        raise ValueError("transformed spectrum is singular at |u| = pi")
    theta = np.arcsin(u / np.pi)
    num = spectrum.density(theta) + spectrum.density(np.pi - theta)
    return 2.0 * np.pi * num / np.sqrt(np.pi**2 - u**2)


@dataclass
class CovarianceModel:
    """Synthesized channel covariance with a cached eigendecomposition."""

    matrix: np.ndarray
    m: int
    spectrum: AngularSpectrum | None = None
    first_column: np.ndarray | None = None
    _eig: tuple | None = field(default=None, repr=False, compare=False)

    def eig(self):
        """Ascending eigenvalues and unitary eigenvector matrix."""
        if self._eig is None:
            self._eig = hermitian_eig(self.matrix)
        return self._eig


@functools.lru_cache(maxsize=16)
def _ula_quadrature(m, n_points):
    """Midpoint grid over [-pi, pi) and steering phase table E[k, q]."""
    step = 2 * np.pi / n_points
    theta = -np.pi + (np.arange(n_points) + 0.5) * step
    phases = np.exp(1j * np.pi * np.outer(np.arange(m), np.sin(theta)))
    return theta, phases, step


def _series_order(m):
    # Bessel J_n(pi k) is superexponentially small beyond the turning
    # point n ~ pi k; the cushion covers the Airy transition region.
    z = np.pi * max(m - 1, 1)
    return int(z + 12 * z ** (1 / 3) + 24)


@functools.lru_cache(maxsize=16)
def _bessel_table(m, order):
    return jv(np.arange(order + 1)[:, None], np.pi * np.arange(m)[None, :])


def laplace_fourier_coeffs(spectrum, order):
    """G_n = integral g(theta) exp(i n theta) dtheta for a Laplace mixture.

    Closed form: the wrapped Laplace has coefficients
    (2/sigma) (1 - (-1)^n e^{-pi/sigma}) / (1/sigma^2 + n^2) / Z
    shifted by e^{i n delta} per path.
    """
    sig = spectrum.sigma_as
    n = np.arange(order + 1)
    z = 2.0 * sig * (1.0 - np.exp(-np.pi / sig))
    a = (2.0 / sig) * (1.0 - (-1.0) ** n * np.exp(-np.pi / sig)) / (1.0 / sig**2 + n**2)
    g = np.zeros(order + 1, dtype=np.complex128)
    for center, gain in spectrum.paths:
        az = center[0] if spectrum.geometry == "ura" else center
        g += gain * np.exp(1j * n * az)
    return g * a / z


def _series_first_columns(spectra, m, order=None):
    """Exact steering-moment evaluation via the cylindrical-wave expansion.

    exp(i pi k sin theta) = sum_n J_n(pi k) exp(i n theta) turns the
    synthesis integral into a Bessel-weighted sum of the closed-form
    mixture Fourier coefficients; truncation error is below roundoff.
    """
    order = _series_order(m) if order is None else order
    table = _bessel_table(m, order)
    n = np.arange(order + 1)
    parity = np.where(n % 2 == 0, 2.0, 0.0)
    parity_odd = np.where(n % 2 == 1, 2.0, 0.0)
    parity[0] = 1.0
    cols = np.empty((m, len(spectra)), dtype=np.complex128)
    for i, spec in enumerate(spectra):
        coeff = laplace_fourier_coeffs(spec, order)
        # G_n + (-1)^n conj(G_n): doubles the real part for even n and the
        # imaginary part for odd n
        folded = parity * coeff.real + 1j * parity_odd * coeff.imag
        cols[:, i] = folded @ table
    return cols


def _midpoint_first_columns(spectra, m, n_points):
    if n_points < 256:
        raise ValueError("quadrature_points must be >= 256")
    theta, phases, step = _ula_quadrature(m, n_points)
    dens = np.stack([s.density(theta) for s in spectra], axis=1)
    return (phases @ dens) * step


def covariance_ula(spectrum, m, quadrature_points=DEFAULT_QUAD_POINTS, method="auto"):
    """Hermitian Toeplitz covariance of a half-wavelength ULA.

    First column c_k = integral g(theta) exp(i pi k sin theta) dtheta,
    trace-normalized to m * spectrum.power.  Laplace mixtures are
    evaluated by the exact series expansion; other densities (and
    ``method="midpoint"``) use composite midpoint quadrature.
    """
    return covariance_ula_many([spectrum], m, quadrature_points, method)[0]


def covariance_ula_many(spectra, m, quadrature_points=DEFAULT_QUAD_POINTS,
                        method="auto"):
    """Synthesize several ULA covariances sharing cached phase tables."""
    if method not in ("auto", "series", "midpoint"):
        raise ValueError(f"unknown synthesis method {method!r}")
    analytic = all(isinstance(s, AngularSpectrum) for s in spectra)
    if method == "series" and not analytic:
        raise ValueError("series synthesis needs Laplace-mixture spectra")
    if method == "midpoint" or not analytic:
        cols = _midpoint_first_columns(spectra, m, quadrature_points)
    else:
        cols = _series_first_columns(spectra, m)
    models = []
    for i, spec in enumerate(spectra):
        power = getattr(spec, "power", 1.0)
        col = cols[:, i] / cols[0, i].real * power
        mat = toeplitz(col)   # scipy fills the first row with conj(col)
        models.append(CovarianceModel(matrix=mat, m=m, spectrum=spec, first_column=col))
    return models


# Inset used when a sampling grid lands exactly on the singular endpoints
# u = +-pi of the transformed spectrum.
_ENDPOINT_INSET = 1e-9


def spectrum_on_dft_grid(spectrum, m):
    """Transformed spectrum sampled at u_k = 2 pi k / m wrapped to [-pi, pi)."""
    u = wrap_angle(2 * np.pi * np.arange(m) / m)
    u = np.clip(u, -np.pi * (1 - _ENDPOINT_INSET), np.pi * (1 - _ENDPOINT_INSET))
    return transformed_spectrum(u, spectrum) * spectrum.power


def circulant_approx(model, spectrum=None):
    """Circulant surrogate with eigenvalues f(2 pi k / m) in the DFT basis.

    The surrogate is asymptotically equivalent to the Toeplitz covariance:
    the per-dimension squared Frobenius gap vanishes as m grows.
    """
    spec = spectrum if spectrum is not None else model.spectrum
    if spec is None:
        raise ValueError("an angular spectrum is required")
    m = model.m
    eigvals = spectrum_on_dft_grid(spec, m)
    col = np.fft.ifft(eigvals)                        # first column, C~ = Q^H diag(f) Q
    mat = np.empty((m, m), dtype=np.complex128)
    idx = np.subtract.outer(np.arange(m), np.arange(m)) % m
    mat[:] = col[idx]
    return CovarianceModel(matrix=mat, m=m, spectrum=spec, first_column=mat[:, 0].copy())


def covariance_ura(spectrum, m_h, m_v, quadrature_points=1024):
    """Nested block-Toeplitz covariance of a half-wavelength URA.

    Antennas are indexed a = i_h * m_v + i_v.  The entry for the pair
    ((i_h, i_v), (j_h, j_v)) is the 2-D quadrature of
    g(theta, phi) exp(i pi (d_h sin theta + d_v cos theta sin phi))
    with d_h = i_h - j_h, d_v = i_v - j_v, theta over [-pi, pi) and phi
    over [-pi/2, pi/2].  The trace is normalized to m_h * m_v * power.
    """
    if m_h < 1 or m_v < 1:
        raise ValueError("array dimensions must be >= 1")
    n_az = quadrature_points
    n_el = max(quadrature_points // 2, 64)
    step_az = 2 * np.pi / n_az
    step_el = np.pi / n_el
    theta = -np.pi + (np.arange(n_az) + 0.5) * step_az
    phi = -np.pi / 2 + (np.arange(n_el) + 0.5) * step_el

    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    weights = spectrum.density_2d(tt, pp).ravel() * step_az * step_el
    u = np.sin(tt).ravel()
    v = (np.cos(tt) * np.sin(pp)).ravel()

    d_h = np.arange(-(m_h - 1), m_h)
    d_v = np.arange(-(m_v - 1), m_v)
    e_h = np.exp(1j * np.pi * np.outer(d_h, u))
    e_v = np.exp(1j * np.pi * np.outer(d_v, v))
    lags = np.einsum("ap,p,bp->ab", e_h, weights, e_v)

    m = m_h * m_v
    ih, iv = np.divmod(np.arange(m), m_v)
    mat = lags[np.subtract.outer(ih, ih) + m_h - 1, np.subtract.outer(iv, iv) + m_v - 1]
    mat = mat / np.trace(mat).real * m * spectrum.power
    return CovarianceModel(matrix=mat, m=m, spectrum=spectrum)


# --- scenario priors ----------------------------------------------------

PATHLOSS_EXPONENT = 3.5
CELL_MIN_DISTANCE = 1000.0
CELL_MAX_DISTANCE = 1500.0
EDGE_SNR_DB = -10.0


@dataclass(frozen=True)
class ScenarioPrior:
    """Distribution over angular spectra (and per-user SNR).

    Kinds: ``single_path`` (one uniform path center), ``three_path``
    (three uniform centers, uniform-then-normalized gains), and
    ``placed_user`` (three paths plus a random cell position whose path
    loss is folded into the spectrum power; use sigma2 = 1 with it).
    """

    kind: str
    sigma_as: float
    num_paths: int = 3

    def sample(self, rng):
        if self.kind == "single_path":
            delta = rng.uniform(-np.pi, np.pi)
            return AngularSpectrum(paths=((delta, 1.0),), sigma_as=self.sigma_as)
        if self.kind == "three_path":
            return self._multipath(rng, power=1.0)
        if self.kind == "placed_user":
            distance = rng.uniform(CELL_MIN_DISTANCE, CELL_MAX_DISTANCE)
            snr_db = EDGE_SNR_DB + 10 * PATHLOSS_EXPONENT * np.log10(CELL_MAX_DISTANCE / distance)
            return self._multipath(rng, power=10 ** (snr_db / 10))
        raise ValueError(f"unknown scenario kind {self.kind!r}")

    def _multipath(self, rng, power):
        centers = rng.uniform(-np.pi, np.pi, size=self.num_paths)
        gains = rng.uniform(0.0, 1.0, size=self.num_paths)
        gains = gains / gains.sum()
        paths = tuple((float(c), float(g)) for c, g in zip(centers, gains))
        return AngularSpectrum(paths=paths, sigma_as=self.sigma_as, power=power)


def sample_scenario(prior, rng):
    """Draw one angular spectrum from the scenario prior."""
    return prior.sample(rng)


def placed_user_snr_db(distance):
    """Table-style link budget: edge SNR plus distance-dependent path loss."""
    return EDGE_SNR_DB + 10 * PATHLOSS_EXPONENT * np.log10(CELL_MAX_DISTANCE / distance)


def placed_user_mean_power():
    """Average linear channel power over the uniform user placement."""
    edge = 10 ** (EDGE_SNR_DB / 10)
    ratio = CELL_MAX_DISTANCE / CELL_MIN_DISTANCE
    gamma = PATHLOSS_EXPONENT
    return edge * (ratio ** (gamma - 1) - 1) / ((gamma - 1) * (1 - 1 / ratio))


# --- observation batches ------------------------------------------------


class ObservationBatch:
    """T noisy snapshots sharing one covariance realization.

    Stores the true channels H (m x T), observations Y = H + noise, and
    the noise variance.  The scaled sample covariance (1/sigma2) Y Y^H
    and the per-transform spectral statistic (1/sigma2) sum |Q y_t|^2 are
    computed lazily and cached.
    """

    def __init__(self, channels, observations, sigma2):
        self.channels = np.asarray(channels, dtype=np.complex128)
        self.observations = np.asarray(observations, dtype=np.complex128)
        if self.channels.shape != self.observations.shape:
            raise ValueError("channel and observation shapes differ")
        self.sigma2 = float(sigma2)
        self.m, self.n_snapshots = self.observations.shape
        self._sample_cov = None
        self._spectral = {}
        self._transformed = {}

    @property
    def scaled_sample_cov(self):
        """(1/sigma2) Y Y^H, the sufficient statistic for MMSE filtering."""
        if self._sample_cov is None:
            y = self.observations
            self._sample_cov = (y @ y.conj().T) / self.sigma2
        return self._sample_cov

    @property
    def sample_cov(self):
        """Unscaled sample covariance (1/T) Y Y^H."""
        return self.scaled_sample_cov * (self.sigma2 / self.n_snapshots)

    def transformed_observations(self, q):
        """Q Y, cached per transform."""
        if q not in self._transformed:
            self._transformed[q] = q.forward(self.observations)
        return self._transformed[q]

    def spectral_stat(self, q):
        """(1/sigma2) sum_t |Q y_t|^2 for an orthonormal-column transform."""
        if q not in self._spectral:
            qy = self.transformed_observations(q)
            self._spectral[q] = np.sum(np.abs(qy) ** 2, axis=1) / self.sigma2
        return self._spectral[q]


def _standard_complex_normal(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def draw_batch(model, n_snapshots, sigma2, q, rng):
    """Draw channels from the covariance model and noisy observations.

    Channels are factorized through the eigendecomposition (negative
    eigenvalues from quadrature roundoff are clipped at zero), so
    rank-deficient covariances need no pivoting decisions.  The spectral
    statistic for ``q`` is populated eagerly.
    """
    if sigma2 <= 0:
        raise ValueError("noise variance must be positive")
    if n_snapshots < 1:
        raise ValueError("need at least one snapshot")
    lam, vec = model.eig()
    scale = np.sqrt(np.clip(lam, 0.0, None))
    white = _standard_complex_normal(rng, (model.m, n_snapshots))
    channels = vec @ (scale[:, None] * white)
    noise = _standard_complex_normal(rng, (model.m, n_snapshots))
    observations = channels + np.sqrt(sigma2) * noise
    batch = ObservationBatch(channels, observations, sigma2)
    if q is not None:
        batch.spectral_stat(q)
    return batch


def draw_scenario_batches(prior, count, m, n_snapshots, sigma2, q, rng,
                          quadrature_points=DEFAULT_QUAD_POINTS):
    """Draw ``count`` independent (spectrum -> covariance -> batch) samples.

    Covariance synthesis and eigendecompositions are vectorized across the
    whole group, which keeps stochastic training loops fast.
    """
    spectra = [prior.sample(rng) for _ in range(count)]
    models = covariance_ula_many(spectra, m, quadrature_points)
    stacked = np.stack([mo.matrix for mo in models])
    lams, vecs = np.linalg.eigh(stacked)
    batches = []
    for i, model in enumerate(models):
        model._eig = (lams[i], vecs[i])
        batches.append(draw_batch(model, n_snapshots, sigma2, q, rng))
    return batches, models


def adaptive_update(cov_stat, y, alpha, beta):
    """Exponential tracking update alpha * C + beta * y y^H."""
    if alpha <= 0 or beta < 0:
        raise ValueError("tracking coefficients must be positive")
    y = np.asarray(y).reshape(-1, 1)
    return alpha * np.asarray(cov_stat) + beta * (y @ y.conj().T)
