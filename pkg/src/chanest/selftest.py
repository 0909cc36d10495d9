"""Fast oracle and invariant battery behind the ``selftest`` CLI command.

Each check recomputes its expected value through an independent route
(dense matrices, direct sums, finite differences) rather than trusting
the code path under test.
"""

from __future__ import annotations

import os
import tempfile

import numpy as np

from . import baselines, channel, estimators, harness, learning
from .numerics import TransformQ, circular_convolution, dft_matrix, hermitian_eig


def _check_transforms():
    rng = np.random.default_rng(0)
    for q in (TransformQ.dft(8), TransformQ.dft2(8), TransformQ.kron_dft(2, 4)):
        mat = q.as_matrix()
        if np.max(np.abs(mat.conj().T @ mat - np.eye(q.m))) > 1e-12:
            return False
        x = rng.standard_normal(q.m) + 1j * rng.standard_normal(q.m)
        if np.max(np.abs(q.forward(x) - mat @ x)) > 1e-12:
            return False
    return np.max(np.abs(dft_matrix(8) @ dft_matrix(8).conj().T - np.eye(8))) < 1e-13


def _check_convolution():
    rng = np.random.default_rng(1)
    a, x = rng.standard_normal(16), rng.standard_normal(16)
    direct = np.array([sum(a[k] * x[(j - k) % 16] for k in range(16)) for j in range(16)])
    return np.max(np.abs(circular_convolution(a, x) - direct)) < 1e-12


def _check_eig():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
    x = x @ x.conj().T
    lam, vec = hermitian_eig(x)
    recon = (vec * lam) @ vec.conj().T
    return np.max(np.abs(recon - x)) < 1e-10 * max(abs(lam[0]), lam[-1])


def _check_covariance():
    spec = channel.AngularSpectrum(paths=((0.3, 1.0),), sigma_as=np.radians(2.0))
    series = channel.covariance_ula(spec, 16).first_column
    quad = channel.covariance_ula(spec, 16, quadrature_points=2**18,
                                  method="midpoint").first_column
    return np.max(np.abs(series - quad)) < 1e-6


def _check_structured_identity():
    rng = np.random.default_rng(3)
    m, n = 8, 16
    q = TransformQ.dft2(m)
    wvecs = rng.uniform(0, 0.9, size=(q.k, n))
    dense = np.stack([estimators.dense_from_weights(wvecs[:, i], q) for i in range(n)])
    offsets = rng.standard_normal(n)
    bank_d = estimators.FilterBank(offsets=offsets, n_snapshots=2, sigma2=1.0, m=m,
                                   dense_filters=dense)
    bank_s = estimators.FilterBank(offsets=offsets, n_snapshots=2, sigma2=1.0, m=m,
                                   q=q, weight_vectors=wvecs)
    y = rng.standard_normal((m, 2)) + 1j * rng.standard_normal((m, 2))
    batch = channel.ObservationBatch(np.zeros_like(y), y, 1.0)
    a = estimators.gridded_estimate(bank_d, batch)
    b = estimators.structured_estimate(bank_s, batch)
    return np.max(np.abs(a - b)) < 1e-10 * np.max(np.abs(a))


def _check_fe_containment():
    rng = np.random.default_rng(4)
    kernel = estimators.build_fe_kernel(np.radians(2.0), 16, 1, 1.0)
    params = learning.init_from_fe(kernel)
    spec = channel.ScenarioPrior("single_path", np.radians(2.0)).sample(rng)
    model = channel.covariance_ula(spec, 16)
    batch = channel.draw_batch(model, 1, 1.0, kernel.q, rng)
    a = estimators.fast_estimate(kernel, batch)
    b = learning.cnn_estimate(params, batch)
    return np.max(np.abs(a - b)) < 1e-12


def _check_gradient():
    rng = np.random.default_rng(5)
    q = TransformQ.dft(8)
    params = learning.random_init(q, "softmax", rng)
    prior = channel.ScenarioPrior("three_path", np.radians(2.0))
    batches, _ = channel.draw_scenario_batches(prior, 2, 8, 2, 1.0, q, rng)
    _, grads = learning.loss_and_gradient(params, batches)
    h = 1e-5
    for i in (0, 3):
        params.a1[i] += h
        up, _ = learning.loss_and_gradient(params, batches)
        params.a1[i] -= 2 * h
        dn, _ = learning.loss_and_gradient(params, batches)
        params.a1[i] += h
        fd = (up - dn) / (2 * h)
        if abs(fd - grads["a1"][i]) > 1e-5 * max(abs(fd), 1e-3):
            return False
    return True


def _check_adam_noop():
    q = TransformQ.dft(4)
    params = learning.CnnParams(np.ones(4), np.ones(4), np.ones(4), np.ones(4),
                                "relu", q)
    state = learning.TrainState.fresh(params)
    zero = {name: np.zeros(4) for name in learning.PARAM_NAMES}
    nxt = learning.adam_step(state, zero)
    same = all(np.array_equal(getattr(nxt.params, n), getattr(params, n))
               for n in learning.PARAM_NAMES)
    return same and nxt.step == 1


def _check_circulant_ml():
    rng = np.random.default_rng(6)
    m, t = 8, 4
    y = rng.standard_normal((m, t)) + 1j * rng.standard_normal((m, t))
    batch = channel.ObservationBatch(np.zeros_like(y), y, 0.7)
    fmat = TransformQ.dft(m).as_matrix()
    s = np.mean(np.abs(fmat @ y) ** 2, axis=1)
    eigs = np.clip(s - 0.7, 0.0, None)
    dense = fmat.conj().T @ np.diag(eigs / (eigs + 0.7)) @ fmat @ y
    fast = baselines.ml_circulant_estimate(batch)
    return np.max(np.abs(dense - fast)) < 1e-12


def _check_omp():
    rng = np.random.default_rng(7)
    d = baselines.build_dictionary(8, 1)
    coeffs = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    support = [1, 4, 6]
    y = (d[:, support] @ coeffs)[:, None]
    approx = baselines.omp_mmv(y, d, 3)
    return sorted(approx.support) == support


def _check_box_stats():
    stats = harness.box_stats([1, 2, 3, 4, 5])
    return (stats.median, stats.q1, stats.q3) == (3.0, 2.0, 4.0) and not stats.outliers


def _check_csv_roundtrip():
    rec = harness.ResultRecord("GenieMMSE", "nAntennas", 8.0, "MSE",
                               0.123456789, 0.001, 10, 7)
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "t.csv")
        harness.emit_csv([rec], path)
        back = harness.read_csv_records(path)
    return back == [rec]


CHECKS = (
    ("transform orthonormality and dense agreement", _check_transforms),
    ("circular convolution vs direct sum", _check_convolution),
    ("hermitian eigendecomposition reconstruction", _check_eig),
    ("covariance synthesis vs independent quadrature", _check_covariance),
    ("structured estimate matches gridded on decomposable bank", _check_structured_identity),
    ("fast-estimator containment in the CNN class", _check_fe_containment),
    ("analytic gradient vs finite differences", _check_gradient),
    ("adam zero-gradient no-op", _check_adam_noop),
    ("circulant ML vs dense evaluation", _check_circulant_ml),
    ("OMP exact on-grid recovery", _check_omp),
    ("box statistics hand case", _check_box_stats),
    ("CSV round trip", _check_csv_roundtrip),
)


def run(stream=None):
    """Run every check, print one line each, return True when all pass."""
    import sys

    stream = stream or sys.stdout
    all_ok = True
    for name, fn in CHECKS:
        try:
            ok = bool(fn())
        except Exception as exc:   # a crash is a failure, not an abort
            ok = False
            name = f"{name} ({exc!r})"
        all_ok &= ok
        print(f"{'PASS' if ok else 'FAIL'}  {name}", file=stream)
    return all_ok
