"""Learned convolutional estimator: forward pass, exact gradients, training.

The estimator is a two-layer circular CNN acting on the transform-domain
energy statistic: w = a2 * phi(a1 * c + b1) + b2 with phi either softmax
or ReLU.  Gradients are derived by hand (the graph is two circular
convolutions and one pointwise nonlinearity; convolution adjoints are
correlations computed with the same FFT primitive), so the module has no
autodiff dependency and the finite-difference check below is meaningful.

Training follows a plain stochastic-gradient recipe: fresh scenario
samples every iteration, Adam updates, a fixed iteration budget, and
best-checkpoint selection on a seed-pinned held-out validation set.
Hierarchical training warm-starts large arrays from small ones by
circular interpolation of the kernels.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import channel
from .estimators import FeKernel, reverse_kernel, stable_softmax
from .numerics import TransformQ, circular_convolution

ACTIVATIONS = ("softmax", "relu")


class TrainingDiverged(RuntimeError):
    """Raised when the minibatch loss stops being finite."""


@dataclass
class CnnParams:
    """Two convolution kernels, two bias vectors, activation, transform."""

    a1: np.ndarray
    b1: np.ndarray
    a2: np.ndarray
    b2: np.ndarray
    activation: str
    q: TransformQ

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        k = self.q.k
        for name in ("a1", "b1", "a2", "b2"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (k,):
                raise ValueError(f"{name} must have shape ({k},), got {arr.shape}")
            setattr(self, name, arr)

    @property
    def k(self):
        return self.q.k

    def copy(self):
        return CnnParams(self.a1.copy(), self.b1.copy(), self.a2.copy(),
                         self.b2.copy(), self.activation, self.q)


PARAM_NAMES = ("a1", "b1", "a2", "b2")


def random_init(q, activation, rng):
    """Kernels iid uniform(-1/sqrt(k), 1/sqrt(k)), biases zero."""
    k = q.k
    scale = 1.0 / np.sqrt(k)
    return CnnParams(a1=rng.uniform(-scale, scale, k), b1=np.zeros(k),
                     a2=rng.uniform(-scale, scale, k), b2=np.zeros(k),
                     activation=activation, q=q)


def init_from_fe(kernel: FeKernel):
    """Embed the fast estimator: a1 = reversed kernel, b1 = offsets, a2 = kernel."""
    return CnnParams(a1=kernel.w0_reversed.copy(), b1=kernel.b.copy(),
                     a2=kernel.w0.copy(), b2=np.zeros(kernel.q.k),
                     activation="softmax", q=kernel.q)


def _activate(u, kind):
    if kind == "softmax":
        return stable_softmax(u)
    return np.maximum(u, 0.0)


def cnn_forward(params, c_stat):
    """Filter gains w = a2 * phi(a1 * c + b1) + b2."""
    c_stat = np.asarray(c_stat, dtype=np.float64)
    hidden = _activate(circular_convolution(params.a1, c_stat) + params.b1,
                       params.activation)
    return circular_convolution(params.a2, hidden) + params.b2


def cnn_estimate(params, batch):
    """Q^H diag(w(c)) Q Y for one observation batch."""
    gains = cnn_forward(params, batch.spectral_stat(params.q))
    return params.q.sandwich(gains, batch.observations)


def loss_and_gradient(params, batches):
    """Mean squared filtering error and its exact parameter gradient.

    Loss is (1/S) sum_s ||H_s - Q^H diag(w(c_s)) Q Y_s||_F^2.  The energy
    statistic c_s depends on Y_s but not on the parameters, so no gradient
    flows through it.  Backpropagation chain: residual -> gains (via
    2 Re[conj(Q r_t) (Q y_t)] per entry) -> output convolution (adjoint =
    correlation with the reversed kernel) -> activation Jacobian
    (softmax: diag(p) - p p^T; ReLU: indicator) -> input convolution.
    """
    if not batches:
        raise ValueError("minibatch must be nonempty")
    q = params.q
    total = 0.0
    grads = {name: np.zeros(params.k) for name in PARAM_NAMES}
    for batch in batches:
        c_stat = batch.spectral_stat(q)
        pre = circular_convolution(params.a1, c_stat) + params.b1
        hidden = _activate(pre, params.activation)
        gains = circular_convolution(params.a2, hidden) + params.b2

        qy = batch.transformed_observations(q)
        residual = q.adjoint(gains[:, None] * qy) - batch.channels
        total += float(np.sum(np.abs(residual) ** 2))

        g_gains = 2.0 * np.sum((q.forward(residual).conj() * qy).real, axis=1)
        grads["b2"] += g_gains
        grads["a2"] += circular_convolution(g_gains, reverse_kernel(hidden))
        g_hidden = circular_convolution(g_gains, reverse_kernel(params.a2))
        if params.activation == "softmax":
            g_pre = hidden * g_hidden - hidden * float(hidden @ g_hidden)
        else:
            g_pre = g_hidden * (pre > 0.0)
        grads["b1"] += g_pre
        grads["a1"] += circular_convolution(g_pre, reverse_kernel(c_stat))

    count = len(batches)
    loss = total / count
    if not np.isfinite(loss):
        raise TrainingDiverged(f"non-finite minibatch loss {loss!r}")
    for name in PARAM_NAMES:
        grads[name] /= count
    return loss, grads


@dataclass
class TrainState:
    """Adam optimizer state plus the running loss history."""

    params: CnnParams
    m1: dict
    m2: dict
    step: int = 0
    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    history: list = field(default_factory=list)

    @classmethod
    def fresh(cls, params, **kwargs):
        zeros = {name: np.zeros(params.k) for name in PARAM_NAMES}
        m2 = {name: np.zeros(params.k) for name in PARAM_NAMES}
        return cls(params=params, m1=zeros, m2=m2, **kwargs)


def adam_step(state, grads):
    """One bias-corrected Adam update; returns a new state."""
    t = state.step + 1
    params = state.params.copy()
    m1, m2 = {}, {}
    for name in PARAM_NAMES:
        g = grads[name]
        m1[name] = state.beta1 * state.m1[name] + (1 - state.beta1) * g
        m2[name] = state.beta2 * state.m2[name] + (1 - state.beta2) * g * g
        m1_hat = m1[name] / (1 - state.beta1**t)
        m2_hat = m2[name] / (1 - state.beta2**t)
        updated = getattr(params, name) - state.alpha * m1_hat / (np.sqrt(m2_hat) + state.eps)
        setattr(params, name, updated)
    return dataclasses.replace(state, params=params, m1=m1, m2=m2, step=t,
                               history=state.history)


@dataclass
class TrainingConfig:
    """Scenario plus optimizer hyperparameters for one training run."""

    prior: channel.ScenarioPrior
    m: int
    n_snapshots: int
    sigma2: float
    transform: str = "dft2"       # dft | dft2
    activation: str = "relu"
    iterations: int = 2500
    batch_size: int = 20
    step_size: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    checkpoint_every: int = 100
    validation_batches: int = 500
    quadrature_points: int = channel.DEFAULT_QUAD_POINTS

    def make_transform(self, m=None):
        m = self.m if m is None else m
        if self.transform == "dft":
            return TransformQ.dft(m)
        if self.transform == "dft2":
            return TransformQ.dft2(m)
        raise ValueError(f"unsupported training transform {self.transform!r}")


def normalized_mse(params, batches):
    """Mean per-antenna squared error of the CNN estimator over batches."""
    total = 0.0
    for batch in batches:
        err = batch.channels - cnn_estimate(params, batch)
        total += float(np.sum(np.abs(err) ** 2)) / (batch.m * batch.n_snapshots)
    return total / len(batches)


def _validation_set(config, m, q, rng):
    batches, _ = channel.draw_scenario_batches(
        config.prior, config.validation_batches, m, config.n_snapshots,
        config.sigma2, q, rng, config.quadrature_points)
    return batches


def train(config, rng, init=None, iterations=None, m=None):
    """Stochastic-gradient training with best-checkpoint selection.

    Every iteration draws a fresh minibatch of scenario samples (spectrum,
    channels, observations, statistic), computes the exact gradient, and
    applies one Adam update.  The run keeps whatever parameters scored
    best on the held-out validation set, including the initial ones, so a
    warm start can never end worse than it began.
    """
    m = config.m if m is None else m
    iterations = config.iterations if iterations is None else iterations
    q = config.make_transform(m)
    val_rng = rng.spawn(1)[0]
    val_batches = _validation_set(config, m, q, val_rng)

    params = random_init(q, config.activation, rng) if init is None else init.copy()
    state = TrainState.fresh(params, alpha=config.step_size, beta1=config.beta1,
                             beta2=config.beta2, eps=config.eps)
    best_mse = normalized_mse(params, val_batches)
    best = params.copy()

    for it in range(iterations):
        batches, _ = channel.draw_scenario_batches(
            config.prior, config.batch_size, m, config.n_snapshots,
            config.sigma2, q, rng, config.quadrature_points)
        loss, grads = loss_and_gradient(state.params, batches)
        state = adam_step(state, grads)
        state.history.append((it, loss))
        if (it + 1) % config.checkpoint_every == 0 or it + 1 == iterations:
            mse = normalized_mse(state.params, val_batches)
            if mse < best_mse:
                best_mse = mse
                best = state.params.copy()
    return best, state.history


def interpolate_circular(values, new_len):
    """Linear interpolation on the index circle from len(values) to new_len."""
    values = np.asarray(values, dtype=np.float64)
    old_len = values.shape[0]
    pos = np.arange(new_len) * old_len / new_len
    lo = np.floor(pos).astype(int)
    frac = pos - lo
    return (1 - frac) * values[lo % old_len] + frac * values[(lo + 1) % old_len]


def _stage_sizes(m, beta, stages):
    return [int(np.ceil(m / beta ** (stages - i))) for i in range(stages + 1)]


def _split_budget(total, parts):
    base = total // parts
    out = [base] * parts
    out[-1] += total - base * parts
    return out


def hierarchical_train(config, beta, stages, rng):
    """Curriculum over antenna counts with kernel upsampling between stages.

    Starts at ceil(m / beta^stages) antennas from a random init, then per
    stage interpolates kernels and biases onto the larger circle, divides
    the convolution kernels (only) by beta, and retrains.  The total
    iteration budget is split evenly across stages; stages = 0 reduces to
    plain training.
    """
    if beta <= 1:
        raise ValueError("upsampling factor must exceed 1")
    if stages < 0:
        raise ValueError("stage count must be nonnegative")
    if stages == 0:
        params, history = train(config, rng)
        return params, [history]

    sizes = _stage_sizes(config.m, beta, stages)
    budgets = _split_budget(config.iterations, stages + 1)
    histories = []
    params, history = train(config, rng, iterations=budgets[0], m=sizes[0])
    histories.append(history)
    for stage in range(1, stages + 1):
        m_i = sizes[stage]
        q_i = config.make_transform(m_i)
        params = CnnParams(
            a1=interpolate_circular(params.a1, q_i.k) / beta,
            b1=interpolate_circular(params.b1, q_i.k),
            a2=interpolate_circular(params.a2, q_i.k) / beta,
            b2=interpolate_circular(params.b2, q_i.k),
            activation=params.activation, q=q_i)
        params, history = train(config, rng, init=params,
                                iterations=budgets[stage], m=m_i)
        histories.append(history)
    return params, histories


# --- model files ----------------------------------------------------------

MODEL_MAGIC = "CNNEST v1"


def _format_vector(vec):
    return " ".join(f"{x:.17g}" for x in vec)


def _parse_vector(line, k):
    vals = np.array([float(tok) for tok in line.split()], dtype=np.float64)
    if vals.shape != (k,):
        raise ValueError(f"expected {k} values, got {vals.shape[0]}")
    return vals


def _transform_token(q):
    if q.kind == "kron_dft":
        return f"kron_dft:{q.dims[0]}x{q.dims[1]}"
    return q.kind


def _transform_from_token(token, m):
    if token.startswith("kron_dft:"):
        m_h, m_v = (int(v) for v in token.split(":", 1)[1].split("x"))
        return TransformQ.kron_dft(m_h, m_v)
    factory = {"identity": TransformQ.identity, "dft": TransformQ.dft,
               "dft2": TransformQ.dft2}.get(token)
    if factory is None:
        raise ValueError(f"unknown transform token {token!r}")
    return factory(m)


def save_model(path, params, n_snapshots, sigma2):
    """Write a CNN to the plain-text model container."""
    lines = [MODEL_MAGIC,
             f"{params.activation} {_transform_token(params.q)} {params.k} "
             f"{params.q.m} {n_snapshots} {sigma2:.17g}"]
    for name in PARAM_NAMES:
        lines.append(_format_vector(getattr(params, name)))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def save_bank(path, bank):
    """Write a structured filter bank to the shared model container."""
    if bank.weight_vectors is None:
        raise ValueError("only structured banks are serializable")
    lines = [MODEL_MAGIC,
             f"BANK {_transform_token(bank.q)} {bank.q.k} {bank.m} "
             f"{bank.n_snapshots} {bank.sigma2:.17g} {bank.size}"]
    lines.append(_format_vector(bank.offsets))
    for i in range(bank.size):
        lines.append(_format_vector(bank.weight_vectors[:, i]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path):
    """Read the model container; returns (payload, n_snapshots, sigma2).

    The payload is a CnnParams for CNN files and a FilterBank for files
    tagged BANK.
    """
    from .estimators import FilterBank

    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != MODEL_MAGIC:
        raise ValueError(f"{path}: not a {MODEL_MAGIC} file")
    head = lines[1].split()
    if head[0] == "BANK":
        _, token, k, m, n_snapshots, sigma2, size = head
        k, m, n_snapshots, size = int(k), int(m), int(n_snapshots), int(size)
        q = _transform_from_token(token, m)
        offsets = _parse_vector(lines[2], size)
        weights = np.stack([_parse_vector(lines[3 + i], k) for i in range(size)], axis=1)
        bank = FilterBank(offsets=offsets, n_snapshots=n_snapshots,
                          sigma2=float(sigma2), m=m, q=q, weight_vectors=weights)
        return bank, n_snapshots, float(sigma2)
    activation, token, k, m, n_snapshots, sigma2 = head
    k, m, n_snapshots = int(k), int(m), int(n_snapshots)
    q = _transform_from_token(token, m)
    if q.k != k:
        raise ValueError(f"{path}: transform dimension {q.k} != header {k}")
    vecs = [_parse_vector(lines[2 + i], k) for i in range(4)]
    params = CnnParams(a1=vecs[0], b1=vecs[1], a2=vecs[2], b2=vecs[3],
                       activation=activation, q=q)
    return params, n_snapshots, float(sigma2)
