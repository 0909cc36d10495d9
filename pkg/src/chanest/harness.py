"""Experiment driver: scenario sweeps, Monte Carlo evaluation, CSV output.

Every trial's randomness comes from a counter-based substream keyed by
(master seed, sweep point, role, index), so results are independent of
execution order and thread count, and all estimators see identical
batches per trial (matched comparisons).  Learned estimators and filter
banks are built once per sweep point and frozen.
"""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from . import baselines, channel, estimators, learning
from .numerics import TransformQ

ALGORITHMS = ("GenieMMSE", "DiscreteMMSE", "CircMMSE", "ToepMMSE", "FastMMSE",
              "CircSoftmax", "ToepReLU", "CircML", "GenieOMP", "Zero")

SWEEP_VARIABLES = ("nAntennas", "SNR", "nCoherence", "none")

# substream roles; builder roles are offset by the algorithm index so a
# changed estimator list never perturbs the other estimators' randomness
_ROLE_TRIAL = 0
_ROLE_EVAL = 1
_ROLE_REPEAT = 2
_ROLE_BUILDER_BASE = 10


def substream(*key):
    """Deterministic generator keyed by a tuple of nonnegative integers."""
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


def snr_db_to_sigma2(snr_db):
    """Unit channel power makes the noise variance 10^(-SNR/10)."""
    return 10 ** (-snr_db / 10)


@dataclass
class TrainingBudget:
    """Stochastic-training knobs shared by the learned estimators."""

    iterations: int = 2500
    batch_size: int = 20
    step_size: float = 1e-3
    beta: float = 2.0
    stages: int = 2
    transform: str = "dft2"
    activation: str = "relu"   # used by the standalone train command
    validation_batches: int = 500
    checkpoint_every: int = 100


@dataclass
class ExperimentConfig:
    """One experiment: scenario, estimator list, sweep, and budgets."""

    scenario_kind: str = "three_path"
    sigma_as_deg: float = 2.0
    num_paths: int = 3
    geometry: str = "ula"
    m: int = 16
    n_snapshots: int = 1
    snr_db: float = 0.0
    estimators: tuple = ("GenieMMSE", "FastMMSE")
    sweep_variable: str = "none"
    sweep_values: tuple = ()
    trials: int = 1000
    seed: int = 1
    out: str = "results.csv"
    grid_factor: int = 16
    oversampling: int = 4
    k_max: int = 16
    threads: int = 1
    quadrature_points: int = channel.DEFAULT_QUAD_POINTS
    metric: str = "MSE"        # MSE | rate; rate sweeps vary nCoherence
    boxplot_repeats: int = 10
    boxplot_eval_trials: int = 1000
    training: TrainingBudget = field(default_factory=TrainingBudget)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.metric not in ("MSE", "rate"):
            raise ValueError("metric must be MSE or rate")
        if self.sweep_variable not in SWEEP_VARIABLES:
            raise ValueError(f"sweep variable must be one of {SWEEP_VARIABLES}")
        if self.sweep_variable != "none" and not self.sweep_values:
            raise ValueError("sweep values must be nonempty")
        unknown = set(self.estimators) - set(ALGORITHMS)
        if unknown:
            raise ValueError(f"unknown algorithm identifiers: {sorted(unknown)}")
        if self.scenario_kind not in ("single_path", "three_path", "placed_user"):
            raise ValueError(f"unknown scenario kind {self.scenario_kind!r}")
        if self.scenario_kind == "placed_user" and self.sweep_variable == "SNR":
            raise ValueError("placed_user draws its own SNR; SNR sweep is invalid")
        if self.geometry != "ula":
            raise ValueError("sweeps support ula geometry only")

    @property
    def prior(self):
        sigma_as = np.radians(self.sigma_as_deg)
        num = 1 if self.scenario_kind == "single_path" else self.num_paths
        return channel.ScenarioPrior(self.scenario_kind, sigma_as, num)

    def points(self):
        if self.sweep_variable == "none":
            return [float(self.m)]
        return [float(v) for v in self.sweep_values]

    @property
    def sweep_column(self):
        return "nAntennas" if self.sweep_variable == "none" else self.sweep_variable

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        scenario = data.pop("scenario", {})
        training = data.pop("training", {})
        sweep = data.pop("sweep", {})
        kwargs = {}
        scenario_map = {"kind": "scenario_kind", "sigma_as_deg": "sigma_as_deg",
                        "num_paths": "num_paths", "geometry": "geometry", "m": "m",
                        "n_snapshots": "n_snapshots", "snr_db": "snr_db"}
        for key, val in scenario.items():
            if key not in scenario_map:
                raise ValueError(f"unknown scenario field {key!r}")
            kwargs[scenario_map[key]] = val
        if sweep:
            kwargs["sweep_variable"] = sweep.get("variable", "none")
            kwargs["sweep_values"] = tuple(sweep.get("values", ()))
        for key in ("estimators",):
            if key in data:
                data[key] = tuple(data[key])
        budget_fields = {f.name for f in dataclasses.fields(TrainingBudget)}
        extra = set(training) - budget_fields
        if extra:
            raise ValueError(f"unknown training fields {sorted(extra)}")
        kwargs["training"] = TrainingBudget(**training)
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown config fields {sorted(extra)}")
        kwargs.update(data)
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class SweepPoint:
    """Resolved per-point parameters of one sweep position."""

    index: int
    value: float
    m: int
    n_snapshots: int
    sigma2: float


def resolve_point(config, index, value):
    m, n_snapshots = config.m, config.n_snapshots
    sigma2 = snr_db_to_sigma2(config.snr_db)
    if config.sweep_variable == "nAntennas":
        m = int(value)
    elif config.sweep_variable == "SNR":
        sigma2 = snr_db_to_sigma2(value)
    elif config.sweep_variable == "nCoherence":
        n_snapshots = int(value)
    if config.scenario_kind == "placed_user":
        sigma2 = 1.0   # path loss lives in the channel power
    return SweepPoint(index=index, value=float(value), m=m,
                      n_snapshots=n_snapshots, sigma2=sigma2)


def matched_filter_rate(h_est, h_true, sigma2):
    """log2(1 + |h_est^H h|^2 / (sigma2 ||h_est||^2)); a zero estimate

    carries no beamforming gain and contributes zero rate."""
    energy = np.vdot(h_est, h_est).real
    if energy <= 0.0:
        return 0.0
    gain = np.abs(np.vdot(h_est, h_true)) ** 2
    return float(np.log2(1.0 + gain / (sigma2 * energy)))


def _builder_rng(config, point, name):
    return substream(config.seed, point.index,
                     _ROLE_BUILDER_BASE + ALGORITHMS.index(name))


def _train_cnn(config, point, activation, rng):
    budget = config.training
    train_cfg = learning.TrainingConfig(
        prior=config.prior, m=point.m, n_snapshots=point.n_snapshots,
        sigma2=point.sigma2, transform=budget.transform, activation=activation,
        iterations=budget.iterations, batch_size=budget.batch_size,
        step_size=budget.step_size, validation_batches=budget.validation_batches,
        checkpoint_every=budget.checkpoint_every,
        quadrature_points=config.quadrature_points)
    params, _ = learning.hierarchical_train(train_cfg, budget.beta, budget.stages, rng)
    return params


def _fe_power(config):
    if config.scenario_kind == "placed_user":
        return channel.placed_user_mean_power()
    return 1.0


def build_estimators(config, point, metric="mse"):
    """Instantiate every configured estimator for one sweep point.

    Returns a dict of callables (batch, true_model) -> estimate; bank and
    training randomness comes from per-algorithm substreams so adding or
    removing estimators never changes the others.
    """
    names = config.estimators
    fns = {}
    dense_bank = None
    if {"DiscreteMMSE", "CircMMSE", "ToepMMSE"} & set(names):
        rng = _builder_rng(config, point, "DiscreteMMSE")
        dense_bank = estimators.build_filter_bank(
            config.prior, config.grid_factor * point.m, point.m,
            point.n_snapshots, point.sigma2, rng,
            quadrature_points=config.quadrature_points)

    for name in names:
        if name == "GenieMMSE":
            def genie(batch, model):
                return estimators.genie_filter(model, batch.sigma2) @ batch.observations
            fns[name] = genie
        elif name == "DiscreteMMSE":
            fns[name] = _freeze_bank(estimators.gridded_estimate, dense_bank)
        elif name == "CircMMSE":
            bank = estimators.structured_bank_from_dense(dense_bank, TransformQ.dft(point.m))
            fns[name] = _freeze_bank(estimators.structured_estimate, bank)
        elif name == "ToepMMSE":
            bank = estimators.structured_bank_from_dense(dense_bank, TransformQ.dft2(point.m))
            fns[name] = _freeze_bank(estimators.structured_estimate, bank)
        elif name == "FastMMSE":
            kernel = estimators.build_fe_kernel(
                config.prior.sigma_as, point.m, point.n_snapshots, point.sigma2,
                power=_fe_power(config))
            fns[name] = _freeze_bank(estimators.fast_estimate, kernel)
        elif name in ("CircSoftmax", "ToepReLU"):
            activation = "softmax" if name == "CircSoftmax" else "relu"
            params = _train_cnn(config, point, activation,
                                _builder_rng(config, point, name))
            fns[name] = _freeze_bank(_cnn_apply, params)
        elif name == "CircML":
            fns[name] = lambda batch, model: baselines.ml_circulant_estimate(batch)
        elif name == "GenieOMP":
            dictionary = baselines.build_dictionary(point.m, config.oversampling)
            fns[name] = _make_genie_omp(dictionary, config.k_max, metric)
        elif name == "Zero":
            fns[name] = lambda batch, model: np.zeros_like(batch.observations)
        else:
            raise ValueError(f"unknown algorithm identifier {name!r}")
    return fns


def _cnn_apply(params, batch):
    return learning.cnn_estimate(params, batch)


def _freeze_bank(fn, bank):
    return lambda batch, model: fn(bank, batch)


def _make_genie_omp(dictionary, k_max, metric):
    def run(batch, model):
        if metric == "rate":
            def objective(est):
                return -matched_filter_rate(est[:, -1], batch.channels[:, -1],
                                            batch.sigma2)
        else:
            objective = None
        return baselines.genie_omp_estimate(batch, dictionary, k_max, objective)
    return run


def collect_samples(config, point, metric="mse", estimator_fns=None):
    """Per-trial metric samples for every estimator at one sweep point.

    All estimators share the trial's batch.  MSE samples are normalized
    per antenna and snapshot; rate samples score the final snapshot's
    estimate.  Returns {algorithm: array of shape (trials,)}.
    """
    fns = build_estimators(config, point, metric) if estimator_fns is None else estimator_fns
    prior = config.prior

    def one_trial(t):
        rng = substream(config.seed, point.index, _ROLE_TRIAL, t)
        spectrum = prior.sample(rng)
        model = channel.covariance_ula(spectrum, point.m, config.quadrature_points)
        batch = channel.draw_batch(model, point.n_snapshots, point.sigma2, None, rng)
        row = {}
        for name, fn in fns.items():
            est = fn(batch, model)
            if metric == "rate":
                row[name] = matched_filter_rate(est[:, -1], batch.channels[:, -1],
                                                batch.sigma2)
            else:
                err = batch.channels - est
                row[name] = float(np.sum(np.abs(err) ** 2)) / (point.m * point.n_snapshots)
        return row

    if config.threads > 1:
        with concurrent.futures.ThreadPoolExecutor(config.threads) as pool:
            rows = list(pool.map(one_trial, range(config.trials)))
    else:
        rows = [one_trial(t) for t in range(config.trials)]
    return {name: np.array([r[name] for r in rows]) for name in fns}


@dataclass
class ResultRecord:
    """One (algorithm, sweep point) aggregate row of the output CSV."""

    algorithm: str
    sweep_name: str
    sweep_value: float
    metric_name: str
    value: float
    stderr: float
    trials: int
    seed: int


def _records_for_point(config, point, samples, metric_name):
    records = []
    for name in config.estimators:
        vals = samples[name]
        stderr = float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
        records.append(ResultRecord(
            algorithm=name, sweep_name=config.sweep_column,
            sweep_value=point.value, metric_name=metric_name,
            value=float(vals.mean()), stderr=stderr,
            trials=vals.size, seed=config.seed))
    return records


def run_mse_sweep(config):
    """Monte Carlo normalized-MSE sweep over the configured variable."""
    records = []
    for index, value in enumerate(config.points()):
        point = resolve_point(config, index, value)
        samples = collect_samples(config, point, metric="mse")
        records.extend(_records_for_point(config, point, samples, "MSE"))
    return records


def run_rate_sweep(config):
    """Matched-filter spectral-efficiency sweep over snapshot counts."""
    if config.sweep_variable != "nCoherence":
        raise ValueError("rate sweeps vary nCoherence")
    records = []
    for index, value in enumerate(config.points()):
        point = resolve_point(config, index, value)
        samples = collect_samples(config, point, metric="rate")
        records.extend(_records_for_point(config, point, samples, "rate"))
    return records


# --- box-plot statistics ----------------------------------------------


@dataclass
class BoxStats:
    median: float
    q1: float
    q3: float
    whisker_lo: float
    whisker_hi: float
    outliers: tuple


def box_stats(samples):
    """Quartiles by linear interpolation; whiskers at the farthest points

    within 1.5 box heights of the box; everything beyond is an outlier."""
    s = np.sort(np.asarray(samples, dtype=float))
    if s.size < 1:
        raise ValueError("need at least one sample")
    q1, median, q3 = np.percentile(s, [25.0, 50.0, 75.0])
    reach = 1.5 * (q3 - q1)
    inside = s[(s >= q1 - reach) & (s <= q3 + reach)]
    outliers = s[(s < q1 - reach) | (s > q3 + reach)]
    return BoxStats(median=float(median), q1=float(q1), q3=float(q3),
                    whisker_lo=float(inside.min()), whisker_hi=float(inside.max()),
                    outliers=tuple(float(x) for x in outliers))


def run_training_repeats(config, repeats, hierarchical=True, activation="relu",
                         eval_trials=1000):
    """Final MSE of repeated randomly initialized training runs.

    Each repeat trains from scratch on its own substream; all repeats are
    scored on one shared evaluation set, so the spread reflects training
    randomness only.  ``hierarchical=False`` uses zero stages with the
    same total iteration budget.
    """
    point = resolve_point(config, 0, config.m)
    budget = config.training
    eval_rng = substream(config.seed, _ROLE_EVAL)
    eval_batches, _ = channel.draw_scenario_batches(
        config.prior, eval_trials, point.m, point.n_snapshots, point.sigma2,
        None, eval_rng, config.quadrature_points)

    stages = budget.stages if hierarchical else 0
    results = []
    for rep in range(repeats):
        rng = substream(config.seed, _ROLE_REPEAT, rep, int(hierarchical))
        train_cfg = learning.TrainingConfig(
            prior=config.prior, m=point.m, n_snapshots=point.n_snapshots,
            sigma2=point.sigma2, transform=budget.transform, activation=activation,
            iterations=budget.iterations, batch_size=budget.batch_size,
            step_size=budget.step_size, validation_batches=budget.validation_batches,
            checkpoint_every=budget.checkpoint_every,
            quadrature_points=config.quadrature_points)
        params, _ = learning.hierarchical_train(train_cfg, budget.beta, stages, rng)
        results.append(learning.normalized_mse(params, eval_batches))
    return results


# --- CSV ----------------------------------------------------------------


def emit_csv(records, path, sweep_name="nAntennas", metric_name="MSE"):
    """Write aggregate records with the figure-data column layout."""
    if records:
        names = {r.sweep_name for r in records}
        metrics = {r.metric_name for r in records}
        if len(names) > 1 or len(metrics) > 1:
            raise ValueError("records are not homogeneous")
        sweep_name, metric_name = records[0].sweep_name, records[0].metric_name
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["Algorithm", sweep_name, metric_name, "stderr", "trials", "seed"])
        for rec in records:
            writer.writerow([rec.algorithm, repr(rec.sweep_value), repr(rec.value),
                             repr(rec.stderr), rec.trials, rec.seed])


def read_csv_records(path):
    """Parse a sweep CSV back into ResultRecord objects."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        sweep_name, metric_name = header[1], header[2]
        records = []
        for row in reader:
            records.append(ResultRecord(
                algorithm=row[0], sweep_name=sweep_name,
                sweep_value=float(row[1]), metric_name=metric_name,
                value=float(row[2]), stderr=float(row[3]),
                trials=int(row[4]), seed=int(row[5])))
    return records


def emit_box_csv(groups, path):
    """Write one row of box statistics per labeled sample group."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["Group", "median", "q1", "q3", "whisker_lo", "whisker_hi",
                         "outliers"])
        for label, samples in groups.items():
            stats = box_stats(samples)
            writer.writerow([label, repr(stats.median), repr(stats.q1), repr(stats.q3),
                             repr(stats.whisker_lo), repr(stats.whisker_hi),
                             ";".join(repr(x) for x in stats.outliers)])
