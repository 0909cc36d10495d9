"""Harness tests: configs, sweeps, statistics, CSV contract, determinism."""

import dataclasses
import json

import numpy as np
import pytest

from chanest import cli
from chanest.harness import (ALGORITHMS, BoxStats, ExperimentConfig, ResultRecord,
                             box_stats, collect_samples, emit_csv,
                             matched_filter_rate, read_csv_records, resolve_point,
                             run_mse_sweep, run_rate_sweep, snr_db_to_sigma2,
                             substream)

FIGURE_KEYS = {"GenieMMSE", "DiscreteMMSE", "CircMMSE", "ToepMMSE", "FastMMSE",
               "CircSoftmax", "ToepReLU", "CircML", "GenieOMP"}


def _config(**over):
    base = dict(scenario_kind="single_path", sigma_as_deg=2.0, m=8, n_snapshots=1,
                snr_db=0.0, estimators=("GenieMMSE", "FastMMSE"),
                sweep_variable="none", sweep_values=(), trials=50, seed=21,
                out="out.csv")
    base.update(over)
    return ExperimentConfig(**base)


class TestConfig:
    def test_registry_covers_figure_keys(self):
        assert FIGURE_KEYS <= set(ALGORITHMS)

    def test_rejects_unknown_algorithm(self):
        with pytest.raises(ValueError):
            _config(estimators=("GenieMMSE", "MagicFilter"))

    def test_rejects_bad_sweep(self):
        with pytest.raises(ValueError):
            _config(sweep_variable="frequency")
        with pytest.raises(ValueError):
            _config(sweep_variable="SNR", sweep_values=())

    def test_rejects_snr_sweep_for_placed_user(self):
        with pytest.raises(ValueError):
            _config(scenario_kind="placed_user", sweep_variable="SNR",
                    sweep_values=(0.0,))

    def test_from_dict_rejects_unknown_fields(self):
        with pytest.raises(ValueError):
            ExperimentConfig.from_dict({"scenario": {"bandwidth": 5}})
        with pytest.raises(ValueError):
            ExperimentConfig.from_dict({"wheels": 4})
        with pytest.raises(ValueError):
            ExperimentConfig.from_dict({"training": {"warp": 9}})

    def test_json_roundtrip(self, tmp_path):
        payload = {
            "scenario": {"kind": "three_path", "sigma_as_deg": 2.0, "m": 16,
                         "n_snapshots": 2, "snr_db": 3.0},
            "estimators": ["GenieMMSE", "CircML"],
            "sweep": {"variable": "nAntennas", "values": [8, 16]},
            "trials": 7,
            "seed": 99,
            "training": {"iterations": 10},
        }
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(payload))
        config = ExperimentConfig.from_json(path)
        assert config.m == 16 and config.trials == 7 and config.seed == 99
        assert config.sweep_values == (8.0, 16.0)
        assert config.training.iterations == 10

    def test_resolve_point_variables(self):
        cfg = _config(sweep_variable="nAntennas", sweep_values=(8, 32))
        assert resolve_point(cfg, 1, 32).m == 32
        cfg = _config(sweep_variable="SNR", sweep_values=(-10.0,))
        point = resolve_point(cfg, 0, -10.0)
        assert point.sigma2 == pytest.approx(10.0)
        cfg = _config(sweep_variable="nCoherence", sweep_values=(4,))
        assert resolve_point(cfg, 0, 4).n_snapshots == 4

    def test_placed_user_pins_unit_noise(self):
        cfg = _config(scenario_kind="placed_user", sigma_as_deg=5.0,
                      sweep_variable="nCoherence", sweep_values=(1,))
        assert resolve_point(cfg, 0, 1).sigma2 == 1.0


class TestBoxStats:
    def test_small_hand_case(self):
        stats = box_stats([1, 2, 3, 4, 5])
        assert stats == BoxStats(median=3.0, q1=2.0, q3=4.0, whisker_lo=1.0,
                                 whisker_hi=5.0, outliers=())

    def test_degenerate_equal_samples(self):
        stats = box_stats([2.5] * 9)
        assert stats.median == stats.q1 == stats.q3 == 2.5
        assert stats.whisker_lo == stats.whisker_hi == 2.5
        assert stats.outliers == ()

    def test_flags_far_outlier(self):
        stats = box_stats(list(range(1, 9)) + [100])
        # quartiles by linear interpolation: q1 = 3, q3 = 7, fence at 13
        assert stats.q1 == 3.0 and stats.q3 == 7.0
        assert stats.outliers == (100.0,)
        assert stats.whisker_hi == 8.0

    def test_needs_samples(self):
        with pytest.raises(ValueError):
            box_stats([])


class TestRate:
    def test_perfect_csi(self):
        rng = np.random.default_rng(0)
        h = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        sigma2 = 0.5
        expected = np.log2(1 + np.vdot(h, h).real / sigma2)
        assert matched_filter_rate(h, h, sigma2) == pytest.approx(expected, rel=1e-12)

    def test_orthogonal_estimate_gives_zero(self):
        h = np.array([1.0, 0.0], dtype=complex)
        est = np.array([0.0, 1.0], dtype=complex)
        assert matched_filter_rate(est, h, 1.0) == 0.0

    def test_zero_estimate_convention(self):
        h = np.ones(4, dtype=complex)
        assert matched_filter_rate(np.zeros(4, dtype=complex), h, 1.0) == 0.0


class TestCsv:
    def test_empty_records_header_only(self, tmp_path):
        path = tmp_path / "empty.csv"
        emit_csv([], path)
        assert path.read_text() == "Algorithm,nAntennas,MSE,stderr,trials,seed\n"

    def test_roundtrip(self, tmp_path):
        records = [ResultRecord("GenieMMSE", "SNR", -10.0, "MSE", 0.5, 0.01, 100, 3),
                   ResultRecord("CircML", "SNR", 0.0, "MSE", 0.25, 0.005, 100, 3)]
        path = tmp_path / "r.csv"
        emit_csv(records, path)
        assert read_csv_records(path) == records

    def test_figure_column_layout(self, tmp_path):
        rec = ResultRecord("FastMMSE", "nAntennas", 16.0, "MSE", 0.1, 0.01, 10, 1)
        path = tmp_path / "cols.csv"
        emit_csv([rec], path)
        header = path.read_text().splitlines()[0].split(",")
        assert header == ["Algorithm", "nAntennas", "MSE", "stderr", "trials", "seed"]

    def test_rejects_mixed_records(self, tmp_path):
        records = [ResultRecord("A", "SNR", 0.0, "MSE", 1, 0, 1, 1),
                   ResultRecord("B", "nAntennas", 8.0, "MSE", 1, 0, 1, 1)]
        with pytest.raises(ValueError):
            emit_csv(records, tmp_path / "bad.csv")


class TestSweeps:
    def test_zero_estimator_unit_mse(self):
        """Power normalization: the all-zero estimate scores exactly 1."""
        cfg = _config(estimators=("Zero",), trials=400)
        point = resolve_point(cfg, 0, cfg.m)
        samples = collect_samples(cfg, point)["Zero"]
        stderr = samples.std(ddof=1) / np.sqrt(samples.size)
        assert abs(samples.mean() - 1.0) <= 3 * stderr

    def test_genie_beats_zero_at_0db(self):
        cfg = _config(estimators=("GenieMMSE",), trials=200)
        point = resolve_point(cfg, 0, cfg.m)
        samples = collect_samples(cfg, point)["GenieMMSE"]
        assert samples.mean() < 1.0

    def test_genie_floor_with_matched_seeds(self):
        """No estimator undercuts the genie beyond paired noise."""
        cfg = _config(estimators=("GenieMMSE", "CircML", "FastMMSE", "GenieOMP"),
                      trials=300)
        point = resolve_point(cfg, 0, cfg.m)
        samples = collect_samples(cfg, point)
        genie = samples["GenieMMSE"]
        for name in ("CircML", "FastMMSE", "GenieOMP"):
            diff = samples[name] - genie
            sem = diff.std(ddof=1) / np.sqrt(diff.size)
            assert diff.mean() >= -2 * sem, name

    def test_stderr_shrinks_with_trials(self):
        """Quadrupling the trial count halves the stderr within 20%."""
        small = _config(estimators=("FastMMSE",), trials=400)
        large = dataclasses.replace(small, trials=1600)
        rec_small = run_mse_sweep(small)[0]
        rec_large = run_mse_sweep(large)[0]
        ratio = rec_small.stderr / rec_large.stderr
        assert 2.0 * 0.8 <= ratio <= 2.0 * 1.2

    def test_mse_sweep_shapes_and_determinism(self, tmp_path):
        cfg = _config(estimators=("GenieMMSE", "CircML"), trials=40,
                      sweep_variable="nAntennas", sweep_values=(8, 12))
        records = run_mse_sweep(cfg)
        assert len(records) == 4
        assert {r.sweep_value for r in records} == {8.0, 12.0}
        path_a, path_b = tmp_path / "a.csv", tmp_path / "b.csv"
        emit_csv(records, path_a)
        emit_csv(run_mse_sweep(cfg), path_b)
        assert path_a.read_bytes() == path_b.read_bytes()

    def test_threaded_trials_match_serial(self):
        cfg = _config(estimators=("GenieMMSE", "CircML"), trials=60)
        point = resolve_point(cfg, 0, cfg.m)
        serial = collect_samples(cfg, point)
        threaded = collect_samples(dataclasses.replace(cfg, threads=4), point)
        for name in serial:
            assert np.array_equal(serial[name], threaded[name])

    def test_rate_sweep_requires_coherence_variable(self):
        cfg = _config(sweep_variable="nAntennas", sweep_values=(8,))
        with pytest.raises(ValueError):
            run_rate_sweep(cfg)

    def test_rate_sweep_records(self):
        cfg = _config(scenario_kind="placed_user", sigma_as_deg=5.0,
                      estimators=("GenieMMSE", "CircML"), trials=60,
                      sweep_variable="nCoherence", sweep_values=(1, 4),
                      metric="rate")
        records = run_rate_sweep(cfg)
        assert all(r.metric_name == "rate" and r.value >= 0 for r in records)
        assert len(records) == 4


class TestSubstreams:
    def test_keyed_streams_are_stable(self):
        a = substream(5, 2, 0, 7).standard_normal(4)
        b = substream(5, 2, 0, 7).standard_normal(4)
        assert np.array_equal(a, b)

    def test_distinct_keys_decorrelate(self):
        a = substream(5, 2, 0, 7).standard_normal(4)
        b = substream(5, 2, 0, 8).standard_normal(4)
        assert not np.array_equal(a, b)

    def test_snr_conversion(self):
        assert snr_db_to_sigma2(0.0) == 1.0
        assert snr_db_to_sigma2(10.0) == pytest.approx(0.1)


class TestCli:
    def _write_config(self, tmp_path, **over):
        payload = {
            "scenario": {"kind": "single_path", "sigma_as_deg": 2.0, "m": 8,
                         "n_snapshots": 1, "snr_db": 0.0},
            "estimators": ["GenieMMSE"],
            "sweep": {"variable": "nAntennas", "values": [8]},
            "trials": 1,
            "seed": 12,
            "out": str(tmp_path / "run.csv"),
        }
        payload.update(over)
        path = tmp_path / "config.json"
        path.write_text(json.dumps(payload))
        return path

    def test_single_trial_sweep_has_one_row(self, tmp_path):
        config = self._write_config(tmp_path)
        assert cli.main(["--config", str(config), "sweep", "--no-plot"]) == 0
        lines = (tmp_path / "run.csv").read_text().splitlines()
        assert len(lines) == 2   # header + one data row

    def test_seeded_runs_are_byte_identical(self, tmp_path):
        config = self._write_config(tmp_path, trials=25)
        out_a, out_b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (out_a, out_b):
            code = cli.main(["--config", str(config), "--seed", "777",
                             "--out", str(out), "--threads", "1",
                             "sweep", "--no-plot"])
            assert code == 0
        assert out_a.read_bytes() == out_b.read_bytes()

    def test_sweep_renders_figure(self, tmp_path):
        config = self._write_config(tmp_path, trials=5)
        assert cli.main(["--config", str(config), "sweep"]) == 0
        assert (tmp_path / "run.png").exists()

    def test_selftest_passes(self):
        assert cli.main(["selftest"]) == 0

    def test_config_error_exit_code(self, tmp_path):
        missing = tmp_path / "missing.json"
        assert cli.main(["--config", str(missing), "sweep"]) == 2

    def test_train_then_evaluate(self, tmp_path):
        config = self._write_config(
            tmp_path, trials=30, out=str(tmp_path / "model"),
            scenario={"kind": "three_path", "sigma_as_deg": 2.0, "m": 8,
                      "n_snapshots": 1, "snr_db": 0.0},
            training={"iterations": 30, "batch_size": 5, "stages": 1,
                      "validation_batches": 10, "checkpoint_every": 10,
                      "transform": "dft", "activation": "relu"})
        assert cli.main(["--config", str(config), "train"]) == 0
        model = tmp_path / "model.cnnest"
        assert model.exists()
        assert cli.main(["--config", str(config), "evaluate", str(model)]) == 0

    def test_boxplot_writes_stats(self, tmp_path):
        config = self._write_config(
            tmp_path, out=str(tmp_path / "box.csv"),
            scenario={"kind": "three_path", "sigma_as_deg": 2.0, "m": 8,
                      "n_snapshots": 1, "snr_db": 0.0},
            boxplot_repeats=2, boxplot_eval_trials=20,
            training={"iterations": 20, "batch_size": 4, "stages": 1,
                      "validation_batches": 8, "checkpoint_every": 10,
                      "transform": "dft", "activation": "relu"})
        assert cli.main(["--config", str(config), "boxplot", "--no-plot"]) == 0
        lines = (tmp_path / "box.csv").read_text().splitlines()
        assert lines[0].startswith("Group,median,q1,q3")
        assert len(lines) == 3
