"""Command-line entry point.

Subcommands:
  train     fit a CNN estimator per the config's training budget, save it
  evaluate  load saved models and report their MSE on the config scenario
  sweep     reproduce a figure: Monte Carlo sweep to CSV plus a rendered plot
  boxplot   repeated-training spread experiment (hierarchical vs basic)
  selftest  run the built-in oracle/invariant battery
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from . import channel, harness, learning, report, selftest


def _load_config(args):
    if not args.config:
        raise ValueError("--config is required for this command")
    config = harness.ExperimentConfig.from_json(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out"] = args.out
    if args.threads is not None:
        overrides["threads"] = args.threads
    if overrides:
        config = dataclasses.replace(config, **overrides)
    if args.iters is not None:
        config = dataclasses.replace(
            config, training=dataclasses.replace(config.training, iterations=args.iters))
    return config


def _figure_path(csv_path):
    base, _ = os.path.splitext(csv_path)
    return base + ".png"


def cmd_train(args):
    config = _load_config(args)
    point = harness.resolve_point(config, 0, config.m)
    budget = config.training
    train_cfg = learning.TrainingConfig(
        prior=config.prior, m=point.m, n_snapshots=point.n_snapshots,
        sigma2=point.sigma2, transform=budget.transform,
        activation=budget.activation, iterations=budget.iterations,
        batch_size=budget.batch_size, step_size=budget.step_size,
        validation_batches=budget.validation_batches,
        checkpoint_every=budget.checkpoint_every,
        quadrature_points=config.quadrature_points)
    rng = harness.substream(config.seed, 0, harness._ROLE_BUILDER_BASE)
    params, history = learning.hierarchical_train(train_cfg, budget.beta,
                                                  budget.stages, rng)
    out = config.out if config.out.endswith(".cnnest") else config.out + ".cnnest"
    learning.save_model(out, params, point.n_snapshots, point.sigma2)
    final_loss = history[-1][-1][1] if history and history[-1] else float("nan")
    print(f"saved {out} (final minibatch loss {final_loss:.6g})")
    return 0


def cmd_evaluate(args):
    config = _load_config(args)
    for path in args.models:
        payload, n_snapshots, sigma2 = learning.load_model(path)
        rng = harness.substream(config.seed, harness._ROLE_EVAL)
        batches, _ = channel.draw_scenario_batches(
            config.prior, config.trials, config.m, n_snapshots, sigma2,
            None, rng, config.quadrature_points)
        samples = []
        for batch in batches:
            if isinstance(payload, learning.CnnParams):
                est = learning.cnn_estimate(payload, batch)
            else:
                from .estimators import structured_estimate
                est = structured_estimate(payload, batch)
            err = batch.channels - est
            samples.append(float(np.sum(np.abs(err) ** 2)) / (batch.m * batch.n_snapshots))
        samples = np.asarray(samples)
        stderr = samples.std(ddof=1) / np.sqrt(samples.size) if samples.size > 1 else 0.0
        print(f"{path}: MSE {samples.mean():.6f} +- {stderr:.6f} "
              f"({samples.size} trials, T={n_snapshots}, sigma2={sigma2:g})")
    return 0


def cmd_sweep(args):
    config = _load_config(args)
    if config.metric == "rate":
        records = harness.run_rate_sweep(config)
    else:
        records = harness.run_mse_sweep(config)
    harness.emit_csv(records, config.out)
    print(f"wrote {config.out} ({len(records)} rows)")
    if not args.no_plot:
        figure = report.render_sweep(records, _figure_path(config.out))
        print(f"wrote {figure}")
    return 0


def cmd_boxplot(args):
    config = _load_config(args)
    groups = {}
    for label, hierarchical in (("Hierarchical", True), ("Basic", False)):
        groups[label] = harness.run_training_repeats(
            config, config.boxplot_repeats, hierarchical=hierarchical,
            activation=config.training.activation,
            eval_trials=config.boxplot_eval_trials)
    harness.emit_box_csv(groups, config.out)
    print(f"wrote {config.out}")
    if not args.no_plot:
        figure = report.render_box(groups, _figure_path(config.out))
        print(f"wrote {figure}")
    return 0


def cmd_selftest(args):
    return 0 if selftest.run() else 1


def build_parser():
    parser = argparse.ArgumentParser(prog="chanest",
                                     description="channel-estimation laboratory")
    parser.add_argument("--config", help="experiment config (JSON)")
    parser.add_argument("--seed", type=int, help="override master seed")
    parser.add_argument("--out", help="override output path")
    parser.add_argument("--threads", type=int, help="worker threads for trials")
    parser.add_argument("--iters", type=int, help="override training iterations")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("train", help="train a CNN estimator and save it")
    evaluate = sub.add_parser("evaluate", help="evaluate saved models on one scenario")
    evaluate.add_argument("models", nargs="+", help="model files")
    sweep = sub.add_parser("sweep", help="run a figure sweep to CSV (plus plot)")
    sweep.add_argument("--no-plot", action="store_true")
    boxplot = sub.add_parser("boxplot", help="training-spread experiment")
    boxplot.add_argument("--no-plot", action="store_true")
    sub.add_parser("selftest", help="run the oracle/invariant battery")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"train": cmd_train, "evaluate": cmd_evaluate, "sweep": cmd_sweep,
                "boxplot": cmd_boxplot, "selftest": cmd_selftest}
    try:
        return handlers[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
