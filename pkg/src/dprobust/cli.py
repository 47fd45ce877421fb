"""Command-line interface.

Subcommands: theory, sample, train, sweep, boxplot, attack, pareto.  All of
them are driven by a JSON config (``--config``); ``--seed`` overrides the
config seed, ``--out`` picks the output directory, ``--jobs`` bounds sweep
concurrency.  Exit codes: 0 success, 2 usage error, 3 numeric error,
4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import harness
from .config import ExperimentConfig, parse_experiment, parse_mixture
from .data import load_csv, save_csv
from .errors import NumericError, ParameterError, ShapeError, UsageError
from .evaluation import attack_key
from .harness import SweepGrid
from .mixture import NormFamily, sample
from .models import LinearModel, LossKind, load_checkpoint, save_checkpoint

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


def _load_config(args) -> dict:
    if args.config is None:
        raise UsageError("this command needs --config <path to JSON>")
    path = Path(args.config)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: top-level JSON value must be an object")
    return doc


def _experiment_from(doc: dict, args, extra_keys=()) -> ExperimentConfig:
    exp_doc = {k: v for k, v in doc.items() if k not in extra_keys}
    cfg = parse_experiment(exp_doc)
    if args.seed is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    return cfg


def _cmd_theory(args) -> int:
    doc = _load_config(args)
    if "mixture" not in doc:
        raise UsageError("theory config needs a 'mixture' object")
    spec = parse_mixture(doc["mixture"])
    gamma_grid = doc.get("gamma_grid")
    if gamma_grid is None:
        raise UsageError("theory config needs a 'gamma_grid' list")
    paths = harness.cmd_theory(
        spec, gamma_grid, b_grid=doc.get("b_grid"), out_dir=args.out,
        norm=NormFamily.parse(doc.get("norm", "linf")),
    )
    for p in paths:
        print(p)
    return EXIT_OK


def _cmd_sample(args) -> int:
    doc = _load_config(args)
    if "mixture" not in doc:
        raise UsageError("sample config needs a 'mixture' object")
    spec = parse_mixture(doc["mixture"])
    n = int(doc.get("n", 1000))
    seed = args.seed if args.seed is not None else int(doc.get("seed", 0))
    data = sample(spec, n, np.random.default_rng(seed))
    out = Path(args.out) / "dataset.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_csv(data, out)
    print(out)
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = _experiment_from(_load_config(args), args)
    record, result, _ = harness.run_experiment(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "checkpoint.json"
    save_checkpoint(result.model, ckpt)

    trace_rows = []
    for epoch in range(result.params_trace.shape[0]):
        loss = None if epoch == 0 else result.epoch_losses[epoch - 1]
        intercept = (result.params_trace[epoch, -1]
                     if isinstance(result.model, LinearModel) else None)
        trace_rows.append([epoch, loss, intercept])
    trace_path = harness.write_csv_atomic(
        out / "trace.csv", ["epoch", "mean_loss", "intercept"], trace_rows)

    header = list(harness.SWEEP_BASE_COLUMNS) + [
        attack_key(a.norm, a.gamma) for a in cfg.attacks
    ]
    run_path = harness.write_csv_atomic(
        out / "run.csv", header,
        [harness._sweep_row(cfg, record.config_digest, cfg.seed, record)],
    )
    print(ckpt)
    print(trace_path)
    print(run_path)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    doc = _load_config(args)
    sweep_doc = doc.get("sweep")
    if not isinstance(sweep_doc, dict):
        raise UsageError("sweep config needs a 'sweep' object with R_values/eta_values/seeds")
    base = _experiment_from(doc, args, extra_keys=("sweep",))
    grid = SweepGrid(
        R_values=tuple(sweep_doc.get("R_values", ())),
        eta_values=tuple(sweep_doc.get("eta_values", ())),
        seeds=int(sweep_doc.get("seeds", 1)),
        base=base,
    )
    path = harness.cmd_sweep(grid, Path(args.out) / "sweep.csv", jobs=args.jobs)
    print(path)
    return EXIT_OK


def _cmd_boxplot(args) -> int:
    doc = _load_config(args)
    if "n_seeds" not in doc:
        raise UsageError("boxplot config needs 'n_seeds'")
    base = _experiment_from(doc, args, extra_keys=("n_seeds",))
    path = harness.cmd_boxplot(base, int(doc["n_seeds"]), Path(args.out) / "boxplot.csv")
    print(path)
    return EXIT_OK


def _cmd_attack(args) -> int:
    doc = _load_config(args)
    if "checkpoint" not in doc:
        raise UsageError("attack config needs 'checkpoint' (path to a model JSON)")
    model = load_checkpoint(doc["checkpoint"])
    seed = args.seed if args.seed is not None else int(doc.get("seed", 0))
    if "dataset_path" in doc and doc["dataset_path"] is not None:
        dataset = load_csv(doc["dataset_path"])
    elif "mixture" in doc:
        spec = parse_mixture(doc["mixture"])
        n = int(doc.get("n_test", 10_000))
        dataset = sample(spec, n, np.random.default_rng(seed))
    else:
        raise UsageError("attack config needs 'dataset_path' or 'mixture'")
    loss = LossKind.parse(doc.get("loss", "logistic_binary"))
    path = harness.cmd_attack_eval(
        model, dataset, doc.get("attacks", []),
        Path(args.out) / "attack_eval.csv", loss,
        rng=np.random.default_rng(seed + 1),
    )
    print(path)
    return EXIT_OK


def _cmd_pareto(args) -> int:
    doc = _load_config(args)
    if "sweep_csv" not in doc:
        raise UsageError("pareto config needs 'sweep_csv' (path to a sweep output)")
    if "gamma_key" not in doc:
        raise UsageError("pareto config needs 'gamma_key' (e.g. rob_linf_0.075)")
    path = harness.cmd_pareto(
        doc["sweep_csv"], Path(args.out) / "pareto.csv", doc["gamma_key"])
    print(path)
    return EXIT_OK


_COMMANDS = {
    "theory": _cmd_theory,
    "sample": _cmd_sample,
    "train": _cmd_train,
    "sweep": _cmd_sweep,
    "boxplot": _cmd_boxplot,
    "attack": _cmd_attack,
    "pareto": _cmd_pareto,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None,
                        help="path to the JSON config document")
    common.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    common.add_argument("--out", type=str, default=".",
                        help="output directory (default: current directory)")
    common.add_argument("--jobs", type=int, default=1,
                        help="max concurrent sweep cells")
    parser = argparse.ArgumentParser(
        prog="dprobust",
        description="DP training and adversarial robustness on a Gaussian mixture",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    descriptions = {
        "theory": "emit closed-form intercept/error curves as CSV",
        "sample": "draw a mixture dataset and write it as CSV",
        "train": "run one training config; write checkpoint, trace, run row",
        "sweep": "run a (R, eta, seed) grid; resumable CSV output",
        "boxplot": "final intercepts across seeds for non-DP/clipped/DP runs",
        "attack": "evaluate a checkpoint under a list of attacks",
        "pareto": "filter a sweep CSV to its accuracy Pareto frontier",
    }
    for name, fn in _COMMANDS.items():
        sub.add_parser(name, parents=[common], help=descriptions[name])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (UsageError, ParameterError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
