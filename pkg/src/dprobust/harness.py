"""Sweep orchestration and CSV emission for the desk-scale experiments.

Every command is deterministic: identical config and seed produce
byte-identical CSV files.  Values are written with ``repr(float)`` (shortest
round-trip form), files are UTF-8 with LF line endings, and multi-row
outputs are written to a temp file and atomically renamed so an interrupted
run never leaves a truncated CSV behind.

Sweeps are resumable: each row is keyed by (config digest, seed index); rows
already present in the output file are kept as-is and never recomputed.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .attacks import AttackConfig, bim, fgsm, pgd, worst_case_linear
from .config import ExperimentConfig, derive_seed, parse_attack
from .data import Dataset, load_csv
from .dp import train
from .errors import UsageError
from .evaluation import RunRecord, attack_key, natural_accuracy, pareto_frontier
from .evaluation import robust_accuracy as eval_robust_accuracy
from .mixture import MixtureSpec, NormFamily, optimal_intercepts, optimal_robust_error
from .mixture import find_gamma_star, robust_error_intercept, sample
from .models import LinearModel, predict

SWEEP_BASE_COLUMNS = (
    "config_digest", "seed", "R", "eta", "optimizer", "clip_mode",
    "sigma_dp", "epoch", "natural_acc",
)

SUPPORTED_ATTACKS = ("fgsm", "bim", "pgd", "worst_case")


def _fmt(value) -> str:
    if value is None or value == "":
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv_atomic(path, header, rows) -> Path:
    """Write header + rows to a temp file, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    try:
        with tmp.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()
    return path


def read_csv_rows(path):
    """Header row plus data rows, all as lists of strings."""
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows:
        raise UsageError(f"{path}: empty CSV")
    return rows[0], rows[1:]


# ---------------------------------------------------------------------------
# running one experiment


def build_datasets(cfg: ExperimentConfig, root_seed: int):
    """Train and test datasets for a config, derived from one seed root."""
    ss = np.random.SeedSequence(root_seed)
    train_ss, test_ss = ss.spawn(2)
    if cfg.mixture is not None:
        train_set = sample(cfg.mixture, cfg.n_train, np.random.default_rng(train_ss))
        test_set = sample(cfg.mixture, cfg.n_test, np.random.default_rng(test_ss))
        return train_set, test_set
    data = load_csv(cfg.dataset_path)
    return data, data


def run_experiment(cfg: ExperimentConfig, *, train_seed: int | None = None):
    """Train once and measure natural plus per-attack robust accuracy.

    Returns ``(record, result, test_set)``.  ``train_seed`` overrides the
    seed root (the sweep derives it from digest and seed index); by default
    it is derived from the config's own digest and seed.
    """
    digest = cfg.digest()
    root = derive_seed(digest, cfg.seed) if train_seed is None else train_seed
    ss = np.random.SeedSequence(root)
    data_ss, model_ss, train_ss, attack_ss = ss.spawn(4)

    train_set, test_set = build_datasets(cfg, _seed_int(data_ss))
    model = cfg.model.build(train_set.dim, np.random.default_rng(model_ss))
    result = train(train_set, model, cfg.loss, cfg.dp, cfg.optimizer,
                   cfg.epochs, cfg.batch_size, _seed_int(train_ss))

    attack_rng = np.random.default_rng(attack_ss)
    record = RunRecord(
        config_digest=digest,
        seed=cfg.seed,
        intercept_trace=(
            [float(v) for v in result.intercept_trace]
            if isinstance(result.model, LinearModel) else []
        ),
        natural_accuracy=natural_accuracy(result.model, test_set),
        robust_accuracy={
            attack_key(a.norm, a.gamma): eval_robust_accuracy(
                result.model, test_set, a, cfg.loss, rng=attack_rng)
            for a in cfg.attacks
        },
        wall_time_s=result.wall_time_s,
        metadata=dict(cfg.metadata),
    )
    return record, result, test_set


def _seed_int(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, dtype=np.uint64)[0])


# ---------------------------------------------------------------------------
# theory command


def cmd_theory(spec: MixtureSpec, gamma_grid, b_grid=None, out_dir=".",
               norm=NormFamily.LINF):
    """Emit the closed-form curves: intercepts per gamma, errors per intercept."""
    norm = NormFamily.parse(norm)
    gammas = [float(g) for g in gamma_grid]
    if not gammas:
        raise UsageError("gamma grid must not be empty")
    if any(g < 0 for g in gammas):
        raise UsageError("gamma grid values must be >= 0")
    out_dir = Path(out_dir)

    gamma_rows = []
    for g in gammas:
        pair = optimal_intercepts(spec, g, norm)
        gamma_rows.append([g, pair.b_minus, pair.b_plus,
                           optimal_robust_error(spec, g, norm)])
    gamma_path = write_csv_atomic(
        out_dir / "theory_gamma.csv",
        ["gamma", "b_gamma", "b_gamma_plus", "optimal_robust_error"],
        gamma_rows,
    )

    if b_grid is None:
        lo = optimal_intercepts(spec, max(gammas), norm).b_minus - 1.0
        hi = optimal_intercepts(spec, 0.0, norm).b_minus + 1.0
        b_grid = np.linspace(lo, hi, 201)
    bs = [float(b) for b in b_grid]
    if not bs:
        raise UsageError("intercept grid must not be empty")
    err_cols = [f"robust_error_{norm.value}_{repr(g)}" for g in gammas]
    b_rows = []
    for b in bs:
        row = [b, robust_error_intercept(spec, b, 0.0, norm)]
        row.extend(robust_error_intercept(spec, b, g, norm) for g in gammas)
        b_rows.append(row)
    b_path = write_csv_atomic(
        out_dir / "theory_intercept.csv",
        ["b", "natural_error"] + err_cols,
        b_rows,
    )
    return gamma_path, b_path


# ---------------------------------------------------------------------------
# sweep command


@dataclass(frozen=True)
class SweepGrid:
    """Grid axes over clipping norm and learning rate, plus seeds per cell."""

    R_values: tuple
    eta_values: tuple
    seeds: int
    base: ExperimentConfig

    def __post_init__(self):
        object.__setattr__(self, "R_values", tuple(float(r) for r in self.R_values))
        object.__setattr__(self, "eta_values", tuple(float(e) for e in self.eta_values))
        if not self.R_values or not self.eta_values:
            raise UsageError("sweep axes must not be empty")
        if any(v <= 0 for v in self.R_values) or any(v <= 0 for v in self.eta_values):
            raise UsageError("sweep axis values must be positive")
        if self.seeds < 1:
            raise UsageError(f"seeds per cell must be >= 1, got {self.seeds}")
        if self.base.dp is None:
            raise UsageError("sweep needs a DP base config (the R axis sets the clip)")


def _sweep_columns(cfg: ExperimentConfig):
    return list(SWEEP_BASE_COLUMNS) + [attack_key(a.norm, a.gamma) for a in cfg.attacks]


def _sweep_row(cfg: ExperimentConfig, digest: str, seed: int, record: RunRecord):
    row = [
        digest, seed,
        cfg.dp.clip.R if cfg.dp is not None else None,
        cfg.optimizer.lr,
        cfg.optimizer.kind,
        cfg.dp.clip.kind if cfg.dp is not None else "none",
        cfg.dp.noise_multiplier if cfg.dp is not None else None,
        cfg.epochs,
        record.natural_accuracy,
    ]
    row.extend(record.robust_accuracy[attack_key(a.norm, a.gamma)] for a in cfg.attacks)
    return row


def cmd_sweep(grid: SweepGrid, out_path, jobs: int = 1) -> Path:
    """Run every (R, eta, seed) cell that is not already in the output CSV.

    Cells are independent; up to ``jobs`` run concurrently.  The file is
    rewritten whole (atomically) in grid order, reusing existing rows
    verbatim, so repeated invocations yield identical bytes.
    """
    out_path = Path(out_path)
    header = _sweep_columns(grid.base)

    existing: dict[tuple, list] = {}
    if out_path.exists():
        old_header, old_rows = read_csv_rows(out_path)
        if old_header != [str(c) for c in header]:
            raise UsageError(
                f"{out_path}: existing header does not match this sweep's schema"
            )
        for row in old_rows:
            existing[(row[0], row[1])] = row

    cells = []
    for ri, R in enumerate(grid.R_values):
        for ei, eta in enumerate(grid.eta_values):
            cfg = grid.base.with_overrides(R=R, lr=eta)
            digest = cfg.digest()
            for seed in range(grid.seeds):
                cells.append((ri * len(grid.eta_values) + ei, seed, cfg, digest))

    def run_cell(cell):
        _, seed, cfg, digest = cell
        record, _, _ = run_experiment(cfg, train_seed=derive_seed(digest, seed))
        return [_fmt(v) for v in _sweep_row(cfg, digest, seed, record)]

    todo = [c for c in cells if (c[3], str(c[1])) not in existing]
    if todo:
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                fresh = list(pool.map(run_cell, todo))
        else:
            fresh = [run_cell(c) for c in todo]
        for cell, row in zip(todo, fresh):
            existing[(cell[3], str(cell[1]))] = row

    rows = [existing[(digest, str(seed))] for _, seed, _, digest in cells]
    return write_csv_atomic(out_path, header, rows)


# ---------------------------------------------------------------------------
# boxplot command


def cmd_boxplot(base: ExperimentConfig, n_seeds: int, out_path) -> Path:
    """Final intercepts across seeds for non-DP, clipping-only, and DP training.

    Emits one row per (variant, seed) plus reference rows: the natural
    optimum b_0, and the attack budget (with its optimal intercept) at which
    the median DP intercept would be the optimal robust choice.
    """
    if n_seeds < 2:
        raise UsageError(f"n_seeds must be >= 2, got {n_seeds}")
    if base.mixture is None:
        raise UsageError("boxplot needs a mixture config (reference lines use it)")
    if base.dp is None:
        raise UsageError("boxplot needs a DP config for the clipped/noised variants")
    if base.model.kind != "linear":
        raise UsageError("boxplot reports linear-model intercepts")

    variants = [
        ("non_dp", base.with_overrides(dp_off=True)),
        ("clip_only", base.with_overrides(noise_multiplier=0.0)),
        ("dp", base),
    ]
    rows = []
    finals: dict[str, list] = {}
    for name, cfg in variants:
        digest = cfg.digest()
        finals[name] = []
        for seed in range(n_seeds):
            record, result, _ = run_experiment(
                cfg.with_overrides(seed=seed),
                train_seed=derive_seed(digest, seed),
            )
            b_final = float(result.model.b)
            finals[name].append(b_final)
            rows.append(["result", name, seed, b_final])

    spec = base.mixture
    b0 = optimal_intercepts(spec, 0.0).b_minus
    rows.append(["reference", "b0", None, b0])
    dp_median = float(np.median(finals["dp"]))
    if dp_median < b0:
        gamma_star = find_gamma_star(spec, dp_median)
        rows.append(["reference", "gamma_star", None, gamma_star])
        rows.append(["reference", "b_gamma_star", None,
                     optimal_intercepts(spec, gamma_star).b_minus])
    else:
        rows.append(["reference", "gamma_star", None, None])
        rows.append(["reference", "b_gamma_star", None, None])
    return write_csv_atomic(out_path, ["kind", "variant", "seed", "value"], rows)


# ---------------------------------------------------------------------------
# attack evaluation command


def empirical_attack_accuracy(model, dataset: Dataset, name: str,
                              cfg: AttackConfig, loss,
                              rng: np.random.Generator | None = None) -> float:
    """Accuracy under one named attack, actually running that attack."""
    if name == "worst_case":
        if not isinstance(model, LinearModel):
            raise UsageError("worst_case attack applies to linear models only")
        pert = worst_case_linear(model, dataset.X, dataset.y, cfg.gamma, cfg.norm)
        adv = dataset.X + pert
    elif name == "fgsm":
        adv = fgsm(model, dataset.X, dataset.y, cfg.gamma, loss, clamp=cfg.clamp)
    elif name == "bim":
        adv = bim(model, dataset.X, dataset.y, cfg, loss)
    elif name == "pgd":
        adv = pgd(model, dataset.X, dataset.y, cfg, loss, rng=rng)
    else:
        raise UsageError(
            f"unknown attack {name!r}; supported attacks: {', '.join(SUPPORTED_ATTACKS)}"
        )
    return float(np.mean(predict(model, adv) == dataset.y))


def cmd_attack_eval(model, dataset: Dataset, attack_docs, out_path, loss,
                    rng: np.random.Generator | None = None) -> Path:
    """One row per attack (natural accuracy first) in a fixed table layout."""
    nat = natural_accuracy(model, dataset)
    rows = [["natural", None, None, None, nat, None]]
    for i, doc in enumerate(attack_docs):
        doc = dict(doc)
        name = doc.pop("name", "pgd")
        if name not in SUPPORTED_ATTACKS:
            raise UsageError(
                f"unknown attack {name!r}; supported attacks: "
                f"{', '.join(SUPPORTED_ATTACKS)}"
            )
        cfg = parse_attack(doc, f"attacks[{i}]")
        acc = empirical_attack_accuracy(model, dataset, name, cfg, loss, rng=rng)
        rows.append([name, cfg.norm.value, cfg.gamma, cfg.steps, nat, acc])
    return write_csv_atomic(
        out_path,
        ["attack", "norm", "gamma", "steps", "natural_acc", "robust_acc"],
        rows,
    )


# ---------------------------------------------------------------------------
# pareto command


def cmd_pareto(in_path, out_path, gamma_key: str) -> Path:
    """Filter a sweep CSV down to its accuracy Pareto frontier."""
    header, rows = read_csv_rows(in_path)
    if "natural_acc" not in header:
        raise UsageError(f"{in_path}: no natural_acc column")
    if gamma_key not in header:
        have = [c for c in header if c.startswith("rob_")]
        raise UsageError(f"{in_path}: no column {gamma_key!r}; robust columns: {have}")
    nat_i = header.index("natural_acc")
    rob_i = header.index(gamma_key)
    records = []
    for row in rows:
        records.append(RunRecord(
            config_digest=row[0], seed=int(row[1]),
            natural_accuracy=float(row[nat_i]),
            robust_accuracy={gamma_key: float(row[rob_i])},
        ))
    keep = pareto_frontier(records, gamma_key)
    keep_ids = {id(r) for r in keep}
    kept_rows = [row for row, rec in zip(rows, records) if id(rec) in keep_ids]
    return write_csv_atomic(out_path, header, kept_rows)
