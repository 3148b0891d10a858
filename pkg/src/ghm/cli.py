"""Command-line surface: distribution analysis, curve tables, benchmarks
and toy experiments, all emitting plot-ready CSV.

Input dumps are plain text, one record per line of ``key=value`` tokens:
``p=0.93 label=1`` for classification, ``d=-0.041`` for regression.  Blank
lines and lines starting with ``#`` are skipped.  All tables use a header
row, LF line endings and 9 significant digits, so outputs are byte-stable
for a given input.  Empty bins report a fraction of 0 and the sentinel
value -999 instead of log10(0); undefined harmonized-curve points (grid
positions whose reference bin is empty) use the same sentinel.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .cls_loss import focal_loss
from .core import ClassificationBatch, rng_from_seed, validate_residuals
from .density import (
    bin_index,
    build_histogram,
    density_all_naive,
    density_at,
    density_for_weighting,
    density_from_histogram,
    density_sorted_scan,
    ema_update,
)
from .reg_loss import DEFAULT_DELTA, DEFAULT_MU, gradient_norm_reg, sl1_grad
from .trainer import (
    CLS_LOSSES,
    REG_LOSSES,
    ClsDatasetSpec,
    GhmConfig,
    OptimizerConfig,
    RegDatasetSpec,
    gen_cls_dataset,
    gen_reg_dataset,
    train_classifier,
    train_regressor,
)

__all__ = ["main", "run_density_benchmark"]

SENTINEL = -999.0

_CLS_DEFAULT_BINS = 30
_REG_DEFAULT_BINS = 10


# --------------------------------------------------------------------------
# Shared I/O helpers
# --------------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    return format(float(value), ".9g")


def _write_table(path: str | None, header: list[str], rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    text = "\n".join(lines) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8", newline="\n")


def _parse_record(line: str, lineno: int, path: str, fields: tuple[str, ...]) -> dict:
    record = {}
    for token in line.split():
        key, sep, value = token.partition("=")
        if not sep or key not in fields:
            raise ValueError(f"{path}: line {lineno}: unexpected token {token!r}")
        try:
            record[key] = float(value)
        except ValueError:
            raise ValueError(
                f"{path}: line {lineno}: field {key} is not a number: {value!r}"
            ) from None
    missing = [f for f in fields if f not in record]
    if missing:
        raise ValueError(f"{path}: line {lineno}: missing field(s) {', '.join(missing)}")
    return record


def _read_dump(path: str, fields: tuple[str, ...]) -> list[dict]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ValueError(f"cannot read {path}: {exc}") from None
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        records.append(_parse_record(stripped, lineno, path, fields))
    if not records:
        raise ValueError(f"{path}: no records")
    return records


def parse_classification_dump(path: str) -> ClassificationBatch:
    """Read ``p=... label=...`` lines into a validated batch."""
    records = _read_dump(path, ("p", "label"))
    labels = []
    for i, rec in enumerate(records):
        if rec["label"] not in (0.0, 1.0):
            raise ValueError(f"{path}: record {i}: label must be 0 or 1")
        labels.append(int(rec["label"]))
    return ClassificationBatch(
        p=np.array([rec["p"] for rec in records]),
        label=np.array(labels, dtype=np.int64),
    )


def parse_residual_dump(path: str) -> np.ndarray:
    """Read ``d=...`` lines into a finite residual array."""
    records = _read_dump(path, ("d",))
    return validate_residuals([rec["d"] for rec in records])


def _grid_centers(count: int, hi: float) -> np.ndarray:
    if count < 1:
        raise ValueError("grid must have at least one point")
    return (np.arange(count) + 0.5) * (hi / count)


# --------------------------------------------------------------------------
# analyze
# --------------------------------------------------------------------------


def cmd_analyze(args) -> int:
    bins = args.bins if args.bins is not None else (
        _CLS_DEFAULT_BINS if args.kind == "cls" else _REG_DEFAULT_BINS
    )
    if args.kind == "cls":
        batch = parse_classification_dump(args.input)
        g = np.abs(batch.p - batch.label)
    else:
        d = parse_residual_dump(args.input)
        g = gradient_norm_reg(d, args.mu)
    epsilon = args.epsilon if args.epsilon is not None else 1.0 / bins
    n = g.size
    hist = build_histogram(g, bins)
    centers = _grid_centers(bins, 1.0)
    rows = []
    for j in range(bins):
        count = int(hist.raw_counts[j])
        fraction = count / n
        log_fraction = np.log10(fraction) if count > 0 else SENTINEL
        rows.append(
            (
                centers[j],
                count,
                fraction,
                log_fraction,
                density_at(g, centers[j], epsilon),
                density_from_histogram(hist, centers[j]),
            )
        )
    _write_table(
        args.output,
        ["bin_center", "count", "fraction", "log10_fraction", "exact_density", "approx_density"],
        rows,
    )
    return 0


# --------------------------------------------------------------------------
# curve
# --------------------------------------------------------------------------


def _reference_weights(
    norms: np.ndarray,
    bins: int,
    queries: np.ndarray,
    use_ema: bool = False,
    alpha: float = 0.75,
) -> np.ndarray:
    """Harmonizing weight a hypothetical example at each query norm would get
    against a fixed reference distribution.

    Raw mode reports the sentinel where the reference bin is empty; EMA mode
    applies the floored smoothed density instead, which caps the weight and
    keeps the curve defined everywhere.
    """
    hist = build_histogram(norms, bins, momentum=alpha)
    if use_ema:
        hist = ema_update(hist, hist.raw_counts)
        dens = density_for_weighting(hist, queries, use_ema=True)
        return norms.size / dens
    counts = hist.raw_counts[bin_index(queries, bins)]
    with np.errstate(divide="ignore"):
        beta = norms.size / (counts * float(bins))
    return np.where(counts > 0, beta, SENTINEL)


def cmd_curve(args) -> int:
    loss = args.loss
    if loss in ("ce", "fl", "ghm-c"):
        xs = _grid_centers(args.grid, 1.0)
        if loss == "ce":
            contributions = xs.copy()
        elif loss == "fl":
            _, grad = focal_loss(xs, np.zeros(xs.size, dtype=np.int64), args.gamma, args.alpha_balance)
            contributions = np.abs(grad)
        else:
            if args.input is None:
                raise ValueError("ghm-c curve requires --input with a reference distribution")
            batch = parse_classification_dump(args.input)
            g_ref = np.abs(batch.p - batch.label)
            bins = args.bins if args.bins is not None else _CLS_DEFAULT_BINS
            beta = _reference_weights(g_ref, bins, xs, args.use_ema, args.alpha)
            contributions = np.where(beta == SENTINEL, SENTINEL, beta * xs)
    else:
        xs = _grid_centers(args.grid, args.dmax)
        if loss == "sl1":
            contributions = np.abs(sl1_grad(xs, args.delta))
        elif loss == "asl1":
            contributions = gradient_norm_reg(xs, args.mu)
        else:  # ghm-r
            if args.input is None:
                raise ValueError("ghm-r curve requires --input with a reference distribution")
            d_ref = parse_residual_dump(args.input)
            gr_ref = gradient_norm_reg(d_ref, args.mu)
            bins = args.bins if args.bins is not None else _REG_DEFAULT_BINS
            gr_x = gradient_norm_reg(xs, args.mu)
            beta = _reference_weights(gr_ref, bins, gr_x, args.use_ema, args.alpha)
            contributions = np.where(beta == SENTINEL, SENTINEL, beta * gr_x)
    _write_table(args.output, ["x", "contribution"], zip(xs, contributions))
    return 0


# --------------------------------------------------------------------------
# bench
# --------------------------------------------------------------------------

_AGREEMENT_CAP = 2000  # agreement checks run on a prefix to stay affordable


def run_density_benchmark(ns, ms, estimators, repetitions, seed):
    """Time the density estimators and cross-check their outputs.

    Returns ``(timing_rows, agreement_rows)``.  Timing rows carry one entry
    per repetition plus ``median`` rows and, when both sides are present, a
    ``speedup_naive_vs_histogram`` row per (n, m).  Agreement rows compare
    naive against the sorted scan on the benchmark draw and the exact
    estimator against the histogram on a bin-center-snapped copy (where the
    two are defined to coincide), on a prefix of at most 2000 examples.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be at least 1")
    for n in ns:
        if n < 1:
            raise ValueError("every N must be at least 1")
    for m in ms:
        if m < 1:
            raise ValueError("every M must be at least 1")
    unknown = set(estimators) - {"naive", "sorted", "histogram"}
    if unknown:
        raise ValueError(f"unknown estimator(s): {', '.join(sorted(unknown))}")

    rng = rng_from_seed(seed)
    # One small call per jitted kernel so compilation stays out of the timings.
    warm = rng.random(16)
    density_all_naive(warm, 0.5)
    density_sorted_scan(warm, 0.5)

    timing_rows = []
    agreement_rows = []
    for n in ns:
        gs = rng.random(n)
        for m in ms:
            epsilon = 1.0 / m
            medians = {}
            for name in estimators:
                times = []
                for rep in range(repetitions):
                    t0 = time.perf_counter()
                    if name == "naive":
                        density_all_naive(gs, epsilon)
                    elif name == "sorted":
                        density_sorted_scan(gs, epsilon)
                    else:
                        hist = build_histogram(gs, m)
                        density_from_histogram(hist, gs)
                    elapsed = time.perf_counter() - t0
                    times.append(elapsed)
                    timing_rows.append((name, n, m, str(rep), elapsed))
                medians[name] = float(np.median(times))
                timing_rows.append((name, n, m, "median", medians[name]))
            if "naive" in medians and "histogram" in medians and medians["histogram"] > 0:
                timing_rows.append(
                    (
                        "speedup_naive_vs_histogram",
                        n,
                        m,
                        "median",
                        medians["naive"] / medians["histogram"],
                    )
                )

            check = gs[: min(n, _AGREEMENT_CAP)]
            diff_exact = float(
                np.max(
                    np.abs(
                        density_all_naive(check, epsilon)
                        - density_sorted_scan(check, epsilon)
                    )
                )
            )
            agreement_rows.append((check.size, m, "naive_vs_sorted", diff_exact))
            snapped = (bin_index(check, m) + 0.5) / m
            hist = build_histogram(snapped, m)
            diff_hist = float(
                np.max(
                    np.abs(
                        density_all_naive(snapped, epsilon)
                        - density_from_histogram(hist, snapped)
                    )
                )
            )
            agreement_rows.append(
                (check.size, m, "exact_vs_histogram_clustered", diff_hist)
            )
    return timing_rows, agreement_rows


def cmd_bench(args) -> int:
    timing_rows, agreement_rows = run_density_benchmark(
        args.n, args.m, args.estimators, args.reps, args.seed
    )
    _write_table(args.output, ["estimator", "n", "m", "rep", "seconds"], timing_rows)
    if args.agreement_output is not None:
        _write_table(
            args.agreement_output,
            ["n", "m", "check", "max_abs_diff"],
            agreement_rows,
        )
    return 0


# --------------------------------------------------------------------------
# train
# --------------------------------------------------------------------------

_CONFIG_KEYS = {"task", "dataset", "optimizer", "ghm", "arms", "seeds", "focal", "mu", "delta"}
_FOCAL_KEYS = {"gamma", "alpha_balance"}


def _build_from_dict(cls, data, errors, prefix):
    try:
        return cls(**data)
    except TypeError as exc:
        errors.append(f"{prefix}: {exc}")
    except ValueError as exc:
        errors.append(f"{prefix}: {exc}")
    return None


def load_train_config(path: str) -> dict:
    """Parse and validate a training config, reporting every bad field at once."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValueError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: config must be a JSON object")

    errors: list[str] = []
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        errors.append(f"unknown key(s): {', '.join(sorted(unknown))}")

    task = raw.get("task")
    if task not in ("classification", "regression"):
        errors.append("task: must be 'classification' or 'regression'")
        task = "classification"
    arm_choices = CLS_LOSSES if task == "classification" else REG_LOSSES

    arms = raw.get("arms")
    if not isinstance(arms, list) or not arms:
        errors.append("arms: must be a non-empty list")
        arms = []
    else:
        bad = [a for a in arms if a not in arm_choices]
        if bad:
            errors.append(f"arms: unknown value(s) {bad}; choose from {list(arm_choices)}")

    seeds = raw.get("seeds")
    if (
        not isinstance(seeds, list)
        or not seeds
        or not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds)
    ):
        errors.append("seeds: must be a non-empty list of integers")
        seeds = []

    dataset_raw = raw.get("dataset")
    if not isinstance(dataset_raw, dict):
        errors.append("dataset: must be an object")
        dataset_raw = {}
    if "seed" in dataset_raw:
        errors.append("dataset.seed: omit it; the per-run seeds list is used instead")
        dataset_raw = {k: v for k, v in dataset_raw.items() if k != "seed"}
    spec_cls = ClsDatasetSpec if task == "classification" else RegDatasetSpec
    dataset_spec = _build_from_dict(spec_cls, {**dataset_raw, "seed": 0}, errors, "dataset")

    optimizer_raw = raw.get("optimizer")
    if not isinstance(optimizer_raw, dict):
        errors.append("optimizer: must be an object")
        optimizer_raw = {"learning_rate": 0.1}
    optimizer = _build_from_dict(OptimizerConfig, optimizer_raw, errors, "optimizer")

    ghm_raw = raw.get("ghm", {})
    if not isinstance(ghm_raw, dict):
        errors.append("ghm: must be an object")
        ghm_raw = {}
    ghm = _build_from_dict(GhmConfig, ghm_raw, errors, "ghm")

    focal_raw = raw.get("focal", {})
    if not isinstance(focal_raw, dict) or set(focal_raw) - _FOCAL_KEYS:
        errors.append(f"focal: must be an object with keys among {sorted(_FOCAL_KEYS)}")
        focal_raw = {}

    mu = raw.get("mu", DEFAULT_MU)
    delta = raw.get("delta", DEFAULT_DELTA)
    if not isinstance(mu, (int, float)) or mu <= 0:
        errors.append("mu: must be a positive number")
    if not isinstance(delta, (int, float)) or delta <= 0:
        errors.append("delta: must be a positive number")

    if errors:
        raise ValueError(f"{path}: invalid config: " + "; ".join(errors))
    return {
        "task": task,
        "arms": arms,
        "seeds": seeds,
        "dataset": dataset_spec,
        "optimizer": optimizer,
        "ghm": ghm,
        "focal": focal_raw,
        "mu": float(mu),
        "delta": float(delta),
    }


def _run_train_arm(config: dict, arm: str, seed: int):
    spec = replace(config["dataset"], seed=seed)
    if config["task"] == "classification":
        dataset = gen_cls_dataset(spec)
        return train_classifier(
            dataset,
            arm,
            config["optimizer"],
            config["ghm"],
            seed=seed,
            focal_gamma=config["focal"].get("gamma", 2.0),
            focal_alpha_balance=config["focal"].get("alpha_balance", 0.25),
        )
    dataset = gen_reg_dataset(spec)
    return train_regressor(
        dataset,
        arm,
        config["optimizer"],
        config["ghm"],
        mu=config["mu"],
        delta=config["delta"],
        seed=seed,
    )


def cmd_train(args) -> int:
    config = load_train_config(args.config)
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    if config["task"] == "classification":
        metric_names = ["precision", "recall", "f1"]
    else:
        metric_names = ["median_abs_error", "median_abs_error_inliers"]

    summary_rows = []
    for arm in config["arms"]:
        rows = []
        finals = []
        metric_values = {name: [] for name in metric_names}
        for seed in config["seeds"]:
            report = _run_train_arm(config, arm, seed)
            final_loss = float(report.loss_curve[-1])
            finals.append(final_loss)
            row = [seed, final_loss]
            for name in metric_names:
                value = report.final_metrics.get(name, float("nan"))
                metric_values[name].append(value)
                row.append(value)
            rows.append(row)
        _write_table(
            str(outdir / f"arm_{arm}.csv"),
            ["seed", "final_loss", *metric_names],
            rows,
        )
        summary_rows.append(
            [arm, float(np.mean(finals)), float(np.std(finals))]
            + [float(np.mean(metric_values[name])) for name in metric_names]
        )
    # the across-seed spread of final losses doubles as a stability readout
    _write_table(
        str(outdir / "summary.csv"),
        ["arm", "mean_final_loss", "std_final_loss", *[f"mean_{m}" for m in metric_names]],
        summary_rows,
    )
    return 0


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ghm",
        description="Gradient-norm statistics, density estimators and harmonized losses.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="per-bin distribution table from a prediction dump")
    p.add_argument("--input", required=True, help="dump file (p/label or d records)")
    p.add_argument("--kind", choices=("cls", "reg"), required=True)
    p.add_argument("--bins", "-M", type=int, default=None, help="unit regions (default 30 cls / 10 reg)")
    p.add_argument("--epsilon", type=float, default=None, help="exact-density window (default 1/bins)")
    p.add_argument("--mu", type=float, default=DEFAULT_MU)
    p.add_argument("--output", default=None, help="CSV path (default stdout)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("curve", help="reformulated gradient-contribution curve")
    p.add_argument("--loss", choices=("ce", "fl", "ghm-c", "sl1", "asl1", "ghm-r"), required=True)
    p.add_argument("--input", default=None, help="reference dump (required for ghm-* losses)")
    p.add_argument("--bins", "-M", type=int, default=None)
    p.add_argument("--grid", type=int, default=100, help="number of grid cells (centers are emitted)")
    p.add_argument("--dmax", type=float, default=1.0, help="upper |d| for regression curves")
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--alpha-balance", type=float, default=0.25)
    p.add_argument("--mu", type=float, default=DEFAULT_MU)
    p.add_argument("--delta", type=float, default=DEFAULT_DELTA)
    p.add_argument(
        "--use-ema",
        action="store_true",
        help="weight ghm-* curves with floored EMA densities instead of raw counts",
    )
    p.add_argument("--alpha", type=float, default=0.75, help="EMA momentum")
    p.add_argument("--output", default=None)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("bench", help="time the density estimators against each other")
    p.add_argument("--n", type=int, nargs="+", required=True)
    p.add_argument("--m", type=int, nargs="+", default=[30])
    p.add_argument(
        "--estimators",
        nargs="+",
        choices=("naive", "sorted", "histogram"),
        default=["naive", "sorted", "histogram"],
    )
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", default=None, help="timing CSV (default stdout)")
    p.add_argument(
        "--agreement-output",
        default=None,
        help="also write the deterministic estimator cross-check table",
    )
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("train", help="run configured training arms and summarize")
    p.add_argument("--config", required=True, help="JSON experiment description")
    p.add_argument("--output", required=True, help="directory for per-arm and summary CSVs")
    p.set_defaults(func=cmd_train)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        message = " ".join(str(exc).splitlines())
        print(f"error: {message}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
