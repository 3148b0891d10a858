"""Shared list of CLI golden-file cases (used by the CLI tests and the
acceptance suite).  Regenerate the goldens with scripts/make_goldens.py."""

from pathlib import Path

DATA = Path(__file__).parent / "data"
GOLDENS = Path(__file__).parent / "goldens"
CLS_DUMP = str(DATA / "cls_heavy_tail.dump")
REG_DUMP = str(DATA / "reg_residuals.dump")

TABLE_CASES = [
    ("analyze_cls.csv",
     ["analyze", "--input", CLS_DUMP, "--kind", "cls", "--bins", "10"]),
    ("analyze_reg.csv",
     ["analyze", "--input", REG_DUMP, "--kind", "reg"]),
    ("curve_ce.csv", ["curve", "--loss", "ce"]),
    ("curve_fl.csv", ["curve", "--loss", "fl"]),
    ("curve_ghmc.csv",
     ["curve", "--loss", "ghm-c", "--input", CLS_DUMP, "--bins", "30"]),
    ("curve_sl1.csv", ["curve", "--loss", "sl1", "--dmax", "0.5"]),
    ("curve_asl1.csv", ["curve", "--loss", "asl1", "--dmax", "0.5"]),
    ("curve_ghmr.csv",
     ["curve", "--loss", "ghm-r", "--input", REG_DUMP, "--dmax", "0.5"]),
]

BENCH_AGREEMENT_ARGS = [
    "bench", "--n", "200", "500", "--m", "10", "--reps", "2", "--seed", "0",
]

TRAIN_CASES = [
    ("train_cls_small.json", "train_cls"),
    ("train_reg_small.json", "train_reg"),
]
