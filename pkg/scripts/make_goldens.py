#!/usr/bin/env python3
"""Regenerate the committed golden CLI outputs under tests/goldens/.

Every command below is deterministic for the committed fixtures, so this
script must reproduce the goldens byte for byte on the same platform.
Timing tables are inherently non-reproducible and are therefore not
goldened; for bench only the agreement cross-check table is kept.
"""

from pathlib import Path

from ghm.cli import main

ROOT = Path(__file__).resolve().parent.parent
DATA = ROOT / "tests" / "data"
GOLD = ROOT / "tests" / "goldens"

CLS_DUMP = str(DATA / "cls_heavy_tail.dump")
REG_DUMP = str(DATA / "reg_residuals.dump")


def run(*argv: str) -> None:
    rc = main(list(argv))
    if rc != 0:
        raise SystemExit(f"command failed ({rc}): {' '.join(argv)}")


if __name__ == "__main__":
    GOLD.mkdir(parents=True, exist_ok=True)
    run("analyze", "--input", CLS_DUMP, "--kind", "cls", "--bins", "10",
        "--output", str(GOLD / "analyze_cls.csv"))
    run("analyze", "--input", REG_DUMP, "--kind", "reg",
        "--output", str(GOLD / "analyze_reg.csv"))

    run("curve", "--loss", "ce", "--output", str(GOLD / "curve_ce.csv"))
    run("curve", "--loss", "fl", "--output", str(GOLD / "curve_fl.csv"))
    run("curve", "--loss", "ghm-c", "--input", CLS_DUMP, "--bins", "30",
        "--output", str(GOLD / "curve_ghmc.csv"))
    run("curve", "--loss", "sl1", "--dmax", "0.5",
        "--output", str(GOLD / "curve_sl1.csv"))
    run("curve", "--loss", "asl1", "--dmax", "0.5",
        "--output", str(GOLD / "curve_asl1.csv"))
    run("curve", "--loss", "ghm-r", "--input", REG_DUMP, "--dmax", "0.5",
        "--output", str(GOLD / "curve_ghmr.csv"))

    run("bench", "--n", "200", "500", "--m", "10", "--reps", "2", "--seed", "0",
        "--output", "/dev/null",
        "--agreement-output", str(GOLD / "bench_agreement.csv"))

    run("train", "--config", str(DATA / "train_cls_small.json"),
        "--output", str(GOLD / "train_cls"))
    run("train", "--config", str(DATA / "train_reg_small.json"),
        "--output", str(GOLD / "train_reg"))
    print(f"goldens written to {GOLD}")
