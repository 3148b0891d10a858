#!/usr/bin/env python3
"""Regenerate the committed CLI fixtures under tests/data/.

The dump files are deterministic functions of the seeds below; rerunning
this script must reproduce them byte for byte.
"""

from pathlib import Path

import numpy as np

from ghm.core import heavy_tailed_gradient_norms, rng_from_seed

DATA = Path(__file__).resolve().parent.parent / "tests" / "data"


def write_cls_dump() -> None:
    # label-0 records make the gradient norm equal to p itself
    g = heavy_tailed_gradient_norms(5000, 42)
    lines = [f"p={value:.17g} label=0" for value in g]
    (DATA / "cls_heavy_tail.dump").write_text("\n".join(lines) + "\n", newline="\n")


def write_reg_dump() -> None:
    # tight residual bulk plus a visible population of far outliers
    rng = rng_from_seed(43)
    inliers = rng.normal(0.0, 0.02, 1900)
    signs = rng.choice([-1.0, 1.0], 100)
    outliers = signs * rng.uniform(1.0, 2.5, 100)
    d = np.concatenate([inliers, outliers])
    lines = [f"d={value:.17g}" for value in d]
    (DATA / "reg_residuals.dump").write_text("\n".join(lines) + "\n", newline="\n")


if __name__ == "__main__":
    DATA.mkdir(parents=True, exist_ok=True)
    write_cls_dump()
    write_reg_dump()
    print(f"fixtures written to {DATA}")
