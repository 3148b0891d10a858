import json
from pathlib import Path

import numpy as np
import pytest

from ghm.cli import (
    main,
    parse_classification_dump,
    parse_residual_dump,
    run_density_benchmark,
)

DATA = Path(__file__).parent / "data"
GOLDENS = Path(__file__).parent / "goldens"
CLS_DUMP = str(DATA / "cls_heavy_tail.dump")
REG_DUMP = str(DATA / "reg_residuals.dump")


def read_csv(path):
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:]]
    return header, rows


def column(path, name, convert=float):
    header, rows = read_csv(path)
    i = header.index(name)
    return [convert(row[i]) for row in rows]


class TestDumpParsing:
    def test_classification_roundtrip(self, tmp_path):
        dump = tmp_path / "small.dump"
        dump.write_text("p=0.9 label=1\n# comment\n\np=0.3 label=0\np=0.5 label=1\n")
        batch = parse_classification_dump(str(dump))
        np.testing.assert_array_equal(batch.p, [0.9, 0.3, 0.5])
        np.testing.assert_array_equal(batch.label, [1, 0, 1])

    def test_error_reports_line_number(self, tmp_path):
        dump = tmp_path / "bad.dump"
        dump.write_text("p=0.9 label=1\np=nope label=0\n")
        with pytest.raises(ValueError, match="line 2"):
            parse_classification_dump(str(dump))

    def test_missing_field_reported(self, tmp_path):
        dump = tmp_path / "bad.dump"
        dump.write_text("p=0.9\n")
        with pytest.raises(ValueError, match="missing field.*label"):
            parse_classification_dump(str(dump))

    def test_empty_file_rejected(self, tmp_path):
        dump = tmp_path / "empty.dump"
        dump.write_text("")
        with pytest.raises(ValueError, match="no records"):
            parse_classification_dump(str(dump))

    def test_residual_dump(self, tmp_path):
        dump = tmp_path / "r.dump"
        dump.write_text("d=0.25\nd=-1.5\n")
        np.testing.assert_array_equal(parse_residual_dump(str(dump)), [0.25, -1.5])


class TestAnalyze:
    def test_hand_binned_counts(self, tmp_path):
        dump = tmp_path / "three.dump"
        dump.write_text("p=0.9 label=1\np=0.3 label=0\np=0.5 label=1\n")
        out = tmp_path / "out.csv"
        rc = main(["analyze", "--input", str(dump), "--kind", "cls",
                   "--bins", "10", "--output", str(out)])
        assert rc == 0
        counts = column(out, "count", int)
        # decimal hand-binning puts g = 0.1, 0.3, 0.5 into 1-based bins
        # 2, 4, 6; in float64 however |0.9 - 1| = 0.09999999999999998,
        # which opens bin 1 instead (0.3 and 0.5 behave as on paper)
        expected = [0] * 10
        expected[0] = expected[3] = expected[5] = 1
        assert counts == expected

    def test_counts_sum_to_record_count(self, tmp_path):
        out = tmp_path / "out.csv"
        assert main(["analyze", "--input", CLS_DUMP, "--kind", "cls",
                     "--output", str(out)]) == 0
        assert sum(column(out, "count", int)) == 5000

    def test_empty_input_fails_with_single_line_error(self, tmp_path, capsys):
        dump = tmp_path / "empty.dump"
        dump.write_text("\n\n")
        rc = main(["analyze", "--input", str(dump), "--kind", "cls"])
        assert rc == 1
        err = capsys.readouterr().err
        assert err.startswith("error:") and "no records" in err
        assert err.strip().count("\n") == 0

    def test_heavy_tail_profile_decreases_then_upticks(self, tmp_path):
        out = tmp_path / "out.csv"
        assert main(["analyze", "--input", CLS_DUMP, "--kind", "cls",
                     "--bins", "10", "--output", str(out)]) == 0
        fraction = column(out, "fraction")
        assert all(fraction[i] > fraction[i + 1] for i in range(8))
        assert fraction[9] > fraction[8]

    def test_empty_bins_use_sentinel(self, tmp_path):
        dump = tmp_path / "two.dump"
        dump.write_text("p=0.05 label=0\np=0.95 label=0\n")
        out = tmp_path / "out.csv"
        assert main(["analyze", "--input", dump.as_posix(), "--kind", "cls",
                     "--bins", "10", "--output", str(out)]) == 0
        logf = column(out, "log10_fraction")
        fraction = column(out, "fraction")
        assert logf[1:9] == [-999.0] * 8
        assert fraction[1:9] == [0.0] * 8

    def test_reg_kind(self, tmp_path):
        out = tmp_path / "out.csv"
        assert main(["analyze", "--input", REG_DUMP, "--kind", "reg",
                     "--output", str(out)]) == 0
        assert sum(column(out, "count", int)) == 2000


class TestCurve:
    def test_ce_curve_is_identity(self, tmp_path):
        out = tmp_path / "out.csv"
        assert main(["curve", "--loss", "ce", "--grid", "20",
                     "--output", str(out)]) == 0
        xs = column(out, "x")
        contributions = column(out, "contribution")
        assert xs == contributions

    def test_asl1_value_at_mu(self, tmp_path):
        out = tmp_path / "out.csv"
        # single cell over [0, 0.04] puts the center exactly at |d| = 0.02
        assert main(["curve", "--loss", "asl1", "--grid", "1", "--dmax", "0.04",
                     "--output", str(out)]) == 0
        xs = column(out, "x")
        contributions = column(out, "contribution")
        assert xs == [0.02]
        assert contributions[0] == pytest.approx(0.70711, rel=1e-4)

    def test_ghm_requires_reference(self, capsys):
        assert main(["curve", "--loss", "ghm-c"]) == 1
        assert "requires --input" in capsys.readouterr().err

    def test_ghm_c_shape_against_ce(self, tmp_path):
        out = tmp_path / "out.csv"
        assert main(["curve", "--loss", "ghm-c", "--input", CLS_DUMP,
                     "--bins", "30", "--output", str(out)]) == 0
        xs = np.array(column(out, "x"))
        ghm = np.array(column(out, "contribution"))
        defined = ghm != -999.0
        # below the identity (CE) at both ends, above it somewhere in between
        assert ghm[defined][0] < xs[defined][0]
        assert ghm[defined][-1] < xs[defined][-1]
        middle = defined & (xs > 0.2) & (xs < 0.8)
        assert np.any(ghm[middle] > xs[middle])

    def test_ema_mode_floors_empty_reference_bins(self, tmp_path):
        out_raw = tmp_path / "raw.csv"
        out_ema = tmp_path / "ema.csv"
        base = ["curve", "--loss", "ghm-c", "--input", CLS_DUMP,
                "--bins", "30", "--grid", "10"]
        assert main([*base, "--output", str(out_raw)]) == 0
        assert main([*base, "--use-ema", "--output", str(out_ema)]) == 0
        raw = column(out_raw, "contribution")
        ema = column(out_ema, "contribution")
        assert raw[-1] == -999.0  # x = 0.95 hits an empty reference bin
        # floored EMA density caps the weight at N / (M * (1 - alpha))
        assert ema[-1] == pytest.approx(5000 / (30 * 0.25) * 0.95)
        # occupied bins are unchanged by a single-batch EMA
        assert raw[:-1] == ema[:-1]

    def test_sl1_saturates_at_one(self, tmp_path):
        out = tmp_path / "out.csv"
        assert main(["curve", "--loss", "sl1", "--grid", "50", "--dmax", "1.0",
                     "--output", str(out)]) == 0
        xs = np.array(column(out, "x"))
        contributions = np.array(column(out, "contribution"))
        assert np.all(contributions[xs > 1 / 9] == 1.0)


class TestBench:
    def test_small_run_structure(self):
        timing, agreement = run_density_benchmark(
            ns=[100], ms=[10], estimators=["naive", "sorted", "histogram"],
            repetitions=2, seed=0,
        )
        per_rep = [row for row in timing if row[3] not in ("median",)]
        assert len(per_rep) == 6  # 3 estimators x 2 reps
        assert all(row[4] >= 0.0 for row in timing)
        checks = {row[2]: row[3] for row in agreement}
        assert checks["naive_vs_sorted"] == 0.0
        assert checks["exact_vs_histogram_clustered"] <= 1e-9

    def test_speedup_row_present(self):
        timing, _ = run_density_benchmark(
            ns=[500], ms=[10], estimators=["naive", "histogram"],
            repetitions=2, seed=1,
        )
        speedups = [row for row in timing if row[0] == "speedup_naive_vs_histogram"]
        assert len(speedups) == 1 and speedups[0][4] > 0.0

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError, match="repetitions"):
            run_density_benchmark([10], [5], ["naive"], 0, 0)
        with pytest.raises(ValueError, match="every N"):
            run_density_benchmark([0], [5], ["naive"], 1, 0)

    def test_naive_to_sorted_ratio_grows_with_n(self):
        timing, _ = run_density_benchmark(
            ns=[1_000, 10_000, 100_000], ms=[30],
            estimators=["naive", "sorted"], repetitions=1, seed=2,
        )
        medians = {(row[0], row[1]): row[4] for row in timing if row[3] == "median"}
        ratios = [
            medians[("naive", n)] / medians[("sorted", n)]
            for n in (1_000, 10_000, 100_000)
        ]
        assert ratios[0] < ratios[1] < ratios[2]


class TestTrainCommand:
    def test_iterations_zero_rejected(self, tmp_path, capsys):
        config = {
            "task": "classification",
            "dataset": {"n_easy_neg": 10, "n_pos": 5, "n_outliers": 0},
            "optimizer": {"learning_rate": 0.1, "iterations": 0},
            "arms": ["ce"],
            "seeds": [1],
        }
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config))
        assert main(["train", "--config", str(path), "--output", str(tmp_path / "o")]) == 1
        assert "iterations" in capsys.readouterr().err

    def test_all_bad_fields_enumerated(self, tmp_path, capsys):
        config = {
            "task": "nonsense",
            "dataset": {"n_easy_neg": -1, "n_pos": 5, "n_outliers": 0},
            "optimizer": {"learning_rate": -0.1},
            "arms": [],
            "seeds": "not a list",
            "bogus": 1,
        }
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config))
        assert main(["train", "--config", str(path), "--output", str(tmp_path / "o")]) == 1
        err = capsys.readouterr().err
        for needle in ("task", "arms", "seeds", "unknown key", "learning_rate", "non-negative"):
            assert needle in err, f"missing {needle!r} in: {err}"

    def test_degenerate_ghm_matches_ce_files_exactly(self, tmp_path):
        config = {
            "task": "classification",
            "dataset": {"n_easy_neg": 150, "n_pos": 40, "n_outliers": 5},
            "optimizer": {"learning_rate": 0.3, "iterations": 120},
            "ghm": {"bins": 1},
            "arms": ["ce", "ghm_c"],
            "seeds": [11, 12],
        }
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config))
        outdir = tmp_path / "out"
        assert main(["train", "--config", str(path), "--output", str(outdir)]) == 0
        ce = (outdir / "arm_ce.csv").read_bytes()
        ghm = (outdir / "arm_ghm_c.csv").read_bytes()
        assert ce == ghm

    def test_summary_prefers_ghm_on_imbalanced_fixture(self, tmp_path):
        outdir = tmp_path / "out"
        assert main(["train", "--config", str(DATA / "train_cls_small.json"),
                     "--output", str(outdir)]) == 0
        recalls = dict(zip(
            column(outdir / "summary.csv", "arm", str),
            column(outdir / "summary.csv", "mean_recall"),
        ))
        assert recalls["ghm_c"] >= recalls["ce"]


class TestGoldenFiles:
    """Byte-for-byte comparison of CLI outputs against committed goldens.

    Regenerate with scripts/make_goldens.py after an intentional change.
    """

    @pytest.mark.parametrize(
        "golden,argv",
        [
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
        ],
    )
    def test_table_outputs(self, tmp_path, golden, argv):
        out = tmp_path / "out.csv"
        assert main([*argv, "--output", str(out)]) == 0
        assert out.read_bytes() == (GOLDENS / golden).read_bytes()

    def test_bench_agreement_table(self, tmp_path):
        out = tmp_path / "agree.csv"
        rc = main(["bench", "--n", "200", "500", "--m", "10", "--reps", "2",
                   "--seed", "0", "--output", str(tmp_path / "timing.csv"),
                   "--agreement-output", str(out)])
        assert rc == 0
        assert out.read_bytes() == (GOLDENS / "bench_agreement.csv").read_bytes()

    @pytest.mark.parametrize("config,subdir", [
        ("train_cls_small.json", "train_cls"),
        ("train_reg_small.json", "train_reg"),
    ])
    def test_train_outputs(self, tmp_path, config, subdir):
        outdir = tmp_path / "out"
        assert main(["train", "--config", str(DATA / config),
                     "--output", str(outdir)]) == 0
        golden_dir = GOLDENS / subdir
        produced = sorted(p.name for p in outdir.iterdir())
        assert produced == sorted(p.name for p in golden_dir.iterdir())
        for name in produced:
            assert (outdir / name).read_bytes() == (golden_dir / name).read_bytes(), name
