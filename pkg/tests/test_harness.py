"""Experiment harness: synthetic inputs, records on disk, curves, sweeps, CLI."""

import json
from pathlib import Path

import numpy as np
import pytest

from dctattack import AttackConfig, LinearOracle, PatchMeanOracle, TinyMlpOracle
from dctattack.cli import main
from dctattack.harness import (
    ExperimentConfig,
    ImageOutcome,
    build_oracle,
    emit_curves,
    load_run_record,
    make_synthetic_images,
    run_experiment,
    sweep,
)


def _config(tmp_path, **overrides):
    defaults = dict(
        attack=AttackConfig(budget=400, init_samples=20, probes=20),
        oracle_spec={"kind": "mlp", "seed": 0, "num_classes": 2},
        inputs={"kind": "synthetic", "count": 3, "height": 32, "width": 32, "channels": 3},
        output_dir=str(tmp_path / "run"),
        master_seed=5,
    )
    defaults.update(overrides)
    return ExperimentConfig(**defaults)


# -- synthetic inputs ----------------------------------------------------------

def test_synthetic_images_are_deterministic_and_in_range():
    a = make_synthetic_images(3, 32, 48, 3, seed=9)
    b = make_synthetic_images(3, 32, 48, 3, seed=9)
    c = make_synthetic_images(3, 32, 48, 3, seed=10)
    assert len(a) == 3 and a[0].shape == (32, 48, 3)
    for img_a, img_b in zip(a, b):
        assert np.array_equal(img_a, img_b)
    assert any(not np.array_equal(x, y) for x, y in zip(a, c))
    for img in a:
        assert img.min() >= 0.1 - 1e-12 and img.max() <= 0.9 + 1e-12
        assert img.std() > 0.0  # never constant
    with pytest.raises(ValueError):
        make_synthetic_images(0, 32, 32, 3, seed=0)


# -- config and outcome serialization ----------------------------------------------

def test_experiment_config_round_trips_through_json():
    cfg = ExperimentConfig(
        attack=AttackConfig(seed=(7, 3), budget=123, r=2),
        oracle_spec={"kind": "patch", "target_patch": 1, "threshold": 0.7},
        inputs={"kind": "synthetic", "count": 2},
        output_dir="/tmp/somewhere",
        master_seed=7,
        thresholds=(2.0, 4.0),
        epsilon_threshold=3.5,
    )
    blob = json.loads(json.dumps(cfg.to_dict()))
    assert ExperimentConfig.from_dict(blob) == cfg


def test_image_outcome_round_trips_through_json():
    outcome = ImageOutcome(
        index=2, name="img002", initial_label=0, final_label=1,
        succeeded=True, skipped=False, reason="ok", l2=1.25,
        psnr=38.5, ssim=0.97, queries_used=777,
        trace=((0, 10, 5.0), (1, 20, 4.0)),
    )
    blob = json.loads(json.dumps(outcome.to_dict()))
    assert ImageOutcome.from_dict(blob) == outcome


# -- oracle factory ------------------------------------------------------------

def test_build_oracle_covers_every_local_kind():
    shape = (32, 32, 3)
    assert isinstance(build_oracle({"kind": "linear", "seed": 1}, shape), LinearOracle)
    assert isinstance(
        build_oracle({"kind": "patch", "target_patch": 2}, shape), PatchMeanOracle
    )
    assert isinstance(build_oracle({"kind": "mlp", "seed": 4}, shape), TinyMlpOracle)
    with pytest.raises(ValueError):
        build_oracle({"kind": "quantum"}, shape)


def test_linear_hf_margin_is_the_distance_from_any_flat_image():
    shape = (32, 32, 3)
    oracle = build_oracle({"kind": "linear_hf", "u": 1, "v": 1, "margin": 0.6}, shape)
    flat = np.full(shape, 0.5)
    assert oracle.predict(flat) == 0
    # w is unit norm and orthogonal to constants, so stepping margin along w
    # from any flat image lands exactly on the boundary
    assert oracle.predict(flat + 0.61 * oracle.w) == 1
    assert oracle.predict(flat + 0.59 * oracle.w) == 0


# -- full runs on disk ------------------------------------------------------------

def test_run_experiment_persists_a_reloadable_record(tmp_path):
    config = _config(tmp_path)
    record = run_experiment(config)
    out = Path(config.output_dir)
    assert (out / "summary.json").exists()
    assert (out / "results.jsonl").exists()
    assert (out / "curves.csv").exists()
    assert record.counts["total"] == 3
    assert record.counts["attacked"] + record.counts["skipped"] == 3
    for outcome in record.outcomes:
        if outcome.succeeded:
            assert (out / f"{outcome.name}.adv.png").exists()
            assert (out / f"{outcome.name}.adv.raw").exists()
            assert (out / "traces" / f"{outcome.name}.csv").exists()
            assert outcome.psnr is not None and outcome.ssim is not None
        else:
            assert outcome.psnr is None and outcome.ssim is None
    loaded = load_run_record(out)
    assert loaded.outcomes == record.outcomes
    assert loaded.config == record.config
    assert loaded.report == record.report
    assert loaded.success_rates == record.success_rates


def test_run_report_matches_its_own_outcomes(tmp_path):
    record = run_experiment(_config(tmp_path))
    succeeded = [o for o in record.outcomes if o.succeeded]
    assert record.counts["succeeded"] == len(succeeded)
    if succeeded:
        assert record.report["mean_l2"] == pytest.approx(
            float(np.mean([o.l2 for o in succeeded]))
        )
        assert record.report["count"] == len(succeeded)
    attacked = [o for o in record.outcomes if not o.skipped]
    for key, rate in record.success_rates.items():
        threshold = float(key)
        expected = sum(
            1 for o in attacked if o.succeeded and o.l2 <= threshold
        ) / len(attacked)
        assert rate == pytest.approx(expected)


def test_reruns_write_byte_identical_results(tmp_path):
    first = _config(tmp_path, output_dir=str(tmp_path / "a"))
    second = _config(tmp_path, output_dir=str(tmp_path / "b"))
    run_experiment(first)
    run_experiment(second)
    rows_a = (tmp_path / "a" / "results.jsonl").read_bytes()
    rows_b = (tmp_path / "b" / "results.jsonl").read_bytes()
    assert rows_a == rows_b
    sum_a = json.loads((tmp_path / "a" / "summary.json").read_text())
    sum_b = json.loads((tmp_path / "b" / "summary.json").read_text())
    for volatile in ("created_at", "wall_clock_s"):
        sum_a.pop(volatile)
        sum_b.pop(volatile)
    sum_a["config"].pop("output_dir")
    sum_b["config"].pop("output_dir")
    assert sum_a == sum_b
    assert (tmp_path / "a" / "curves.csv").read_bytes() == (
        tmp_path / "b" / "curves.csv"
    ).read_bytes()


def test_toy_run_outputs_pinned(tmp_path):
    # frozen first-run snapshot of a small end-to-end batch
    config = ExperimentConfig(
        attack=AttackConfig(budget=1200, init_samples=40, probes=40),
        oracle_spec={"kind": "mlp", "seed": 0, "num_classes": 2},
        inputs={"kind": "synthetic", "count": 3, "height": 32, "width": 32, "channels": 3},
        output_dir=str(tmp_path / "toy"),
        master_seed=5,
    )
    record = run_experiment(config)
    assert record.counts == {"total": 3, "attacked": 3, "succeeded": 3, "skipped": 0}
    assert record.report["mean_l2"] == 1.0404876965102796
    assert record.report["median_l2"] == 0.9240592273825393
    assert record.report["mean_ssim"] == 0.9513290160737656
    assert record.success_rates == {"3.0": 1.0, "5.0": 1.0, "8.0": 1.0}
    rows = (tmp_path / "toy" / "curves.csv").read_text().splitlines()
    assert len(rows) == 55  # header + one row per union-grid breakpoint
    assert rows[1] == "238,0.7890625000000001,0.7890625000000001,1"


def test_labels_file_skips_already_misclassified_images(tmp_path):
    from dctattack import save_png

    images = make_synthetic_images(2, 32, 32, 3, seed=0)
    img_dir = tmp_path / "imgs"
    img_dir.mkdir()
    oracle = TinyMlpOracle(seed=0, num_classes=2)
    labels = {}
    for idx, img in enumerate(images):
        name = f"pic{idx}"
        save_png(img_dir / f"{name}.png", img)
        # claim the wrong label for pic0 so the harness must skip it
        true = oracle.predict(np.asarray(img))
        labels[name] = (1 - true) if idx == 0 else true
    (tmp_path / "labels.json").write_text(json.dumps(labels))
    config = _config(
        tmp_path,
        inputs={"kind": "dir", "path": str(img_dir), "labels": str(tmp_path / "labels.json")},
        master_seed=1,
    )
    record = run_experiment(config)
    by_name = {o.name: o for o in record.outcomes}
    assert by_name["pic0"].skipped and by_name["pic0"].queries_used == 1
    assert not by_name["pic1"].skipped
    assert record.counts["skipped"] == 1


# -- curves ---------------------------------------------------------------------

def _outcome(name, trace, succeeded=True):
    return ImageOutcome(
        index=0, name=name, initial_label=0, final_label=1,
        succeeded=succeeded, skipped=False, reason="ok", l2=1.0,
        psnr=None, ssim=None, queries_used=trace[-1][1] if trace else 0,
        trace=trace,
    )


def test_curves_for_one_image_follow_its_breakpoints(tmp_path):
    trace = ((0, 10, 5.0), (1, 25, 4.0), (2, 30, 3.5))
    rows = emit_curves([_outcome("a", trace)], tmp_path / "curves.csv")
    assert [r["queries"] for r in rows] == [10, 25, 30]
    assert [r["mean_best_g"] for r in rows] == [5.0, 4.0, 3.5]
    assert [r["median_best_g"] for r in rows] == [5.0, 4.0, 3.5]
    assert all(r["images_defined"] == 1 for r in rows)
    text = (tmp_path / "curves.csv").read_text().splitlines()
    assert text[0] == "queries,mean_best_g,median_best_g,images_defined"
    assert len(text) == 4


def test_curves_merge_images_onto_a_union_grid(tmp_path):
    a = _outcome("a", ((0, 10, 6.0), (1, 30, 2.0)))
    b = _outcome("b", ((0, 20, 4.0),))
    failed = _outcome("c", ((0, 5, 9.0),), succeeded=False)
    rows = emit_curves([a, b, failed], tmp_path / "curves.csv")
    assert [r["queries"] for r in rows] == [10, 20, 30]
    assert [r["images_defined"] for r in rows] == [1, 2, 2]  # failures excluded
    assert rows[0]["mean_best_g"] == 6.0
    assert rows[1]["mean_best_g"] == pytest.approx(5.0)
    assert rows[2]["mean_best_g"] == pytest.approx(3.0)
    defined = [r["images_defined"] for r in rows]
    assert all(x <= y for x, y in zip(defined, defined[1:]))


def test_curves_with_no_successes_write_only_the_header(tmp_path):
    rows = emit_curves([_outcome("a", (), succeeded=False)], tmp_path / "curves.csv")
    assert rows == []
    assert (tmp_path / "curves.csv").read_text().splitlines() == [
        "queries,mean_best_g,median_best_g,images_defined"
    ]


# -- sweeps ---------------------------------------------------------------------

def test_sweep_records_dead_cells_and_keeps_going(tmp_path):
    config = _config(
        tmp_path,
        output_dir=str(tmp_path / "sweep"),
        inputs={"kind": "synthetic", "count": 1, "height": 32, "width": 32, "channels": 3},
    )
    report = sweep(config, "r", [3, 40])  # r=40 cannot fit a 16x16 patch
    assert report.axis == "r"
    assert report.cells[0].error is None
    assert report.cells[0].counts["total"] == 1
    assert report.cells[1].error is not None
    assert "ValueError" in report.cells[1].error
    blob = json.loads((tmp_path / "sweep" / "sweep.json").read_text())
    assert len(blob["cells"]) == 2
    rows = (tmp_path / "sweep" / "sweep.csv").read_text().splitlines()
    assert len(rows) == 3
    assert "ValueError" in rows[2]
    with pytest.raises(ValueError):
        sweep(config, "warp", [1])


# -- command line -----------------------------------------------------------------

def _attack_argv(tmp_path, out="cli-run"):
    return [
        "attack",
        "--seed", "5",
        "--out", str(tmp_path / out),
        "--oracle", '{"kind": "mlp", "seed": 0, "num_classes": 2}',
        "--synthetic", "2",
        "--budget", "400",
        "--init-samples", "20",
        "--probes", "20",
    ]


def test_cli_attack_then_report(tmp_path, capsys):
    assert main(_attack_argv(tmp_path)) == 0
    assert (tmp_path / "cli-run" / "summary.json").exists()
    capsys.readouterr()
    assert main(["report", "--run", str(tmp_path / "cli-run")]) == 0
    out = capsys.readouterr().out
    assert "images: 2" in out
    assert "success rate" in out


def test_cli_sweep(tmp_path):
    argv = _attack_argv(tmp_path, out="cli-sweep")
    argv[0] = "sweep"
    argv += ["--axis", "alpha", "--values", "2,4", "--synthetic", "1"]
    # --synthetic appears twice; argparse keeps the last value
    assert main(argv) == 0
    assert (tmp_path / "cli-sweep" / "sweep.csv").exists()
    assert (tmp_path / "cli-sweep" / "alpha=2.0" / "summary.json").exists()


def test_cli_requires_exactly_one_input_source(tmp_path):
    argv = _attack_argv(tmp_path)
    argv += ["--images", str(tmp_path)]  # now both sources are given
    with pytest.raises(SystemExit):
        main(argv)
    with pytest.raises(SystemExit):
        main(["attack", "--seed", "1", "--out", str(tmp_path / "x"),
              "--oracle", '{"kind": "mlp"}'])
