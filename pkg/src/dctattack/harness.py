"""Experiment harness: datasets in, attacks run, artifacts out.

A run takes an oracle spec and an input spec, attacks every image with a
per-image RNG stream derived from one master seed, and persists everything
needed to reproduce or re-aggregate the run: a JSON summary, one JSONL row
per image, per-image distortion traces as CSV, adversarial images as PNG
plus lossless tensors, and query-distortion curves.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from . import __version__
from .dct import dct_basis
from .engine import (
    REASON_ALREADY_MISCLASSIFIED,
    AttackConfig,
    run_attack,
)
from .image import fit_to_size, load_png, save_png, save_raw
from .metrics import ImageMetrics, aggregate, psnr, ssim, success_rate
from .oracle import (
    HardLabelOracle,
    LinearOracle,
    PatchMeanOracle,
    RemoteOracle,
    TinyMlpOracle,
)

DEFAULT_THRESHOLDS = (3.0, 5.0, 8.0)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs; serializable so records embed their own setup.

    attack.seed is ignored: each image gets seed (master_seed, image_index)
    so runs are reproducible image by image regardless of batch order.
    """

    attack: AttackConfig
    oracle_spec: dict
    inputs: dict
    output_dir: str
    master_seed: int = 0
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    epsilon_threshold: float = 5.0

    def to_dict(self) -> dict:
        blob = asdict(self)
        blob["attack"]["seed"] = _seed_to_json(self.attack.seed)
        blob["thresholds"] = list(self.thresholds)
        return blob

    @staticmethod
    def from_dict(blob: dict) -> "ExperimentConfig":
        attack_blob = dict(blob["attack"])
        attack_blob["seed"] = _seed_from_json(attack_blob["seed"])
        return ExperimentConfig(
            attack=AttackConfig(**attack_blob),
            oracle_spec=blob["oracle_spec"],
            inputs=blob["inputs"],
            output_dir=blob["output_dir"],
            master_seed=blob["master_seed"],
            thresholds=tuple(blob["thresholds"]),
            epsilon_threshold=blob["epsilon_threshold"],
        )


def _seed_to_json(seed):
    return list(seed) if isinstance(seed, tuple) else seed


def _seed_from_json(seed):
    return tuple(seed) if isinstance(seed, list) else seed


@dataclass(frozen=True)
class ImageOutcome:
    """Per-image row of a run record."""

    index: int
    name: str
    initial_label: int
    final_label: int
    succeeded: bool
    skipped: bool
    reason: str
    l2: float
    psnr: float | None
    ssim: float | None
    queries_used: int
    trace: tuple[tuple[int, int, float], ...]

    def to_dict(self) -> dict:
        blob = asdict(self)
        blob["trace"] = [list(t) for t in self.trace]
        return blob

    @staticmethod
    def from_dict(blob: dict) -> "ImageOutcome":
        blob = dict(blob)
        blob["trace"] = tuple((int(a), int(b), float(c)) for a, b, c in blob["trace"])
        return ImageOutcome(**blob)


@dataclass(frozen=True)
class RunRecord:
    """A finished run: config snapshot, per-image outcomes, aggregates."""

    config: dict
    outcomes: tuple[ImageOutcome, ...]
    report: dict | None
    success_rates: dict[str, float]
    counts: dict[str, int]
    engine_version: str
    created_at: str
    wall_clock_s: float


def make_synthetic_images(
    count: int, height: int, width: int, channels: int, seed: int
) -> list[np.ndarray]:
    """Smooth random test images in roughly [0.1, 0.9], never constant."""
    if count < 1:
        raise ValueError(f"need at least one image, got {count}")
    rng = np.random.default_rng([int(seed), 0x5EED])
    images = []
    for _ in range(count):
        noise = rng.standard_normal((height, width, channels))
        smooth = gaussian_filter(noise, sigma=(4.0, 4.0, 0.0))
        span = smooth.max() - smooth.min()
        if span == 0.0:  # sigma leaves structure; this is belt and braces
            smooth = noise
            span = smooth.max() - smooth.min()
        images.append(0.1 + 0.8 * (smooth - smooth.min()) / span)
    return images


def _basis_atom_image(shape: tuple, d: int, u: int, v: int) -> np.ndarray:
    """Unit-norm image built from one DCT basis atom tiled into every patch."""
    h, w, c = shape
    basis = dct_basis(d)
    atom = np.outer(basis[u], basis[v])  # (d, d)
    tile = np.tile(atom, (h // d, w // d))[:, :, None]
    img = np.repeat(tile, c, axis=2)
    return img / np.linalg.norm(img.ravel())


def build_oracle(spec: dict, shape: tuple) -> HardLabelOracle:
    """Instantiate an oracle from its JSON spec for images of this shape.

    Kinds: linear (random unit hyperplane at a margin from mid-gray),
    linear_hf (hyperplane normal to a single tiled DCT basis atom), patch
    (patch-mean threshold), mlp (fixed random network), remote (HTTP client).
    """
    kind = spec.get("kind")
    if kind == "linear":
        rng = np.random.default_rng([int(spec.get("seed", 0)), 0x11EA])
        w = rng.standard_normal(shape)
        w /= np.linalg.norm(w.ravel())
        gray = np.full(shape, 0.5)
        b = float(np.vdot(w, gray)) + float(spec.get("margin", 2.0))
        return LinearOracle(w, b)
    if kind == "linear_hf":
        d = int(spec.get("d", 16))
        w = _basis_atom_image(shape, d, int(spec["u"]), int(spec["v"]))
        # basis atoms at (u, v) != (0, 0) are orthogonal to constants, so the
        # margin is the boundary distance from any flat image
        return LinearOracle(w, float(spec.get("margin", 1.0)))
    if kind == "patch":
        return PatchMeanOracle(
            target_patch=int(spec.get("target_patch", 0)),
            threshold=float(spec.get("threshold", 0.6)),
            d=int(spec.get("d", 16)),
        )
    if kind == "mlp":
        return TinyMlpOracle(
            seed=int(spec.get("seed", 0)),
            num_classes=int(spec.get("num_classes", 2)),
            hidden=int(spec.get("hidden", 32)),
        )
    if kind == "remote":
        return RemoteOracle(
            endpoint=spec["endpoint"], timeout=float(spec.get("timeout", 30.0))
        )
    raise ValueError(f"unknown oracle kind {kind!r}")


def _load_inputs(config: ExperimentConfig) -> tuple[list[np.ndarray], list[str], list]:
    spec = config.inputs
    kind = spec.get("kind")
    if kind == "synthetic":
        count = int(spec.get("count", 4))
        height = int(spec.get("height", 32))
        width = int(spec.get("width", 32))
        channels = int(spec.get("channels", 3))
        images = make_synthetic_images(
            count, height, width, channels, config.master_seed
        )
        names = [f"img{idx:03d}" for idx in range(count)]
        return images, names, [None] * count
    if kind == "dir":
        root = Path(spec["path"])
        paths = sorted(root.glob("*.png"))
        if not paths:
            raise FileNotFoundError(f"no .png files under {root}")
        images, names = [], []
        for p in paths:
            img = load_png(p)
            if "height" in spec and "width" in spec:
                img = fit_to_size(img, int(spec["height"]), int(spec["width"]))
            images.append(img)
            names.append(p.stem)
        labels: list = [None] * len(paths)
        if spec.get("labels"):
            table = json.loads(Path(spec["labels"]).read_text())
            labels = [table.get(name) for name in names]
        return images, names, labels
    raise ValueError(f"unknown input kind {kind!r}")


def _write_trace_csv(path: Path, trace) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "queries_used", "best_g"])
        for it, used, g in trace:
            writer.writerow([it, used, repr(g)])


def emit_curves(outcomes, path: Path) -> list[dict]:
    """Best-distortion-so-far versus query count, averaged across images.

    The grid is the union of every successful image's trace breakpoints. An
    image contributes from its first breakpoint onward (step function); the
    images_defined column says how many contributed at each point.
    """
    traced = [o for o in outcomes if o.succeeded and o.trace]
    rows: list[dict] = []
    grid = sorted({pt[1] for o in traced for pt in o.trace})
    for q in grid:
        values = []
        for o in traced:
            level = None
            for _, used, g in o.trace:
                if used <= q:
                    level = g if level is None else min(level, g)
                else:
                    break
            if level is not None:
                values.append(level)
        if not values:
            continue
        values.sort()
        rows.append(
            {
                "queries": q,
                "mean_best_g": float(np.mean(values)),
                "median_best_g": values[(len(values) - 1) // 2],
                "images_defined": len(values),
            }
        )
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["queries", "mean_best_g", "median_best_g", "images_defined"]
        )
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    return rows


def run_experiment(config: ExperimentConfig) -> RunRecord:
    """Attack every input image and persist the run under config.output_dir."""
    out = Path(config.output_dir)
    traces_dir = out / "traces"
    traces_dir.mkdir(parents=True, exist_ok=True)
    images, names, labels = _load_inputs(config)
    oracle = build_oracle(config.oracle_spec, images[0].shape)
    started = time.monotonic()
    outcomes: list[ImageOutcome] = []
    for idx, (img, name) in enumerate(zip(images, names)):
        attack_cfg = replace(config.attack, seed=(config.master_seed, idx))
        result = run_attack(img, oracle, attack_cfg, true_label=labels[idx])
        skipped = result.reason == REASON_ALREADY_MISCLASSIFIED
        psnr_v: float | None = None
        ssim_v: float | None = None
        if result.succeeded:
            psnr_v = psnr(img, result.adversarial)
            ssim_v = ssim(img, result.adversarial)
            save_png(out / f"{name}.adv.png", result.adversarial)
            save_raw(out / f"{name}.adv.raw", result.adversarial)
            _write_trace_csv(traces_dir / f"{name}.csv", result.trace)
        outcomes.append(
            ImageOutcome(
                index=idx,
                name=name,
                initial_label=result.initial_label,
                final_label=result.final_label,
                succeeded=result.succeeded,
                skipped=skipped,
                reason=result.reason,
                l2=result.l2,
                psnr=psnr_v,
                ssim=ssim_v,
                queries_used=result.queries_used,
                trace=tuple(tuple(pt) for pt in result.trace),
            )
        )
        print(
            f"[{idx + 1}/{len(images)}] {name}: {result.reason}"
            f" l2={result.l2:.4f} queries={result.queries_used}"
        )
    attacked = [o for o in outcomes if not o.skipped]
    succeeded = [o for o in outcomes if o.succeeded]
    report = None
    if succeeded:
        entries = [
            ImageMetrics(
                l2=o.l2, psnr=o.psnr, ssim=o.ssim,
                succeeded=o.succeeded, queries_used=o.queries_used,
            )
            for o in succeeded
        ]
        report = aggregate(entries, config.epsilon_threshold).to_dict()
    success_rates = {}
    if attacked:
        success_rates = {
            repr(float(t)): success_rate(attacked, t) for t in config.thresholds
        }
    record = RunRecord(
        config=config.to_dict(),
        outcomes=tuple(outcomes),
        report=report,
        success_rates=success_rates,
        counts={
            "total": len(outcomes),
            "attacked": len(attacked),
            "succeeded": len(succeeded),
            "skipped": len(outcomes) - len(attacked),
        },
        engine_version=__version__,
        created_at=datetime.now(timezone.utc).isoformat(),
        wall_clock_s=time.monotonic() - started,
    )
    _persist(record, out)
    return record


def _persist(record: RunRecord, out: Path) -> None:
    summary = {
        "config": record.config,
        "report": record.report,
        "success_rates": record.success_rates,
        "counts": record.counts,
        "engine_version": record.engine_version,
        "created_at": record.created_at,
        "wall_clock_s": record.wall_clock_s,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    with open(out / "results.jsonl", "w") as fh:
        for outcome in record.outcomes:
            fh.write(json.dumps(outcome.to_dict()) + "\n")
    emit_curves(record.outcomes, out / "curves.csv")


def load_run_record(run_dir) -> RunRecord:
    """Rebuild a RunRecord from a persisted run directory."""
    run_dir = Path(run_dir)
    summary = json.loads((run_dir / "summary.json").read_text())
    outcomes = tuple(
        ImageOutcome.from_dict(json.loads(line))
        for line in (run_dir / "results.jsonl").read_text().splitlines()
        if line.strip()
    )
    return RunRecord(
        config=summary["config"],
        outcomes=outcomes,
        report=summary["report"],
        success_rates=summary["success_rates"],
        counts=summary["counts"],
        engine_version=summary["engine_version"],
        created_at=summary["created_at"],
        wall_clock_s=summary["wall_clock_s"],
    )


@dataclass(frozen=True)
class SweepCell:
    axis: str
    value: float
    run_dir: str
    counts: dict | None
    report: dict | None
    success_rates: dict | None
    error: str | None


@dataclass(frozen=True)
class SweepReport:
    axis: str
    cells: tuple[SweepCell, ...]


def sweep(config: ExperimentConfig, axis: str, values) -> SweepReport:
    """Re-run the experiment for each value of one attack knob.

    A failing cell (for example a corner size the oracle is blind to) is
    recorded with its error and the sweep moves on.
    """
    if not hasattr(config.attack, axis):
        raise ValueError(f"unknown attack config field {axis!r}")
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells: list[SweepCell] = []
    for value in values:
        cast = int(value) if axis in ("d", "r", "budget", "init_samples", "probes") else float(value)
        run_dir = out / f"{axis}={cast}"
        try:
            cell_cfg = replace(
                config,
                attack=replace(config.attack, **{axis: cast}),
                output_dir=str(run_dir),
            )
            record = run_experiment(cell_cfg)
            cells.append(
                SweepCell(
                    axis=axis, value=float(value), run_dir=str(run_dir),
                    counts=record.counts, report=record.report,
                    success_rates=record.success_rates, error=None,
                )
            )
        except Exception as exc:  # a dead cell must not kill the sweep
            cells.append(
                SweepCell(
                    axis=axis, value=float(value), run_dir=str(run_dir),
                    counts=None, report=None, success_rates=None,
                    error=f"{type(exc).__name__}: {exc}",
                )
            )
        print(f"sweep {axis}={cast}: {cells[-1].error or 'ok'}")
    report = SweepReport(axis=axis, cells=tuple(cells))
    _persist_sweep(report, out, config.thresholds)
    return report


def _persist_sweep(report: SweepReport, out: Path, thresholds) -> None:
    blob = {
        "axis": report.axis,
        "cells": [asdict(cell) for cell in report.cells],
    }
    (out / "sweep.json").write_text(json.dumps(blob, indent=2) + "\n")
    rate_cols = [f"sr@{t:g}" for t in thresholds]
    with open(out / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [report.axis, "attacked", "succeeded", "mean_l2", "median_l2"]
            + rate_cols + ["error"]
        )
        for cell in report.cells:
            if cell.error is None:
                rates = [cell.success_rates.get(repr(float(t)), "") for t in thresholds]
                rep = cell.report or {}
                writer.writerow(
                    [
                        cell.value,
                        cell.counts["attacked"],
                        cell.counts["succeeded"],
                        rep.get("mean_l2", ""),
                        rep.get("median_l2", ""),
                    ]
                    + rates + [""]
                )
            else:
                writer.writerow(
                    [cell.value, "", "", "", ""] + [""] * len(rate_cols) + [cell.error]
                )
