"""Noise-robust oracle curves.

Simulates a hypothetical model that reproduces the mask corruption
distribution exactly: corrupt the test-subset ground-truth masks, score
them volume-wise against the originals, and sweep the result over
corruption modes and noise scales. Dilation leaves recall pinned at 1
and erosion leaves precision pinned at 1 (pure containment), so the
curves isolate what the corruption alone does to each score.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .folds import DatasetSplit, FoldPlan
from .metrics import ScoreTriple, score_volumewise
from .noise import NoiseMode, corrupt_mask_volume
from .svgplot import line_plot, write_svg
from .volume import PatientRecord


@dataclass(frozen=True)
class SweepConfig:
    modes: tuple[NoiseMode, ...] = (NoiseMode.DILATE, NoiseMode.ERODE, NoiseMode.RANDOM)
    sigma2_values: tuple[float, ...] = (0.0, 1.0, 2.0, 3.0, 4.0, 5.0)
    repetitions: int = 20
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(NoiseMode(m) for m in self.modes))
        object.__setattr__(self, "sigma2_values", tuple(float(s) for s in self.sigma2_values))
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if any(s < 0 for s in self.sigma2_values):
            raise ValueError("sigma2 values must be >= 0")


@dataclass(frozen=True)
class CellScore:
    mode: NoiseMode
    sigma2: float
    fold: int
    rep: int
    triple: ScoreTriple


def cell_seed(base_seed: int, mode_index: int, sigma_index: int, fold_index: int, rep: int) -> int:
    """Stable 64-bit seed for one sweep cell."""
    state = np.random.SeedSequence(
        [int(base_seed), mode_index, sigma_index, fold_index, rep]
    ).generate_state(2)
    return (int(state[0]) << 32) | int(state[1])


def simulate_noise_robust(
    records: list[PatientRecord],
    split: DatasetSplit,
    mode: NoiseMode,
    sigma2: float,
    seed: int,
) -> ScoreTriple:
    """Corrupt the test masks, score against the originals, average."""
    by_id = {r.patient_id: r for r in records}
    missing = [pid for pid in split.test_ids if pid not in by_id]
    if missing:
        raise KeyError(f"split references unknown patient ids: {missing}")
    if not split.test_ids:
        raise ValueError("split has an empty test subset")
    triples = []
    for pid in split.test_ids:
        original = by_id[pid].mask
        corrupted, _ = corrupt_mask_volume(original, mode, sigma2, seed, pid)
        triples.append(score_volumewise(corrupted.astype(np.float64), original))
    stacked = np.array(triples, dtype=np.float64)
    mean = stacked.mean(axis=0)
    return ScoreTriple(dice=float(mean[0]), precision=float(mean[1]), recall=float(mean[2]))


def _run_cell(args) -> CellScore:
    records, fold, mode, sigma2, seed, fold_index, rep = args
    triple = simulate_noise_robust(records, fold, mode, sigma2, seed)
    return CellScore(mode=mode, sigma2=sigma2, fold=fold_index, rep=rep, triple=triple)


@dataclass(frozen=True)
class SweepResult:
    config: SweepConfig
    samples: tuple[CellScore, ...]

    def cells(self, mode: NoiseMode, sigma2: float) -> list[CellScore]:
        return [s for s in self.samples if s.mode is NoiseMode(mode) and s.sigma2 == sigma2]

    def curve(self, mode: NoiseMode, metric: str) -> tuple[list[float], list[float]]:
        """(means, stds) of one metric across sigma2 values."""
        means, stds = [], []
        for sigma2 in self.config.sigma2_values:
            values = [getattr(s.triple, metric) for s in self.cells(mode, sigma2)]
            means.append(float(np.mean(values)))
            stds.append(float(np.std(values)))
        return means, stds

    def to_score_csv_string(self) -> str:
        """ScoreTable rows: per-fold means over repetitions."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["mode", "sigma2", "beta", "fold", "subset", "metric", "value"])
        fold_indices = sorted({s.fold for s in self.samples})
        for mode in self.config.modes:
            for sigma2 in self.config.sigma2_values:
                cells = self.cells(mode, sigma2)
                for fold_index in fold_indices:
                    fold_cells = [s for s in cells if s.fold == fold_index]
                    for metric in ScoreTriple._fields:
                        value = float(np.mean([getattr(s.triple, metric) for s in fold_cells]))
                        writer.writerow(
                            [mode.value, format(sigma2, ".10g"), "", fold_index, "test",
                             metric, format(value, ".10g")]
                        )
        return buf.getvalue()

    def to_summary_csv_string(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["mode", "sigma2", "metric", "mean", "std", "samples"])
        for mode in self.config.modes:
            for metric in ScoreTriple._fields:
                means, stds = self.curve(mode, metric)
                for sigma2, mean, std in zip(self.config.sigma2_values, means, stds):
                    n = len(self.cells(mode, sigma2))
                    writer.writerow(
                        [mode.value, format(sigma2, ".10g"), metric,
                         format(mean, ".10g"), format(std, ".10g"), n]
                    )
        return buf.getvalue()

    def metric_svg(self, metric: str) -> str:
        series = {}
        for mode in self.config.modes:
            means, _ = self.curve(mode, metric)
            series[mode.value] = means
        return line_plot(
            self.config.sigma2_values,
            series,
            title=f"Oracle {metric} vs noise scale",
            x_label="sigma2",
            y_label=metric,
            dashed=True,
            y_range=(0.0, 1.05),
        )

    def write_outputs(self, out_dir: str | Path) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        scores = out / "oracle_scores.csv"
        scores.write_text(self.to_score_csv_string())
        written.append(scores)
        summary = out / "oracle_summary.csv"
        summary.write_text(self.to_summary_csv_string())
        written.append(summary)
        for metric in ScoreTriple._fields:
            svg = out / f"oracle_{metric}.svg"
            write_svg(svg, self.metric_svg(metric))
            written.append(svg)
        return written


def run_sweep(
    records: list[PatientRecord],
    folds: FoldPlan,
    config: SweepConfig,
    jobs: int = 1,
) -> SweepResult:
    """Full modes x sigma2 x folds x repetitions cross product.

    Cell RNG streams are keyed, so the result is identical for any job
    count; samples are assembled in canonical cell order.
    """
    tasks = []
    for mode_index, mode in enumerate(config.modes):
        for sigma_index, sigma2 in enumerate(config.sigma2_values):
            for fold_index, fold in enumerate(folds.folds):
                for rep in range(config.repetitions):
                    seed = cell_seed(config.seed, mode_index, sigma_index, fold_index, rep)
                    tasks.append((records, fold, mode, sigma2, seed, fold_index, rep))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            samples = list(pool.map(_run_cell, tasks, chunksize=8))
    else:
        samples = [_run_cell(t) for t in tasks]
    return SweepResult(config=config, samples=tuple(samples))
