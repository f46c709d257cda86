"""Toy differentiable segmenter for bias-cancellation experiments.

A per-pixel linear-logistic model over five local features of the first
image modality (raw intensity, 3x3 box mean, 3x3 box std, 7x7 box mean,
constant bias), trained by full-batch gradient descent on the mean
per-frame f-beta loss. The architecture is deliberately tiny: the
bias-cancellation effect lives in the loss, and a convex-ish model makes
it measurable in seconds. Training is deterministic per config.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .folds import DatasetSplit
from .metrics import ScoreTriple, hard_metrics
from .noise import NoiseMode, corrupt_mask_volume
from .svgplot import heatmap, write_svg
from .volume import PatientRecord, zscore_normalize

N_FEATURES = 5


class TrainingDiverged(RuntimeError):
    """Raised when the loss turns non-finite; carries the epoch."""

    def __init__(self, epoch: int):
        super().__init__(f"training diverged: non-finite loss at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 4.0
    epochs: int = 200
    beta: float = 1.0
    seed: int = 0
    init_scale: float = 0.0

    def __post_init__(self):
        # learning_rate 0 is allowed so a no-op descent stays expressible.
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.init_scale < 0:
            raise ValueError("init_scale must be >= 0")


@dataclass(frozen=True)
class LinearSegmenter:
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (N_FEATURES,):
            raise ValueError(f"expected {N_FEATURES} weights, got shape {w.shape}")
        if not np.isfinite(w).all():
            raise ValueError("weights must be finite")
        object.__setattr__(self, "weights", w)


def _box_sum(arr: np.ndarray, radius: int) -> np.ndarray:
    size = 2 * radius + 1
    padded = np.pad(arr, radius)
    integral = np.zeros((padded.shape[0] + 1, padded.shape[1] + 1), dtype=np.float64)
    integral[1:, 1:] = padded.cumsum(axis=0).cumsum(axis=1)
    return (
        integral[size:, size:]
        - integral[:-size, size:]
        - integral[size:, :-size]
        + integral[:-size, :-size]
    )


def _box_mean(arr: np.ndarray, radius: int) -> np.ndarray:
    return _box_sum(arr, radius) / (2 * radius + 1) ** 2


def _box_std(arr: np.ndarray, radius: int) -> np.ndarray:
    mean = _box_mean(arr, radius)
    mean_sq = _box_mean(arr * arr, radius)
    return np.sqrt(np.clip(mean_sq - mean * mean, 0.0, None))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    expz = np.exp(z[~pos])
    out[~pos] = expz / (1.0 + expz)
    return out


def extract_features(frame) -> np.ndarray:
    """(H, W, 5) feature stack; box filters use zero-padding."""
    arr = np.asarray(frame, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"image frame must be 2-D, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("image frame contains non-finite values")
    return np.stack(
        [arr, _box_mean(arr, 1), _box_std(arr, 1), _box_mean(arr, 3), np.ones_like(arr)],
        axis=-1,
    )


def predict(model: LinearSegmenter, features: np.ndarray) -> np.ndarray:
    """Per-pixel logistic foreground probability."""
    feats = np.asarray(features, dtype=np.float64)
    if feats.shape[-1] != model.weights.shape[0]:
        raise ValueError(
            f"feature arity {feats.shape[-1]} != weight count {model.weights.shape[0]}"
        )
    return _sigmoid(feats @ model.weights)


def _initial_weights(config: TrainConfig) -> np.ndarray:
    if config.init_scale == 0.0:
        return np.zeros(N_FEATURES)
    rng = np.random.default_rng(config.seed)
    return config.init_scale * rng.standard_normal(N_FEATURES)


def _descend(
    features: np.ndarray, targets: np.ndarray, config: TrainConfig
) -> tuple[LinearSegmenter, list[float]]:
    """Full-batch gradient descent on the mean per-frame f-beta loss.

    features: (frames, pixels, N_FEATURES); targets: (frames, pixels).
    """
    w = _initial_weights(config)
    b2 = float(config.beta) ** 2
    n_frames, n_pixels = targets.shape
    flat_features = np.ascontiguousarray(features).reshape(-1, N_FEATURES)
    sum_t = targets.sum(axis=1)
    history = []
    for epoch in range(config.epochs):
        p = _sigmoid((flat_features @ w).reshape(n_frames, n_pixels))
        tp = (p * targets).sum(axis=1)
        sum_p = p.sum(axis=1)
        numer = (1.0 + b2) * tp + 1.0
        denom = b2 * sum_t + sum_p + 1.0
        losses = 1.0 - numer / denom
        mean_loss = float(losses.mean())
        if not np.isfinite(mean_loss):
            raise TrainingDiverged(epoch)
        history.append(mean_loss)
        grad_p = (numer[:, None] - (1.0 + b2) * targets * denom[:, None]) / (denom**2)[:, None]
        grad_z = grad_p * p * (1.0 - p)
        grad_w = grad_z.reshape(-1) @ flat_features / n_frames
        w = w - config.learning_rate * grad_w
    return LinearSegmenter(weights=w), history


def train(samples, config: TrainConfig) -> tuple[LinearSegmenter, list[float]]:
    """Train on (image frame, mask frame) pairs of one common shape."""
    if not samples:
        raise ValueError("need at least one training sample")
    shapes = {np.asarray(img).shape for img, _ in samples}
    if len(shapes) != 1:
        raise ValueError(f"all frames must share one shape, got {sorted(shapes)}")
    feats = np.stack([extract_features(img).reshape(-1, N_FEATURES) for img, _ in samples])
    targets = np.stack([np.asarray(mask, dtype=np.float64).reshape(-1) for _, mask in samples])
    if not ((targets == 0.0) | (targets == 1.0)).all():
        raise ValueError("mask values must be exactly 0 or 1")
    return _descend(feats, targets, config)


@dataclass(frozen=True)
class GridCell:
    beta: float
    sigma2: float
    seed: int
    dice: float
    precision: float
    recall: float


@dataclass(frozen=True)
class GridResult:
    betas: tuple[float, ...]
    sigma2_values: tuple[float, ...]
    seeds: tuple[int, ...]
    cells: tuple[GridCell, ...]

    CSV_COLUMNS = ("beta", "sigma2", "seed", "test_dice", "test_precision", "test_recall")

    def mean_metric(self, beta: float, sigma2: float, metric: str = "dice") -> float:
        values = [
            getattr(c, metric) for c in self.cells if c.beta == beta and c.sigma2 == sigma2
        ]
        if not values:
            raise KeyError(f"no grid cell at beta={beta}, sigma2={sigma2}")
        return float(np.mean(values))

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.CSV_COLUMNS)
        for c in self.cells:
            writer.writerow(
                [format(c.beta, ".10g"), format(c.sigma2, ".10g"), c.seed,
                 format(c.dice, ".10g"), format(c.precision, ".10g"), format(c.recall, ".10g")]
            )
        return buf.getvalue()

    def heatmap_svg(self) -> str:
        grid = [
            [self.mean_metric(beta, sigma2) for beta in self.betas]
            for sigma2 in self.sigma2_values
        ]
        return heatmap(
            self.sigma2_values,
            self.betas,
            grid,
            title="Clean-test dice vs (sigma2, beta)",
            x_label="beta",
            y_label="sigma2",
        )

    def write_outputs(self, out_dir: str | Path) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / "grid_scores.csv"
        csv_path.write_text(self.to_csv_string())
        svg_path = out / "grid_dice_heatmap.svg"
        write_svg(svg_path, self.heatmap_svg())
        return [csv_path, svg_path]


@dataclass(frozen=True)
class _GridContext:
    """Precomputed per-corpus data shared by all grid cells."""

    train_pids: tuple[str, ...]
    train_features: np.ndarray  # (total frames, pixels, N_FEATURES)
    train_masks: dict[str, np.ndarray]
    test_pids: tuple[str, ...]
    test_features: dict[str, np.ndarray]  # (frames, pixels, N_FEATURES)
    test_masks: dict[str, np.ndarray]
    frame_shape: tuple[int, int]
    mode: NoiseMode
    base_config: TrainConfig
    threshold: float


_GRID_CTX: _GridContext | None = None


def _grid_init(ctx: _GridContext) -> None:
    global _GRID_CTX
    _GRID_CTX = ctx


def _build_grid_context(
    records: list[PatientRecord],
    split: DatasetSplit,
    mode: NoiseMode,
    base_config: TrainConfig,
    threshold: float,
) -> _GridContext:
    by_id = {r.patient_id: r for r in records}
    missing = [pid for pid in split.all_ids if pid not in by_id]
    if missing:
        raise KeyError(f"split references unknown patient ids: {missing}")
    if not split.train_ids or not split.test_ids:
        raise ValueError("split needs non-empty train and test subsets")

    def features_for(pid: str) -> np.ndarray:
        image = zscore_normalize(by_id[pid].volume).first_modality()
        return np.stack(
            [extract_features(frame).reshape(-1, N_FEATURES) for frame in image]
        )

    train_blocks = [features_for(pid) for pid in split.train_ids]
    frame_shape = by_id[split.train_ids[0]].shape[1:]
    return _GridContext(
        train_pids=split.train_ids,
        train_features=np.concatenate(train_blocks, axis=0),
        train_masks={pid: by_id[pid].mask for pid in split.train_ids},
        test_pids=split.test_ids,
        test_features={pid: features_for(pid) for pid in split.test_ids},
        test_masks={pid: by_id[pid].mask for pid in split.test_ids},
        frame_shape=frame_shape,
        mode=mode,
        base_config=base_config,
        threshold=threshold,
    )


def _grid_cell(args) -> GridCell:
    sigma2, seed, beta = args
    ctx = _GRID_CTX
    targets = []
    for pid in ctx.train_pids:
        corrupted, _ = corrupt_mask_volume(ctx.train_masks[pid], ctx.mode, sigma2, seed, pid)
        targets.append(corrupted.reshape(corrupted.shape[0], -1).astype(np.float64))
    target_mat = np.concatenate(targets, axis=0)
    config = replace(ctx.base_config, beta=beta)
    model, _ = _descend(ctx.train_features, target_mat, config)

    triples = []
    for pid in ctx.test_pids:
        pred = predict(model, ctx.test_features[pid])  # (frames, pixels)
        depth = pred.shape[0]
        pred_vol = pred.reshape(depth, *ctx.frame_shape)
        triples.append(hard_metrics(pred_vol, ctx.test_masks[pid], ctx.threshold))
    mean = np.array(triples, dtype=np.float64).mean(axis=0)
    return GridCell(
        beta=float(beta), sigma2=float(sigma2), seed=int(seed),
        dice=float(mean[0]), precision=float(mean[1]), recall=float(mean[2]),
    )


def beta_gridsearch(
    records: list[PatientRecord],
    split: DatasetSplit,
    betas,
    mode: NoiseMode,
    sigma2_values,
    seeds,
    base_config: TrainConfig | None = None,
    threshold: float = 0.5,
    jobs: int = 1,
) -> GridResult:
    """Corrupt train masks, train per beta, score on clean test masks.

    Corruption streams are keyed by (seed, patient, frame), so every
    beta within a (sigma2, seed) cell sees the identical corrupted
    dataset (paired comparison) and results are independent of the job
    count. Validation masks are never consumed by the toy trainer, so
    their corruption (keyed the same way) is not materialized here.
    """
    betas = tuple(float(b) for b in betas)
    sigma2_values = tuple(float(s) for s in sigma2_values)
    seeds = tuple(int(s) for s in seeds)
    if not betas or not sigma2_values or not seeds:
        raise ValueError("betas, sigma2_values and seeds must be non-empty")
    base = base_config if base_config is not None else TrainConfig()
    ctx = _build_grid_context(records, split, NoiseMode(mode), base, threshold)

    tasks = [(s2, seed, beta) for s2 in sigma2_values for seed in seeds for beta in betas]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_grid_init, initargs=(ctx,)) as pool:
            cells = list(pool.map(_grid_cell, tasks))
    else:
        _grid_init(ctx)
        try:
            cells = [_grid_cell(t) for t in tasks]
        finally:
            _grid_init(None)
    return GridResult(betas=betas, sigma2_values=sigma2_values, seeds=seeds, cells=tuple(cells))
