"""Patient data model: multi-modal volumes, label merging, normalization.

Volumes are (frames D, height H, width W) arrays. Labels carry the four
allowed values {0 background, 1, 2, 4}; binarization merges the three
tumor classes into one whole-tumor mask. Z-score normalization is
volume-wise per modality over the brain region, which is defined as the
voxels whose original intensity is non-zero (skull-stripped volumes are
zero outside the brain).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

VALID_LABELS = (0, 1, 2, 4)
TUMOR_LABELS = (1, 2, 4)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def validate_labels(labels) -> np.ndarray:
    arr = np.asarray(labels)
    if arr.ndim != 3:
        raise ValueError(f"label volume must be 3-D, got shape {arr.shape}")
    if not np.isin(arr, VALID_LABELS).all():
        bad = sorted(set(np.unique(arr)) - set(VALID_LABELS))
        raise ValueError(f"illegal label values {bad}; allowed: {list(VALID_LABELS)}")
    return arr.astype(np.uint8, copy=False)


def validate_mask_volume(mask) -> np.ndarray:
    arr = np.asarray(mask)
    if arr.ndim != 3:
        raise ValueError(f"mask volume must be 3-D, got shape {arr.shape}")
    if not ((arr == 0) | (arr == 1)).all():
        raise ValueError("mask volume values must be exactly 0 or 1")
    return arr.astype(np.uint8, copy=False)


def binarize_labels(labels) -> np.ndarray:
    """Merge all tumor classes into one binary whole-tumor mask."""
    arr = validate_labels(labels)
    return np.isin(arr, TUMOR_LABELS).astype(np.uint8)


@dataclass(frozen=True)
class MultiModalVolume:
    """Co-registered scalar intensity grids, one per named modality."""

    patient_id: str
    modalities: dict[str, np.ndarray]

    def __post_init__(self):
        if not self.modalities:
            raise ValueError("volume needs at least one modality")
        shapes = set()
        converted = {}
        for name, grid in self.modalities.items():
            arr = np.asarray(grid, dtype=np.float32)
            if arr.ndim != 3:
                raise ValueError(f"modality {name!r} must be 3-D, got shape {arr.shape}")
            if not np.isfinite(arr).all():
                raise ValueError(f"modality {name!r} contains non-finite intensities")
            shapes.add(arr.shape)
            converted[name] = _freeze(arr.copy())
        if len(shapes) > 1:
            raise ValueError(f"modalities disagree on shape: {sorted(shapes)}")
        object.__setattr__(self, "modalities", converted)

    @property
    def shape(self) -> tuple[int, int, int]:
        return next(iter(self.modalities.values())).shape

    @property
    def modality_names(self) -> tuple[str, ...]:
        return tuple(self.modalities)

    def first_modality(self) -> np.ndarray:
        return next(iter(self.modalities.values()))


@dataclass(frozen=True)
class PatientRecord:
    """One patient: image volume, optional labels, binary mask."""

    volume: MultiModalVolume
    mask: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        mask = _freeze(validate_mask_volume(self.mask).copy())
        object.__setattr__(self, "mask", mask)
        if mask.shape != self.volume.shape:
            raise ValueError(
                f"mask shape {mask.shape} != volume shape {self.volume.shape}"
            )
        if self.labels is not None:
            labels = _freeze(validate_labels(self.labels).copy())
            object.__setattr__(self, "labels", labels)
            if labels.shape != self.volume.shape:
                raise ValueError(
                    f"labels shape {labels.shape} != volume shape {self.volume.shape}"
                )

    @property
    def patient_id(self) -> str:
        return self.volume.patient_id

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.volume.shape


def zscore_normalize(volume: MultiModalVolume) -> MultiModalVolume:
    """Normalize each modality to mean 0 / population std 1 over its
    brain region (original intensity != 0); background stays 0.
    """
    normalized = {}
    for name, grid in volume.modalities.items():
        region = grid != 0
        if not region.any():
            raise ValueError(f"modality {name!r}: brain region is empty")
        values = grid[region].astype(np.float64)
        mean = values.mean()
        std = values.std()  # population std (ddof=0)
        if std < 1e-12:
            raise ValueError(f"modality {name!r}: zero variance within brain region")
        out = np.zeros_like(grid, dtype=np.float64)
        out[region] = (values - mean) / std
        normalized[name] = out.astype(np.float32)
    return MultiModalVolume(patient_id=volume.patient_id, modalities=normalized)


def normalize_record(record: PatientRecord) -> PatientRecord:
    """Record with its image volume z-score normalized."""
    return replace(record, volume=zscore_normalize(record.volume))
