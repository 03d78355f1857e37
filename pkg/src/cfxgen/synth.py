"""Desk-scale synthetic two-class dataset.

NORMAL images are smooth backgrounds with two dark elliptical "lung fields";
OPACITY images share the same structure but carry blotchy mid-gray clouds
inside the ellipses. The cloud contrast scales with ``opacity_strength``, so
the classes are separable by simple texture (and, deliberately, by mean
brightness) while still leaving the translation task non-trivial.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .data import DataError, DatasetManifest, Label, ManifestEntry, Split, split_manifest, write_png

DEFAULT_RATIOS = (0.7, 0.1, 0.2)


@dataclass(frozen=True)
class SynthSpec:
    n_per_class: int
    resolution: int = 64
    opacity_strength: float = 0.6
    noise_seed: int = 0

    def __post_init__(self) -> None:
        if self.n_per_class < 1:
            raise DataError("n_per_class must be >= 1")
        if self.resolution < 1:
            raise DataError("resolution must be positive")
        if not (0.0 < self.opacity_strength <= 1.0):
            raise DataError(
                f"opacity_strength must be in (0, 1], got {self.opacity_strength}"
            )


def _low_freq_noise(rng: np.random.Generator, resolution: int, grid: int) -> np.ndarray:
    """Smooth noise in [-1, 1]: coarse white noise upsampled bilinearly."""
    coarse = rng.uniform(-1.0, 1.0, size=(grid, grid)).astype(np.float32)
    img = Image.fromarray(coarse, mode="F").resize((resolution, resolution), Image.BILINEAR)
    return np.asarray(img, dtype=np.float32)


def _lung_mask(rng: np.random.Generator, resolution: int) -> np.ndarray:
    """Soft-edged union of two elliptical fields, values in [0, 1]."""
    res = resolution
    yy, xx = np.mgrid[0:res, 0:res].astype(np.float32) / res
    mask = np.zeros((res, res), dtype=np.float32)
    for cx in (0.32, 0.68):
        center_x = cx + rng.uniform(-0.02, 0.02)
        center_y = 0.52 + rng.uniform(-0.02, 0.02)
        ax = 0.16 + rng.uniform(-0.015, 0.015)
        ay = 0.30 + rng.uniform(-0.02, 0.02)
        d = ((xx - center_x) / ax) ** 2 + ((yy - center_y) / ay) ** 2
        edge = 1.0 / (1.0 + np.exp(np.clip((d - 1.0) / 0.08, -60.0, 60.0)))
        mask = np.maximum(mask, edge)
    return mask


def _clouds(rng: np.random.Generator, resolution: int, strength: float) -> np.ndarray:
    """Blotchy cloud field scaled by strength; total cloud mass is normalized
    so every OPACITY image carries a comparable brightness budget."""
    noise = _low_freq_noise(rng, resolution, grid=max(6, resolution // 8))
    blotches = np.clip(noise, 0.0, None)
    mean = float(blotches.mean())
    if mean > 0:
        blotches = np.clip(blotches * (0.35 / mean), 0.0, 1.4)
    return strength * blotches


def render_image(spec: SynthSpec, label: Label, index: int) -> np.ndarray:
    """Deterministic render of one sample; same (spec, label, index) -> same pixels."""
    rng = np.random.default_rng([spec.noise_seed, label.class_index, index])
    res = spec.resolution

    background = 0.30 + 0.06 * _low_freq_noise(rng, res, grid=5)
    mask = _lung_mask(rng, res)
    depth = 0.72 + 0.05 * _low_freq_noise(rng, res, grid=5)
    img = background - depth * mask

    if label is Label.OPACITY:
        # clouds brighten the dark lung interior toward mid-gray
        img = img + _clouds(rng, res, spec.opacity_strength) * mask

    img = img + 0.02 * rng.standard_normal((res, res)).astype(np.float32)
    return np.clip(img, -1.0, 1.0).astype(np.float32)


def synthesize(
    spec: SynthSpec,
    out_dir: str | Path,
    ratios: tuple[float, float, float] = DEFAULT_RATIOS,
) -> DatasetManifest:
    """Render the dataset, write PNGs plus manifest, return the split manifest."""
    if spec.resolution < 16:
        raise DataError(f"resolution {spec.resolution} < 16: patterns degenerate")
    out_dir = Path(out_dir)

    entries: list[ManifestEntry] = []
    for label in (Label.NORMAL, Label.OPACITY):
        for i in range(spec.n_per_class):
            sample_id = f"{label.value.lower()}_{i:04d}"
            rel_path = f"images/{label.value}/{sample_id}.png"
            write_png(render_image(spec, label, i), out_dir / rel_path)
            entries.append(ManifestEntry(sample_id, rel_path, label, Split.TRAIN))

    manifest = DatasetManifest(
        resolution=spec.resolution, seed=spec.noise_seed, entries=entries, root=out_dir
    )
    manifest = split_manifest(manifest, ratios, seed=spec.noise_seed)
    manifest.save(out_dir / "manifest.csv")
    return manifest
