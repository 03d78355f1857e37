"""Dataset manifests, PNG image IO, ingestion and deterministic splitting.

All pixel data in this package lives in [-1, 1] as float32 single-channel
square arrays. Images on disk are 8-bit grayscale PNGs, mapped linearly
between the two ranges on read/write.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError


class Label(str, Enum):
    NORMAL = "NORMAL"
    OPACITY = "OPACITY"

    @property
    def class_index(self) -> int:
        # index 0 = NORMAL, index 1 = OPACITY, everywhere in this package
        return 0 if self is Label.NORMAL else 1


class Split(str, Enum):
    TRAIN = "TRAIN"
    VAL = "VAL"
    TEST = "TEST"


SPLIT_ORDER = (Split.TRAIN, Split.VAL, Split.TEST)


class DataError(ValueError):
    """Raised on malformed manifests, images or split requests."""


# ---------------------------------------------------------------------------
# Pixel <-> PNG mapping


def pixels_to_uint8(pixels: np.ndarray) -> np.ndarray:
    """Map [-1, 1] floats linearly onto the 8-bit grid."""
    scaled = np.rint((np.asarray(pixels, dtype=np.float64) + 1.0) / 2.0 * 255.0)
    return np.clip(scaled, 0, 255).astype(np.uint8)


def uint8_to_pixels(values: np.ndarray) -> np.ndarray:
    return (values.astype(np.float32) / 255.0) * 2.0 - 1.0


def check_pixels(pixels: np.ndarray, resolution: int | None = None) -> np.ndarray:
    """Validate the package-wide pixel contract; returns the array as float32."""
    arr = np.asarray(pixels, dtype=np.float32)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DataError(f"expected a square 2-D image, got shape {arr.shape}")
    if resolution is not None and arr.shape[0] != resolution:
        raise DataError(f"expected resolution {resolution}, got {arr.shape[0]}")
    if not np.isfinite(arr).all():
        raise DataError("image contains non-finite values")
    lo, hi = float(arr.min()), float(arr.max())
    if lo < -1.0 or hi > 1.0:
        raise DataError(f"pixel values outside [-1, 1] (min {lo:.4f}, max {hi:.4f})")
    return arr


def write_png(pixels: np.ndarray, path: str | Path) -> None:
    arr = check_pixels(pixels)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(pixels_to_uint8(arr), mode="L").save(path, format="PNG")


def read_png(path: str | Path, resolution: int | None = None) -> np.ndarray:
    with Image.open(path) as img:
        gray = img.convert("L")
        if resolution is not None and gray.size != (resolution, resolution):
            gray = gray.resize((resolution, resolution), Image.BILINEAR)
        arr = uint8_to_pixels(np.asarray(gray, dtype=np.uint8))
    return check_pixels(arr, resolution)


def decode_image_bytes(data: bytes, resolution: int) -> np.ndarray:
    """Decode arbitrary image bytes to the [-1, 1] grid at a target resolution."""
    import io

    with Image.open(io.BytesIO(data)) as img:
        gray = img.convert("L").resize((resolution, resolution), Image.BILINEAR)
        return check_pixels(uint8_to_pixels(np.asarray(gray, dtype=np.uint8)), resolution)


# ---------------------------------------------------------------------------
# Manifest


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    path: str  # relative to the manifest's root directory
    label: Label
    split: Split


@dataclass(frozen=True)
class ImageSample:
    id: str
    pixels: np.ndarray  # square float32 in [-1, 1]
    label: Label
    split: Split


@dataclass
class DatasetManifest:
    resolution: int
    seed: int
    entries: list[ManifestEntry]
    root: Path = field(default_factory=Path)

    def __post_init__(self) -> None:
        if self.resolution <= 0:
            raise DataError("resolution must be positive")
        ids = [e.id for e in self.entries]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise DataError(f"duplicate ids in manifest: {dupes[:5]}")
        self.root = Path(self.root)

    def __len__(self) -> int:
        return len(self.entries)

    def counts(self) -> dict[tuple[Label, Split], int]:
        out: dict[tuple[Label, Split], int] = {}
        for e in self.entries:
            out[(e.label, e.split)] = out.get((e.label, e.split), 0) + 1
        return out

    def entries_for(self, split: Split | None = None, label: Label | None = None) -> list[ManifestEntry]:
        return [
            e
            for e in self.entries
            if (split is None or e.split == split) and (label is None or e.label == label)
        ]

    def load_pixels(self, entry: ManifestEntry) -> np.ndarray:
        return read_png(self.root / entry.path, self.resolution)

    def load_sample(self, entry: ManifestEntry) -> ImageSample:
        return ImageSample(entry.id, self.load_pixels(entry), entry.label, entry.split)

    def load_split(self, split: Split) -> tuple[np.ndarray, np.ndarray, list[str]]:
        """Returns (images (N,H,W), class indices (N,), ids) in manifest order."""
        entries = self.entries_for(split)
        if not entries:
            raise DataError(f"split {split.value} is empty")
        imgs = np.stack([self.load_pixels(e) for e in entries])
        labels = np.array([e.label.class_index for e in entries], dtype=np.int64)
        return imgs, labels, [e.id for e in entries]

    def save(self, path: str | Path) -> None:
        """Line-oriented text format: metadata header, CSV header, one row per entry."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(f"#resolution={self.resolution} seed={self.seed}\n")
            writer = csv.writer(fh)
            writer.writerow(["id", "path", "label", "split"])
            for e in self.entries:
                writer.writerow([e.id, e.path, e.label.value, e.split.value])

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        path = Path(path)
        with open(path, encoding="utf-8", newline="") as fh:
            meta = fh.readline().strip()
            if not meta.startswith("#"):
                raise DataError(f"{path}: missing metadata header line")
            fields = dict(part.split("=", 1) for part in meta[1:].split())
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["id", "path", "label", "split"]:
                raise DataError(f"{path}: unexpected column header {header}")
            entries = [
                ManifestEntry(row[0], row[1], Label(row[2]), Split(row[3])) for row in reader if row
            ]
        return cls(
            resolution=int(fields["resolution"]),
            seed=int(fields["seed"]),
            entries=entries,
            root=path.parent,
        )


# ---------------------------------------------------------------------------
# Ingestion


@dataclass
class IngestReport:
    n_ingested: int = 0
    n_duplicates: int = 0
    skipped: list[str] = field(default_factory=list)

    def save(self, path: str | Path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "n_ingested": self.n_ingested,
                    "n_duplicates": self.n_duplicates,
                    "skipped": self.skipped,
                },
                fh,
                indent=2,
            )


def _sanitize_id(rel: Path) -> str:
    stem = rel.with_suffix("")
    return "_".join(p.replace(" ", "-").lower() for p in stem.parts)


def ingest(
    source_dir: str | Path,
    class_map: dict[str, Label],
    resolution: int,
    out_dir: str | Path,
) -> tuple[DatasetManifest, IngestReport]:
    """Normalize a directory of class subfolders into a canonical image set.

    Every decodable image under ``source_dir/<subdir>`` is resized to
    ``resolution`` x ``resolution``, converted to single-channel grayscale,
    rescaled to [-1, 1] and written out as 8-bit PNG. Exact duplicates (by
    hash of the normalized pixel content) are dropped and counted. Undecodable
    files are skipped and listed in the report. All entries start in TRAIN;
    use :func:`split_manifest` to assign splits.
    """
    source_dir = Path(source_dir)
    out_dir = Path(out_dir)
    if resolution <= 0:
        raise DataError("resolution must be positive")

    report = IngestReport()
    entries: list[ManifestEntry] = []
    seen_hashes: set[str] = set()

    for subdir in sorted(class_map):
        label = class_map[subdir]
        class_dir = source_dir / subdir
        files = sorted(p for p in class_dir.rglob("*") if p.is_file()) if class_dir.is_dir() else []
        class_count = 0
        for src in files:
            try:
                with Image.open(src) as img:
                    gray = img.convert("L").resize((resolution, resolution), Image.BILINEAR)
                    arr = np.asarray(gray, dtype=np.uint8)
            except (UnidentifiedImageError, OSError, ValueError):
                report.skipped.append(str(src.relative_to(source_dir)))
                continue
            digest = hashlib.sha256(arr.tobytes()).hexdigest()
            if digest in seen_hashes:
                report.n_duplicates += 1
                continue
            seen_hashes.add(digest)
            sample_id = f"{label.value.lower()}_{_sanitize_id(src.relative_to(class_dir))}"
            rel_path = f"images/{label.value}/{sample_id}.png"
            write_png(uint8_to_pixels(arr), out_dir / rel_path)
            entries.append(ManifestEntry(sample_id, rel_path, label, Split.TRAIN))
            class_count += 1
        if class_count == 0:
            raise DataError(
                f"class {label.value!r} (subdirectory {subdir!r}) has no decodable images"
            )

    report.n_ingested = len(entries)
    manifest = DatasetManifest(resolution=resolution, seed=0, entries=entries, root=out_dir)
    manifest.save(out_dir / "manifest.csv")
    report.save(out_dir / "ingest_report.json")
    return manifest, report


# ---------------------------------------------------------------------------
# Splitting


def _snap(value: float) -> float:
    # float noise like 0.3 * 10 == 3.0000000000000004 must not shift a ceil/floor
    nearest = round(value)
    return float(nearest) if abs(value - nearest) < 1e-9 * max(1.0, abs(value)) else value


def split_counts(n: int, ratios: tuple[float, float, float]) -> tuple[int, int, int]:
    """Per-class split sizes for (train, val, test) ratios.

    Train takes n minus the ceiling of the val+test share, test takes the
    floor of its share, val takes the remainder (capped at its own ceiling).
    Each count stays within one sample of the exact ratio target.
    """
    _, r_val, r_test = ratios
    n_test = math.floor(_snap(r_test * n))
    n_holdout = math.ceil(_snap((r_val + r_test) * n))
    n_val = min(n_holdout - n_test, math.ceil(_snap(r_val * n)))
    n_train = n - n_val - n_test
    return n_train, n_val, n_test


def split_manifest(
    manifest: DatasetManifest,
    ratios: tuple[float, float, float],
    seed: int,
) -> DatasetManifest:
    """Reassign splits, stratified per class, deterministically from seed."""
    if any(r <= 0 for r in ratios):
        raise DataError(f"ratios must be positive, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"ratios must sum to 1, got {sum(ratios)}")

    new_entries: dict[str, ManifestEntry] = {}
    for label in Label:
        members = sorted(manifest.entries_for(label=label), key=lambda e: e.id)
        if not members:
            continue
        if len(members) < 3:
            raise DataError(
                f"class {label.value} has only {len(members)} samples; "
                "need at least 3 to populate all splits"
            )
        rng = np.random.default_rng([seed, label.class_index])
        order = rng.permutation(len(members))
        n_train, n_val, _ = split_counts(len(members), ratios)
        for rank, idx in enumerate(order):
            split = Split.TRAIN if rank < n_train else Split.VAL if rank < n_train + n_val else Split.TEST
            e = members[idx]
            new_entries[e.id] = ManifestEntry(e.id, e.path, e.label, split)

    entries = [new_entries[e.id] for e in manifest.entries]
    return DatasetManifest(
        resolution=manifest.resolution, seed=seed, entries=entries, root=manifest.root
    )
