import hashlib
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from cfxgen import DataError, DatasetManifest, Label, ManifestEntry, Split, ingest, read_png, split_manifest, write_png
from cfxgen.data import pixels_to_uint8, split_counts, uint8_to_pixels
from cfxgen.synth import SynthSpec, synthesize


def make_manifest(per_class, root=Path(".")):
    entries = []
    for label, n in per_class.items():
        for i in range(n):
            entries.append(ManifestEntry(f"{label.value.lower()}_{i}", f"{i}.png", label, Split.TRAIN))
    return DatasetManifest(resolution=64, seed=0, entries=entries, root=root)


# --- pixel mapping -----------------------------------------------------------


def test_uint8_round_trip_is_exact_on_grid():
    values = np.arange(256, dtype=np.uint8).reshape(16, 16)
    assert np.array_equal(pixels_to_uint8(uint8_to_pixels(values)), values)


def test_write_read_png_preserves_grid_values(tmp_path):
    rng = np.random.default_rng(0)
    pixels = uint8_to_pixels(rng.integers(0, 256, size=(32, 32), dtype=np.uint8))
    write_png(pixels, tmp_path / "img.png")
    assert np.allclose(read_png(tmp_path / "img.png"), pixels, atol=1e-7)


def test_read_rejects_out_of_range(tmp_path):
    with pytest.raises(DataError):
        write_png(np.full((8, 8), 1.5, dtype=np.float32), tmp_path / "bad.png")


# --- manifest ----------------------------------------------------------------


def test_manifest_round_trip(tmp_path):
    manifest = make_manifest({Label.NORMAL: 4, Label.OPACITY: 3})
    manifest.save(tmp_path / "manifest.csv")
    loaded = DatasetManifest.load(tmp_path / "manifest.csv")
    assert loaded.resolution == manifest.resolution
    assert loaded.seed == manifest.seed
    assert loaded.entries == manifest.entries


def test_manifest_file_format(tmp_path):
    manifest = make_manifest({Label.NORMAL: 1, Label.OPACITY: 1})
    manifest.save(tmp_path / "manifest.csv")
    lines = (tmp_path / "manifest.csv").read_text().splitlines()
    assert lines[0] == "#resolution=64 seed=0"
    assert lines[1] == "id,path,label,split"
    assert lines[2].endswith("NORMAL,TRAIN")


def test_manifest_rejects_duplicate_ids():
    entries = [
        ManifestEntry("a", "a.png", Label.NORMAL, Split.TRAIN),
        ManifestEntry("a", "b.png", Label.OPACITY, Split.TRAIN),
    ]
    with pytest.raises(DataError, match="duplicate"):
        DatasetManifest(resolution=64, seed=0, entries=entries)


# --- split -------------------------------------------------------------------


def test_split_reference_partition_sizes():
    # 14863 images split 70/10/20 must land on the reference partition exactly
    per_class = {Label.NORMAL: 8851, Label.OPACITY: 6012}
    manifest = make_manifest(per_class)
    out = split_manifest(manifest, (0.7, 0.1, 0.2), seed=42)
    counts = out.counts()
    totals = {s: sum(v for (l, sp), v in counts.items() if sp == s) for s in Split}
    assert totals == {Split.TRAIN: 10403, Split.VAL: 1488, Split.TEST: 2972}
    assert counts[(Label.NORMAL, Split.TRAIN)] == 6195
    assert counts[(Label.NORMAL, Split.VAL)] == 886
    assert counts[(Label.NORMAL, Split.TEST)] == 1770
    assert counts[(Label.OPACITY, Split.TRAIN)] == 4208
    assert counts[(Label.OPACITY, Split.VAL)] == 602
    assert counts[(Label.OPACITY, Split.TEST)] == 1202


def test_split_deterministic():
    manifest = make_manifest({Label.NORMAL: 10, Label.OPACITY: 10})
    a = split_manifest(manifest, (0.8, 0.1, 0.1), seed=5)
    b = split_manifest(manifest, (0.8, 0.1, 0.1), seed=5)
    assert a.entries == b.entries
    c = split_manifest(manifest, (0.8, 0.1, 0.1), seed=6)
    assert any(x != y for x, y in zip(a.entries, c.entries))


def test_split_test_count_100_per_class():
    manifest = make_manifest({Label.NORMAL: 100, Label.OPACITY: 100})
    out = split_manifest(manifest, (0.7, 0.1, 0.2), seed=1)
    for label in Label:
        assert abs(out.counts()[(label, Split.TEST)] - 20) <= 1


def test_split_too_few_samples():
    manifest = make_manifest({Label.NORMAL: 2, Label.OPACITY: 10})
    with pytest.raises(DataError, match="at least 3"):
        split_manifest(manifest, (0.7, 0.1, 0.2), seed=0)


def test_split_rejects_bad_ratios():
    manifest = make_manifest({Label.NORMAL: 10, Label.OPACITY: 10})
    with pytest.raises(DataError):
        split_manifest(manifest, (0.7, 0.1, 0.1), seed=0)
    with pytest.raises(DataError):
        split_manifest(manifest, (0.9, 0.2, -0.1), seed=0)


@given(
    n=st.integers(min_value=3, max_value=20000),
    raw=st.tuples(
        st.floats(0.05, 0.9), st.floats(0.05, 0.9), st.floats(0.05, 0.9)
    ),
)
@settings(max_examples=300, deadline=None)
def test_split_counts_within_one_sample_of_ratios(n, raw):
    total = sum(raw)
    ratios = tuple(r / total for r in raw)
    counts = split_counts(n, ratios)
    assert sum(counts) == n
    assert all(c >= 0 for c in counts)
    for count, ratio in zip(counts, ratios):
        assert abs(count - ratio * n) <= 1.0 + 1e-9


def test_split_stratification_invariant():
    manifest = make_manifest({Label.NORMAL: 137, Label.OPACITY: 89})
    out = split_manifest(manifest, (0.7, 0.1, 0.2), seed=9)
    counts = out.counts()
    for label, n in ((Label.NORMAL, 137), (Label.OPACITY, 89)):
        for split, ratio in zip(Split, (0.7, 0.1, 0.2)):
            frac = counts.get((label, split), 0) / n
            assert abs(frac - ratio) <= 1.0 / n + 1e-12


# --- ingest ------------------------------------------------------------------


def _write_source_tree(root: Path, n_normal=4, n_opacity=4):
    rng = np.random.default_rng(1)
    for sub, n in (("healthy", n_normal), ("sick", n_opacity)):
        (root / sub).mkdir(parents=True)
        for i in range(n):
            arr = rng.integers(0, 256, size=(40, 40), dtype=np.uint8)
            Image.fromarray(arr, mode="L").save(root / sub / f"img_{i}.png")


def test_ingest_basic(tmp_path):
    src = tmp_path / "src"
    _write_source_tree(src, 10, 10)
    manifest, report = ingest(
        src, {"healthy": Label.NORMAL, "sick": Label.OPACITY}, 64, tmp_path / "out"
    )
    assert len(manifest) == 20
    assert manifest.resolution == 64
    assert report.n_ingested == 20
    assert report.skipped == []
    for entry in manifest.entries:
        pixels = manifest.load_pixels(entry)
        assert pixels.shape == (64, 64)
    assert (tmp_path / "out" / "manifest.csv").is_file()
    assert (tmp_path / "out" / "ingest_report.json").is_file()


def test_ingest_skips_truncated_file(tmp_path):
    src = tmp_path / "src"
    _write_source_tree(src, 4, 4)
    (src / "healthy" / "broken.png").write_bytes(b"\x89PNG\r\n\x1a\nnot really")
    manifest, report = ingest(
        src, {"healthy": Label.NORMAL, "sick": Label.OPACITY}, 32, tmp_path / "out"
    )
    assert len(manifest) == 8
    assert len(report.skipped) == 1
    assert "broken" in report.skipped[0]


def test_ingest_drops_duplicates(tmp_path):
    src = tmp_path / "src"
    _write_source_tree(src, 3, 3)
    data = (src / "healthy" / "img_0.png").read_bytes()
    (src / "healthy" / "copy_of_0.png").write_bytes(data)
    manifest, report = ingest(
        src, {"healthy": Label.NORMAL, "sick": Label.OPACITY}, 32, tmp_path / "out"
    )
    assert len(manifest) == 6
    assert report.n_duplicates == 1


def test_ingest_empty_class_errors(tmp_path):
    src = tmp_path / "src"
    _write_source_tree(src, 3, 0)
    (src / "sick").mkdir(exist_ok=True)
    with pytest.raises(DataError, match="OPACITY"):
        ingest(src, {"healthy": Label.NORMAL, "sick": Label.OPACITY}, 32, tmp_path / "out")


# --- synthesis ---------------------------------------------------------------


def test_synthesize_deterministic(tmp_path):
    spec = SynthSpec(n_per_class=6, resolution=64, opacity_strength=0.6, noise_seed=7)
    m1 = synthesize(spec, tmp_path / "a")
    m2 = synthesize(spec, tmp_path / "b")
    assert [e.id for e in m1.entries] == [e.id for e in m2.entries]
    assert [e.split for e in m1.entries] == [e.split for e in m2.entries]
    h1 = sorted(hashlib.sha256(p.read_bytes()).hexdigest() for p in (tmp_path / "a").rglob("*.png"))
    h2 = sorted(hashlib.sha256(p.read_bytes()).hexdigest() for p in (tmp_path / "b").rglob("*.png"))
    assert h1 == h2


def test_synthesize_rejects_zero_strength():
    with pytest.raises(DataError, match="opacity_strength"):
        SynthSpec(n_per_class=5, resolution=64, opacity_strength=0.0)


def test_synthesize_rejects_small_resolution(tmp_path):
    with pytest.raises(DataError, match="< 16"):
        synthesize(SynthSpec(n_per_class=5, resolution=8), tmp_path)


def test_synthesize_class_means_ordered(tiny_manifest):
    means = {label: [] for label in Label}
    for entry in tiny_manifest.entries:
        means[entry.label].append(float(tiny_manifest.load_pixels(entry).mean()))
    assert np.mean(means[Label.OPACITY]) > np.mean(means[Label.NORMAL])


def test_synthetic_mean_threshold_separability(tiny_manifest):
    values, labels = [], []
    for entry in tiny_manifest.entries:
        values.append(float(tiny_manifest.load_pixels(entry).mean()))
        labels.append(entry.label.class_index)
    values, labels = np.array(values), np.array(labels)
    best = max(
        float(((values > t).astype(int) == labels).mean())
        for t in np.linspace(values.min(), values.max(), 256)
    )
    assert best >= 0.8


def test_all_loaded_pixels_in_range(tiny_manifest):
    for entry in tiny_manifest.entries[:10]:
        pixels = tiny_manifest.load_pixels(entry)
        assert pixels.min() >= -1.0 and pixels.max() <= 1.0
        assert pixels.shape == (64, 64)
