"""Flip-accuracy evaluation: confusion matrices before/after translation.

Every image in the chosen split is classified, translated by the generator
matching that decision, and classified again. The headline matrices are
keyed by the classifier's pre-translation decision (what the routing rule
acts on); matrices keyed by ground-truth label are emitted alongside as a
secondary table. The ablation trains two bundles that differ only in the
counterfactual loss weight and reports both.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .classifier import ClassifierModel
from .data import DatasetManifest, Label, Split
from .gan import GanBundle, GanConfig, GanError, train_gan

TOTAL = "TOTAL"
SUBSETS = (Label.NORMAL.value, Label.OPACITY.value, TOTAL)


@dataclass
class FlipReport:
    subset_matrices: dict[str, list[list[int]]]  # [pre-decision][post-decision] counts
    label_matrices: dict[str, list[list[int]]]  # secondary: subsets keyed by true label
    flip_accuracy_normal: float
    flip_accuracy_opacity: float
    flip_accuracy_total: float
    mean_l1_proximity: float
    n_images: int
    bundle_tag: str

    def validate(self) -> None:
        for matrices in (self.subset_matrices, self.label_matrices):
            total = matrices[TOTAL]
            for i in range(2):
                for j in range(2):
                    parts = matrices[Label.NORMAL.value][i][j] + matrices[Label.OPACITY.value][i][j]
                    if parts != total[i][j]:
                        raise AssertionError("TOTAL matrix is not the sum of the class matrices")
            if sum(sum(row) for row in total) != self.n_images:
                raise AssertionError("matrix entries do not sum to the subset size")

    def to_dict(self) -> dict:
        return dict(
            subset_matrices=self.subset_matrices,
            label_matrices=self.label_matrices,
            flip_accuracy_normal=self.flip_accuracy_normal,
            flip_accuracy_opacity=self.flip_accuracy_opacity,
            flip_accuracy_total=self.flip_accuracy_total,
            mean_l1_proximity=self.mean_l1_proximity,
            n_images=self.n_images,
            bundle_tag=self.bundle_tag,
        )


def _empty_matrices() -> dict[str, list[list[int]]]:
    return {name: [[0, 0], [0, 0]] for name in SUBSETS}


def evaluate_flips(
    bundle: GanBundle,
    classifier: ClassifierModel,
    manifest: DatasetManifest,
    split: Split,
) -> FlipReport:
    bundle.check_classifier(classifier)
    entries = manifest.entries_for(split)
    if not entries:
        raise GanError(f"split {split.value} is empty")

    subset_matrices = _empty_matrices()
    label_matrices = _empty_matrices()
    flips = {Label.NORMAL: 0, Label.OPACITY: 0}
    pre_counts = {Label.NORMAL: 0, Label.OPACITY: 0}
    proximity_sum = 0.0

    for entry in entries:  # manifest order: a fixed, deterministic reduction
        pixels = manifest.load_pixels(entry)
        pre = classifier.predict(pixels).decision
        translated = bundle.translate(pixels, "G" if pre is Label.NORMAL else "F")
        post = classifier.predict(translated).decision

        i, j = pre.class_index, post.class_index
        subset_matrices[pre.value][i][j] += 1
        subset_matrices[TOTAL][i][j] += 1
        label_matrices[entry.label.value][i][j] += 1
        label_matrices[TOTAL][i][j] += 1
        pre_counts[pre] += 1
        if pre is not post:
            flips[pre] += 1
        proximity_sum += float(np.mean(np.abs(translated.astype(np.float64) - pixels)))

    def rate(label: Label) -> float:
        return flips[label] / pre_counts[label] if pre_counts[label] else 0.0

    n = len(entries)
    report = FlipReport(
        subset_matrices=subset_matrices,
        label_matrices=label_matrices,
        flip_accuracy_normal=rate(Label.NORMAL),
        flip_accuracy_opacity=rate(Label.OPACITY),
        flip_accuracy_total=(flips[Label.NORMAL] + flips[Label.OPACITY]) / n,
        mean_l1_proximity=proximity_sum / n,
        n_images=n,
        bundle_tag=bundle.checksum()[:12],
    )
    report.validate()
    return report


# ---------------------------------------------------------------------------
# Report files


def _matrix_block(title: str, matrix: list[list[int]]) -> list[str]:
    labels = [Label.NORMAL.value, Label.OPACITY.value]
    width = max(8, *(len(str(v)) for row in matrix for v in row))
    corner = "pre \\ post"
    lines = [title, f"{corner:>12} " + " ".join(f"{l:>{width}}" for l in labels)]
    for i, l in enumerate(labels):
        lines.append(f"{l:>12} " + " ".join(f"{matrix[i][j]:>{width}}" for j in range(2)))
    return lines


def format_report_text(report: FlipReport) -> str:
    lines = [
        f"Flip evaluation over {report.n_images} images (bundle {report.bundle_tag})",
        "",
        f"flip accuracy: total {report.flip_accuracy_total:.4f}  "
        f"normal {report.flip_accuracy_normal:.4f}  opacity {report.flip_accuracy_opacity:.4f}",
        f"mean L1 proximity: {report.mean_l1_proximity:.4f}",
        "",
        "Subsets keyed by pre-translation decision (headline):",
    ]
    for name in SUBSETS:
        lines += [""] + _matrix_block(f"[{name}]", report.subset_matrices[name])
    lines += ["", "Subsets keyed by ground-truth label (secondary):"]
    for name in SUBSETS:
        lines += [""] + _matrix_block(f"[{name}]", report.label_matrices[name])
    return "\n".join(lines) + "\n"


def write_report(report: FlipReport, directory: str | Path, stem: str = "flip_report") -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / f"{stem}.json", "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
    (directory / f"{stem}.txt").write_text(format_report_text(report), encoding="utf-8")


# ---------------------------------------------------------------------------
# Ablation


@dataclass
class AblationResult:
    report_gamma_on: FlipReport
    report_gamma_off: FlipReport
    gamma_on: float = 1.0


def ablation(
    manifest: DatasetManifest,
    classifier: ClassifierModel,
    config: GanConfig,
    seed: int,
    out_dir: str | Path,
    split: Split = Split.TEST,
) -> AblationResult:
    """Train twin bundles, identical except the counterfactual weight (on vs 0)."""
    out_dir = Path(out_dir)
    gamma_on = config.weights.gamma_counter
    if gamma_on == 0:
        raise GanError("ablation needs a nonzero counterfactual weight to compare against")

    train_gan(manifest, classifier, config, seed, out_dir / "gamma_on")
    train_gan(manifest, classifier, config.with_gamma(0.0), seed, out_dir / "gamma_off")

    # reports always come from reloaded checkpoints, never in-memory state
    bundle_on = GanBundle.load(out_dir / "gamma_on" / f"epoch_{config.epochs}")
    bundle_off = GanBundle.load(out_dir / "gamma_off" / f"epoch_{config.epochs}")
    report_on = evaluate_flips(bundle_on, classifier, manifest, split)
    report_off = evaluate_flips(bundle_off, classifier, manifest, split)
    result = AblationResult(report_on, report_off, gamma_on)

    write_report(report_on, out_dir, "flip_report_gamma_on")
    write_report(report_off, out_dir, "flip_report_gamma_off")
    summary = {
        "gamma_on": gamma_on,
        "flip_accuracy_total": {
            "with_counter_loss": report_on.flip_accuracy_total,
            "without_counter_loss": report_off.flip_accuracy_total,
        },
        "flip_accuracy_normal": {
            "with_counter_loss": report_on.flip_accuracy_normal,
            "without_counter_loss": report_off.flip_accuracy_normal,
        },
        "flip_accuracy_opacity": {
            "with_counter_loss": report_on.flip_accuracy_opacity,
            "without_counter_loss": report_off.flip_accuracy_opacity,
        },
    }
    with open(out_dir / "ablation_summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
    side_by_side = (
        "Ablation: counterfactual loss on vs off\n"
        f"{'':24} {'gamma=' + format(gamma_on, 'g'):>12} {'gamma=0':>12}\n"
        f"{'flip accuracy total':24} {report_on.flip_accuracy_total:>12.4f} {report_off.flip_accuracy_total:>12.4f}\n"
        f"{'flip accuracy normal':24} {report_on.flip_accuracy_normal:>12.4f} {report_off.flip_accuracy_normal:>12.4f}\n"
        f"{'flip accuracy opacity':24} {report_on.flip_accuracy_opacity:>12.4f} {report_off.flip_accuracy_opacity:>12.4f}\n"
        f"{'mean L1 proximity':24} {report_on.mean_l1_proximity:>12.4f} {report_off.mean_l1_proximity:>12.4f}\n"
    )
    (out_dir / "ablation_summary.txt").write_text(side_by_side, encoding="utf-8")
    return result
