"""Per-image counterfactual explanations, slider interpolation, pair planning."""
from __future__ import annotations

import base64
import io
import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .classifier import ClassifierModel, ProbPair
from .data import DataError, Label, check_pixels, pixels_to_uint8, write_png
from .gan import GanBundle


@dataclass(frozen=True)
class ExplanationResult:
    original_id: str
    original_pixels: np.ndarray
    counterfactual_pixels: np.ndarray
    original_probs: ProbPair
    counterfactual_probs: ProbPair
    original_decision: Label
    counterfactual_decision: Label
    flipped: bool
    l1_proximity: float  # mean absolute pixel difference
    generator_used: str  # "G" iff the input was decided NORMAL

    def to_json_dict(self) -> dict:
        return dict(
            original_id=self.original_id,
            original_probs=dict(p_normal=self.original_probs.p_x, p_opacity=self.original_probs.p_y),
            counterfactual_probs=dict(
                p_normal=self.counterfactual_probs.p_x, p_opacity=self.counterfactual_probs.p_y
            ),
            original_decision=self.original_decision.value,
            counterfactual_decision=self.counterfactual_decision.value,
            flipped=self.flipped,
            l1_proximity=self.l1_proximity,
            generator_used=self.generator_used,
        )


def explain(
    bundle: GanBundle,
    classifier: ClassifierModel,
    pixels: np.ndarray,
    sample_id: str = "",
) -> ExplanationResult:
    """Route the image through the decision-appropriate generator.

    The routing keys off the classifier's decision on the input, not any
    ground-truth label: images decided NORMAL go through G (toward OPACITY),
    images decided OPACITY go through F. Pure function of its inputs.
    """
    bundle.check_classifier(classifier)
    arr = check_pixels(pixels, classifier.config.resolution)

    original_probs = classifier.predict(arr)
    decision = original_probs.decision
    generator_used = "G" if decision is Label.NORMAL else "F"
    counterfactual = bundle.translate(arr, generator_used)
    counterfactual_probs = classifier.predict(counterfactual)

    return ExplanationResult(
        original_id=sample_id,
        original_pixels=arr,
        counterfactual_pixels=counterfactual,
        original_probs=original_probs,
        counterfactual_probs=counterfactual_probs,
        original_decision=decision,
        counterfactual_decision=counterfactual_probs.decision,
        flipped=decision is not counterfactual_probs.decision,
        l1_proximity=float(np.mean(np.abs(counterfactual.astype(np.float64) - arr))),
        generator_used=generator_used,
    )


def interpolate(original: np.ndarray, counterfactual: np.ndarray, steps: int) -> list[np.ndarray]:
    """Per-pixel linear blend; frame i sits at t = i/(steps-1).

    Endpoints are bit-exact in value. Frames are float64 so that the blend
    is affine to full precision.
    """
    if steps < 2:
        raise DataError(f"steps must be >= 2, got {steps}")
    a = np.asarray(original, dtype=np.float64)
    b = np.asarray(counterfactual, dtype=np.float64)
    if a.shape != b.shape:
        raise DataError(f"shape mismatch: {a.shape} vs {b.shape}")
    frames = []
    for i in range(steps):
        t = i / (steps - 1)
        frames.append(np.clip((1.0 - t) * a + t * b, -1.0, 1.0))
    return frames


@dataclass(frozen=True)
class PairPlan:
    class_names: tuple[str, ...]
    pairs: tuple[tuple[str, str], ...]


def plan_pairs(class_names: list[str]) -> PairPlan:
    """All unordered class pairs; one translation model is needed per pair."""
    if len(class_names) < 2:
        raise DataError("need at least 2 class names")
    if len(set(class_names)) != len(class_names):
        raise DataError(f"duplicate class names: {sorted(class_names)}")
    ordered = tuple(sorted(class_names))
    pairs = tuple(itertools.combinations(ordered, 2))
    return PairPlan(class_names=ordered, pairs=pairs)


# ---------------------------------------------------------------------------
# Serialization


def png_base64(pixels: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(pixels_to_uint8(np.asarray(pixels)), mode="L").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def save_explanation(
    result: ExplanationResult,
    directory: str | Path,
    frames: list[np.ndarray] | None = None,
) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "explanation.json", "w", encoding="utf-8") as fh:
        json.dump(result.to_json_dict(), fh, indent=2)
    write_png(result.original_pixels, directory / "original.png")
    write_png(result.counterfactual_pixels, directory / "counterfactual.png")
    if frames is not None:
        for i, frame in enumerate(frames):
            write_png(frame.astype(np.float32), directory / "frames" / f"frame_{i:03d}.png")
