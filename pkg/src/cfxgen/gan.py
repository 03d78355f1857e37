"""Counterfactual translation training: configs, bundle persistence, loop.

One training run owns four networks: G (X->Y), F (Y->X) and the two patch
discriminators. Each step first updates the discriminators on real images
versus history-buffered generated images, then updates both generators
jointly on the composite objective. The classifier that shapes the
counterfactual term is frozen; its checksum is pinned into the bundle.
"""
from __future__ import annotations

import csv
import hashlib
import json
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .classifier import ClassifierModel, ProbPair, state_checksum
from .data import DatasetManifest, Label, Split
from .losses import (
    LEAST_SQUARES,
    LossWeights,
    _adv_d_term,
    _adv_g_term,
    _mae,
    _sq_dist_to_target,
    _target_tensor,
)
from .networks import PatchDiscriminator, ResnetGenerator, default_residual_blocks

LOSS_COLUMNS = [
    "epoch",
    "step",
    "adv_g",
    "adv_f",
    "adv_dx",
    "adv_dy",
    "cycle",
    "identity",
    "counter",
    "gen_total",
    "disc_total",
]


class GanError(RuntimeError):
    pass


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 0.0002
    beta1: float = 0.5
    beta2: float = 0.999


@dataclass(frozen=True)
class PatchGanConfig:
    n_downsample_layers: int = 3
    base_width: int = 64


@dataclass(frozen=True)
class GanConfig:
    resolution: int = 256
    optimizer: AdamConfig = AdamConfig()
    batch_size: int = 1
    epochs: int = 20
    weights: LossWeights = LossWeights()
    patch_gan: PatchGanConfig = PatchGanConfig()
    generator_base_width: int = 64
    n_residual_blocks: int | None = None  # None -> 6 below 129px, 9 above
    adversarial_form: str = LEAST_SQUARES
    pool_size: int = 50

    @classmethod
    def desk(cls, resolution: int = 64, epochs: int = 3, gamma: float = 1.0) -> "GanConfig":
        """Small widths and few epochs: minutes on one CPU core."""
        return cls(
            resolution=resolution,
            epochs=epochs,
            weights=LossWeights(gamma_counter=gamma),
            patch_gan=PatchGanConfig(base_width=16),
            generator_base_width=16,
        )

    def residual_blocks(self) -> int:
        if self.n_residual_blocks is not None:
            return self.n_residual_blocks
        return default_residual_blocks(self.resolution)

    def with_gamma(self, gamma: float) -> "GanConfig":
        w = self.weights
        return GanConfig(
            resolution=self.resolution,
            optimizer=self.optimizer,
            batch_size=self.batch_size,
            epochs=self.epochs,
            weights=LossWeights(w.lambda_cycle, w.mu_identity, gamma, w.target_y, w.target_x),
            patch_gan=self.patch_gan,
            generator_base_width=self.generator_base_width,
            n_residual_blocks=self.n_residual_blocks,
            adversarial_form=self.adversarial_form,
            pool_size=self.pool_size,
        )

    def to_dict(self) -> dict:
        out = asdict(self)
        out["weights"]["target_y"] = self.weights.target_y.as_tuple()
        out["weights"]["target_x"] = self.weights.target_x.as_tuple()
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "GanConfig":
        w = raw["weights"]
        return cls(
            resolution=raw["resolution"],
            optimizer=AdamConfig(**raw["optimizer"]),
            batch_size=raw["batch_size"],
            epochs=raw["epochs"],
            weights=LossWeights(
                lambda_cycle=w["lambda_cycle"],
                mu_identity=w["mu_identity"],
                gamma_counter=w["gamma_counter"],
                target_y=ProbPair(*w["target_y"]),
                target_x=ProbPair(*w["target_x"]),
            ),
            patch_gan=PatchGanConfig(**raw["patch_gan"]),
            generator_base_width=raw["generator_base_width"],
            n_residual_blocks=raw["n_residual_blocks"],
            adversarial_form=raw["adversarial_form"],
            pool_size=raw["pool_size"],
        )


def build_networks(config: GanConfig, seed: int) -> tuple[ResnetGenerator, ResnetGenerator, PatchDiscriminator, PatchDiscriminator]:
    torch.manual_seed(seed)
    g = ResnetGenerator(config.resolution, config.generator_base_width, config.residual_blocks())
    f = ResnetGenerator(config.resolution, config.generator_base_width, config.residual_blocks())
    d_x = PatchDiscriminator(config.patch_gan.base_width, config.patch_gan.n_downsample_layers)
    d_y = PatchDiscriminator(config.patch_gan.base_width, config.patch_gan.n_downsample_layers)
    return g, f, d_x, d_y


class GanBundle:
    """The four trained networks plus the frozen-classifier reference."""

    def __init__(self, g, f, d_x, d_y, classifier_ref: str, config: GanConfig, training_log=None):
        self.g = g
        self.f = f
        self.d_x = d_x
        self.d_y = d_y
        self.classifier_ref = classifier_ref
        self.config = config
        self.training_log: list[dict] = training_log or []

    def check_classifier(self, classifier: ClassifierModel) -> None:
        actual = classifier.checksum()
        if actual != self.classifier_ref:
            raise GanError(
                "classifier checksum mismatch: bundle was trained against "
                f"{self.classifier_ref[:12]}..., got {actual[:12]}..."
            )

    def checksum(self) -> str:
        digest = hashlib.sha256()
        for net in (self.g, self.f, self.d_x, self.d_y):
            digest.update(state_checksum(net).encode())
        return digest.hexdigest()

    def translate(self, pixels: np.ndarray, generator: str) -> np.ndarray:
        """Run one image through G or F; returns float32 pixels in [-1, 1]."""
        net = {"G": self.g, "F": self.f}[generator]
        net.eval()
        with torch.no_grad():
            batch = torch.from_numpy(np.asarray(pixels, dtype=np.float32)).reshape(
                1, 1, *pixels.shape
            )
            out = net(batch)[0, 0].numpy()
        return out

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        torch.save(self.g.state_dict(), directory / "G.bin")
        torch.save(self.f.state_dict(), directory / "F.bin")
        torch.save(self.d_x.state_dict(), directory / "DX.bin")
        torch.save(self.d_y.state_dict(), directory / "DY.bin")
        with open(directory / "config.json", "w", encoding="utf-8") as fh:
            json.dump(self.config.to_dict(), fh, indent=2)
        (directory / "classifier_ref.txt").write_text(self.classifier_ref + "\n", encoding="utf-8")

    @classmethod
    def load(cls, directory: str | Path) -> "GanBundle":
        directory = Path(directory)
        with open(directory / "config.json", encoding="utf-8") as fh:
            config = GanConfig.from_dict(json.load(fh))
        g, f, d_x, d_y = build_networks(config, seed=0)
        g.load_state_dict(torch.load(directory / "G.bin", weights_only=True))
        f.load_state_dict(torch.load(directory / "F.bin", weights_only=True))
        d_x.load_state_dict(torch.load(directory / "DX.bin", weights_only=True))
        d_y.load_state_dict(torch.load(directory / "DY.bin", weights_only=True))
        for net in (g, f, d_x, d_y):
            net.eval()
        ref = (directory / "classifier_ref.txt").read_text(encoding="utf-8").strip()
        return cls(g, f, d_x, d_y, ref, config)


class ImagePool:
    """History buffer of generated images for discriminator updates.

    Returns the incoming image while the buffer fills; afterwards, half the
    time swaps it for (and with) a randomly stored older one.
    """

    def __init__(self, size: int, rng: random.Random):
        self.size = size
        self.rng = rng
        self.images: list[torch.Tensor] = []

    def query(self, batch: torch.Tensor) -> torch.Tensor:
        if self.size == 0:
            return batch
        out = []
        for img in batch.detach():
            if len(self.images) < self.size:
                self.images.append(img.clone())
                out.append(img)
            elif self.rng.random() > 0.5:
                idx = self.rng.randrange(self.size)
                out.append(self.images[idx].clone())
                self.images[idx] = img.clone()
            else:
                out.append(img)
        return torch.stack(out)


def _non_finite_report(scalars: dict[str, float]) -> str:
    parts = [f"{k}={v:.6g}" for k, v in scalars.items()]
    return "non-finite loss during training: " + ", ".join(parts)


def train_gan(
    manifest: DatasetManifest,
    classifier: ClassifierModel,
    config: GanConfig,
    seed: int,
    out_dir: str | Path,
) -> GanBundle:
    """Run the alternating training loop; checkpoints per epoch under out_dir."""
    if not classifier.frozen:
        raise GanError("classifier must be trained and frozen before translation training")
    if classifier.config.resolution != config.resolution:
        raise GanError(
            f"classifier resolution {classifier.config.resolution} != GAN resolution {config.resolution}"
        )
    for label in Label:
        if not manifest.entries_for(Split.TRAIN, label):
            raise GanError(f"TRAIN split has no {label.value} images")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    classifier_ref = classifier.checksum()

    x_imgs, _, _ = _load_class(manifest, Label.NORMAL)
    y_imgs, _, _ = _load_class(manifest, Label.OPACITY)

    g, f, d_x, d_y = build_networks(config, seed)
    for net in (g, f, d_x, d_y):
        net.train()
    gen_opt = torch.optim.Adam(
        list(g.parameters()) + list(f.parameters()),
        lr=config.optimizer.learning_rate,
        betas=(config.optimizer.beta1, config.optimizer.beta2),
    )
    disc_opt = torch.optim.Adam(
        list(d_x.parameters()) + list(d_y.parameters()),
        lr=config.optimizer.learning_rate,
        betas=(config.optimizer.beta1, config.optimizer.beta2),
    )

    rng = np.random.default_rng(seed)
    pool_x = ImagePool(config.pool_size, random.Random(seed * 2 + 1))
    pool_y = ImagePool(config.pool_size, random.Random(seed * 2 + 2))
    clf_net = classifier.net
    target_y = _target_tensor(config.weights.target_y, x_imgs)
    target_x = _target_tensor(config.weights.target_x, x_imgs)
    form = config.adversarial_form

    bundle = GanBundle(g, f, d_x, d_y, classifier_ref, config)
    n_x, n_y = len(x_imgs), len(y_imgs)
    steps_per_epoch = max(1, max(n_x, n_y) // config.batch_size)

    log_path = out_dir / "losses.csv"
    with open(log_path, "w", encoding="utf-8", newline="") as log_fh:
        writer = csv.writer(log_fh)
        writer.writerow(LOSS_COLUMNS)

        for epoch in range(1, config.epochs + 1):
            order_x = np.resize(rng.permutation(n_x), steps_per_epoch * config.batch_size)
            order_y = np.resize(rng.permutation(n_y), steps_per_epoch * config.batch_size)
            epoch_sums = {k: 0.0 for k in LOSS_COLUMNS[2:]}

            for step in range(steps_per_epoch):
                lo = step * config.batch_size
                x = x_imgs[order_x[lo : lo + config.batch_size]]
                y = y_imgs[order_y[lo : lo + config.batch_size]]

                # (1) discriminators, on history-buffered fakes
                with torch.no_grad():
                    fake_y = g(x)
                    fake_x = f(y)
                disc_opt.zero_grad()
                adv_dy = _adv_d_term(d_y(y), d_y(pool_y.query(fake_y)), form)
                adv_dx = _adv_d_term(d_x(x), d_x(pool_x.query(fake_x)), form)
                disc_total = adv_dy + adv_dx
                disc_total.backward()
                disc_opt.step()

                # (2) both generators jointly, on the composite objective
                for p in d_x.parameters():
                    p.requires_grad_(False)
                for p in d_y.parameters():
                    p.requires_grad_(False)
                gen_opt.zero_grad()
                fake_y = g(x)
                fake_x = f(y)
                adv_g = _adv_g_term(d_y(fake_y), form)
                adv_f = _adv_g_term(d_x(fake_x), form)
                cycle = _mae(f(fake_y), x) + _mae(g(fake_x), y)
                identity = _mae(g(y), y) + _mae(f(x), x)
                counter = _sq_dist_to_target(clf_net(fake_y), target_y) + _sq_dist_to_target(
                    clf_net(fake_x), target_x
                )
                gen_total = (
                    adv_g
                    + adv_f
                    + config.weights.lambda_cycle * cycle
                    + config.weights.mu_identity * identity
                    + config.weights.gamma_counter * counter
                )
                gen_total.backward()
                gen_opt.step()
                for p in d_x.parameters():
                    p.requires_grad_(True)
                for p in d_y.parameters():
                    p.requires_grad_(True)

                scalars = dict(
                    adv_g=adv_g.item(),
                    adv_f=adv_f.item(),
                    adv_dx=adv_dx.item(),
                    adv_dy=adv_dy.item(),
                    cycle=cycle.item(),
                    identity=identity.item(),
                    counter=counter.item(),
                    gen_total=gen_total.item(),
                    disc_total=disc_total.item(),
                )
                if not all(np.isfinite(v) for v in scalars.values()):
                    raise GanError(_non_finite_report(scalars))
                assert all(v >= -1e-6 for v in scalars.values()), f"negative loss component: {scalars}"
                writer.writerow([epoch, step] + [scalars[k] for k in LOSS_COLUMNS[2:]])
                for k, v in scalars.items():
                    epoch_sums[k] += v

            epoch_means = {k: v / steps_per_epoch for k, v in epoch_sums.items()}
            bundle.training_log.append(dict(epoch=epoch, **epoch_means))
            bundle.save(out_dir / f"epoch_{epoch}")

    if classifier.checksum() != classifier_ref:
        raise GanError("classifier parameters changed during training; freeze contract violated")
    for net in (g, f, d_x, d_y):
        net.eval()
    return bundle


def _load_class(manifest: DatasetManifest, label: Label) -> tuple[torch.Tensor, list[str], int]:
    entries = manifest.entries_for(Split.TRAIN, label)
    imgs = np.stack([manifest.load_pixels(e) for e in entries])
    tensor = torch.from_numpy(imgs).unsqueeze(1)
    return tensor, [e.id for e in entries], len(entries)
