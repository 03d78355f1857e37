"""Binary CNN classifier: build, train, predict, evaluate, save/load.

Two architectures sit behind one interface: ALEXNET_VARIANT, a faithful
24-layer build of the large reference stack (convolutions use TF-style
"same" padding, poolings are unpadded; the per-layer choice is recorded in
the checkpoint config), and SMALL_CNN, a ~90k-parameter desk-scale net.
Class index 0 = NORMAL (X), 1 = OPACITY (Y). Training is SGD with momentum
on mean-squared error against one-hot targets, plus L2 regularization on
convolution/dense kernels and biases.
"""
from __future__ import annotations

import copy
import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .data import DataError, DatasetManifest, Label, Split, check_pixels


class ClassifierError(RuntimeError):
    pass


class Architecture(str, Enum):
    ALEXNET_VARIANT = "ALEXNET_VARIANT"
    SMALL_CNN = "SMALL_CNN"


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float
    momentum: float


@dataclass(frozen=True)
class ClassifierConfig:
    resolution: int
    architecture: Architecture
    l2_factor: float = 0.001
    dropout_p: float = 0.4
    optimizer: OptimizerConfig = OptimizerConfig(0.0001, 0.9)
    batch_size: int = 32
    epochs: int = 30

    @classmethod
    def alexnet(cls, resolution: int = 512, epochs: int = 1000) -> "ClassifierConfig":
        return cls(
            resolution=resolution,
            architecture=Architecture.ALEXNET_VARIANT,
            optimizer=OptimizerConfig(learning_rate=0.0001, momentum=0.9),
            batch_size=32,
            epochs=epochs,
        )

    @classmethod
    def small(cls, resolution: int = 64, epochs: int = 30) -> "ClassifierConfig":
        # desk-scale defaults; higher lr since the net is tiny
        return cls(
            resolution=resolution,
            architecture=Architecture.SMALL_CNN,
            optimizer=OptimizerConfig(learning_rate=0.02, momentum=0.9),
            batch_size=32,
            epochs=epochs,
        )


@dataclass(frozen=True)
class ProbPair:
    p_x: float
    p_y: float

    def __post_init__(self) -> None:
        if self.p_x < 0 or self.p_y < 0 or abs(self.p_x + self.p_y - 1.0) > 1e-6:
            raise ClassifierError(
                f"invalid probability pair ({self.p_x}, {self.p_y}): "
                "components must be nonnegative and sum to 1"
            )

    @property
    def decision(self) -> Label:
        # exact tie resolves to NORMAL (class X, first index)
        return Label.OPACITY if self.p_y > self.p_x else Label.NORMAL

    def as_tuple(self) -> tuple[float, float]:
        return (self.p_x, self.p_y)


# ---------------------------------------------------------------------------
# Architectures

# 24-layer table: (layer type, params); activations follow convs/dense inline
_ALEXNET_TABLE: list[tuple[str, dict]] = [
    ("Conv2D", dict(filters=96, kernel=11, stride=4)),
    ("MaxPooling2D", dict(kernel=2, stride=2)),
    ("BatchNormalization", {}),
    ("Conv2D", dict(filters=256, kernel=11, stride=1)),
    ("MaxPooling2D", dict(kernel=2, stride=2)),
    ("BatchNormalization", {}),
    ("Conv2D", dict(filters=384, kernel=3, stride=1)),
    ("BatchNormalization", {}),
    ("Conv2D", dict(filters=384, kernel=3, stride=1)),
    ("BatchNormalization", {}),
    ("Conv2D", dict(filters=256, kernel=3, stride=1)),
    ("MaxPooling2D", dict(kernel=2, stride=2)),
    ("BatchNormalization", {}),
    ("Flatten", {}),
    ("Dense", dict(units=4096)),
    ("Dropout", {}),
    ("BatchNormalization", {}),
    ("Dense", dict(units=4096)),
    ("Dropout", {}),
    ("BatchNormalization", {}),
    ("Dense", dict(units=1000)),
    ("Dropout", {}),
    ("BatchNormalization", {}),
    ("Dense", dict(units=2)),
]


class ConvSame(nn.Module):
    """Conv2d with TF-style 'same' zero padding for a fixed input side."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int, stride: int, in_side: int):
        super().__init__()
        out_side = math.ceil(in_side / stride)
        total = max((out_side - 1) * stride + kernel - in_side, 0)
        begin, end = total // 2, total - total // 2
        self.pad = (begin, end, begin, end)
        self.conv = nn.Conv2d(in_ch, out_ch, kernel, stride=stride, padding=0)
        self.out_side = out_side

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv(F.pad(x, self.pad))


def _build_alexnet_variant(resolution: int, dropout_p: float) -> tuple[nn.Sequential, list[dict]]:
    modules: list[nn.Module] = []
    report: list[dict] = []
    side, channels = resolution, 1
    features: int | None = None

    for layer_no, (kind, params) in enumerate(_ALEXNET_TABLE, start=1):
        if kind == "Conv2D":
            conv = ConvSame(channels, params["filters"], params["kernel"], params["stride"], side)
            modules += [conv, nn.ReLU(inplace=True)]
            side, channels = conv.out_side, params["filters"]
            report.append(
                dict(layer=layer_no, type=kind, padding="same", output_side=side, channels=channels)
            )
        elif kind == "MaxPooling2D":
            if side < params["kernel"]:
                raise ClassifierError(
                    f"resolution {resolution} incompatible with ALEXNET_VARIANT: "
                    f"layer {layer_no} (MaxPooling2D) would receive a {side}x{side} "
                    f"feature map, smaller than its {params['kernel']}x{params['kernel']} window"
                )
            modules.append(nn.MaxPool2d(params["kernel"], params["stride"]))
            side = (side - params["kernel"]) // params["stride"] + 1
            report.append(
                dict(layer=layer_no, type=kind, padding="valid", output_side=side, channels=channels)
            )
        elif kind == "BatchNormalization":
            if features is None:
                modules.append(nn.BatchNorm2d(channels))
            else:
                modules.append(nn.BatchNorm1d(features))
            report.append(dict(layer=layer_no, type=kind))
        elif kind == "Flatten":
            modules.append(nn.Flatten())
            features = side * side * channels
            report.append(dict(layer=layer_no, type=kind, features=features))
        elif kind == "Dense":
            assert features is not None
            modules.append(nn.Linear(features, params["units"]))
            features = params["units"]
            if layer_no < len(_ALEXNET_TABLE):
                modules.append(nn.ReLU(inplace=True))
            report.append(dict(layer=layer_no, type=kind, units=features))
        elif kind == "Dropout":
            modules.append(nn.Dropout(dropout_p))
            report.append(dict(layer=layer_no, type=kind, p=dropout_p))
    return nn.Sequential(*modules), report


def _build_small_cnn(resolution: int, dropout_p: float) -> tuple[nn.Sequential, list[dict]]:
    side = resolution
    for stage in range(3):
        if side < 2:
            raise ClassifierError(
                f"resolution {resolution} incompatible with SMALL_CNN: "
                f"pooling stage {stage + 1} would receive a {side}x{side} feature map"
            )
        side //= 2
    if side < 4:
        raise ClassifierError(
            f"resolution {resolution} incompatible with SMALL_CNN: final feature map "
            f"{side}x{side} is smaller than the 4x4 pooling target (need >= 32)"
        )
    net = nn.Sequential(
        # per-image standardization: decisions key on texture, not raw brightness
        nn.InstanceNorm2d(1),
        nn.Conv2d(1, 16, 3, padding=1), nn.ReLU(inplace=True), nn.MaxPool2d(2),
        nn.Conv2d(16, 32, 3, padding=1), nn.ReLU(inplace=True), nn.MaxPool2d(2),
        nn.Conv2d(32, 64, 3, padding=1), nn.ReLU(inplace=True), nn.MaxPool2d(2),
        nn.AdaptiveAvgPool2d(4), nn.Flatten(),
        nn.Linear(64 * 16, 64), nn.ReLU(inplace=True), nn.Dropout(dropout_p),
        nn.Linear(64, 2),
    )
    report = [dict(type="SMALL_CNN", input_standardization=True,
                   conv_channels=[16, 32, 64], hidden=64, output_side=side)]
    return net, report


class ClassifierNet(nn.Module):
    """Backbone emitting logits; forward() returns softmax probabilities."""

    def __init__(self, backbone: nn.Module):
        super().__init__()
        self.backbone = backbone

    def logits(self, x: torch.Tensor) -> torch.Tensor:
        return self.backbone(x)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.softmax(self.backbone(x), dim=1)


# ---------------------------------------------------------------------------
# Model wrapper


def state_checksum(module: nn.Module) -> str:
    digest = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        digest.update(name.encode())
        arr = tensor.detach().cpu().contiguous().numpy()
        digest.update(str(arr.dtype).encode())
        digest.update(str(arr.shape).encode())
        digest.update(arr.tobytes())
    return digest.hexdigest()


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float


class ClassifierModel:
    def __init__(
        self,
        config: ClassifierConfig,
        net: ClassifierNet,
        layer_report: list[dict],
        training_log: list[EpochRecord] | None = None,
        frozen: bool = False,
    ):
        self.config = config
        self.net = net
        self.layer_report = layer_report
        self.training_log = training_log or []
        self.frozen = frozen

    def freeze(self) -> "ClassifierModel":
        self.net.eval()
        for p in self.net.parameters():
            p.requires_grad_(False)
        self.frozen = True
        return self

    def checksum(self) -> str:
        return state_checksum(self.net)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.net.parameters())

    def _to_batch(self, pixels: np.ndarray) -> torch.Tensor:
        arr = check_pixels(pixels, self.config.resolution)
        return torch.from_numpy(arr).reshape(1, 1, *arr.shape)

    def predict(self, pixels: np.ndarray) -> ProbPair:
        self.net.eval()
        with torch.no_grad():
            probs = self.net(self._to_batch(pixels))[0]
        pair = ProbPair(float(probs[0]), float(probs[1]))
        return pair

    def predict_batch(self, images: np.ndarray) -> np.ndarray:
        """(N, H, W) images -> (N, 2) probabilities."""
        if images.ndim != 3:
            raise DataError(f"expected (N, H, W) batch, got shape {images.shape}")
        for img in images:
            check_pixels(img, self.config.resolution)
        self.net.eval()
        with torch.no_grad():
            probs = self.net(torch.from_numpy(np.ascontiguousarray(images, dtype=np.float32)).unsqueeze(1))
        out = probs.numpy()
        assert np.all(np.abs(out.sum(axis=1) - 1.0) <= 1e-5), "softmax normalization violated"
        return out

    def decide_batch(self, images: np.ndarray) -> np.ndarray:
        """Hard decisions as class indices; exact ties go to NORMAL."""
        probs = self.predict_batch(images)
        return (probs[:, 1] > probs[:, 0]).astype(np.int64)

    # -- persistence: classifier/{config.json, weights.bin, training_log.csv}

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        cfg = asdict(self.config)
        cfg["architecture"] = self.config.architecture.value
        cfg["layers"] = self.layer_report
        with open(directory / "config.json", "w", encoding="utf-8") as fh:
            json.dump(cfg, fh, indent=2)
        torch.save(self.net.state_dict(), directory / "weights.bin")
        with open(directory / "training_log.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "train_accuracy", "val_loss", "val_accuracy"])
            for rec in self.training_log:
                writer.writerow(
                    [rec.epoch, rec.train_loss, rec.train_accuracy, rec.val_loss, rec.val_accuracy]
                )

    @classmethod
    def load(cls, directory: str | Path) -> "ClassifierModel":
        directory = Path(directory)
        with open(directory / "config.json", encoding="utf-8") as fh:
            raw = json.load(fh)
        layer_report = raw.pop("layers", [])
        config = ClassifierConfig(
            resolution=raw["resolution"],
            architecture=Architecture(raw["architecture"]),
            l2_factor=raw["l2_factor"],
            dropout_p=raw["dropout_p"],
            optimizer=OptimizerConfig(**raw["optimizer"]),
            batch_size=raw["batch_size"],
            epochs=raw["epochs"],
        )
        model = build(config)
        model.net.load_state_dict(torch.load(directory / "weights.bin", weights_only=True))
        log: list[EpochRecord] = []
        log_path = directory / "training_log.csv"
        if log_path.exists():
            with open(log_path, encoding="utf-8", newline="") as fh:
                for row in csv.DictReader(fh):
                    log.append(
                        EpochRecord(
                            int(row["epoch"]),
                            float(row["train_loss"]),
                            float(row["train_accuracy"]),
                            float(row["val_loss"]),
                            float(row["val_accuracy"]),
                        )
                    )
        model.training_log = log
        return model.freeze()


def build(config: ClassifierConfig, seed: int = 0) -> ClassifierModel:
    """Construct an untrained model; init is deterministic in the seed."""
    torch.manual_seed(seed)
    if config.architecture is Architecture.ALEXNET_VARIANT:
        backbone, report = _build_alexnet_variant(config.resolution, config.dropout_p)
    else:
        backbone, report = _build_small_cnn(config.resolution, config.dropout_p)
    return ClassifierModel(config, ClassifierNet(backbone), report)


# ---------------------------------------------------------------------------
# Training


def classification_loss(
    net: ClassifierNet, images: torch.Tensor, onehot: torch.Tensor, l2_factor: float
) -> torch.Tensor:
    """MSE between softmax output and one-hot target plus L2 on conv/dense params."""
    loss = F.mse_loss(net(images), onehot)
    if l2_factor > 0:
        reg = images.new_zeros(())
        for m in net.modules():
            if isinstance(m, (nn.Conv2d, nn.Linear)):
                reg = reg + m.weight.pow(2).sum()
                if m.bias is not None:
                    reg = reg + m.bias.pow(2).sum()
        loss = loss + l2_factor * reg
    return loss


def _epoch_eval(net: ClassifierNet, images: torch.Tensor, labels: torch.Tensor) -> tuple[float, float]:
    net.eval()
    with torch.no_grad():
        probs = net(images)
        loss = F.mse_loss(probs, F.one_hot(labels, 2).float())
        acc = ((probs[:, 1] > probs[:, 0]).long() == labels).float().mean()
    return float(loss), float(acc)


def train(
    model: ClassifierModel,
    manifest: DatasetManifest,
    config: ClassifierConfig,
    seed: int,
) -> ClassifierModel:
    """SGD training; returns the best-on-validation checkpoint, frozen.

    The passed-in model is consumed (its net is trained in place); the
    returned model wraps a copy of the best epoch's weights.
    """
    if model.frozen:
        raise ClassifierError("model is frozen; build a fresh one to retrain")
    for split in (Split.TRAIN, Split.VAL):
        if not manifest.entries_for(split):
            raise ClassifierError(f"manifest has no {split.value} entries")

    train_x, train_y, _ = manifest.load_split(Split.TRAIN)
    val_x, val_y, _ = manifest.load_split(Split.VAL)
    train_images = torch.from_numpy(train_x).unsqueeze(1)
    train_labels = torch.from_numpy(train_y)
    val_images = torch.from_numpy(val_x).unsqueeze(1)
    val_labels = torch.from_numpy(val_y)

    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    net = model.net
    opt = torch.optim.SGD(
        net.parameters(), lr=config.optimizer.learning_rate, momentum=config.optimizer.momentum
    )

    log: list[EpochRecord] = []
    best_state: dict | None = None
    best_val = -1.0
    n = len(train_labels)

    for epoch in range(1, config.epochs + 1):
        net.train()
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = torch.from_numpy(order[start : start + config.batch_size])
            if len(idx) == 1 and any(isinstance(m, (nn.BatchNorm1d, nn.BatchNorm2d)) for m in net.modules()):
                continue  # batch statistics undefined on a single sample
            batch = train_images[idx]
            target = F.one_hot(train_labels[idx], 2).float()
            opt.zero_grad()
            loss = classification_loss(net, batch, target, config.l2_factor)
            if not torch.isfinite(loss):
                raise ClassifierError(f"training diverged: non-finite loss at epoch {epoch}")
            loss.backward()
            opt.step()

        train_loss, train_acc = _epoch_eval(net, train_images, train_labels)
        val_loss, val_acc = _epoch_eval(net, val_images, val_labels)
        log.append(EpochRecord(epoch, train_loss, train_acc, val_loss, val_acc))
        if val_acc >= best_val:  # ties go to the later epoch
            best_val = val_acc
            best_state = copy.deepcopy(net.state_dict())

    trained = build(config)
    assert best_state is not None
    trained.net.load_state_dict(best_state)
    trained.training_log = log
    return trained.freeze()


# ---------------------------------------------------------------------------
# Evaluation


@dataclass
class ClassifierMetrics:
    accuracy: float
    f1: float
    f2: float
    confusion: list[list[int]]  # [true label][predicted label], NORMAL=0, OPACITY=1
    n_images: int

    def as_dict(self) -> dict:
        return dict(
            accuracy=self.accuracy,
            f1=self.f1,
            f2=self.f2,
            confusion=self.confusion,
            n_images=self.n_images,
        )


def f_beta(precision: float, recall: float, beta: float) -> float:
    denom = beta * beta * precision + recall
    if denom == 0:
        return 0.0
    return (1 + beta * beta) * precision * recall / denom


def evaluate_classifier(
    model: ClassifierModel, manifest: DatasetManifest, split: Split
) -> ClassifierMetrics:
    """Accuracy plus f1/f2 with OPACITY as the positive class."""
    images, labels, _ = manifest.load_split(split)
    pred = model.decide_batch(images)

    confusion = [[0, 0], [0, 0]]
    for t, p in zip(labels, pred):
        confusion[int(t)][int(p)] += 1
    tp, fn = confusion[1][1], confusion[1][0]
    fp, tn = confusion[0][1], confusion[0][0]
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return ClassifierMetrics(
        accuracy=(tp + tn) / len(labels),
        f1=f_beta(precision, recall, 1.0),
        f2=f_beta(precision, recall, 2.0),
        confusion=confusion,
        n_images=len(labels),
    )
