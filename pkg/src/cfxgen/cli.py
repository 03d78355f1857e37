"""Command-line entry point.

One flat INI config file (sections: run, dataset, classifier, gan, eval,
serve) drives reproducible runs; command-line flags override config values.
Unknown config keys are rejected. Every command writes the fully resolved
configuration next to its outputs. Exit codes: 0 success, 1 validation
error, 2 runtime failure.

Output layout: <output_root>/<run_name>/{dataset,classifier,gan,reports,explanations}
"""
from __future__ import annotations

import argparse
import configparser
import json
import re
import sys
from pathlib import Path

from . import __version__
from .classifier import Architecture, ClassifierConfig, ClassifierModel, OptimizerConfig, build, evaluate_classifier, train
from .data import DataError, DatasetManifest, Label, Split, ingest, read_png, split_manifest
from .evaluation import ablation, evaluate_flips, write_report
from .explain import explain, interpolate, plan_pairs, save_explanation
from .gan import AdamConfig, GanBundle, GanConfig, PatchGanConfig, train_gan
from .losses import LEAST_SQUARES, LOG_FORM, LossWeights
from .classifier import ProbPair
from .synth import SynthSpec, synthesize


class CliError(ValueError):
    """Validation problem: bad flags, bad config, missing inputs. Exit 1."""


CONFIG_SCHEMA: dict[str, set[str]] = {
    "run": {"seed", "output_root", "name"},
    "dataset": {
        "n_per_class", "resolution", "opacity_strength",
        "train_ratio", "val_ratio", "test_ratio",
    },
    "classifier": {
        "architecture", "epochs", "batch_size", "learning_rate",
        "momentum", "l2_factor", "dropout_p",
    },
    "gan": {
        "epochs", "batch_size", "learning_rate", "beta1", "beta2",
        "lambda_cycle", "mu_identity", "gamma_counter", "target_y", "target_x",
        "generator_base_width", "discriminator_base_width", "n_downsample_layers",
        "n_residual_blocks", "adversarial_form", "pool_size", "profile",
    },
    "eval": {"split"},
    "serve": {"host", "port", "byte_limit"},
}


def load_config(path: str | None) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    if path is not None:
        if not Path(path).is_file():
            raise CliError(f"config file not found: {path}")
        parser.read(path, encoding="utf-8")
        for section in parser.sections():
            if section not in CONFIG_SCHEMA:
                raise CliError(f"unknown config section [{section}] in {path}")
            unknown = set(parser[section]) - CONFIG_SCHEMA[section]
            if unknown:
                raise CliError(
                    f"unknown keys in [{section}] of {path}: {', '.join(sorted(unknown))}"
                )
    return parser


class _Resolver:
    """Flag value if given, else config value, else default; records the result."""

    def __init__(self, cfg: configparser.ConfigParser):
        self.cfg = cfg
        self.resolved: dict[str, dict[str, str]] = {}

    def get(self, section: str, key: str, flag_value, default, cast=str):
        if flag_value is not None:
            value = flag_value
        elif self.cfg.has_option(section, key):
            raw = self.cfg.get(section, key)
            try:
                value = cast(raw) if cast is not str else raw
            except ValueError as exc:
                raise CliError(f"config [{section}] {key}={raw!r}: {exc}") from exc
        else:
            value = default
        self.resolved.setdefault(section, {})[key] = str(value)
        return value

    def write(self, path: Path) -> None:
        out = configparser.ConfigParser()
        for section, values in self.resolved.items():
            out[section] = values
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            out.write(fh)


def _parse_ratios(train: float, val: float, test: float) -> tuple[float, float, float]:
    return (train, val, test)


def _parse_prob_pair(text: str) -> ProbPair:
    parts = text.split(",")
    if len(parts) != 2:
        raise CliError(f"expected 'p_normal,p_opacity', got {text!r}")
    return ProbPair(float(parts[0]), float(parts[1]))


def _run_dir(resolver: _Resolver, args) -> Path:
    root = resolver.get("run", "output_root", args.out, "runs")
    name = resolver.get("run", "name", getattr(args, "name", None), "run")
    return Path(root) / name


def _seed(resolver: _Resolver, args) -> int:
    return resolver.get("run", "seed", args.seed, 0, int)


def _require_file(path: Path, what: str) -> Path:
    if not path.is_file():
        raise CliError(f"{what} not found: {path}")
    return path


def _require_dir(path: Path, what: str) -> Path:
    if not path.is_dir():
        raise CliError(f"{what} not found: {path}")
    return path


def _load_manifest(args, run_dir: Path) -> DatasetManifest:
    path = Path(args.manifest) if args.manifest else run_dir / "dataset" / "manifest.csv"
    return DatasetManifest.load(_require_file(path, "manifest"))


def _load_classifier(args, run_dir: Path) -> ClassifierModel:
    path = Path(args.classifier) if args.classifier else run_dir / "classifier"
    return ClassifierModel.load(_require_dir(path, "classifier checkpoint directory"))


def _latest_epoch_dir(gan_dir: Path) -> Path:
    epochs = sorted(
        (int(m.group(1)), p)
        for p in gan_dir.iterdir()
        if p.is_dir() and (m := re.fullmatch(r"epoch_(\d+)", p.name))
    )
    if not epochs:
        raise CliError(f"no epoch_<n> checkpoints under {gan_dir}")
    return epochs[-1][1]


def _load_bundle(args, run_dir: Path) -> GanBundle:
    if args.bundle:
        path = Path(args.bundle)
        if (path / "G.bin").is_file():
            return GanBundle.load(path)
        return GanBundle.load(_latest_epoch_dir(_require_dir(path, "bundle directory")))
    return GanBundle.load(_latest_epoch_dir(_require_dir(run_dir / "gan", "bundle directory")))


# ---------------------------------------------------------------------------
# Per-command config assembly


def _classifier_config(resolver: _Resolver, args, resolution: int) -> ClassifierConfig:
    arch = Architecture(
        resolver.get("classifier", "architecture", args.architecture, Architecture.SMALL_CNN.value)
    )
    table = ClassifierConfig.alexnet() if arch is Architecture.ALEXNET_VARIANT else ClassifierConfig.small()
    return ClassifierConfig(
        resolution=resolution,
        architecture=arch,
        l2_factor=resolver.get("classifier", "l2_factor", args.l2_factor, table.l2_factor, float),
        dropout_p=resolver.get("classifier", "dropout_p", args.dropout_p, table.dropout_p, float),
        optimizer=OptimizerConfig(
            learning_rate=resolver.get(
                "classifier", "learning_rate", args.learning_rate, table.optimizer.learning_rate, float
            ),
            momentum=resolver.get("classifier", "momentum", args.momentum, table.optimizer.momentum, float),
        ),
        batch_size=resolver.get("classifier", "batch_size", args.batch_size, table.batch_size, int),
        epochs=resolver.get("classifier", "epochs", args.epochs, table.epochs, int),
    )


def _gan_config(resolver: _Resolver, args, resolution: int) -> GanConfig:
    profile = resolver.get("gan", "profile", args.profile, "desk")
    if profile not in ("desk", "paper"):
        raise CliError(f"unknown gan profile {profile!r} (expected desk or paper)")
    base = GanConfig.desk(resolution) if profile == "desk" else GanConfig(resolution=resolution)
    gamma = resolver.get("gan", "gamma_counter", args.gamma, base.weights.gamma_counter, float)
    if getattr(args, "plain", False):
        gamma = 0.0
    resolver.resolved["gan"]["gamma_counter"] = str(gamma)
    form = resolver.get("gan", "adversarial_form", args.adversarial_form, base.adversarial_form)
    if form not in (LEAST_SQUARES, LOG_FORM):
        raise CliError(f"unknown adversarial_form {form!r}")
    n_res = resolver.get("gan", "n_residual_blocks", args.n_residual_blocks, -1, int)
    return GanConfig(
        resolution=resolution,
        optimizer=AdamConfig(
            learning_rate=resolver.get("gan", "learning_rate", args.learning_rate, 0.0002, float),
            beta1=resolver.get("gan", "beta1", args.beta1, 0.5, float),
            beta2=resolver.get("gan", "beta2", args.beta2, 0.999, float),
        ),
        batch_size=resolver.get("gan", "batch_size", args.batch_size, 1, int),
        epochs=resolver.get("gan", "epochs", args.epochs, base.epochs, int),
        weights=LossWeights(
            lambda_cycle=resolver.get("gan", "lambda_cycle", args.lambda_cycle, 10.0, float),
            mu_identity=resolver.get("gan", "mu_identity", args.mu_identity, 1.0, float),
            gamma_counter=gamma,
            target_y=_parse_prob_pair(resolver.get("gan", "target_y", args.target_y, "0,1")),
            target_x=_parse_prob_pair(resolver.get("gan", "target_x", args.target_x, "1,0")),
        ),
        patch_gan=PatchGanConfig(
            n_downsample_layers=resolver.get(
                "gan", "n_downsample_layers", args.n_downsample_layers, base.patch_gan.n_downsample_layers, int
            ),
            base_width=resolver.get(
                "gan", "discriminator_base_width", args.discriminator_base_width, base.patch_gan.base_width, int
            ),
        ),
        generator_base_width=resolver.get(
            "gan", "generator_base_width", args.generator_base_width, base.generator_base_width, int
        ),
        n_residual_blocks=None if n_res < 0 else n_res,
        adversarial_form=form,
        pool_size=resolver.get("gan", "pool_size", args.pool_size, 50, int),
    )


# ---------------------------------------------------------------------------
# Commands


def cmd_synth(args, resolver: _Resolver) -> int:
    run_dir = _run_dir(resolver, args)
    seed = _seed(resolver, args)
    spec = SynthSpec(
        n_per_class=resolver.get("dataset", "n_per_class", args.n, 200, int),
        resolution=resolver.get("dataset", "resolution", args.res, 64, int),
        opacity_strength=resolver.get("dataset", "opacity_strength", args.strength, 0.6, float),
        noise_seed=seed,
    )
    ratios = _parse_ratios(
        resolver.get("dataset", "train_ratio", args.train_ratio, 0.7, float),
        resolver.get("dataset", "val_ratio", args.val_ratio, 0.1, float),
        resolver.get("dataset", "test_ratio", args.test_ratio, 0.2, float),
    )
    out = run_dir / "dataset"
    manifest = synthesize(spec, out, ratios)
    resolver.write(out / "resolved_config.ini")
    print(f"wrote {len(manifest)} images and manifest to {out}")
    return 0


def cmd_ingest(args, resolver: _Resolver) -> int:
    run_dir = _run_dir(resolver, args)
    source = _require_dir(Path(args.source), "source directory")
    class_map: dict[str, Label] = {}
    for item in args.classes.split(","):
        if "=" not in item:
            raise CliError(f"--classes items must look like LABEL=subdir, got {item!r}")
        label_name, subdir = item.split("=", 1)
        try:
            class_map[subdir] = Label(label_name.strip().upper())
        except ValueError as exc:
            raise CliError(f"unknown label {label_name!r} (expected NORMAL or OPACITY)") from exc
    resolution = resolver.get("dataset", "resolution", args.res, 64, int)
    out = run_dir / "dataset"
    manifest, report = ingest(source, class_map, resolution, out)
    resolver.write(out / "resolved_config.ini")
    print(
        f"ingested {report.n_ingested} images ({report.n_duplicates} duplicates dropped, "
        f"{len(report.skipped)} skipped) to {out}"
    )
    return 0


def cmd_split(args, resolver: _Resolver) -> int:
    run_dir = _run_dir(resolver, args)
    seed = _seed(resolver, args)
    manifest = _load_manifest(args, run_dir)
    ratios = _parse_ratios(
        resolver.get("dataset", "train_ratio", args.train_ratio, 0.7, float),
        resolver.get("dataset", "val_ratio", args.val_ratio, 0.1, float),
        resolver.get("dataset", "test_ratio", args.test_ratio, 0.2, float),
    )
    new = split_manifest(manifest, ratios, seed)
    target = Path(args.manifest) if args.manifest else run_dir / "dataset" / "manifest.csv"
    new.save(target)
    resolver.write(target.parent / "resolved_config.ini")
    counts = new.counts()
    for split in Split:
        n = sum(v for (label, s), v in counts.items() if s == split)
        print(f"{split.value}: {n}")
    return 0


def cmd_train_classifier(args, resolver: _Resolver) -> int:
    run_dir = _run_dir(resolver, args)
    seed = _seed(resolver, args)
    manifest = _load_manifest(args, run_dir)
    config = _classifier_config(resolver, args, manifest.resolution)
    model = train(build(config, seed), manifest, config, seed)
    out = run_dir / "classifier"
    model.save(out)
    resolver.write(out / "resolved_config.ini")
    metrics = evaluate_classifier(model, manifest, Split.TEST)
    with open(out / "test_metrics.json", "w", encoding="utf-8") as fh:
        json.dump(metrics.as_dict(), fh, indent=2)
    print(
        f"saved classifier to {out}; TEST accuracy {metrics.accuracy:.4f} "
        f"f1 {metrics.f1:.4f} f2 {metrics.f2:.4f}"
    )
    return 0


def cmd_train_cf(args, resolver: _Resolver) -> int:
    run_dir = _run_dir(resolver, args)
    seed = _seed(resolver, args)
    manifest = _load_manifest(args, run_dir)
    classifier = _load_classifier(args, run_dir)
    config = _gan_config(resolver, args, manifest.resolution)
    out = run_dir / ("gan-plain" if args.plain else "gan")
    bundle = train_gan(manifest, classifier, config, seed, out)
    resolver.write(out / "resolved_config.ini")
    last = bundle.training_log[-1]
    print(
        f"saved {config.epochs} epoch checkpoints to {out}; "
        f"final epoch means: gen_total {last['gen_total']:.4f} disc_total {last['disc_total']:.4f}"
    )
    return 0


def cmd_explain(args, resolver: _Resolver) -> int:
    run_dir = _run_dir(resolver, args)
    classifier = _load_classifier(args, run_dir)
    bundle = _load_bundle(args, run_dir)
    image_path = _require_file(Path(args.image), "image")
    pixels = read_png(image_path, classifier.config.resolution)
    result = explain(bundle, classifier, pixels, sample_id=image_path.stem)
    frames = None
    if args.frames is not None:
        if args.frames < 2:
            raise CliError(f"--frames must be >= 2, got {args.frames}")
        frames = interpolate(result.original_pixels, result.counterfactual_pixels, args.frames)
    out = run_dir / "explanations" / image_path.stem
    save_explanation(result, out, frames)
    resolver.write(out / "resolved_config.ini")
    print(
        f"{image_path.stem}: {result.original_decision.value} -> "
        f"{result.counterfactual_decision.value} (flipped={result.flipped}, "
        f"L1 {result.l1_proximity:.4f}); wrote {out}"
    )
    return 0


def cmd_evaluate(args, resolver: _Resolver) -> int:
    run_dir = _run_dir(resolver, args)
    manifest = _load_manifest(args, run_dir)
    classifier = _load_classifier(args, run_dir)
    bundle = _load_bundle(args, run_dir)
    split = Split(resolver.get("eval", "split", args.split, Split.TEST.value))
    report = evaluate_flips(bundle, classifier, manifest, split)
    out = run_dir / "reports"
    write_report(report, out)
    resolver.write(out / "resolved_config.ini")
    print(
        f"flip accuracy: total {report.flip_accuracy_total:.4f} "
        f"normal {report.flip_accuracy_normal:.4f} opacity {report.flip_accuracy_opacity:.4f}; "
        f"wrote {out / 'flip_report.json'}"
    )
    return 0


def cmd_ablation(args, resolver: _Resolver) -> int:
    run_dir = _run_dir(resolver, args)
    seed = _seed(resolver, args)
    manifest = _load_manifest(args, run_dir)
    classifier = _load_classifier(args, run_dir)
    config = _gan_config(resolver, args, manifest.resolution)
    split = Split(resolver.get("eval", "split", args.split, Split.TEST.value))
    result = ablation(manifest, classifier, config, seed, run_dir / "gan", split)
    resolver.write(run_dir / "gan" / "resolved_config.ini")
    print(
        f"flip accuracy with counter loss {result.report_gamma_on.flip_accuracy_total:.4f} "
        f"vs without {result.report_gamma_off.flip_accuracy_total:.4f}; "
        f"summary in {run_dir / 'gan' / 'ablation_summary.txt'}"
    )
    return 0


def cmd_plan_pairs(args, resolver: _Resolver) -> int:
    names = [n.strip() for n in args.classes.split(",") if n.strip()]
    try:
        plan = plan_pairs(names)
    except DataError as exc:
        raise CliError(str(exc)) from exc
    for a, b in plan.pairs:
        print(f"{a} <-> {b}")
    print(f"{len(plan.pairs)} translation model(s) needed for {len(plan.class_names)} classes")
    if args.json_out:
        path = Path(args.json_out)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"class_names": plan.class_names, "pairs": plan.pairs}, fh, indent=2)
    return 0


def cmd_serve(args, resolver: _Resolver) -> int:
    import uvicorn

    from .service import ServiceState, create_app

    run_dir = _run_dir(resolver, args)
    manifest = _load_manifest(args, run_dir)
    classifier = _load_classifier(args, run_dir)
    bundle = _load_bundle(args, run_dir)
    host = resolver.get("serve", "host", args.host, "127.0.0.1")
    port = resolver.get("serve", "port", args.port, 8000, int)
    byte_limit = resolver.get("serve", "byte_limit", args.byte_limit, 5_000_000, int)
    state = ServiceState.create(classifier, bundle, manifest, byte_limit=byte_limit)
    resolver.write(run_dir / "reports" / "resolved_config.ini")
    app = create_app(state)
    uvicorn.run(app, host=host, port=port, log_level="info")
    return 0


# ---------------------------------------------------------------------------
# Parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); validation errors are exit 1
        raise CliError(message)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI config file (flags override config values)")
    p.add_argument("--seed", type=int, help="global seed; all randomness derives from it (default: 0)")
    p.add_argument("--out", help="output root directory (default: runs)")
    p.add_argument("--name", help="run name under the output root (default: run)")


def _add_dataset_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--train-ratio", dest="train_ratio", type=float, help="train fraction (default: 0.7)")
    p.add_argument("--val-ratio", dest="val_ratio", type=float, help="validation fraction (default: 0.1)")
    p.add_argument("--test-ratio", dest="test_ratio", type=float, help="test fraction (default: 0.2)")


def _add_classifier_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--architecture", choices=[a.value for a in Architecture],
        help="classifier architecture (default: SMALL_CNN)",
    )
    p.add_argument("--epochs", type=int, help="training epochs (default: 1000 for ALEXNET_VARIANT, 30 for SMALL_CNN)")
    p.add_argument("--batch-size", dest="batch_size", type=int, help="batch size (default: 32)")
    p.add_argument(
        "--learning-rate", dest="learning_rate", type=float,
        help="SGD learning rate (default: 0.0001 for ALEXNET_VARIANT, 0.02 for SMALL_CNN)",
    )
    p.add_argument("--momentum", type=float, help="SGD momentum (default: 0.9)")
    p.add_argument("--l2-factor", dest="l2_factor", type=float, help="L2 regularization factor (default: 0.001)")
    p.add_argument("--dropout-p", dest="dropout_p", type=float, help="dropout probability (default: 0.4)")


def _add_gan_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--profile", choices=["desk", "paper"], help="width/epoch preset (default: desk)")
    p.add_argument("--epochs", type=int, help="training epochs (default: 20; desk profile: 3)")
    p.add_argument("--batch-size", dest="batch_size", type=int, help="batch size (default: 1)")
    p.add_argument("--learning-rate", dest="learning_rate", type=float, help="Adam learning rate (default: 0.0002)")
    p.add_argument("--beta1", type=float, help="Adam beta1 (default: 0.5)")
    p.add_argument("--beta2", type=float, help="Adam beta2 (default: 0.999)")
    p.add_argument("--lambda-cycle", dest="lambda_cycle", type=float, help="cycle-consistency loss weight (default: 10)")
    p.add_argument("--mu-identity", dest="mu_identity", type=float, help="identity loss weight (default: 1)")
    p.add_argument("--gamma", type=float, help="counterfactual loss weight (default: 1)")
    p.add_argument("--target-y", dest="target_y", help="counter-loss target for G outputs (default: 0,1)")
    p.add_argument("--target-x", dest="target_x", help="counter-loss target for F outputs (default: 1,0)")
    p.add_argument("--generator-base-width", dest="generator_base_width", type=int,
                   help="generator stem width (default: 64; desk profile: 16)")
    p.add_argument("--discriminator-base-width", dest="discriminator_base_width", type=int,
                   help="discriminator stem width (default: 64; desk profile: 16)")
    p.add_argument("--n-downsample-layers", dest="n_downsample_layers", type=int,
                   help="PatchGAN stride-2 layers (default: 3)")
    p.add_argument("--n-residual-blocks", dest="n_residual_blocks", type=int,
                   help="generator residual blocks (default: 6 up to 128px, 9 above)")
    p.add_argument("--adversarial-form", dest="adversarial_form", choices=[LEAST_SQUARES, LOG_FORM],
                   help="adversarial loss realization (default: least_squares)")
    p.add_argument("--pool-size", dest="pool_size", type=int, help="generated-image history buffer size (default: 50)")


def build_parser() -> _Parser:
    parser = _Parser(prog="cfxgen", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"cfxgen {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the synthetic two-class dataset")
    _add_common(p)
    p.add_argument("--n", type=int, help="images per class (default: 200)")
    p.add_argument("--res", type=int, help="image resolution (default: 64)")
    p.add_argument("--strength", type=float, help="opacity cloud strength in (0,1] (default: 0.6)")
    _add_dataset_flags(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="ingest a directory of labeled images")
    _add_common(p)
    p.add_argument("--source", required=True, help="directory with one subdirectory per class")
    p.add_argument("--classes", required=True, help="mapping like NORMAL=normal_dir,OPACITY=opacity_dir")
    p.add_argument("--res", type=int, help="target resolution (default: 64; 512 matches the reference setup)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("split", help="re-split an existing manifest")
    _add_common(p)
    p.add_argument("--manifest", help="manifest to re-split (default: <run>/dataset/manifest.csv)")
    _add_dataset_flags(p)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train-classifier", help="train the binary CNN classifier")
    _add_common(p)
    p.add_argument("--manifest", help="dataset manifest (default: <run>/dataset/manifest.csv)")
    _add_classifier_flags(p)
    p.set_defaults(func=cmd_train_classifier)

    p = sub.add_parser("train-cf", help="train the counterfactual translation system")
    _add_common(p)
    p.add_argument("--manifest", help="dataset manifest (default: <run>/dataset/manifest.csv)")
    p.add_argument("--classifier", help="classifier checkpoint directory (default: <run>/classifier)")
    p.add_argument("--plain", action="store_true", help="drop the counterfactual loss (gamma=0 baseline)")
    _add_gan_flags(p)
    p.set_defaults(func=cmd_train_cf)

    p = sub.add_parser("explain", help="explain a single image")
    _add_common(p)
    p.add_argument("--image", required=True, help="input image (PNG)")
    p.add_argument("--classifier", help="classifier checkpoint directory (default: <run>/classifier)")
    p.add_argument("--bundle", help="bundle epoch directory (default: latest under <run>/gan)")
    p.add_argument("--frames", type=int, help="also write N interpolation frames (>= 2)")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("evaluate", help="flip-accuracy evaluation of a trained bundle")
    _add_common(p)
    p.add_argument("--manifest", help="dataset manifest (default: <run>/dataset/manifest.csv)")
    p.add_argument("--classifier", help="classifier checkpoint directory (default: <run>/classifier)")
    p.add_argument("--bundle", help="bundle epoch directory (default: latest under <run>/gan)")
    p.add_argument("--split", choices=[s.value for s in Split], help="split to evaluate (default: TEST)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablation", help="train and compare gamma-on vs gamma=0 bundles")
    _add_common(p)
    p.add_argument("--manifest", help="dataset manifest (default: <run>/dataset/manifest.csv)")
    p.add_argument("--classifier", help="classifier checkpoint directory (default: <run>/classifier)")
    p.add_argument("--split", choices=[s.value for s in Split], help="split to evaluate (default: TEST)")
    _add_gan_flags(p)
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser("plan-pairs", help="list the pairwise models a k-class problem needs")
    _add_common(p)
    p.add_argument("--classes", required=True, help="comma-separated class names")
    p.add_argument("--json-out", dest="json_out", help="optionally write the plan as JSON")
    p.set_defaults(func=cmd_plan_pairs)

    p = sub.add_parser("serve", help="run the HTTP inference service")
    _add_common(p)
    p.add_argument("--manifest", help="dataset manifest (default: <run>/dataset/manifest.csv)")
    p.add_argument("--classifier", help="classifier checkpoint directory (default: <run>/classifier)")
    p.add_argument("--bundle", help="bundle epoch directory (default: latest under <run>/gan)")
    p.add_argument("--host", help="bind address (default: 127.0.0.1; loopback only)")
    p.add_argument("--port", type=int, help="port (default: 8000)")
    p.add_argument("--byte-limit", dest="byte_limit", type=int, help="max upload size in bytes (default: 5000000)")
    p.set_defaults(func=cmd_serve)

    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help/--version paths
        return int(exc.code or 0)
    try:
        resolver = _Resolver(load_config(args.config))
        return args.func(args, resolver)
    except (CliError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: missing input: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - runtime failures map to exit 2
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
