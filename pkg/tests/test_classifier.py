import numpy as np
import pytest
import torch
import torch.nn.functional as F

from cfxgen import ClassifierConfig, DataError, ProbPair, Split, build, evaluate_classifier, train
from cfxgen.classifier import (
    Architecture,
    ClassifierError,
    ClassifierModel,
    classification_loss,
    f_beta,
    state_checksum,
)
from cfxgen.data import Label


# --- ProbPair ----------------------------------------------------------------


def test_prob_pair_validation():
    ProbPair(0.4, 0.6)
    with pytest.raises(ClassifierError):
        ProbPair(0.4, 0.7)
    with pytest.raises(ClassifierError):
        ProbPair(-0.1, 1.1)


def test_prob_pair_tie_breaks_to_normal():
    assert ProbPair(0.5, 0.5).decision is Label.NORMAL
    assert ProbPair(0.499999, 0.500001).decision is Label.OPACITY
    assert ProbPair(0.9, 0.1).decision is Label.NORMAL


# --- build -------------------------------------------------------------------


def test_alexnet_variant_builds_at_512():
    model = build(ClassifierConfig.alexnet(512))
    dense_layers = [m for m in model.net.modules() if isinstance(m, torch.nn.Linear)]
    assert [l.out_features for l in dense_layers] == [4096, 4096, 1000, 2]
    conv_layers = [m for m in model.net.modules() if isinstance(m, torch.nn.Conv2d)]
    assert [c.out_channels for c in conv_layers] == [96, 256, 384, 384, 256]
    # 24 table rows recorded, each with its padding decision where it has one
    assert len(model.layer_report) == 24
    paddings = {r["layer"]: r.get("padding") for r in model.layer_report if "padding" in r}
    assert paddings == {1: "same", 2: "valid", 4: "same", 5: "valid", 7: "same",
                        9: "same", 11: "same", 12: "valid"}


def test_alexnet_variant_rejects_16():
    with pytest.raises(ClassifierError, match="layer 12"):
        build(ClassifierConfig.alexnet(16))


def test_small_cnn_output_is_two_vector():
    model = build(ClassifierConfig.small(64))
    probs = model.net(torch.zeros(3, 1, 64, 64))
    assert probs.shape == (3, 2)


def test_small_cnn_rejects_tiny_resolution():
    with pytest.raises(ClassifierError, match="SMALL_CNN"):
        build(ClassifierConfig.small(16))


# --- predict -----------------------------------------------------------------


def test_predict_softmax_normalized(tiny_classifier):
    rng = np.random.default_rng(0)
    for _ in range(5):
        img = rng.uniform(-1, 1, size=(64, 64)).astype(np.float32)
        pair = tiny_classifier.predict(img)
        assert abs(pair.p_x + pair.p_y - 1.0) <= 1e-6


def test_predict_rejects_bad_inputs(tiny_classifier):
    with pytest.raises(DataError):
        tiny_classifier.predict(np.zeros((32, 32), dtype=np.float32))
    with pytest.raises(DataError):
        tiny_classifier.predict(np.full((64, 64), 2.0, dtype=np.float32))


def test_batch_predict_matches_single(tiny_classifier, tiny_manifest):
    images, _, _ = tiny_manifest.load_split(Split.TEST)
    batched = tiny_classifier.predict_batch(images)
    looped = np.array([tiny_classifier.predict(img).as_tuple() for img in images])
    assert np.allclose(batched, looped, atol=1e-6)


def test_argmax_invariant_under_logit_rescaling(tiny_classifier, tiny_manifest):
    images, _, _ = tiny_manifest.load_split(Split.TEST)
    x = torch.from_numpy(images).unsqueeze(1)
    with torch.no_grad():
        logits = tiny_classifier.net.logits(x)
    base = torch.softmax(logits, dim=1).argmax(dim=1)
    doubled = torch.softmax(2.0 * logits, dim=1).argmax(dim=1)
    assert torch.equal(base, doubled)


# --- training ----------------------------------------------------------------


def test_train_requires_val_split(tiny_manifest):
    from cfxgen.data import DatasetManifest, ManifestEntry

    entries = [
        ManifestEntry(e.id, e.path, e.label, Split.TRAIN)
        for e in tiny_manifest.entries
    ]
    no_val = DatasetManifest(64, 0, entries, tiny_manifest.root)
    config = ClassifierConfig.small(64, epochs=1)
    with pytest.raises(ClassifierError, match="VAL"):
        train(build(config), no_val, config, seed=0)


def test_train_returns_frozen_best_checkpoint(tiny_classifier):
    assert tiny_classifier.frozen
    assert all(not p.requires_grad for p in tiny_classifier.net.parameters())
    assert len(tiny_classifier.training_log) == 12
    best_val = max(r.val_accuracy for r in tiny_classifier.training_log)
    assert best_val > 0.5


def test_loss_strictly_decreases_first_three_steps(tiny_manifest):
    config = ClassifierConfig.small(64)
    model = build(config, seed=1)
    images, labels, _ = tiny_manifest.load_split(Split.TRAIN)
    x = torch.from_numpy(images[:8]).unsqueeze(1)
    t = F.one_hot(torch.from_numpy(labels[:8]), 2).float()
    opt = torch.optim.SGD(
        model.net.parameters(), lr=config.optimizer.learning_rate, momentum=config.optimizer.momentum
    )
    losses = []
    for _ in range(4):
        opt.zero_grad()
        loss = classification_loss(model.net, x, t, config.l2_factor)
        losses.append(loss.item())
        loss.backward()
        opt.step()
    assert losses[1] < losses[0] and losses[2] < losses[1] and losses[3] < losses[2]


def test_training_deterministic(tiny_manifest):
    config = ClassifierConfig.small(64, epochs=2)
    a = train(build(config, seed=11), tiny_manifest, config, seed=11)
    b = train(build(config, seed=11), tiny_manifest, config, seed=11)
    assert a.checksum() == b.checksum()
    assert a.training_log == b.training_log


# --- metrics -----------------------------------------------------------------


def test_f_beta_hand_computed():
    # TP=2, FP=1, FN=1: P = R = 2/3, so f1 = f2 = 2/3
    p = r = 2.0 / 3.0
    assert f_beta(p, r, 1.0) == pytest.approx(2.0 / 3.0)
    assert f_beta(p, r, 2.0) == pytest.approx(2.0 / 3.0)
    assert f_beta(0.0, 0.0, 1.0) == 0.0


def test_evaluate_perfect_predictions(tiny_manifest):
    class LabelOracle:
        """Stand-in that always answers with the ground truth."""

        def decide_batch(self, images):
            lookup = {}
            for entry in tiny_manifest.entries_for(Split.TEST):
                lookup[tiny_manifest.load_pixels(entry).tobytes()] = entry.label.class_index
            return np.array([lookup[img.tobytes()] for img in images])

    metrics = evaluate_classifier(LabelOracle(), tiny_manifest, Split.TEST)
    assert metrics.accuracy == 1.0
    assert metrics.f1 == 1.0
    assert metrics.f2 == 1.0


def test_evaluate_classifier_on_trained_model(tiny_classifier, tiny_manifest):
    metrics = evaluate_classifier(tiny_classifier, tiny_manifest, Split.TEST)
    assert 0.0 <= metrics.accuracy <= 1.0
    assert sum(sum(row) for row in metrics.confusion) == metrics.n_images
    if metrics.accuracy == 1.0:
        assert metrics.f1 == 1.0 and metrics.f2 == 1.0


# --- persistence -------------------------------------------------------------


def test_save_load_round_trip(tiny_classifier, tmp_path):
    tiny_classifier.save(tmp_path / "clf")
    loaded = ClassifierModel.load(tmp_path / "clf")
    assert loaded.checksum() == tiny_classifier.checksum()
    assert loaded.frozen
    assert loaded.config == tiny_classifier.config
    assert len(loaded.training_log) == len(tiny_classifier.training_log)
    rng = np.random.default_rng(1)
    img = rng.uniform(-1, 1, size=(64, 64)).astype(np.float32)
    assert loaded.predict(img) == tiny_classifier.predict(img)


def test_config_json_field_names(tiny_classifier, tmp_path):
    import json

    tiny_classifier.save(tmp_path / "clf")
    raw = json.loads((tmp_path / "clf" / "config.json").read_text())
    assert set(raw) >= {"resolution", "architecture", "l2_factor", "dropout_p",
                        "optimizer", "batch_size", "epochs"}
    assert set(raw["optimizer"]) == {"learning_rate", "momentum"}


def test_checksum_changes_with_weights(tiny_classifier):
    before = tiny_classifier.checksum()
    model = build(ClassifierConfig.small(64), seed=99)
    assert state_checksum(model.net) != before
