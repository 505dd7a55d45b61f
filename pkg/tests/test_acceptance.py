"""Acceptance suite: every release criterion at its stated tolerance.

Each test is one criterion; the session summary prints one PASS/FAIL line per
criterion (see the hook in conftest.py).  Full-scale accuracy numbers need
the real image corpus and large models and are documented targets only; the
optional full-scale track activates when DERMDX_FULLSCALE_DATA is set.
"""

from __future__ import annotations

import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

from dermdx.corpus import split_corpus
from dermdx.forge import DatasetManifest, SplitConfig, assign_splits, dedup, sampling_weights, simulate_weighted_draws
from dermdx.fusion import FusionConfig, evaluate_fusion
from dermdx.registry import skin26_registry
from dermdx.synthetic import build_shape_manifest, toy_text_corpus
from dermdx.textchain.chain import ChainConfig, run_chain
from dermdx.textchain.examples import (
    make_chain_training_examples,
    make_plain_example,
    make_prediction_augmented_example,
)
from dermdx.textchain.lora import AdapterConfig
from dermdx.textchain.models import (
    EchoFirstPredictionStub,
    FixedScoreTextStub,
    TinyTextConfig,
    load_text_model,
)
from dermdx.textchain.prompts import IMPLICIT_OPTIONS
from dermdx.textchain.train import TextTrainConfig, evaluate_text_model, finetune
from dermdx.vision.augment import AugmentationConfig
from dermdx.vision.backbones import BackboneConfig, TinyCNN, freeze_parameters
from dermdx.vision.checkpoint import evaluate_checkpoint, load_vision_model
from dermdx.vision.evaluate import evaluate_scores, rank_classes
from dermdx.vision.train import TrainConfig, train

from conftest import make_sample, synthetic_manifest
from test_vision import FakeGrouped, brute_force_report

# Table-1 final per-class counts in registry code order; they sum to 36,995
FULLSCALE_CLASS_COUNTS = {
    0: 858, 1: 239, 2: 1210, 3: 4709, 4: 2065, 5: 528, 6: 352, 7: 1791,
    8: 1553, 9: 467, 10: 282, 11: 676, 12: 511, 13: 7967, 14: 3698, 15: 1163,
    16: 308, 17: 479, 18: 1802, 19: 698, 20: 1546, 21: 261, 22: 845, 23: 510,
    24: 1849, 25: 628,
}


def test_weighted_sampler_uniformity(registry4):
    started = time.perf_counter()
    manifest = synthetic_manifest({0: 10, 1: 50, 2: 200, 3: 1000}, registry4, split="train")
    weights = sampling_weights(manifest)
    hist = simulate_weighted_draws(weights, manifest, draws=100_000, seed=42)
    total = sum(hist.values())
    assert total == 100_000
    for code in range(4):
        assert abs(hist[code] / total - 0.25) <= 0.02, f"class {code}: {hist[code] / total:.4f}"
    assert time.perf_counter() - started < 10.0


def test_dedup_correctness():
    started = time.perf_counter()
    # 20 files: 12 unique + 4 byte-identical pairs
    samples = [make_sample(i, 0, data=f"unique-{i}".encode()) for i in range(12)]
    for pair in range(4):
        samples.append(make_sample(100 + pair, 0, data=f"pair-{pair}".encode(), source_id="a"))
        samples.append(make_sample(200 + pair, 0, data=f"pair-{pair}".encode(), source_id="b"))
    assert len(samples) == 20
    kept, removed = dedup(samples)
    assert len(kept) == 16
    assert len(removed) == 4
    kept2, removed2 = dedup(kept)
    assert removed2 == [] and kept2 == kept
    assert time.perf_counter() - started < 1.0


def test_split_stratification_fullscale_counts():
    registry = skin26_registry()
    assert sum(FULLSCALE_CLASS_COUNTS.values()) == 36_995
    manifest = synthetic_manifest(FULLSCALE_CLASS_COUNTS, registry)
    out = assign_splits(manifest.samples, SplitConfig(train_fraction=0.8, seed=13))
    by_class: dict[int, list[str]] = {}
    for s in out:
        by_class.setdefault(s.class_code, []).append(s.split)
    assert set(by_class) == set(range(26))
    for code, splits in by_class.items():
        n = FULLSCALE_CLASS_COUNTS[code]
        train_n = sum(x == "train" for x in splits)
        assert abs(train_n - 0.8 * n) <= 1.0, f"class {code}: {train_n}/{n}"
        assert len(splits) == n


def test_freeze_fraction_prefix_oracle():
    def prefix_oracle(sizes: list[int], fraction: float) -> int:
        budget = fraction * sum(sizes)
        frozen = 0
        for size in sizes:
            if frozen + size <= budget + 1e-9:
                frozen += size
            else:
                break
        return frozen

    for fraction in (0.0, 0.25, 0.5, 0.75, 1.0):
        # exact synthetic group sizes
        sizes = [100, 200, 300, 400]
        report = freeze_parameters(FakeGrouped(tuple(sizes)), fraction)
        assert report.frozen_parameters == prefix_oracle(sizes, fraction), fraction
        # the bundled tiny backbone, via its real group sizes
        model = TinyCNN(num_classes=26)
        tiny_sizes = [sum(p.numel() for p in params) for _, params in model.feature_groups()]
        tiny_report = freeze_parameters(model, fraction)
        assert tiny_report.frozen_parameters == prefix_oracle(tiny_sizes, fraction), fraction
        frozen_live = sum(
            p.numel() for _, params in model.feature_groups() for p in params if not p.requires_grad
        )
        assert frozen_live == tiny_report.frozen_parameters


def test_topk_evaluation_oracle():
    rng = np.random.default_rng(2024)
    scores = rng.random((200, 26))
    golds = rng.integers(0, 26, size=200)
    report = evaluate_scores(scores, golds, ks=(1, 3, 5))
    oracle_topk, oracle_confusion = brute_force_report(scores, golds, ks=(1, 3, 5))
    assert report.top_k_accuracy == oracle_topk
    assert np.array_equal(report.confusion, oracle_confusion)
    assert report.top_k_accuracy[1] <= report.top_k_accuracy[3] <= report.top_k_accuracy[5]
    # monotonicity holds on every fresh draw too
    for trial in range(5):
        s = rng.random((50, 26))
        g = rng.integers(0, 26, size=50)
        r = evaluate_scores(s, g, ks=(1, 3, 5))
        assert r.top_k_accuracy[1] <= r.top_k_accuracy[3] <= r.top_k_accuracy[5]


def test_chain_schedule_exhaustive():
    from dermdx.registry import ClassRegistry

    started = time.perf_counter()
    for m in range(2, 13):
        registry = ClassRegistry.from_names([f"c{i}" for i in range(m)])
        rng = np.random.default_rng(m)
        logits = rng.normal(size=m)
        model = FixedScoreTextStub(list(logits), registry)
        for k in range(1, m):
            final, state = run_chain(model, "n", ChainConfig(k=k, initial_options=tuple(range(m))), registry)
            assert final == int(np.argmax(logits)), (m, k)
            sizes = [len(s.remaining_before) for s in state.steps] + [len(state.remaining)]
            expected = [m]
            while expected[-1] > k:
                expected.append(expected[-1] - k)
            assert sizes == expected, (m, k)
    # the full 26-class case with k=5
    registry = skin26_registry()
    model = FixedScoreTextStub(list(np.random.default_rng(0).normal(size=26)), registry)
    final, state = run_chain(model, "n", ChainConfig(k=5), registry)
    sizes = [len(s.remaining_before) for s in state.steps] + [len(state.remaining)]
    assert sizes == [26, 21, 16, 11, 6, 1]
    assert time.perf_counter() - started < 5.0


def test_inclusion_noise_calibration():
    registry = skin26_registry()
    gold = 12
    gold_name = registry.name_of(gold)
    hits = 0
    for seed in range(10_000):
        example = make_prediction_augmented_example("s", gold, 5, 0.952, registry, seed)
        section = example.input_text.rsplit("Initial recommendations from the image model: ", 1)[1]
        hits += int(gold_name in section.rstrip(".").split("; "))
    rate = hits / 10_000
    assert abs(rate - 0.952) <= 0.01, rate


def test_prompt_golden_files():
    from test_textchain import GOLDEN_DIR, GOLDEN_NARRATIVE, golden_spec
    from dermdx.textchain.prompts import PROMPT_MODES, build_prompt

    registry = skin26_registry()
    for mode in PROMPT_MODES:
        golden = (GOLDEN_DIR / f"{mode}.txt").read_text(encoding="utf-8")
        first = build_prompt(GOLDEN_NARRATIVE, golden_spec(mode, registry), registry)
        second = build_prompt(GOLDEN_NARRATIVE, golden_spec(mode, registry), registry)
        assert first == second == golden, mode
    mapping = (GOLDEN_DIR / "explicit_mapping.txt").read_text(encoding="utf-8")
    assert "Dermatofibroma → 1" in mapping


@pytest.mark.slow
def test_tiny_end_to_end(tmp_path):
    started = time.perf_counter()

    # --- vision: 4-class colored shapes, 200 images, tiny CNN ---
    manifest, roots = build_shape_manifest(tmp_path / "imgs", per_class=50, size=48, seed=7)
    assert len(manifest.samples) == 200
    augmentation = AugmentationConfig(
        resolution=32, oversize_resize=38, color_jitter=True, color_jitter_strength=0.2, random_rotation=20.0
    )
    vision_result = train(
        manifest,
        roots,
        BackboneConfig(architecture_id="tiny", num_classes=4),
        augmentation,
        TrainConfig(epochs_max=20, patience=8, batch_size=32, learning_rate=2e-3, seed=7, sampler="weighted"),
        out_path=tmp_path / "vision.pt",
    )
    vision_report = evaluate_checkpoint(tmp_path / "vision.pt", manifest, roots, ks=(1, 3))
    assert vision_report.top_k_accuracy[1] >= 0.90, vision_report.top_k_accuracy

    # --- text: 4-class keyword toy corpus, 10 stories per class ---
    corpus = split_corpus(toy_text_corpus(per_class=10, seed=7), seed=7)
    registry = corpus.registry
    inclusion = vision_report.top_k_accuracy[3]
    train_examples = []
    for i, n in enumerate(sorted(corpus.subset("train"), key=lambda n: n.id)):
        train_examples.append(make_plain_example(n.story, n.class_code, registry, IMPLICIT_OPTIONS))
        train_examples += make_chain_training_examples(
            n.story, n.class_code, registry, 4, (2, 4), rng_seed=1000 + i
        )
        train_examples += make_chain_training_examples(
            n.story, n.class_code, registry, 6, (2, 4), rng_seed=3000 + i,
            predictions_n=3, inclusion_prob=inclusion,
        )
        for j in range(2):
            train_examples.append(
                make_prediction_augmented_example(
                    n.story, n.class_code, 3, inclusion, registry, 5000 + 10 * i + j, with_options=True
                )
            )
    val_examples = [
        make_plain_example(n.story, n.class_code, registry, IMPLICIT_OPTIONS)
        for n in sorted(corpus.subset("val"), key=lambda n: n.id)
    ]
    text_result = finetune(
        train_examples,
        val_examples,
        registry,
        AdapterConfig(rank=4),
        TextTrainConfig(epochs_max=40, patience=40, learning_rate=5e-3, seed=7),
        tmp_path / "text.pt",
        base_config=TinyTextConfig(buckets=2048, embed_dim=48, hidden_dim=48, seed=7),
    )
    text_model = load_text_model(tmp_path / "text.pt")
    text_only = evaluate_text_model(text_model, val_examples)
    assert text_only >= 0.90, text_only

    # --- fused: prediction-3 + chain k=2 ---
    vision_model = load_vision_model(tmp_path / "vision.pt")
    fused = evaluate_fusion(
        manifest, corpus, roots, vision_model, text_model,
        FusionConfig(top_n=3, chain_k=2, pairing_seed=7),
    )
    val_samples = sorted(manifest.subset("val"), key=lambda s: s.id)
    vision_top1 = sum(
        int(rank_classes(vision_model.scores_for_sample(s, roots))[0] == s.class_code) for s in val_samples
    ) / len(val_samples)
    floor = max(vision_top1, text_only) - 0.05
    assert fused.accuracy >= floor, (fused.accuracy, vision_top1, text_only)

    # --- fusion-consistency stub check: must hold exactly ---
    echo = EchoFirstPredictionStub(registry)
    consistency = evaluate_fusion(
        manifest, corpus, roots, vision_model, echo, FusionConfig(top_n=1, chain_k=None, pairing_seed=7)
    )
    assert consistency.accuracy == vision_top1

    assert time.perf_counter() - started < 600.0


def test_service_contract_fixtures(tmp_path):
    from fastapi.testclient import TestClient

    from dermdx.service import create_app
    from service_contract import FIXTURE_DIR, build_stub_config, contract_requests, make_counter_clock, send

    config = build_stub_config(tmp_path)
    app = create_app(config, clock=make_counter_clock())
    client = TestClient(app, raise_server_exceptions=False)
    meta = json.loads((FIXTURE_DIR / "responses.json").read_text())
    for name, request in contract_requests().items():
        response = send(client, request)
        assert response.status_code == meta[name]["status"], name
        assert response.content == (FIXTURE_DIR / f"{name}.body").read_bytes(), name
    # malformed multipart must be a structured 4xx
    malformed = client.post("/v1/diagnose", content=b"%%", headers={"content-type": "multipart/form-data"})
    assert 400 <= malformed.status_code < 500
    assert "error" in malformed.json()


FULLSCALE_ENV = "DERMDX_FULLSCALE_DATA"


@pytest.mark.skipif(FULLSCALE_ENV not in os.environ, reason=f"set {FULLSCALE_ENV} to the downloaded datasets root")
def test_fullscale_forge_track():
    """Optional: with the three source datasets downloaded, the forge pipeline
    reproduces 26 classes and a total within 3% of 36,995 (per-class deviations
    come from the unspecified upstream dedup method).  See docs/full_scale.md."""
    root = Path(os.environ[FULLSCALE_ENV])
    manifest = DatasetManifest.load(root / "manifest.json")
    stats_classes = {s.class_code for s in manifest.samples}
    assert len(stats_classes) == 26
    total = len(manifest.samples)
    assert abs(total - 36_995) / 36_995 <= 0.03, total
