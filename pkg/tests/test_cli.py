from __future__ import annotations

import json

import pytest
from click.testing import CliRunner

from dermdx.cli import corpus as corpus_cli
from dermdx.cli import forge as forge_cli
from dermdx.cli import main as main_cli
from dermdx.registry import skin26_registry
from dermdx.synthetic import SHAPE_CLASSES, shape_registry, toy_text_corpus, write_shape_images
from dermdx.textchain.models import MODEL_TYPE_STUB_FIXED, save_stub_text_checkpoint
from dermdx.vision.checkpoint import save_stub_vision_checkpoint

from conftest import write_image


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def shapes_tree(tmp_path):
    root = tmp_path / "shapes"
    write_shape_images(root, per_class=6, seed=0)
    registry_path = tmp_path / "registry.json"
    registry_path.write_text(json.dumps(shape_registry().to_dict()))
    label_map_path = tmp_path / "labels.json"
    label_map_path.write_text(json.dumps({s: i for i, s in enumerate(SHAPE_CLASSES)}))
    return root, registry_path, label_map_path


class TestForgePipeline:
    def test_ingest_split_stats_weights(self, runner, tmp_path, shapes_tree):
        root, registry_path, label_map_path = shapes_tree
        manifest_path = tmp_path / "manifest.json"

        result = runner.invoke(forge_cli, [
            "ingest", "--source", str(root), "--source-id", "demo",
            "--label-map", str(label_map_path), "--manifest", str(manifest_path),
            "--registry", str(registry_path),
        ])
        assert result.exit_code == 0, result.output
        assert "ingested 24 samples" in result.output

        result = runner.invoke(forge_cli, ["dedup", "--manifest", str(manifest_path)])
        assert result.exit_code == 0, result.output

        result = runner.invoke(forge_cli, [
            "split", "--manifest", str(manifest_path), "--train-fraction", "0.8", "--seed", "3",
        ])
        assert result.exit_code == 0, result.output

        stats_json = tmp_path / "stats.json"
        result = runner.invoke(forge_cli, ["stats", "--manifest", str(manifest_path), "--json", str(stats_json)])
        assert result.exit_code == 0, result.output
        stats = json.loads(stats_json.read_text())
        assert stats["total"] == 24

        result = runner.invoke(forge_cli, ["weights", "--manifest", str(manifest_path)])
        assert result.exit_code == 0, result.output
        weights = json.loads(result.output[result.output.index("{"):])
        assert set(weights["per_class_weight"]) == {"0", "1", "2", "3"}

    def test_unmapped_directory_fails(self, runner, tmp_path, shapes_tree):
        root, registry_path, label_map_path = shapes_tree
        write_image(root / "surprise" / "x.png", (1, 2, 3))
        result = runner.invoke(forge_cli, [
            "ingest", "--source", str(root), "--source-id", "demo",
            "--label-map", str(label_map_path), "--manifest", str(tmp_path / "m.json"),
            "--registry", str(registry_path),
        ])
        assert result.exit_code != 0
        assert "surprise" in str(result.exception)


class TestCorpusCli:
    def test_validate_and_split(self, runner, tmp_path):
        corpus_path = tmp_path / "corpus.jsonl"
        toy_text_corpus(per_class=10, seed=0).save(corpus_path)

        result = runner.invoke(corpus_cli, ["validate", "--corpus", str(corpus_path)])
        assert result.exit_code == 0, result.output
        assert '"ok": true' in result.output

        result = runner.invoke(corpus_cli, ["split", "--corpus", str(corpus_path), "--seed", "5"])
        assert result.exit_code == 0, result.output
        assert "28 train / 12 val" in result.output

    def test_strict_validate_fails_on_undersized_corpus(self, runner, tmp_path):
        corpus_path = tmp_path / "corpus.jsonl"
        toy_text_corpus(per_class=7, seed=0).save(corpus_path)
        result = runner.invoke(corpus_cli, ["validate", "--corpus", str(corpus_path), "--strict"])
        assert result.exit_code == 1


class TestTextAndChainCli:
    def test_train_eval_text_roundtrip(self, runner, tmp_path):
        corpus_path = tmp_path / "corpus.jsonl"
        corpus_obj = toy_text_corpus(per_class=6, seed=1)
        corpus_path.write_text(corpus_obj.to_jsonl(), encoding="utf-8")
        result = runner.invoke(corpus_cli, ["split", "--corpus", str(corpus_path), "--seed", "2"])
        assert result.exit_code == 0, result.output

        checkpoint = tmp_path / "text.pt"
        result = runner.invoke(main_cli, [
            "train-text", "--corpus", str(corpus_path), "--mode", "options",
            "--epochs", "4", "--out", str(checkpoint), "--seed", "0",
        ])
        assert result.exit_code == 0, result.output
        assert checkpoint.exists()
        assert "trainable" in result.output

        result = runner.invoke(main_cli, [
            "eval-text", "--checkpoint", str(checkpoint), "--corpus", str(corpus_path),
            "--mode", "options",
        ])
        assert result.exit_code == 0, result.output
        assert "val accuracy" in result.output

    def test_chain_run_with_stub(self, runner, tmp_path):
        checkpoint = tmp_path / "stub.pt"
        registry = skin26_registry()
        save_stub_text_checkpoint(
            checkpoint, registry, MODEL_TYPE_STUB_FIXED,
            logits=[((c * 7) % 26) / 10 for c in range(26)],
        )
        result = runner.invoke(main_cli, [
            "chain-run", "--checkpoint", str(checkpoint), "--narrative", "itchy rash", "--k", "5",
        ])
        assert result.exit_code == 0, result.output
        payload = json.loads(result.output)
        assert payload["final_class"]["code"] == 11
        assert len(payload["trace"]["eliminated"]) == 5


class TestFusionCli:
    def test_eval_fusion_with_stubs(self, runner, tmp_path, shapes_tree):
        root, registry_path, label_map_path = shapes_tree
        manifest_path = tmp_path / "manifest.json"
        for args in (
            ["ingest", "--source", str(root), "--source-id", "demo", "--label-map", str(label_map_path),
             "--manifest", str(manifest_path), "--registry", str(registry_path)],
            ["split", "--manifest", str(manifest_path), "--seed", "1"],
        ):
            result = runner.invoke(forge_cli, args)
            assert result.exit_code == 0, result.output

        corpus_path = tmp_path / "corpus.jsonl"
        toy_text_corpus(per_class=6, seed=1).save(corpus_path)
        assert runner.invoke(corpus_cli, ["split", "--corpus", str(corpus_path), "--seed", "2"]).exit_code == 0

        registry = shape_registry()
        vision_ck = tmp_path / "vision.pt"
        text_ck = tmp_path / "text.pt"
        save_stub_vision_checkpoint(vision_ck, registry, scores=[4, 3, 2, 1])
        save_stub_text_checkpoint(text_ck, registry, MODEL_TYPE_STUB_FIXED, logits=[0.1, 0.4, 0.3, 0.2])

        out_json = tmp_path / "fusion.json"
        result = runner.invoke(main_cli, [
            "eval-fusion", "--vision-checkpoint", str(vision_ck), "--text-checkpoint", str(text_ck),
            "--manifest", str(manifest_path), "--images-root", f"demo={root}",
            "--corpus", str(corpus_path), "--top-n", "2", "--chain-k", "2", "--json", str(out_json),
        ])
        assert result.exit_code == 0, result.output
        report = json.loads(out_json.read_text())
        # 6 images per class split 0.8 -> 1 val image per class, 4 pairs total
        assert report["total"] == 4
        # the fixed text stub always answers class 1, so only that pair is right
        assert report["accuracy"] == pytest.approx(0.25)

    def test_demo_data_command(self, runner, tmp_path):
        result = runner.invoke(main_cli, ["demo-data", "--out-dir", str(tmp_path / "demo"), "--per-class", "4"])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "demo" / "manifest.json").exists()
        assert (tmp_path / "demo" / "corpus.jsonl").exists()
