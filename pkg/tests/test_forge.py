from __future__ import annotations

import random

import pytest

from dermdx.forge import (
    ForgeError,
    SplitConfig,
    DatasetManifest,
    assign_splits,
    compute_stats,
    dedup,
    ingest_source,
    sampling_weights,
    simulate_weighted_draws,
)
from dermdx.registry import ClassRegistry, skin26_registry

from conftest import make_sample, synthetic_manifest, write_image


class TestRegistry:
    def test_skin26_registry_shape(self):
        reg = skin26_registry()
        assert len(reg) == 26
        assert reg.codes == list(range(26))
        # published explicit-mapping anchors
        assert reg.code_of("Dermatofibroma") == 1
        assert reg.code_of("Psoriasis pictures Lichen Planus and related diseases") == 7

    def test_duplicate_names_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            ClassRegistry.from_names(["Eczema", "eczema "])

    def test_noncontiguous_codes_rejected(self):
        with pytest.raises(ValueError, match="contiguous"):
            ClassRegistry(classes=((0, "a"), (2, "b")))


class TestIngest:
    def test_three_classes_two_images_each(self, tmp_path, registry4):
        for c, color in enumerate([(255, 0, 0), (0, 255, 0), (0, 0, 255)]):
            for i in range(2):
                write_image(tmp_path / f"class{c}" / f"img{i}.png", (color[0], color[1], color[2] + i))
        label_map = {f"class{c}": c for c in range(3)}
        samples, rejections = ingest_source(tmp_path, "kaggle-a", label_map, registry4)
        assert len(samples) == 6
        assert rejections == []
        assert sorted({s.class_code for s in samples}) == [0, 1, 2]
        for s in samples:
            assert s.width == 8 and s.height == 8
            assert s.source_id == "kaggle-a"

    def test_corrupt_file_reported_not_dropped_silently(self, tmp_path, registry4):
        write_image(tmp_path / "class0" / "good1.png", (1, 2, 3))
        write_image(tmp_path / "class0" / "good2.png", (4, 5, 6))
        (tmp_path / "class0" / "broken.png").write_bytes(b"not an image at all")
        samples, rejections = ingest_source(tmp_path, "s", {"class0": 0}, registry4)
        assert len(samples) == 2
        assert len(rejections) == 1
        assert rejections[0].relative_path == "class0/broken.png"
        assert "unreadable" in rejections[0].reason

    def test_unmapped_directory_is_hard_error_naming_it(self, tmp_path, registry4):
        write_image(tmp_path / "class0" / "a.png", (1, 1, 1))
        write_image(tmp_path / "mystery" / "b.png", (2, 2, 2))
        with pytest.raises(ForgeError, match="mystery"):
            ingest_source(tmp_path, "s", {"class0": 0}, registry4)

    def test_ignored_directory_is_skipped(self, tmp_path, registry4):
        write_image(tmp_path / "class0" / "a.png", (1, 1, 1))
        write_image(tmp_path / "notes" / "b.png", (2, 2, 2))
        samples, _ = ingest_source(tmp_path, "s", {"class0": 0}, registry4, ignore_dirs={"notes"})
        assert [s.relative_path for s in samples] == ["class0/a.png"]

    def test_exclusion_list_rejects_reviewed_files(self, tmp_path, registry4):
        write_image(tmp_path / "class0" / "keep.png", (1, 1, 1))
        write_image(tmp_path / "class0" / "drop.png", (2, 2, 2))
        samples, rejections = ingest_source(
            tmp_path, "s", {"class0": 0}, registry4, exclude_files={"class0/drop.png"}
        )
        assert [s.relative_path for s in samples] == ["class0/keep.png"]
        assert rejections[0].reason == "excluded by manual review list"

    def test_zero_images_is_hard_error(self, tmp_path, registry4):
        (tmp_path / "class0").mkdir()
        with pytest.raises(ForgeError, match="zero images"):
            ingest_source(tmp_path, "s", {"class0": 0}, registry4)

    def test_identical_bytes_share_hash(self, tmp_path, registry4):
        write_image(tmp_path / "class0" / "a.png", (9, 9, 9))
        write_image(tmp_path / "class1" / "b.png", (9, 9, 9))
        samples, _ = ingest_source(tmp_path, "s", {"class0": 0, "class1": 1}, registry4)
        assert samples[0].content_hash == samples[1].content_hash


class TestDedup:
    def test_no_duplicates_removes_nothing(self):
        samples = [make_sample(i, 0) for i in range(5)]
        kept, removed = dedup(samples)
        assert len(kept) == 5 and removed == []

    def test_same_bytes_two_sources_keeps_first(self):
        a = make_sample(0, 0, data=b"shared", source_id="alpha")
        b = make_sample(0, 0, data=b"shared", source_id="beta")
        kept, removed = dedup([b, a])
        assert [s.source_id for s in kept] == ["alpha"]
        assert [s.source_id for s in removed] == ["beta"]

    def test_ten_files_three_identical_pairs_keeps_seven(self):
        # 4 unique + 3 pairs = 10 files, 7 distinct contents
        samples = [make_sample(i, 0, data=f"unique-{i}".encode()) for i in range(4)]
        for pair in range(3):
            samples.append(make_sample(10 + pair, 0, data=f"pair-{pair}".encode(), source_id="s1"))
            samples.append(make_sample(20 + pair, 0, data=f"pair-{pair}".encode(), source_id="s2"))
        kept, removed = dedup(samples)
        assert len(kept) == 7
        assert len(removed) == 3
        assert sorted(s.id for s in kept + removed) == sorted(s.id for s in samples)

    def test_dedup_idempotent_on_random_inputs(self):
        rng = random.Random(11)
        for _ in range(20):
            samples = [
                make_sample(i, rng.randrange(3), data=f"blob-{rng.randrange(8)}".encode(), source_id=f"s{rng.randrange(3)}")
                for i in range(rng.randrange(1, 30))
            ]
            kept, removed = dedup(samples)
            kept2, removed2 = dedup(kept)
            assert removed2 == []
            assert kept2 == kept
            assert len(kept) + len(removed) == len(samples)


class TestSplits:
    def test_single_class_80_20(self, registry4):
        samples = [make_sample(i, 0) for i in range(100)]
        out = assign_splits(samples, SplitConfig(train_fraction=0.8, seed=1))
        assert sum(s.split == "train" for s in out) == 80
        assert sum(s.split == "val" for s in out) == 20

    def test_two_classes_stratified(self, registry4):
        samples = [make_sample(i, 0) for i in range(10)] + [make_sample(100 + i, 1) for i in range(30)]
        out = assign_splits(samples, SplitConfig(train_fraction=0.8, seed=1))
        by = {0: [0, 0], 1: [0, 0]}
        for s in out:
            by[s.class_code][0 if s.split == "train" else 1] += 1
        assert by[0] == [8, 2]
        assert by[1] == [24, 6]

    def test_same_seed_identical_assignment(self):
        samples = [make_sample(i, i % 3) for i in range(50)]
        a = assign_splits(samples, SplitConfig(train_fraction=0.7, seed=42))
        b = assign_splits(list(reversed(samples)), SplitConfig(train_fraction=0.7, seed=42))
        assert a == b

    def test_tiny_class_goes_to_train_with_warning(self, caplog):
        samples = [make_sample(0, 0)] + [make_sample(i, 1) for i in range(1, 11)]
        with caplog.at_level("WARNING"):
            out = assign_splits(samples, SplitConfig(train_fraction=0.8, seed=0))
        tiny = [s for s in out if s.class_code == 0]
        assert [s.split for s in tiny] == ["train"]
        assert any("class 0" in rec.message for rec in caplog.records)

    def test_partition_and_proportions_property(self):
        rng = random.Random(5)
        for trial in range(10):
            counts = {c: rng.randrange(2, 60) for c in range(rng.randrange(1, 6))}
            samples = []
            i = 0
            for code, n in counts.items():
                for _ in range(n):
                    samples.append(make_sample(i, code))
                    i += 1
            frac = rng.choice([0.5, 0.7, 0.8])
            out = assign_splits(samples, SplitConfig(train_fraction=frac, seed=trial))
            assert sorted(s.id for s in out) == sorted(s.id for s in samples)
            for code, n in counts.items():
                train_n = sum(s.split == "train" for s in out if s.class_code == code)
                assert abs(train_n - frac * n) <= 1.0


class TestStats:
    def test_empty_manifest(self, registry4):
        manifest = DatasetManifest(registry=registry4, samples=[])
        stats = compute_stats(manifest)
        assert stats["classes"] == [] and stats["total"] == 0

    def test_counts_match_fixture(self, registry4):
        manifest = synthetic_manifest({0: 3, 1: 5}, registry4)
        stats = compute_stats(manifest)
        assert [(r["class_code"], r["total"]) for r in stats["classes"]] == [(0, 3), (1, 5)]
        assert stats["total"] == 8

    def test_rows_sum_to_total(self, registry4):
        manifest = synthetic_manifest({0: 7, 2: 11, 3: 2}, registry4)
        stats = compute_stats(manifest)
        assert sum(r["total"] for r in stats["classes"]) == len(manifest.samples)


class TestSamplingWeights:
    def test_inverse_frequency_values(self, registry4):
        manifest = synthetic_manifest({0: 10, 1: 30}, registry4, split="train")
        w = sampling_weights(manifest)
        assert w.per_class_weight[0] == pytest.approx(0.1)
        assert w.per_class_weight[1] == pytest.approx(1 / 30)

    def test_monte_carlo_uniformity_two_classes(self, registry4):
        manifest = synthetic_manifest({0: 10, 1: 30}, registry4, split="train")
        w = sampling_weights(manifest)
        hist = simulate_weighted_draws(w, manifest, draws=100_000, seed=3)
        total = sum(hist.values())
        for code in (0, 1):
            assert abs(hist[code] / total - 0.5) < 0.02

    def test_equal_counts_equal_weights(self, registry4):
        manifest = synthetic_manifest({0: 5, 1: 5, 2: 5}, registry4, split="train")
        w = sampling_weights(manifest)
        assert len(set(w.per_class_weight.values())) == 1

    def test_single_class_drawn_always(self, registry4):
        manifest = synthetic_manifest({2: 12}, registry4, split="train")
        w = sampling_weights(manifest)
        hist = simulate_weighted_draws(w, manifest, draws=1000, seed=0)
        assert hist == {2: 1000}

    def test_zero_train_class_is_error(self, registry4):
        manifest = synthetic_manifest({0: 4}, registry4, split="train")
        manifest.samples.append(make_sample(99, 1, split="val"))
        with pytest.raises(ForgeError, match=r"\[1\]"):
            sampling_weights(manifest)


class TestManifestRoundTrip:
    def test_serialize_parse_reserialize_byte_identical(self, registry4):
        manifest = synthetic_manifest({0: 3, 1: 2}, registry4)
        manifest.split_config = SplitConfig(train_fraction=0.8, seed=9)
        manifest.samples = assign_splits(manifest.samples, manifest.split_config)
        text = manifest.to_json()
        again = DatasetManifest.from_json(text)
        assert again.to_json() == text

    def test_save_load(self, tmp_path, registry4):
        manifest = synthetic_manifest({0: 2}, registry4)
        path = tmp_path / "m.json"
        manifest.save(path)
        loaded = DatasetManifest.load(path)
        assert loaded.samples == manifest.samples
        assert loaded.registry == manifest.registry

    def test_registry_mismatch_rejected(self, registry4):
        with pytest.raises(ForgeError, match="not in registry"):
            DatasetManifest(registry=registry4, samples=[make_sample(0, 17)])
