"""Command-line interface.

`dermdx` is the umbrella command; the `forge` and `corpus` groups are also
installed as standalone executables.  Commands are thin wrappers over the
library and print machine-readable JSON where a report is produced.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from dermdx.registry import ClassRegistry, skin26_registry

logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")


def _load_registry(path: str | None) -> ClassRegistry:
    if path is None:
        return skin26_registry()
    return ClassRegistry.from_dict(json.loads(Path(path).read_text()))


def _parse_roots(pairs: tuple[str, ...]) -> dict:
    roots = {}
    for pair in pairs:
        source_id, _, root = pair.partition("=")
        if not root:
            raise click.UsageError(f"--images-root needs the form SOURCE_ID=PATH, got {pair!r}")
        roots[source_id] = Path(root)
    return roots


def _echo_json(payload: dict, out: str | None = None) -> None:
    text = json.dumps(payload, indent=2, ensure_ascii=False)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
        click.echo(f"wrote {out}")
    else:
        click.echo(text)


@click.group()
def forge() -> None:
    """Build, dedup, split, and weigh the image dataset manifest."""


@forge.command("ingest")
@click.option("--source", "source_root", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--source-id", required=True)
@click.option("--label-map", "label_map_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="JSON file mapping class directory names to class codes")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(),
              help="manifest to create or append to")
@click.option("--registry", "registry_path", type=click.Path(exists=True), default=None,
              help="registry JSON (default: the 26-class skin registry)")
@click.option("--ignore-dir", "ignore_dirs", multiple=True)
@click.option("--exclude-files", "exclude_path", type=click.Path(exists=True), default=None,
              help="newline-separated source-relative paths rejected by manual review")
def forge_ingest(source_root, source_id, label_map_path, manifest_path, registry_path, ignore_dirs, exclude_path):
    """Ingest one source tree (one subdirectory per class) into the manifest."""
    from dermdx.forge import DatasetManifest, ingest_source

    registry = _load_registry(registry_path)
    label_map = {k: int(v) for k, v in json.loads(Path(label_map_path).read_text()).items()}
    exclude = set()
    if exclude_path:
        exclude = {line.strip() for line in Path(exclude_path).read_text().splitlines() if line.strip()}

    samples, rejections = ingest_source(
        source_root, source_id, label_map, registry, ignore_dirs=set(ignore_dirs), exclude_files=exclude
    )
    if Path(manifest_path).exists():
        manifest = DatasetManifest.load(manifest_path)
        manifest.samples.extend(samples)
    else:
        manifest = DatasetManifest(registry=registry, samples=samples)
    manifest.save(manifest_path)
    click.echo(f"ingested {len(samples)} samples from {source_id} ({len(rejections)} rejected)")
    for rejection in rejections:
        click.echo(f"  rejected {rejection.relative_path}: {rejection.reason}", err=True)


@forge.command("dedup")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None, help="default: rewrite in place")
def forge_dedup(manifest_path, out):
    """Drop content-hash duplicates, keeping the first per (source, path) order."""
    from dermdx.forge import DatasetManifest, dedup

    manifest = DatasetManifest.load(manifest_path)
    kept, removed = dedup(manifest.samples)
    manifest.samples = kept
    manifest.save(out or manifest_path)
    click.echo(f"kept {len(kept)}, removed {len(removed)} duplicates")


@forge.command("split")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--train-fraction", default=0.8, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--stratified/--no-stratified", default=True, show_default=True)
@click.option("--out", type=click.Path(), default=None)
def forge_split(manifest_path, train_fraction, seed, stratified, out):
    """Assign train/val splits."""
    from dermdx.forge import DatasetManifest, SplitConfig, assign_splits

    manifest = DatasetManifest.load(manifest_path)
    config = SplitConfig(train_fraction=train_fraction, seed=seed, stratified=stratified)
    manifest.samples = assign_splits(manifest.samples, config)
    manifest.split_config = config
    manifest.save(out or manifest_path)
    stats = manifest.stats
    train_n = sum(row["train"] for row in stats.values())
    val_n = sum(row["val"] for row in stats.values())
    click.echo(f"split {len(manifest.samples)} samples into {train_n} train / {val_n} val (seed {seed})")


@forge.command("stats")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--json", "json_out", type=click.Path(), default=None)
def forge_stats(manifest_path, json_out):
    """Per-class count table."""
    from dermdx.forge import DatasetManifest, compute_stats, format_stats

    stats = compute_stats(DatasetManifest.load(manifest_path))
    if json_out:
        _echo_json(stats, json_out)
    click.echo(format_stats(stats))


@forge.command("weights")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--json", "json_out", type=click.Path(), default=None)
def forge_weights(manifest_path, json_out):
    """Inverse-frequency sampling weights over the train split."""
    from dermdx.forge import DatasetManifest, sampling_weights

    manifest = DatasetManifest.load(manifest_path)
    weights = sampling_weights(manifest)
    payload = {
        "normalization": weights.normalization,
        "per_class_weight": {str(c): w for c, w in sorted(weights.per_class_weight.items())},
    }
    _echo_json(payload, json_out)


@click.group()
def corpus() -> None:
    """Validate and split the narrative corpus."""


@corpus.command("validate")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--expected-per-class", default=10, show_default=True)
@click.option("--strict", is_flag=True, help="exit nonzero when any check fails")
@click.option("--json", "json_out", type=click.Path(), default=None)
def corpus_validate(corpus_path, expected_per_class, strict, json_out):
    """Report per-class counts, duplicates, and empty stories."""
    from dermdx.corpus import NarrativeCorpus, validate_corpus

    report = validate_corpus(NarrativeCorpus.load(corpus_path), expected_per_class=expected_per_class)
    _echo_json(report.to_dict(), json_out)
    if strict and not report.ok:
        sys.exit(1)


@corpus.command("split")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--seed", required=True, type=int)
@click.option("--train-fraction", default=0.7, show_default=True)
@click.option("--out", type=click.Path(), default=None)
def corpus_split(corpus_path, seed, train_fraction, out):
    """Per-class 70/30 train-val split."""
    from dermdx.corpus import NarrativeCorpus, split_corpus

    loaded = NarrativeCorpus.load(corpus_path)
    result = split_corpus(loaded, seed=seed, train_fraction=train_fraction)
    result.save(out or corpus_path)
    click.echo(f"split {len(result.narratives)} narratives: {len(result.subset('train'))} train / {len(result.subset('val'))} val")


@click.group()
def main() -> None:
    """Multimodal skin-disease diagnosis toolkit."""


main.add_command(forge)
main.add_command(corpus)


@main.command("train-vision")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--images-root", "images_roots", multiple=True, required=True, help="SOURCE_ID=PATH (repeatable)")
@click.option("--backbone", default="tiny", show_default=True)
@click.option("--pretrained/--no-pretrained", default=False, show_default=True)
@click.option("--freeze", default=0.0, show_default=True, help="feature-extractor freeze fraction")
@click.option("--resolution", default=224, show_default=True)
@click.option("--sampler", type=click.Choice(["plain", "weighted"]), default="plain", show_default=True)
@click.option("--epochs", default=100, show_default=True)
@click.option("--patience", default=20, show_default=True)
@click.option("--batch-size", default=32, show_default=True)
@click.option("--lr", default=1e-3, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def train_vision(manifest_path, images_roots, backbone, pretrained, freeze, resolution, sampler,
                 epochs, patience, batch_size, lr, seed, out_path):
    """Train an image classifier and checkpoint the best-validation weights."""
    from dermdx.forge import DatasetManifest
    from dermdx.vision.augment import AugmentationConfig
    from dermdx.vision.backbones import BackboneConfig
    from dermdx.vision.train import TrainConfig, train

    manifest = DatasetManifest.load(manifest_path)
    result = train(
        manifest,
        _parse_roots(images_roots),
        BackboneConfig(architecture_id=backbone, pretrained=pretrained, freeze_fraction=freeze,
                       num_classes=len(manifest.registry)),
        AugmentationConfig(resolution=resolution),
        TrainConfig(epochs_max=epochs, patience=patience, batch_size=batch_size,
                    learning_rate=lr, seed=seed, sampler=sampler),
        out_path,
    )
    click.echo(
        f"best val top-1 {result.best_val_top1:.3f} at epoch {result.best_epoch} "
        f"({len(result.history)} epochs run); frozen {result.freeze_report.frozen_parameters} "
        f"of {result.freeze_report.total_feature_parameters} feature parameters"
    )
    click.echo(f"checkpoint: {result.checkpoint_path}")


@main.command("eval-vision")
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path(exists=True))
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--images-root", "images_roots", multiple=True, required=True)
@click.option("--ks", default="1,3,5", show_default=True)
@click.option("--json", "json_out", type=click.Path(), default=None)
def eval_vision(checkpoint_path, manifest_path, images_roots, ks, json_out):
    """Top-k accuracy and confusion matrix on the val split."""
    from dermdx.forge import DatasetManifest
    from dermdx.vision.checkpoint import evaluate_checkpoint

    report = evaluate_checkpoint(
        checkpoint_path,
        DatasetManifest.load(manifest_path),
        _parse_roots(images_roots),
        ks=tuple(int(k) for k in ks.split(",")),
    )
    _echo_json(report.to_dict(), json_out)


@main.command("sweep")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--images-root", "images_roots", multiple=True, required=True)
@click.option("--grid", "grid_path", required=True, type=click.Path(exists=True))
@click.option("--out-dir", required=True, type=click.Path())
def sweep_command(manifest_path, images_roots, grid_path, out_dir):
    """Run an experiment grid; completed cells are skipped on rerun."""
    from dermdx.forge import DatasetManifest
    from dermdx.vision.sweep import format_sweep_table, load_grid, run_sweep

    rows = run_sweep(
        DatasetManifest.load(manifest_path),
        _parse_roots(images_roots),
        load_grid(grid_path),
        out_dir,
    )
    click.echo(format_sweep_table(rows))


def _build_text_examples(corpus, registry, mode, split, seed, inclusion_prob, pred_n,
                         chain_count, chain_min, chain_max, with_options, chain_pred_n=0):
    from dermdx.textchain.examples import (
        make_chain_training_examples,
        make_plain_example,
        make_prediction_augmented_example,
    )
    from dermdx.textchain.prompts import EXPLICIT_MAPPING, IMPLICIT_OPTIONS, PLAIN

    narratives = corpus.subset(split)
    if not narratives:
        raise click.UsageError(f"corpus has no {split!r} narratives; run `corpus split` first")
    examples = []
    for i, narrative in enumerate(sorted(narratives, key=lambda n: n.id)):
        if mode == "plain":
            examples.append(make_plain_example(narrative.story, narrative.class_code, registry, PLAIN))
        elif mode == "mapping":
            examples.append(make_plain_example(narrative.story, narrative.class_code, registry, EXPLICIT_MAPPING))
        elif mode == "options":
            examples.append(make_plain_example(narrative.story, narrative.class_code, registry, IMPLICIT_OPTIONS))
        elif mode == "chain":
            examples.extend(
                make_chain_training_examples(
                    narrative.story, narrative.class_code, registry,
                    count=chain_count, size_range=(chain_min, chain_max or len(registry)),
                    rng_seed=seed * 100_003 + i,
                    predictions_n=chain_pred_n, inclusion_prob=inclusion_prob,
                )
            )
        elif mode.startswith("pred-"):
            n = int(mode.split("-", 1)[1])
            examples.append(
                make_prediction_augmented_example(
                    narrative.story, narrative.class_code, n, inclusion_prob, registry,
                    rng_seed=seed * 100_003 + i, with_options=with_options,
                )
            )
        else:
            raise click.UsageError(f"unknown mode {mode!r}")
    return examples


@main.command("train-text")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--mode", default="options", show_default=True,
              help="plain | mapping | options | chain | pred-N")
@click.option("--base", "base_model", default="tiny", show_default=True)
@click.option("--rank", default=8, show_default=True)
@click.option("--inclusion-prob", default=0.952, show_default=True,
              help="probability the gold class appears among simulated recommendations")
@click.option("--with-options", is_flag=True, help="append the full options list in pred-N mode")
@click.option("--chain-count", default=8, show_default=True, help="chain subsets per narrative")
@click.option("--chain-min", default=2, show_default=True)
@click.option("--chain-max", default=0, show_default=True, help="0 = registry size")
@click.option("--chain-pred-n", default=0, show_default=True,
              help="also embed N simulated recommendations in chain examples")
@click.option("--epochs", default=60, show_default=True)
@click.option("--patience", default=10, show_default=True)
@click.option("--lr", default=3e-3, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--examples-out", type=click.Path(), default=None,
              help="also save the generated training examples for reproducibility")
def train_text(corpus_path, mode, base_model, rank, inclusion_prob, with_options, chain_count,
               chain_min, chain_max, chain_pred_n, epochs, patience, lr, seed, out_path, examples_out):
    """Fine-tune the text classifier with low-rank adapters."""
    from dermdx.corpus import NarrativeCorpus
    from dermdx.textchain.examples import save_examples
    from dermdx.textchain.lora import AdapterConfig
    from dermdx.textchain.train import TextTrainConfig, finetune

    loaded = NarrativeCorpus.load(corpus_path)
    registry = loaded.registry
    train_examples = _build_text_examples(loaded, registry, mode, "train", seed, inclusion_prob,
                                          None, chain_count, chain_min, chain_max, with_options, chain_pred_n)
    val_examples = _build_text_examples(loaded, registry, mode, "val", seed + 1, inclusion_prob,
                                        None, chain_count, chain_min, chain_max, with_options, chain_pred_n)
    if examples_out:
        save_examples(train_examples + val_examples, examples_out, seed=seed)
    result = finetune(
        train_examples, val_examples, registry,
        AdapterConfig(base_model_id=base_model, rank=rank),
        TextTrainConfig(epochs_max=epochs, patience=patience, learning_rate=lr, seed=seed),
        out_path,
    )
    report = result.trainable_report
    click.echo(
        f"best val accuracy {result.best_val_acc:.3f}; trainable {report['trainable']} of "
        f"{report['total']} parameters ({100 * report['fraction']:.2f}%)"
    )
    click.echo(f"checkpoint: {result.checkpoint_path}")


@main.command("eval-text")
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path(exists=True))
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--mode", default="options", show_default=True)
@click.option("--inclusion-prob", default=0.952, show_default=True)
@click.option("--with-options", is_flag=True)
@click.option("--seed", default=1, show_default=True)
def eval_text(checkpoint_path, corpus_path, mode, inclusion_prob, with_options, seed):
    """Accuracy of a text checkpoint on the val narratives."""
    from dermdx.corpus import NarrativeCorpus
    from dermdx.textchain.models import load_text_model
    from dermdx.textchain.train import evaluate_text_model

    loaded = NarrativeCorpus.load(corpus_path)
    model = load_text_model(checkpoint_path)
    examples = _build_text_examples(loaded, model.registry, mode, "val", seed, inclusion_prob,
                                    None, 1, 2, 0, with_options)
    accuracy = evaluate_text_model(model, examples)
    click.echo(f"val accuracy ({mode}): {accuracy:.3f} over {len(examples)} examples")


@main.command("chain-run")
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path(exists=True))
@click.option("--narrative", required=True, help="narrative text, or @file to read one")
@click.option("--k", default=5, show_default=True)
@click.option("--json", "json_out", type=click.Path(), default=None)
def chain_run(checkpoint_path, narrative, k, json_out):
    """Run option-chain elimination over the full registry for one narrative."""
    from dermdx.textchain.chain import ChainConfig, run_chain
    from dermdx.textchain.models import load_text_model

    if narrative.startswith("@"):
        narrative = Path(narrative[1:]).read_text(encoding="utf-8").strip()
    model = load_text_model(checkpoint_path)
    final, state = run_chain(model, narrative, ChainConfig(k=k), model.registry)
    payload = {
        "final_class": {"code": final, "name": model.registry.name_of(final)},
        "trace": state.to_dict(),
    }
    _echo_json(payload, json_out)


@main.command("serve")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--bind", default="127.0.0.1:8000", show_default=True)
def serve_command(config_path, bind):
    """Serve the diagnosis HTTP API."""
    from dermdx.service import ServiceConfig, serve

    host, _, port = bind.partition(":")
    serve(ServiceConfig.from_file(config_path), host=host or "127.0.0.1", port=int(port or 8000))


@main.command("eval-fusion")
@click.option("--vision-checkpoint", required=True, type=click.Path(exists=True))
@click.option("--text-checkpoint", required=True, type=click.Path(exists=True))
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--images-root", "images_roots", multiple=True, required=True)
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--top-n", default=5, show_default=True)
@click.option("--chain-k", default=5, show_default=True, help="0 = direct (no chain)")
@click.option("--trials", default=1, show_default=True)
@click.option("--pairing-seed", default=0, show_default=True)
@click.option("--json", "json_out", type=click.Path(), default=None)
def eval_fusion(vision_checkpoint, text_checkpoint, manifest_path, images_roots, corpus_path,
                top_n, chain_k, trials, pairing_seed, json_out):
    """Evaluate the fused diagnoser over seeded image-narrative pairings."""
    from dermdx.corpus import NarrativeCorpus
    from dermdx.forge import DatasetManifest
    from dermdx.fusion import FusionConfig, evaluate_fusion, load_fusion_models

    vision_model, text_model = load_fusion_models(vision_checkpoint, text_checkpoint)
    report = evaluate_fusion(
        DatasetManifest.load(manifest_path),
        NarrativeCorpus.load(corpus_path),
        _parse_roots(images_roots),
        vision_model,
        text_model,
        FusionConfig(top_n=top_n, chain_k=chain_k or None, pairing_seed=pairing_seed),
        trials=trials,
    )
    click.echo(f"fused accuracy: {report.accuracy:.3f} over {report.total} pairs ({report.trials} trial(s))")
    if json_out:
        _echo_json(report.to_dict(), json_out)


@main.command("demo-data")
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--per-class", default=50, show_default=True)
@click.option("--seed", default=0, show_default=True)
def demo_data(out_dir, per_class, seed):
    """Generate the synthetic shapes dataset and toy corpus for a full dry run."""
    from dermdx.corpus import split_corpus
    from dermdx.synthetic import build_shape_manifest, toy_text_corpus

    out = Path(out_dir)
    manifest, roots = build_shape_manifest(out / "images", per_class=per_class, seed=seed)
    manifest.save(out / "manifest.json")
    corpus_obj = split_corpus(toy_text_corpus(per_class=10, seed=seed), seed=seed)
    corpus_obj.save(out / "corpus.jsonl")
    click.echo(f"manifest: {out / 'manifest.json'} ({len(manifest.samples)} samples)")
    click.echo(f"corpus:   {out / 'corpus.jsonl'} ({len(corpus_obj.narratives)} narratives)")
    click.echo(f"images:   {roots['synthetic-shapes']}")


if __name__ == "__main__":
    main()
