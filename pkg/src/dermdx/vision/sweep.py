"""Experiment-grid sweeps over (backbone, augmentation, train) cells, resumable."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

from dermdx.forge import DatasetManifest
from dermdx.vision.augment import AugmentationConfig
from dermdx.vision.backbones import BackboneConfig
from dermdx.vision.checkpoint import evaluate_checkpoint
from dermdx.vision.train import TrainConfig, train

logger = logging.getLogger(__name__)

RESULTS_FILE = "results.jsonl"


@dataclass(frozen=True)
class SweepCell:
    backbone: BackboneConfig
    augmentation: AugmentationConfig
    train: TrainConfig

    def to_dict(self) -> dict:
        return {
            "backbone": self.backbone.to_dict(),
            "augmentation": self.augmentation.to_dict(),
            "train": self.train.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SweepCell":
        return cls(
            backbone=BackboneConfig.from_dict(data["backbone"]),
            augmentation=AugmentationConfig.from_dict(data["augmentation"]),
            train=TrainConfig.from_dict(data["train"]),
        )

    @property
    def cell_id(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def load_grid(path: str | Path) -> list[SweepCell]:
    cells = [SweepCell.from_dict(entry) for entry in json.loads(Path(path).read_text())]
    if not cells:
        raise ValueError(f"grid file {path} holds no cells")
    return cells


def _load_completed(results_path: Path) -> dict[str, dict]:
    completed: dict[str, dict] = {}
    if results_path.exists():
        for line in results_path.read_text().splitlines():
            if line.strip():
                row = json.loads(line)
                completed[row["cell_id"]] = row
    return completed


def run_sweep(
    manifest: DatasetManifest,
    roots: dict,
    cells: list[SweepCell],
    out_dir: str | Path,
    ks: tuple[int, ...] = (1, 3, 5),
) -> list[dict]:
    """Run every cell, skipping ones already present in the results file.

    A failing cell is recorded with its error and does not abort the sweep.
    """
    if not cells:
        raise ValueError("sweep grid must be nonempty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results_path = out_dir / RESULTS_FILE
    completed = _load_completed(results_path)

    rows: list[dict] = []
    with open(results_path, "a", encoding="utf-8") as results_file:
        for cell in cells:
            if cell.cell_id in completed:
                logger.info("skipping completed cell %s", cell.cell_id)
                rows.append(completed[cell.cell_id])
                continue
            row = {
                "cell_id": cell.cell_id,
                "backbone": cell.backbone.architecture_id,
                "pretrained": cell.backbone.pretrained,
                "freeze_fraction": cell.backbone.freeze_fraction,
                "resolution": cell.augmentation.resolution,
            }
            started = time.perf_counter()
            try:
                result = train(
                    manifest, roots, cell.backbone, cell.augmentation, cell.train,
                    out_path=out_dir / f"{cell.cell_id}.pt",
                )
                report = evaluate_checkpoint(out_dir / f"{cell.cell_id}.pt", manifest, roots, ks=ks)
                row.update(
                    status="ok",
                    epochs_ran=len(result.history),
                    epochs_to_convergence=result.best_epoch,
                    top_k_accuracy={str(k): v for k, v in report.top_k_accuracy.items()},
                    wall_seconds=time.perf_counter() - started,
                )
            except Exception as exc:
                logger.exception("cell %s failed", cell.cell_id)
                row.update(status="failed", error=str(exc), wall_seconds=time.perf_counter() - started)
            results_file.write(json.dumps(row) + "\n")
            results_file.flush()
            rows.append(row)
    return rows


def format_sweep_table(rows: list[dict]) -> str:
    header = f"{'backbone':<16} {'res':>5} {'freeze':>6} {'epochs':>6} {'top-1':>6} {'top-3':>6} {'top-5':>6}  status"
    lines = [header, "-" * len(header)]
    for row in rows:
        if row["status"] == "ok":
            acc = row["top_k_accuracy"]
            lines.append(
                f"{row['backbone']:<16} {row['resolution']:>5} {row['freeze_fraction']:>6.2f} "
                f"{row['epochs_to_convergence']:>6} "
                f"{100 * acc.get('1', float('nan')):>6.1f} {100 * acc.get('3', float('nan')):>6.1f} "
                f"{100 * acc.get('5', float('nan')):>6.1f}  ok"
            )
        else:
            lines.append(
                f"{row['backbone']:<16} {row['resolution']:>5} {row['freeze_fraction']:>6.2f} "
                f"{'-':>6} {'-':>6} {'-':>6} {'-':>6}  failed: {row.get('error', '?')}"
            )
    return "\n".join(lines)
