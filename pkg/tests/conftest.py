from __future__ import annotations

import io
from pathlib import Path

import pytest
from PIL import Image


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance criterion at the end of the run."""
    lines = []
    for outcome in ("passed", "failed"):
        for report in terminalreporter.stats.get(outcome, []):
            if "test_acceptance.py" in report.nodeid and report.when == "call":
                name = report.nodeid.split("::")[-1]
                lines.append((name, outcome == "passed"))
    for report in terminalreporter.stats.get("skipped", []):
        if "test_acceptance.py" in report.nodeid:
            lines.append((report.nodeid.split("::")[-1], None))
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, passed in sorted(lines):
            status = "PASS" if passed else ("SKIP" if passed is None else "FAIL")
            terminalreporter.write_line(f"{status}  {name}")

from dermdx.forge import DatasetManifest, ImageSample, content_hash
from dermdx.registry import ClassRegistry


def make_image_bytes(color: tuple[int, int, int], size: tuple[int, int] = (8, 8), fmt: str = "PNG") -> bytes:
    buf = io.BytesIO()
    Image.new("RGB", size, color).save(buf, format=fmt)
    return buf.getvalue()


def write_image(path: Path, color: tuple[int, int, int], size: tuple[int, int] = (8, 8)) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(make_image_bytes(color, size))


def make_sample(
    i: int,
    class_code: int,
    data: bytes | None = None,
    source_id: str = "src",
    split: str | None = None,
) -> ImageSample:
    payload = data if data is not None else f"payload-{i}".encode()
    return ImageSample(
        id=f"{source_id}/{i}",
        source_id=source_id,
        relative_path=f"c{class_code}/{i}.png",
        class_code=class_code,
        content_hash=content_hash(payload),
        width=8,
        height=8,
        split=split,
    )


def synthetic_manifest(counts: dict[int, int], registry: ClassRegistry, split: str | None = None) -> DatasetManifest:
    samples = []
    i = 0
    for code, n in counts.items():
        for _ in range(n):
            samples.append(make_sample(i, code, split=split))
            i += 1
    return DatasetManifest(registry=registry, samples=samples)


@pytest.fixture
def registry4() -> ClassRegistry:
    return ClassRegistry.from_names(["alpha", "beta", "gamma", "delta"], version="test4-v1")
