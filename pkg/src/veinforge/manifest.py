"""Manifest files: ``filename,label`` CSV shared by synth, train, eval and bench."""

from __future__ import annotations

import csv
from pathlib import Path

from .errors import IoFailure, MalformedHeader, MissingFile
from .evaluation import LabeledSkeleton
from .preprocess import PipelineConfig, preprocess_pipeline
from .raster import BinaryImage, load_pgm


def read_manifest(path) -> list[tuple[Path, str]]:
    """Entries as (absolute image path, label); filenames resolve against the manifest's folder."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"manifest {path} not found")
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if not rows or [c.strip() for c in rows[0]] != ["filename", "label"]:
        raise MalformedHeader(f"{path}: expected header 'filename,label'")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 2:
            raise MalformedHeader(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
        out.append((path.parent / row[0].strip(), row[1].strip()))
    return out


def load_skeleton(path, raw: bool = False, cfg: PipelineConfig | None = None) -> BinaryImage:
    """Read a PGM as a skeleton (nonzero = vein) or, with ``raw``, extract one."""
    img = load_pgm(path)
    if raw:
        return preprocess_pipeline(img, cfg)
    return BinaryImage.from_gray(img)


def load_dataset(manifest, raw: bool = True, cfg: PipelineConfig | None = None) -> list[LabeledSkeleton]:
    return [LabeledSkeleton(label, load_skeleton(p, raw, cfg)) for p, label in read_manifest(manifest)]
