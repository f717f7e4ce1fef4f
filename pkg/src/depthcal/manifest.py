"""Dataset manifests: JSON Lines, header first, one record per line.

The header carries the dims every record must satisfy (text embedding width,
pooled feature width or per-level channel counts), the dataset name, and
whether embeddings were unit-normalized by the producer. Records reference
tensor files relative to the manifest's directory. load_manifest validates
eagerly: every referenced file must exist and its header dims must match.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .calib import DepthMap, InverseDepthMap
from .errors import DataError
from .heads import FeaturePyramid, pool_features
from .npyio import read_npy, read_npy_header

__all__ = [
    "SampleRecord",
    "ManifestHeader",
    "Manifest",
    "Sample",
    "load_manifest",
    "save_manifest",
    "load_sample",
]


@dataclass(frozen=True)
class SampleRecord:
    id: str
    y_path: str
    gt_path: str
    text_emb_paths: tuple[str, ...]
    feat_path: str | None = None  # pooled vector
    feat_level_paths: tuple[str, ...] | None = None  # 4 per-level maps
    captions: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if len(self.text_emb_paths) < 1:
            raise DataError(f"record {self.id!r}: needs at least one text embedding")
        if (self.feat_path is None) == (self.feat_level_paths is None):
            raise DataError(
                f"record {self.id!r}: exactly one of feat_path / feat_level_paths required"
            )
        if self.feat_level_paths is not None and len(self.feat_level_paths) != 4:
            raise DataError(f"record {self.id!r}: feature pyramids need 4 levels")


@dataclass(frozen=True)
class ManifestHeader:
    d_text: int
    d_feat: int  # pooled selector input width (sum of channels in pyramid mode)
    dataset: str = "unnamed"
    embedding_normalized: bool = True
    channels: tuple[int, ...] | None = None  # set in pyramid mode

    def __post_init__(self) -> None:
        if self.d_text < 1 or self.d_feat < 1:
            raise DataError("manifest header dims must be positive")
        if self.channels is not None:
            if len(self.channels) != 4 or sum(self.channels) != self.d_feat:
                raise DataError("header channels must be 4 counts summing to d_feat")


@dataclass
class Manifest:
    header: ManifestHeader
    records: list[SampleRecord]
    root: Path = field(default_factory=Path)

    def resolve(self, rel: str) -> Path:
        return self.root / rel


@dataclass(frozen=True)
class Sample:
    """One record's tensors, loaded to float64 with features pooled."""

    id: str
    y: InverseDepthMap
    gt: DepthMap
    embeddings: np.ndarray  # (K, d_text)
    feat: np.ndarray  # (d_feat,)


def save_manifest(manifest: Manifest, path) -> None:
    path = Path(path)
    h = manifest.header
    header_obj = {
        "type": "header",
        "d_text": h.d_text,
        "d_feat": h.d_feat,
        "dataset": h.dataset,
        "embedding_normalized": h.embedding_normalized,
    }
    if h.channels is not None:
        header_obj["channels"] = list(h.channels)
    lines = [json.dumps(header_obj, sort_keys=True)]
    for rec in manifest.records:
        obj = {
            "id": rec.id,
            "y": rec.y_path,
            "gt": rec.gt_path,
            "text_embs": list(rec.text_emb_paths),
        }
        if rec.feat_path is not None:
            obj["feat"] = rec.feat_path
        else:
            obj["feat_levels"] = list(rec.feat_level_paths)
        if rec.captions is not None:
            obj["captions"] = list(rec.captions)
        lines.append(json.dumps(obj, sort_keys=True))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _check_file(manifest: Manifest, rec_id: str, rel: str, expect_shape=None):
    path = manifest.resolve(rel)
    try:
        dtype, shape = read_npy_header(path)
    except DataError as exc:
        raise DataError(f"record {rec_id!r}: {exc}") from exc
    if expect_shape is not None and shape != expect_shape:
        raise DataError(
            f"record {rec_id!r}: {rel} has shape {shape}, expected {expect_shape}"
        )
    return shape


def load_manifest(path) -> Manifest:
    """Parse and eagerly validate a manifest file."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"manifest not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty manifest")
    try:
        head = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: malformed header line") from exc
    if head.get("type") != "header":
        raise DataError(f"{path}: first line must be the header object")
    header = ManifestHeader(
        d_text=int(head["d_text"]),
        d_feat=int(head["d_feat"]),
        dataset=str(head.get("dataset", "unnamed")),
        embedding_normalized=bool(head.get("embedding_normalized", True)),
        channels=tuple(head["channels"]) if "channels" in head else None,
    )
    records = []
    for i, line in enumerate(lines[1:], start=2):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{i}: malformed record line") from exc
        try:
            rec = SampleRecord(
                id=str(obj["id"]),
                y_path=str(obj["y"]),
                gt_path=str(obj["gt"]),
                text_emb_paths=tuple(obj["text_embs"]),
                feat_path=obj.get("feat"),
                feat_level_paths=tuple(obj["feat_levels"]) if "feat_levels" in obj else None,
                captions=tuple(obj["captions"]) if "captions" in obj else None,
            )
        except KeyError as exc:
            raise DataError(f"{path}:{i}: record missing field {exc}") from exc
        records.append(rec)
    if not records:
        raise DataError(f"{path}: manifest has no records")

    manifest = Manifest(header=header, records=records, root=path.parent)
    for rec in records:
        y_shape = _check_file(manifest, rec.id, rec.y_path)
        if len(y_shape) != 2:
            raise DataError(f"record {rec.id!r}: {rec.y_path} must be 2-D")
        _check_file(manifest, rec.id, rec.gt_path, expect_shape=y_shape)
        for emb in rec.text_emb_paths:
            _check_file(manifest, rec.id, emb, expect_shape=(header.d_text,))
        if rec.feat_path is not None:
            _check_file(manifest, rec.id, rec.feat_path, expect_shape=(header.d_feat,))
        else:
            if header.channels is None:
                raise DataError(
                    f"record {rec.id!r}: pyramid features need header channel counts"
                )
            for lvl_path, c in zip(rec.feat_level_paths, header.channels):
                shape = _check_file(manifest, rec.id, lvl_path)
                if len(shape) != 3 or shape[0] != c:
                    raise DataError(
                        f"record {rec.id!r}: {lvl_path} has shape {shape}, "
                        f"expected ({c}, H, W)"
                    )
    return manifest


def load_sample(manifest: Manifest, rec: SampleRecord) -> Sample:
    """Load one record's tensors; per-level features are pooled here."""
    y = read_npy(manifest.resolve(rec.y_path)).astype(np.float64)
    gt = read_npy(manifest.resolve(rec.gt_path)).astype(np.float64)
    embs = np.stack(
        [read_npy(manifest.resolve(p)).astype(np.float64) for p in rec.text_emb_paths]
    )
    if rec.feat_path is not None:
        feat = read_npy(manifest.resolve(rec.feat_path)).astype(np.float64)
    else:
        levels = tuple(
            read_npy(manifest.resolve(p)).astype(np.float64) for p in rec.feat_level_paths
        )
        feat = pool_features(FeaturePyramid(levels=levels))
    return Sample(
        id=rec.id,
        y=InverseDepthMap(values=y),
        gt=DepthMap(values=gt),
        embeddings=embs,
        feat=feat,
    )
