"""Dataset manifests: schema, round-trip serialization, validation.

A manifest records everything needed to reproduce and consume a generated
dataset: the embedded canonical config and its hash, the root seed, the asset
catalog ids, and one record per sample / pair with all file paths (relative
to the manifest's directory).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .config import ForgeConfig, config_hash, config_to_dict, parse_config
from .errors import ConfigError

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class PlacementRecord:
    lesion_id: str
    center: tuple[int, int]
    scale: float
    rotation: float
    label: str
    score: float

    def to_dict(self) -> dict:
        return {"lesion_id": self.lesion_id, "center": list(self.center),
                "scale": self.scale, "rotation": self.rotation,
                "label": self.label, "score": self.score}

    @staticmethod
    def from_dict(d: dict) -> "PlacementRecord":
        return PlacementRecord(lesion_id=d["lesion_id"],
                               center=(int(d["center"][0]), int(d["center"][1])),
                               scale=float(d["scale"]), rotation=float(d["rotation"]),
                               label=d["label"], score=float(d["score"]))


@dataclass(frozen=True)
class SampleRecord:
    index: int
    seed: int
    image: str
    labels: str
    body_id: str
    width: int
    height: int
    placements: tuple[PlacementRecord, ...] = ()

    def to_dict(self) -> dict:
        return {"index": self.index, "seed": self.seed, "image": self.image,
                "labels": self.labels, "body_id": self.body_id,
                "width": self.width, "height": self.height,
                "placements": [p.to_dict() for p in self.placements]}

    @staticmethod
    def from_dict(d: dict) -> "SampleRecord":
        return SampleRecord(
            index=int(d["index"]), seed=int(d["seed"]), image=d["image"],
            labels=d["labels"], body_id=d["body_id"], width=int(d["width"]),
            height=int(d["height"]),
            placements=tuple(PlacementRecord.from_dict(p)
                             for p in d.get("placements", [])))


@dataclass(frozen=True)
class PairRecord:
    index: int
    seed: int
    image_a: str
    image_b: str
    labels_a: str
    labels_b: str
    flow: str
    width: int
    height: int
    source_index: int
    dropped: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"index": self.index, "seed": self.seed,
                "image_a": self.image_a, "image_b": self.image_b,
                "labels_a": self.labels_a, "labels_b": self.labels_b,
                "flow": self.flow, "width": self.width, "height": self.height,
                "source_index": self.source_index, "dropped": list(self.dropped)}

    @staticmethod
    def from_dict(d: dict) -> "PairRecord":
        return PairRecord(
            index=int(d["index"]), seed=int(d["seed"]), image_a=d["image_a"],
            image_b=d["image_b"], labels_a=d["labels_a"], labels_b=d["labels_b"],
            flow=d["flow"], width=int(d["width"]), height=int(d["height"]),
            source_index=int(d["source_index"]),
            dropped=tuple(d.get("dropped", [])))


@dataclass(frozen=True)
class DatasetManifest:
    kind: str                          # "detection" | "tracking"
    seed: int
    config: ForgeConfig
    assets_dir: str
    body_ids: tuple[str, ...] = ()
    lesion_ids: tuple[str, ...] = ()
    samples: tuple[SampleRecord, ...] = ()
    pairs: tuple[PairRecord, ...] = ()
    source_manifest: str | None = None
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        out = {
            "schema_version": self.schema_version,
            "kind": self.kind,
            "seed": self.seed,
            "config": config_to_dict(self.config),
            "config_hash": config_hash(self.config),
            "assets_dir": self.assets_dir,
            "asset_ids": {"bodies": list(self.body_ids),
                          "lesions": list(self.lesion_ids)},
            "samples": [s.to_dict() for s in self.samples],
            "pairs": [p.to_dict() for p in self.pairs],
        }
        if self.source_manifest is not None:
            out["source_manifest"] = self.source_manifest
        return out

    @staticmethod
    def from_dict(d: dict) -> "DatasetManifest":
        try:
            if d.get("schema_version") != SCHEMA_VERSION:
                raise ConfigError(
                    f"manifest schema_version {d.get('schema_version')!r} unsupported")
            kind = d["kind"]
            if kind not in ("detection", "tracking"):
                raise ConfigError(f"manifest kind {kind!r} unknown")
            cfg = parse_config(d["config"])
            if d.get("config_hash") != config_hash(cfg):
                raise ConfigError("manifest config_hash does not match the embedded config")
            ids = d.get("asset_ids", {})
            return DatasetManifest(
                kind=kind, seed=int(d["seed"]), config=cfg,
                assets_dir=d["assets_dir"],
                body_ids=tuple(ids.get("bodies", [])),
                lesion_ids=tuple(ids.get("lesions", [])),
                samples=tuple(SampleRecord.from_dict(s) for s in d.get("samples", [])),
                pairs=tuple(PairRecord.from_dict(p) for p in d.get("pairs", [])),
                source_manifest=d.get("source_manifest"))
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"malformed manifest: {e}") from e


def write_manifest(path, manifest: DatasetManifest) -> None:
    text = json.dumps(manifest.to_dict(), sort_keys=True, indent=2)
    Path(path).write_text(text + "\n")


def read_manifest(path) -> DatasetManifest:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"manifest not found: {p}")
    try:
        obj = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"manifest is not valid JSON: {e}") from e
    return DatasetManifest.from_dict(obj)


def validate_manifest_files(path, manifest: DatasetManifest) -> None:
    """Check that every file a manifest references exists (paths are relative
    to the manifest's directory)."""
    base = Path(path).parent
    missing = []
    for s in manifest.samples:
        for rel in (s.image, s.labels):
            if not (base / rel).is_file():
                missing.append(rel)
    for pr in manifest.pairs:
        for rel in (pr.image_a, pr.image_b, pr.labels_a, pr.labels_b, pr.flow):
            if not (base / rel).is_file():
                missing.append(rel)
    if missing:
        raise ConfigError(f"manifest references missing files: {missing[:5]}"
                          + (" ..." if len(missing) > 5 else ""))
