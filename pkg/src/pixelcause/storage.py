"""File formats, config hashing and external-dataset ingestion.

Conventions: JSON for worlds/checkpoints/configs, line-delimited JSON for
datasets, CSV for round metrics.  Every artifact embeds the producing config's
hash (a JSON key, a JSONL header object, or a leading ``#`` comment in CSV)
and readers can verify it.  Model weights are stored as IEEE-754 hex strings
so checkpoints round-trip bit-exactly regardless of decimal formatting.
"""

from __future__ import annotations

import base64
import csv
import hashlib
import json
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .discrete import DiscreteWorld
from .errors import (
    BadMagic,
    ConfigError,
    ConfigHashMismatch,
    CountMismatch,
    StorageError,
    TruncatedFile,
)
from .grating import ImageSample
from .mlp import Predictor, TrainConfig
from .pipeline import CausalDataset, CausalRecord, ManipulationRecord, RoundMetrics


def config_hash(doc) -> str:
    """Stable short hash of a JSON-serializable config."""
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]


def pack_pixels(grid: np.ndarray) -> str:
    """Row-major bit-packing of a binary grid, base64-encoded."""
    flat = np.asarray(grid, dtype=np.uint8).ravel(order="C")
    return base64.b64encode(np.packbits(flat).tobytes()).decode("ascii")


def unpack_pixels(encoded: str, side: int) -> np.ndarray:
    raw = np.frombuffer(base64.b64decode(encoded), dtype=np.uint8)
    bits = np.unpackbits(raw)[: side * side]
    if len(bits) < side * side:
        raise StorageError("bit-packed pixels shorter than side*side")
    return bits.reshape(side, side)


def _check_hash(found: str | None, expected: str | None):
    if expected is not None and found is not None and found != expected:
        raise ConfigHashMismatch(f"artifact hash {found} != expected {expected}")


# --- worlds -----------------------------------------------------------------


def save_world(world: DiscreteWorld, path, cfg_hash: str | None = None) -> None:
    doc = world.to_dict()
    if cfg_hash is not None:
        doc["config_hash"] = cfg_hash
    Path(path).write_text(json.dumps(doc))


def load_world(path, expected_hash: str | None = None) -> DiscreteWorld:
    doc = json.loads(Path(path).read_text())
    _check_hash(doc.get("config_hash"), expected_hash)
    return DiscreteWorld.from_dict(doc)


# --- checkpoints --------------------------------------------------------------


def _floats_to_hex(arr: np.ndarray) -> list[str]:
    return [float(x).hex() for x in np.asarray(arr, dtype=float).ravel(order="C")]


def _hex_to_floats(hexes: Sequence[str], shape) -> np.ndarray:
    return np.array([float.fromhex(h) for h in hexes], dtype=float).reshape(shape)


def save_checkpoint(
    model: Predictor,
    path,
    train_config: TrainConfig | None = None,
    cfg_hash: str | None = None,
) -> None:
    doc = {
        "format": "predictor-checkpoint",
        "config_hash": cfg_hash,
        "input_dim": model.input_dim,
        "hidden_units": model.hidden_units,
        "shapes": {
            "w1": list(model.w1.shape),
            "b1": list(model.b1.shape),
            "w2": list(model.w2.shape),
        },
        "w1": _floats_to_hex(model.w1),
        "b1": _floats_to_hex(model.b1),
        "w2": _floats_to_hex(model.w2),
        "b2": float(model.b2).hex(),
        "train_config": train_config.to_dict() if train_config else None,
        "seed": train_config.seed if train_config else None,
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path, expected_hash: str | None = None) -> Predictor:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "predictor-checkpoint":
        raise StorageError(f"{path} is not a predictor checkpoint")
    _check_hash(doc.get("config_hash"), expected_hash)
    shapes = doc["shapes"]
    return Predictor(
        w1=_hex_to_floats(doc["w1"], tuple(shapes["w1"])),
        b1=_hex_to_floats(doc["b1"], tuple(shapes["b1"])),
        w2=_hex_to_floats(doc["w2"], tuple(shapes["w2"])),
        b2=float.fromhex(doc["b2"]),
    )


# --- datasets ----------------------------------------------------------------


def save_observational_dataset(
    samples: Sequence[ImageSample], path, cfg_hash: str | None = None
) -> None:
    with open(path, "w") as fh:
        header = {"format": "grating-dataset", "config_hash": cfg_hash}
        fh.write(json.dumps(header) + "\n")
        for s in samples:
            rec = {
                "pixels": pack_pixels(s.pixels),
                "side": int(s.pixels.shape[0]),
                "obs_prob": s.obs_prob,
                "h1": s.h1,
                "h2": s.h2,
            }
            fh.write(json.dumps(rec) + "\n")


def load_observational_dataset(
    path, expected_hash: str | None = None
) -> list[ImageSample]:
    samples = []
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("format") != "grating-dataset":
            raise StorageError(f"{path} is not a grating dataset")
        _check_hash(header.get("config_hash"), expected_hash)
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            samples.append(
                ImageSample(
                    pixels=unpack_pixels(rec["pixels"], rec["side"]),
                    h1=int(rec.get("h1", -1)),
                    h2=int(rec.get("h2", -1)),
                    obs_prob=float(rec["obs_prob"]),
                    t_draw=int(rec.get("t_draw", -1)),
                )
            )
    return samples


def save_causal_dataset(
    dataset: CausalDataset, path, cfg_hash: str | None = None
) -> None:
    with open(path, "w") as fh:
        header = {"format": "causal-dataset", "config_hash": cfg_hash}
        fh.write(json.dumps(header) + "\n")
        for r in dataset:
            rec = {
                "pixels": pack_pixels(r.pixels),
                "side": int(r.pixels.shape[0]),
                "label": float(r.label).hex(),
                "provenance": r.provenance,
                "round": r.round,
            }
            fh.write(json.dumps(rec) + "\n")


def load_causal_dataset(path, expected_hash: str | None = None) -> CausalDataset:
    dataset = CausalDataset()
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("format") != "causal-dataset":
            raise StorageError(f"{path} is not a causal dataset")
        _check_hash(header.get("config_hash"), expected_hash)
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            dataset.append(
                CausalRecord(
                    pixels=unpack_pixels(rec["pixels"], rec["side"]),
                    label=float.fromhex(rec["label"]),
                    provenance=rec["provenance"],
                    round=int(rec["round"]),
                )
            )
    return dataset


# --- metrics ------------------------------------------------------------------


def write_metrics_csv(
    metrics: Sequence[RoundMetrics], path, cfg_hash: str | None = None
) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={cfg_hash or ''}\n")
        writer = csv.writer(fh)
        writer.writerow(["round", "merr", "mdist", "queries"])
        for m in metrics:
            writer.writerow(
                [
                    m.round,
                    repr(m.manipulation_error),
                    repr(m.manipulation_distance),
                    m.oracle_queries,
                ]
            )


def read_metrics_csv(path, expected_hash: str | None = None) -> list[RoundMetrics]:
    out = []
    with open(path) as fh:
        comment = fh.readline().strip()
        if not comment.startswith("# config_hash="):
            raise StorageError(f"{path} lacks the config-hash comment")
        found = comment.split("=", 1)[1]
        _check_hash(found or None, expected_hash)
        reader = csv.DictReader(fh)
        for row in reader:
            out.append(
                RoundMetrics(
                    round=int(row["round"]),
                    manipulation_error=float(row["merr"]),
                    manipulation_distance=float(row["mdist"]),
                    oracle_queries=int(row["queries"]),
                )
            )
    return out


# --- manipulation galleries ----------------------------------------------------


def write_gallery(
    records: Sequence[ManipulationRecord], out_dir, round_no: int, limit: int = 10
) -> list[Path]:
    """Paired before/after image files for visual inspection."""
    from PIL import Image

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, rec in enumerate(records[:limit]):
        for tag, grid in (("before", rec.source), ("after", rec.output)):
            img = Image.fromarray((np.asarray(grid) * 255).astype(np.uint8), mode="L")
            p = out_dir / f"round{round_no:02d}_pair{k:03d}_{tag}.png"
            img.save(p)
            paths.append(p)
    return paths


# --- run logs -------------------------------------------------------------------


@dataclass
class RunLog:
    config_hash: str
    command: str
    status: str = "incomplete"
    started: float = field(default_factory=time.time)
    wall_time_s: float | None = None
    oracle_queries: int | None = None
    artifacts: dict = field(default_factory=dict)
    rounds: list[dict] = field(default_factory=list)

    def path(self, out_dir) -> Path:
        return Path(out_dir) / "runlog.json"

    def write(self, out_dir) -> None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        self.path(out_dir).write_text(json.dumps(self.__dict__, indent=2, default=str))

    def finalize(self, out_dir, oracle_queries: int | None = None) -> None:
        self.status = "complete"
        self.wall_time_s = time.time() - self.started
        if oracle_queries is not None:
            self.oracle_queries = oracle_queries
        self.write(out_dir)


# --- IDX ingestion ----------------------------------------------------------------

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise TruncatedFile(f"{what}: wanted {n} bytes, got {len(data)}")
    return data


def ingest_idx_images(path, labels_path) -> tuple[list[np.ndarray], list[int]]:
    """Read an IDX image/label file pair and binarize at 0.5 of the
    normalized gray range.  Returns (grids, labels)."""
    with open(path, "rb") as fh:
        magic, count, rows, cols = struct.unpack(
            ">IIII", _read_exact(fh, 16, "image header")
        )
        if magic != IDX_IMAGES_MAGIC:
            raise BadMagic(f"image magic {magic:#010x} != {IDX_IMAGES_MAGIC:#010x}")
        payload = _read_exact(fh, count * rows * cols, "image payload")
    raw = np.frombuffer(payload, dtype=np.uint8).reshape(count, rows, cols)
    grids = [(g >= 128).astype(np.uint8) for g in raw]

    with open(labels_path, "rb") as fh:
        magic, label_count = struct.unpack(">II", _read_exact(fh, 8, "label header"))
        if magic != IDX_LABELS_MAGIC:
            raise BadMagic(f"label magic {magic:#010x} != {IDX_LABELS_MAGIC:#010x}")
        if label_count != count:
            raise CountMismatch(f"{count} images but {label_count} labels")
        labels = list(_read_exact(fh, label_count, "label payload"))
    return grids, labels


def read_idx_image_count(path) -> int:
    """Header echo: the item count an IDX image file declares."""
    with open(path, "rb") as fh:
        magic, count = struct.unpack(">II", _read_exact(fh, 8, "image header"))
        if magic != IDX_IMAGES_MAGIC:
            raise BadMagic(f"image magic {magic:#010x} != {IDX_IMAGES_MAGIC:#010x}")
    return count
