"""Model bundles and the LPC1 checkpoint format.

Layout (little-endian)::

    b"LPC1" | u32 version | u32 header_len | header (UTF-8 JSON)
    u32 n_blobs | n_blobs x (u16 name_len | name | u8 ndim | u32 dims... | float64 data)

Blobs hold the network parameters (``param/<name>``) and the AdamW moments
(``adam.m/<name>``, ``adam.v/<name>``).  Parameters are stored as float64 so
a reloaded model reproduces in-memory inference bit for bit.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..data.tabular import AgeNormalizer
from ..errors import DataError
from .config import ExperimentConfig
from .model import Network, init_network

MAGIC = b"LPC1"
VERSION = 1


class CheckpointError(DataError):
    pass


@dataclass
class ModelBundle:
    """One trained inner-rotation model plus everything needed to reuse or audit it."""

    stage: str
    fold: int
    rotation: int
    network: Network
    config: ExperimentConfig
    use_clinical: bool
    use_subtype: bool
    dropout: bool
    train_timepoints: tuple
    normalizer: AgeNormalizer
    best_epoch: int
    seeds: dict
    train_ids: tuple
    val_ids: tuple
    optimizer: dict = field(default_factory=dict)
    scheduler: dict = field(default_factory=dict)
    history: list = field(default_factory=list)

    def seen_ids(self) -> set:
        return set(self.train_ids) | set(self.val_ids)


def _blob(name: str, arr: np.ndarray) -> bytes:
    raw = name.encode("utf-8")
    arr = np.ascontiguousarray(arr, dtype="<f8")
    return (struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim)
            + struct.pack(f"<{arr.ndim}I", *arr.shape) + arr.tobytes())


def encode_bundle(bundle: ModelBundle) -> bytes:
    opt = bundle.optimizer
    header = {
        "stage": bundle.stage, "fold": bundle.fold, "rotation": bundle.rotation,
        "kind": bundle.network.kind, "config": bundle.config.as_dict(),
        "use_clinical": bundle.use_clinical, "use_subtype": bundle.use_subtype,
        "dropout": bundle.dropout, "train_timepoints": list(bundle.train_timepoints),
        "normalizer": [bundle.normalizer.mean, bundle.normalizer.std],
        "best_epoch": bundle.best_epoch, "seeds": bundle.seeds,
        "train_ids": list(bundle.train_ids), "val_ids": list(bundle.val_ids),
        "optimizer": {k: v for k, v in opt.items() if k not in ("m", "v")},
        "scheduler": bundle.scheduler, "history": bundle.history,
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    blobs = [_blob(f"param/{k}", v.data) for k, v in bundle.network.flat().items()]
    for moment in ("m", "v"):
        blobs += [_blob(f"adam.{moment}/{k}", v) for k, v in sorted(opt.get(moment, {}).items())]
    return (MAGIC + struct.pack("<II", VERSION, len(head)) + head
            + struct.pack("<I", len(blobs)) + b"".join(blobs))


class _Reader:
    def __init__(self, buf: bytes, where: str):
        self.buf, self.pos, self.where = buf, 0, where

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"{self.where}: truncated {what} at byte {self.pos}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_bundle(buf: bytes, where: str = "<checkpoint>") -> ModelBundle:
    r = _Reader(buf, where)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise CheckpointError(f"{where}: bad magic {magic!r} at byte 0")
    version, head_len = r.unpack("<II", "header")
    if version != VERSION:
        raise CheckpointError(f"{where}: unsupported version {version} at byte 4")
    start = r.pos
    try:
        h = json.loads(r.take(head_len, "header").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{where}: malformed header at byte {start}: {exc}") from None
    (n_blobs,) = r.unpack("<I", "blob count")
    blobs = {}
    for _ in range(n_blobs):
        at = r.pos
        (name_len,) = r.unpack("<H", "blob name")
        name = r.take(name_len, "blob name").decode("utf-8")
        (ndim,) = r.unpack("<B", f"blob {name}")
        dims = r.unpack(f"<{ndim}I", f"blob {name}")
        count = int(np.prod(dims)) if ndim else 1
        data = r.take(8 * count, f"blob {name} (from byte {at})")
        blobs[name] = np.frombuffer(data, dtype="<f8").reshape(dims).astype(np.float64)
    if r.pos != len(buf):
        raise CheckpointError(f"{where}: {len(buf) - r.pos} trailing bytes at byte {r.pos}")
    cfg_dict = {k: (tuple(v) if isinstance(v, list) else v) for k, v in h["config"].items()}
    cfg = ExperimentConfig(**cfg_dict)
    net_cfg = cfg.network(h["use_clinical"], h["use_subtype"], h["dropout"])
    net = init_network(h["kind"], net_cfg, 0)
    net.load_arrays({k[len("param/"):]: v for k, v in blobs.items() if k.startswith("param/")})
    optimizer = dict(h["optimizer"])
    for moment in ("m", "v"):
        prefix = f"adam.{moment}/"
        optimizer[moment] = {k[len(prefix):]: v for k, v in blobs.items() if k.startswith(prefix)}
    return ModelBundle(
        stage=h["stage"], fold=h["fold"], rotation=h["rotation"], network=net, config=cfg,
        use_clinical=h["use_clinical"], use_subtype=h["use_subtype"], dropout=h["dropout"],
        train_timepoints=tuple(h["train_timepoints"]),
        normalizer=AgeNormalizer(*h["normalizer"]), best_epoch=h["best_epoch"],
        seeds=h["seeds"], train_ids=tuple(h["train_ids"]), val_ids=tuple(h["val_ids"]),
        optimizer=optimizer, scheduler=h["scheduler"], history=h["history"],
    )


def save_bundle(bundle: ModelBundle, path) -> None:
    Path(path).write_bytes(encode_bundle(bundle))


def load_bundle(path) -> ModelBundle:
    return decode_bundle(Path(path).read_bytes(), str(path))
