"""On-disk cohort format.

A cohort directory holds ``manifest.jsonl`` (one JSON object per patient:
id, label, tabular fields, and a timepoint -> relative path map) and one
``.lpv`` file per volume::

    b"LPV1" | u32 C | u32 D | u32 H | u32 W | C*D*H*W little-endian float32

All integers are little-endian.  Readers fail closed: any malformed byte
raises :class:`CohortFormatError` with the file and byte offset, and no
partial cohort is returned.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import CohortFormatError, CohortValidationError
from .cohort import SUBTYPE_MARKERS, TIMEPOINTS, PatientRecord, validate_cohort

MAGIC = b"LPV1"
MANIFEST = "manifest.jsonl"
_HEADER = struct.Struct("<4I")
_FIELDS = ("id", "label", "drugs", "age", "race", "ethnicity", "blueprint") + SUBTYPE_MARKERS


def encode_volume_bytes(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    if arr.ndim != 4:
        raise ValueError(f"LPV1 stores 4-D arrays, got shape {arr.shape}")
    return MAGIC + _HEADER.pack(*arr.shape) + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def decode_volume_bytes(buf: bytes, where: str = "<buffer>", offset: int = 0) -> tuple:
    """Decode one LPV1 record starting at ``offset``; returns ``(array, next_offset)``."""
    if buf[offset:offset + 4] != MAGIC:
        raise CohortFormatError(f"{where}: bad magic at byte {offset} "
                                f"(expected {MAGIC!r}, got {bytes(buf[offset:offset + 4])!r})")
    pos = offset + 4
    if len(buf) < pos + _HEADER.size:
        raise CohortFormatError(f"{where}: truncated header at byte {pos}")
    dims = _HEADER.unpack_from(buf, pos)
    pos += _HEADER.size
    nbytes = 4 * int(np.prod(dims))
    if len(buf) < pos + nbytes:
        raise CohortFormatError(f"{where}: truncated payload at byte {len(buf)}, "
                                f"expected {nbytes} bytes from byte {pos}")
    arr = np.frombuffer(buf, dtype="<f4", count=nbytes // 4, offset=pos).reshape(dims)
    return arr.astype(np.float64), pos + nbytes


def write_volume(path, arr: np.ndarray) -> None:
    Path(path).write_bytes(encode_volume_bytes(arr))


def read_volume(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    arr, end = decode_volume_bytes(buf, str(path))
    if end != len(buf):
        raise CohortFormatError(f"{path}: {len(buf) - end} trailing bytes at byte {end}")
    return arr


def record_to_json(rec: PatientRecord, volume_paths: dict) -> str:
    obj = {f: getattr(rec, f) for f in _FIELDS}
    obj["drugs"] = sorted(rec.drugs)
    obj["volumes"] = volume_paths
    return json.dumps(obj, sort_keys=True, ensure_ascii=False)


def write_cohort(records, path) -> None:
    out = Path(path)
    (out / "volumes").mkdir(parents=True, exist_ok=True)
    lines = []
    for rec in records:
        paths = {}
        for tp in TIMEPOINTS:
            if tp in rec.volumes:
                rel = f"volumes/{rec.id}_{tp}.lpv"
                write_volume(out / rel, rec.volumes[tp])
                paths[tp] = rel
        lines.append(record_to_json(rec, paths))
    (out / MANIFEST).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_cohort(path, require: tuple = ("T0", "T1")) -> list:
    root = Path(path)
    manifest = root / MANIFEST
    try:
        raw = manifest.read_bytes()
    except OSError as exc:
        raise CohortFormatError(f"cannot read {manifest}: {exc}") from exc
    records = []
    offset = 0
    for line in raw.split(b"\n"):
        start = offset
        offset += len(line) + 1
        if not line.strip():
            continue
        try:
            obj = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CohortFormatError(f"{manifest}: malformed record at byte {start}: {exc}") from None
        if not isinstance(obj, dict):
            raise CohortFormatError(f"{manifest}: record at byte {start} is not an object")
        missing = [f for f in _FIELDS + ("volumes",) if f not in obj]
        if missing:
            raise CohortFormatError(f"{manifest}: record at byte {start} lacks {missing}")
        vols = obj["volumes"]
        for tp in require:
            if tp not in vols:
                raise CohortValidationError(f"patient {obj['id']}: missing {tp} volume")
        rec = PatientRecord(
            id=str(obj["id"]), label=obj["label"], drugs=tuple(obj["drugs"]),
            age=float(obj["age"]), race=obj["race"], ethnicity=obj["ethnicity"],
            blueprint=obj["blueprint"], **{m: obj[m] for m in SUBTYPE_MARKERS},
        )
        for tp, rel in vols.items():
            if tp not in TIMEPOINTS:
                raise CohortFormatError(f"{manifest}: unknown timepoint {tp!r} at byte {start}")
            try:
                rec.volumes[tp] = read_volume(root / rel)
            except OSError as exc:
                raise CohortFormatError(f"patient {rec.id}: cannot read {tp} volume: {exc}") from exc
        records.append(rec)
    if not records:
        raise CohortFormatError(f"{manifest}: no records")
    validate_cohort(records, require)
    return records
