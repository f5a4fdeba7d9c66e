"""File formats: binary volumes, dataset manifests, key=value configs, tables.

Volume layout (little-endian)::

    b"CVOL" | u16 version | u8 flags (bit 0: labels) | u64 n
    | f32[n] g_a | f32[n] g_b | [packed bits y_a | packed bits y_b]

Label bit-planes use ceil(n/8) bytes each, least significant bit first.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import struct
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

import numpy as np

from .core import (
    CalibrationProfile,
    ConfigError,
    CorruptVolume,
    FormatError,
    InstanceVolume,
    IntervalEstimate,
    Method,
)
from .synthgen import SynthConfig

MAGIC = b"CVOL"
VOLUME_VERSION = 1
MANIFEST_VERSION = 1
_HEADER = struct.Struct("<4sHBQ")
_FLAG_LABELS = 0x01


def encode_volume(v: InstanceVolume) -> bytes:
    flags = _FLAG_LABELS if v.has_labels else 0
    parts = [
        _HEADER.pack(MAGIC, VOLUME_VERSION, flags, v.n_pixels),
        v.g_a.astype("<f4").tobytes(),
        v.g_b.astype("<f4").tobytes(),
    ]
    if v.has_labels:
        parts.append(np.packbits(v.y_a, bitorder="little").tobytes())
        parts.append(np.packbits(v.y_b, bitorder="little").tobytes())
    return b"".join(parts)


def decode_volume(data: bytes, id: str = "", meta=None) -> InstanceVolume:
    if len(data) < _HEADER.size:
        raise CorruptVolume(f"{id}: file shorter than the header")
    magic, version, flags, n = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"{id}: bad magic {magic!r}")
    if version != VOLUME_VERSION:
        raise FormatError(f"{id}: unsupported volume version {version}")
    labeled = bool(flags & _FLAG_LABELS)
    n_bits = -(-n // 8)
    expected = _HEADER.size + 8 * n + (2 * n_bits if labeled else 0)
    if len(data) != expected:
        raise CorruptVolume(f"{id}: expected {expected} bytes for n={n}, found {len(data)}")
    off = _HEADER.size
    g_a = np.frombuffer(data, dtype="<f4", count=n, offset=off).astype(np.float64)
    g_b = np.frombuffer(data, dtype="<f4", count=n, offset=off + 4 * n).astype(np.float64)
    y_a = y_b = None
    if labeled:
        off += 8 * n
        bits = np.frombuffer(data, dtype=np.uint8, count=2 * n_bits, offset=off)
        y_a = np.unpackbits(bits[:n_bits], count=n, bitorder="little")
        y_b = np.unpackbits(bits[n_bits:], count=n, bitorder="little")
    try:
        return InstanceVolume(id=id, g_a=g_a, g_b=g_b, y_a=y_a, y_b=y_b, meta=meta or {})
    except ValueError as exc:
        raise CorruptVolume(str(exc)) from exc


def write_volume(path, v: InstanceVolume) -> None:
    Path(path).write_bytes(encode_volume(v))


def read_volume(path, id: str = "", meta=None) -> InstanceVolume:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"{id or path}: cannot read volume: {exc}") from exc
    return decode_volume(data, id=id or path.stem, meta=meta)


def round_trip_f32(v: InstanceVolume) -> InstanceVolume:
    """What ``v`` looks like after a write/read cycle."""
    return InstanceVolume(
        v.id,
        v.g_a.astype(np.float32).astype(np.float64),
        v.g_b.astype(np.float32).astype(np.float64),
        v.y_a,
        v.y_b,
        v.meta,
    )


# -- manifests -------------------------------------------------------------


def write_dataset(out_dir, instances: Sequence[InstanceVolume]) -> Path:
    out_dir = Path(out_dir)
    (out_dir / "volumes").mkdir(parents=True, exist_ok=True)
    entries = []
    for v in sorted(instances, key=lambda v: v.id):
        rel = f"volumes/{v.id}.cvol"
        write_volume(out_dir / rel, v)
        entries.append(
            {
                "id": v.id,
                "path": rel,
                "n_pixels": v.n_pixels,
                "has_labels": v.has_labels,
                "metadata": dict(v.meta),
            }
        )
    manifest = out_dir / "manifest.json"
    manifest.write_text(
        json.dumps({"format_version": MANIFEST_VERSION, "instances": entries}, indent=2, sort_keys=True)
        + "\n"
    )
    return manifest


def read_manifest(path) -> List[dict]:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read manifest {path}: {exc}") from exc
    if doc.get("format_version") != MANIFEST_VERSION:
        raise FormatError(f"{path}: unsupported manifest version {doc.get('format_version')}")
    entries = doc.get("instances", [])
    ids = [e["id"] for e in entries]
    if len(set(ids)) != len(ids):
        raise FormatError(f"{path}: duplicate instance ids")
    for e in entries:
        e["path"] = str((path.parent / e["path"]).resolve())
    return entries


def load_dataset(path) -> List[InstanceVolume]:
    out = []
    for e in read_manifest(path):
        v = read_volume(e["path"], id=e["id"], meta=e.get("metadata", {}))
        if v.n_pixels != e["n_pixels"]:
            raise CorruptVolume(f"{e['id']}: manifest says {e['n_pixels']} pixels, file has {v.n_pixels}")
        if v.has_labels != bool(e.get("has_labels", v.has_labels)):
            raise CorruptVolume(f"{e['id']}: label flag disagrees with manifest")
        out.append(v)
    return sorted(out, key=lambda v: v.id)


# -- key=value files -------------------------------------------------------


def read_kv(path) -> Dict[str, str]:
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def write_kv(path, items: Iterable) -> None:
    Path(path).write_text("".join(f"{k} = {v}\n" for k, v in items))


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return "inf" if math.isinf(x) else repr(x)
    return str(x)


def _pair(text: str):
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != 2:
        raise ValueError(f"expected two numbers, got {text!r}")
    return float(parts[0]), float(parts[1])


def parse_synth_config(kv: Dict[str, str]) -> SynthConfig:
    known = set(SynthConfig.field_names())
    unknown = set(kv) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    casts = {
        "n_instances": int,
        "pixels_min": int,
        "pixels_max": int,
        "block_size": int,
        "seed": int,
        "temperature": float,
        "noise_sd": float,
        "concentration": float,
        "p_b_range": _pair,
        "ratio_range": _pair,
    }
    try:
        return SynthConfig(**{k: casts[k](v) for k, v in kv.items()})
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def read_synth_config(path) -> SynthConfig:
    return parse_synth_config(read_kv(path))


def write_synth_config(path, config: SynthConfig) -> None:
    items = []
    for name in SynthConfig.field_names():
        value = getattr(config, name)
        if isinstance(value, tuple):
            value = f"{_fmt(value[0])}, {_fmt(value[1])}"
        items.append((name, _fmt(value)))
    write_kv(path, items)


_PROFILE_FLOATS = (
    "q_a", "q_b", "q_residual", "q_score", "v_t_max", "delta", "alpha",
    "confidence", "acqr_lambda", "voxel_volume", "epsilon", "grid_step",
)


def write_profile(path, profile: CalibrationProfile) -> None:
    items = []
    for f in dataclasses.fields(CalibrationProfile):
        value = getattr(profile, f.name)
        if f.name == "source":
            value = value.value
        elif f.name == "flags":
            value = ",".join(value)
        items.append((f.name, _fmt(value)))
    write_kv(path, items)


def read_profile(path) -> CalibrationProfile:
    kv = read_kv(path)
    known = {f.name for f in dataclasses.fields(CalibrationProfile)}
    unknown = set(kv) - known
    if unknown:
        raise FormatError(f"{path}: unknown profile keys {sorted(unknown)}")
    args = {}
    try:
        for key, value in kv.items():
            if key in _PROFILE_FLOATS:
                args[key] = float(value)
            elif key in ("n_val", "n_bins"):
                args[key] = int(value)
            elif key == "flags":
                args[key] = tuple(x for x in value.split(",") if x)
            else:
                args[key] = value
        return CalibrationProfile(**args)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{path}: invalid profile: {exc}") from exc


# -- tables ----------------------------------------------------------------

RESULT_COLUMNS = ["id", "r_hat", "lower", "upper", "width", "method", "alpha", "delta", "degenerate"]


def write_table(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def read_table(path) -> List[Dict[str, str]]:
    try:
        with open(path, newline="") as fh:
            return list(csv.DictReader(fh))
    except OSError as exc:
        raise FormatError(f"cannot read table {path}: {exc}") from exc


def write_results(path, results: Dict[str, IntervalEstimate]) -> None:
    rows = []
    for id in sorted(results):
        e = results[id]
        rows.append([id, e.r_hat, e.lower, e.upper, e.width, e.method.value, e.alpha, e.delta, e.degenerate])
    write_table(path, RESULT_COLUMNS, rows)


def read_results(path) -> Dict[str, IntervalEstimate]:
    out = {}
    for row in read_table(path):
        try:
            out[row["id"]] = IntervalEstimate(
                r_hat=float(row["r_hat"]),
                lower=float(row["lower"]),
                upper=float(row["upper"]),
                method=Method(row["method"]),
                alpha=float(row["alpha"]),
                delta=float(row["delta"]),
                degenerate=row["degenerate"] == "true",
            )
        except (KeyError, ValueError) as exc:
            raise FormatError(f"{path}: bad results row {row.get('id')}: {exc}") from exc
    return out
