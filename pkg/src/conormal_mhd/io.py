"""Persistent formats: binary checkpoints, CSV ledgers, JSON reports, flat config files.

Checkpoint layout (all little-endian):

    offset  size  field
    0       4     magic b"MHDC"
    4       2     format version (uint16)
    6       2     reserved, zero
    8       12    N1, N2, N3 (uint32)
    20      24    L1, L2, L3 (float64)
    44      16    t, eps (float64)
    60      6     basis tags of u1..b3, b"C" or b"S"
    66      2     reserved, zero
    68      4     CRC-32 of the payload
    72      4     CRC-32 of bytes [0, 72)
    76      ...   payload: complex128 coefficients of u1, u2, u3, b1, b2, b3 in C order
                  (interleaved real/imaginary float64), exactly 2 * 6 * N1 * N2 * N3 * 8 bytes
"""

from __future__ import annotations

import csv
import json
import math
import struct
import zlib
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from .dynamics import State
from .spectral import (
    VELOCITY_BASES,
    Grid,
    GridSpec,
    SpectralVectorField,
    VerticalBasis,
    divergence,
    l2_norm_sq,
    plan_grid,
)

MAGIC = b"MHDC"
VERSION = 1
_HEAD = struct.Struct("<4sHH3I3d2d6s2sI")
_CRC = struct.Struct("<I")
HEADER_SIZE = _HEAD.size + _CRC.size

PathLike = Union[str, Path]


class CorruptHeader(ValueError):
    pass


class VersionMismatch(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


class InvalidCheckpoint(ValueError):
    pass


def _header_bytes(state: State, payload_crc: int) -> bytes:
    sp = state.grid.spec
    tags = "".join(b.value for b in (*state.u.bases, *state.b.bases)).encode("ascii")
    head = _HEAD.pack(
        MAGIC, VERSION, 0, sp.N1, sp.N2, sp.N3, sp.L1, sp.L2, sp.L3, state.t, state.eps, tags, b"\0\0", payload_crc
    )
    return head + _CRC.pack(zlib.crc32(head))


def write_checkpoint(state: State, path: PathLike) -> None:
    coef = np.concatenate([state.u.coef, state.b.coef]).astype("<c16", copy=False)
    payload = np.ascontiguousarray(coef).tobytes()
    with open(path, "wb") as fh:
        fh.write(_header_bytes(state, zlib.crc32(payload)))
        fh.write(payload)


def read_checkpoint(path: PathLike, grid: Grid | None = None, div_tol: float = 1e-10) -> State:
    """Read and validate a checkpoint; pass grid to require matching dimensions."""
    raw = Path(path).read_bytes()
    if len(raw) < HEADER_SIZE:
        raise CorruptHeader(f"{path}: {len(raw)} bytes is shorter than the {HEADER_SIZE}-byte header")
    head = raw[: _HEAD.size]
    (crc,) = _CRC.unpack(raw[_HEAD.size : HEADER_SIZE])
    magic, version, _, n1, n2, n3, l1, l2, l3, t, eps, tags, _, pcrc = _HEAD.unpack(head)
    if magic != MAGIC:
        raise CorruptHeader(f"{path}: bad magic {magic!r}")
    if zlib.crc32(head) != crc:
        raise CorruptHeader(f"{path}: header checksum mismatch")
    if version != VERSION:
        raise VersionMismatch(f"{path}: format version {version}, this reader supports {VERSION}")
    spec = GridSpec(n1, n2, n3, l1, l2, l3)
    if grid is not None:
        gs = grid.spec
        if (gs.N1, gs.N2, gs.N3) != (n1, n2, n3):
            raise DimensionMismatch(f"{path}: checkpoint grid {(n1, n2, n3)} != requested {(gs.N1, gs.N2, gs.N3)}")
        if not np.allclose((gs.L1, gs.L2, gs.L3), (l1, l2, l3), rtol=1e-14, atol=0):
            raise DimensionMismatch(f"{path}: box lengths {(l1, l2, l3)} != requested {(gs.L1, gs.L2, gs.L3)}")
    else:
        grid = plan_grid(spec)
    try:
        bases = [VerticalBasis(chr(c)) for c in tags]
    except ValueError as exc:
        raise InvalidCheckpoint(f"{path}: unknown basis tag in {tags!r}") from exc
    if tuple(bases[:3]) != VELOCITY_BASES or tuple(bases[3:]) != VELOCITY_BASES:
        raise InvalidCheckpoint(f"{path}: basis tags {tags.decode()} != CCSCCS")
    n = 6 * n1 * n2 * n3
    body = raw[HEADER_SIZE:]
    if len(body) != n * 16:
        raise CorruptHeader(f"{path}: payload is {len(body)} bytes, expected {n * 16}")
    if zlib.crc32(body) != pcrc:
        raise CorruptHeader(f"{path}: payload checksum mismatch")
    coef = np.frombuffer(body, dtype="<c16").astype(complex).reshape((6,) + grid.shape)
    u = SpectralVectorField(grid, coef[:3].copy())
    b = SpectralVectorField(grid, coef[3:].copy())
    kmax = float(np.sqrt(grid.dk1**2 + grid.dk2**2 + grid.kappa**2).max())
    for name, v in (("u", u), ("b", b)):
        size = math.sqrt(sum(l2_norm_sq(c) for c in v.components()))
        div = math.sqrt(l2_norm_sq(divergence(v)))
        if size > 0 and div > div_tol * size * max(kmax, 1.0):
            raise InvalidCheckpoint(f"{path}: {name} is not divergence-free (||div|| = {div:.3e})")
    return State(u, b, t, eps)


# ---------------------------------------------------------------------------
# CSV and JSON


def write_csv(path: PathLike, columns: list[str], rows: Iterable[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(row[k]) for k in columns})


def read_csv(path: PathLike) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if hasattr(obj, "value") and hasattr(obj, "name"):  # enums
        return obj.value
    return obj


def write_json(path: PathLike, report: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(report), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# flat config files


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """`key = value` lines; `#` starts a comment; keys are normalised to underscores."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected `key = value`, got {line!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if not key:
            raise ValueError(f"{source}:{lineno}: empty key")
        out[key.replace("-", "_").lower()] = value
    return out


def read_config_file(path: PathLike) -> dict[str, str]:
    return parse_config_text(Path(path).read_text(encoding="utf-8"), str(path))


def parse_length(text: str) -> float:
    """Float with an optional trailing `pi` factor: `16pi` -> 16 pi, `pi` -> pi."""
    t = str(text).strip().lower()
    if t.endswith("pi"):
        head = t[:-2].strip().rstrip("*")
        return (float(head) if head else 1.0) * math.pi
    return float(t)


def parse_float_list(text: str) -> list[float]:
    return [float(x) for x in str(text).replace(" ", "").split(",") if x]
