"""On-disk formats: sample records, key=value manifests, checkpoints, metrics CSV.

Every binary format starts with a 4-byte magic and a version number and is
little-endian throughout. Loaders reject unknown magics and newer versions.
"""
from __future__ import annotations

import csv
import io
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SAMPLE_MAGIC = b"PRSM"
SAMPLE_VERSION = 1
CKPT_MAGIC = b"PRCK"
CKPT_VERSION = 1

TASK_MAZE1 = 1
TASK_MAZE2 = 2
TASK_POOL = 3

_DTYPE_CODES = {np.dtype("<f4"): 1, np.dtype("<f8"): 2, np.dtype("<i8"): 3}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}

METRIC_FIELDS = ("step", "labelled_samples", "seed", "rmse", "loss", "wall_ms")


class FormatError(ValueError):
    """A file is truncated, has the wrong magic, or an unsupported version."""


class _Reader:
    def __init__(self, buf: bytes, what: str):
        self.buf = buf
        self.pos = 0
        self.what = what

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"{self.what}: truncated at byte {self.pos} (needed {n} more)")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt)))

    def array(self, dtype, shape) -> np.ndarray:
        dtype = np.dtype(dtype)
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        return np.frombuffer(self.take(n * dtype.itemsize), dtype=dtype).reshape(shape).copy()

    def done(self) -> bool:
        return self.pos == len(self.buf)


def _check_header(r: _Reader, magic: bytes, version: int) -> int:
    got = r.take(4)
    if got != magic:
        raise FormatError(f"{r.what}: bad magic {got!r}, expected {magic!r}")
    (ver,) = r.unpack("H")
    if ver > version:
        raise FormatError(f"{r.what}: version {ver} is newer than supported {version}")
    return ver


def _atomic_write(path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)


# sample records -------------------------------------------------------------

@dataclass
class SampleSet:
    task: int
    size: int
    planes: np.ndarray  # [N, C, H, W] float32
    targets: np.ndarray  # [N, D] float32


def encode_samples(s: SampleSet) -> bytes:
    planes = np.ascontiguousarray(s.planes, dtype="<f4")
    targets = np.ascontiguousarray(s.targets, dtype="<f4")
    if planes.ndim != 4 or targets.ndim != 2 or planes.shape[0] != targets.shape[0]:
        raise ValueError(f"planes {planes.shape} and targets {targets.shape} do not pair up")
    n, c, h, w = planes.shape
    head = SAMPLE_MAGIC + struct.pack("<HBHIHHHI", SAMPLE_VERSION, s.task, s.size, n, c, h, w,
                                      targets.shape[1])
    body = io.BytesIO()
    for i in range(n):
        body.write(planes[i].tobytes())
        body.write(targets[i].tobytes())
    return head + body.getvalue()


def decode_samples(buf: bytes) -> SampleSet:
    r = _Reader(buf, "sample file")
    _check_header(r, SAMPLE_MAGIC, SAMPLE_VERSION)
    task, size, n, c, h, w, d = r.unpack("BHIHHHI")
    planes = np.empty((n, c, h, w), dtype=np.float32)
    targets = np.empty((n, d), dtype=np.float32)
    for i in range(n):
        planes[i] = r.array("<f4", (c, h, w))
        targets[i] = r.array("<f4", (d,))
    if not r.done():
        raise FormatError("sample file: trailing bytes")
    return SampleSet(task, size, planes, targets)


def write_samples(path, s: SampleSet) -> None:
    _atomic_write(path, encode_samples(s))


def read_samples(path) -> SampleSet:
    return decode_samples(Path(path).read_bytes())


# key=value manifests ---------------------------------------------------------

def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, np.ndarray):
        return ",".join(format_value(float(x)) for x in v.reshape(-1))
    if isinstance(v, (list, tuple)):
        return ",".join(format_value(x) for x in v)
    return str(v)


def write_manifest(path, sections: dict[str, dict]) -> None:
    """Plain text; ``{"": {...}}`` holds top-level keys."""
    lines = []
    for name, entries in sections.items():
        if name:
            lines.append(f"[{name}]")
        for k, v in entries.items():
            lines.append(f"{k}={format_value(v)}")
        lines.append("")
    _atomic_write(path, "\n".join(lines).encode())


def read_manifest(path) -> dict[str, dict[str, str]]:
    """Raw strings per section; blank lines and ``#`` comments are skipped."""
    out: dict[str, dict[str, str]] = {"": {}}
    section = ""
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            out.setdefault(section, {})
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        k, v = line.split("=", 1)
        out[section][k.strip()] = v.strip()
    return out


def parse_floats(text: str) -> np.ndarray:
    return np.array([float(x) for x in text.split(",") if x], dtype=np.float64)


# checkpoints -----------------------------------------------------------------

@dataclass
class Checkpoint:
    counters: dict[str, int]
    tensors: dict[str, np.ndarray]


def encode_checkpoint(ck: Checkpoint) -> bytes:
    out = io.BytesIO()
    out.write(CKPT_MAGIC + struct.pack("<HI", CKPT_VERSION, len(ck.counters)))
    for name, value in ck.counters.items():
        b = name.encode()
        out.write(struct.pack("<H", len(b)) + b + struct.pack("<q", int(value)))
    out.write(struct.pack("<I", len(ck.tensors)))
    for name, arr in ck.tensors.items():
        arr = np.asarray(arr)
        dt = arr.dtype.newbyteorder("<")
        if dt not in _DTYPE_CODES:
            raise ValueError(f"tensor {name!r}: unsupported dtype {arr.dtype}")
        b = name.encode()
        out.write(struct.pack("<H", len(b)) + b)
        out.write(struct.pack("<BB", _DTYPE_CODES[dt], arr.ndim))
        out.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.write(np.ascontiguousarray(arr, dtype=dt).tobytes())
    return out.getvalue()


def decode_checkpoint(buf: bytes) -> Checkpoint:
    r = _Reader(buf, "checkpoint")
    _check_header(r, CKPT_MAGIC, CKPT_VERSION)
    (n_counters,) = r.unpack("I")
    counters = {}
    for _ in range(n_counters):
        (ln,) = r.unpack("H")
        name = r.take(ln).decode()
        (counters[name],) = r.unpack("q")
    (n_tensors,) = r.unpack("I")
    tensors = {}
    for _ in range(n_tensors):
        (ln,) = r.unpack("H")
        name = r.take(ln).decode()
        code, rank = r.unpack("BB")
        if code not in _CODE_DTYPES:
            raise FormatError(f"checkpoint: tensor {name!r} has unknown dtype code {code}")
        shape = r.unpack(f"{rank}I") if rank else ()
        tensors[name] = r.array(_CODE_DTYPES[code], tuple(shape))
    if not r.done():
        raise FormatError("checkpoint: trailing bytes")
    return Checkpoint(counters, tensors)


def save_checkpoint(path, ck: Checkpoint) -> None:
    _atomic_write(path, encode_checkpoint(ck))


def load_checkpoint(path) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes())


# metrics ---------------------------------------------------------------------

def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


class MetricsWriter:
    """Appends one CSV row per eval point and flushes it straight away."""

    def __init__(self, path, append: bool = False):
        self.path = Path(path)
        exists = append and self.path.exists()
        self._f = open(self.path, "a" if exists else "w", newline="")
        self._w = csv.writer(self._f, lineterminator="\n")
        if not exists:
            self._w.writerow(METRIC_FIELDS)
            self._f.flush()

    def write(self, row: dict) -> None:
        self._w.writerow([_fmt(row[k]) for k in METRIC_FIELDS])
        self._f.flush()

    def close(self) -> None:
        self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_metrics(path) -> list[dict]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    out = []
    for r in rows:
        out.append({
            "step": int(r["step"]),
            "labelled_samples": int(r["labelled_samples"]),
            "seed": int(r["seed"]),
            "rmse": float(r["rmse"]),
            "loss": float(r["loss"]),
            "wall_ms": float(r["wall_ms"]),
        })
    return out


def truncate_metrics(path, max_step: int) -> None:
    """Drop rows past ``max_step`` (used when resuming from an earlier checkpoint)."""
    rows = [r for r in read_metrics(path) if r["step"] <= max_step]
    with MetricsWriter(path) as w:
        for r in rows:
            w.write(r)
