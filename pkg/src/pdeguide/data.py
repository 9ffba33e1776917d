"""Dataset synthesis, global max-abs normalization and on-disk formats.

Three binary containers live here:

* field / dataset payload -- a 64-byte header followed by ``n*nx*ny``
  little-endian float32 values, sample-major then axis-0-major.  A dataset
  directory holds ``fields.bin`` in this format plus a ``meta.json`` sidecar.
* checkpoint -- a 32-byte header, a JSON table (architecture descriptor,
  schedule parameters, tensor directory) and the raw tensor bytes.

Every header carries a magic tag, a format version and a CRC-32 of what
follows, so truncated or foreign files are refused with a :class:`FormatError`.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, FormatError
from .grid import Field, GridSpec
from .problems import EQUATIONS, make_problem
from .solvers import reference_solution

FORMAT_VERSION = 1

FIELD_MAGIC = b"PGFD"
_FIELD_HEADER = struct.Struct("<4sHHIIIdddI16x")
FIELD_HEADER_SIZE = _FIELD_HEADER.size  # 64
_DTYPE_F32 = 1

CKPT_MAGIC = b"PGCK"
_CKPT_HEADER = struct.Struct("<4sHHIQI8x")
CKPT_HEADER_SIZE = _CKPT_HEADER.size  # 32

DEFAULT_RANGES = {
    "poisson": (1.0, 2.0),
    "heat": (0.02, 0.05),
    "burgers": (0.01, 0.03),
}


@dataclass(frozen=True, eq=False)
class Dataset:
    """``values`` has shape (n, nx, ny); ``scale`` maps stored values to physical ones."""

    equation: str
    coefficients: np.ndarray
    values: np.ndarray
    spec: GridSpec
    seed: int | None = None
    scale: float = 1.0
    version: int = FORMAT_VERSION
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.equation not in EQUATIONS:
            raise ConfigError(f"unknown equation {self.equation!r}")
        v = np.asarray(self.values, dtype=np.float64)
        c = np.asarray(self.coefficients, dtype=np.float64).reshape(-1)
        if v.ndim != 3 or v.shape[1:] != self.spec.shape:
            raise DataError(f"values of shape {v.shape} do not match grid {self.spec.shape}")
        if v.shape[0] != c.size:
            raise DataError(f"{v.shape[0]} samples but {c.size} coefficients")
        if not self.scale > 0:
            raise DataError("dataset scale must be positive")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "coefficients", c)

    def __len__(self) -> int:
        return self.values.shape[0]

    def field(self, i: int) -> Field:
        return Field(self.spec, self.values[i])

    def meta(self) -> dict:
        return {
            "version": self.version,
            "equation": self.equation,
            "grid": self.spec.to_dict(),
            "n": len(self),
            "seed": self.seed,
            "scale": self.scale,
            "coefficients": [float(c) for c in self.coefficients],
            **({"extra": self.extra} if self.extra else {}),
        }


# --------------------------------------------------------------------------
# generation

def sample_coefficient(seed: int, i: int, lo: float, hi: float) -> float:
    """Coefficient of sample ``i``; each sample owns the stream (seed, i)."""
    return float(np.random.default_rng([seed, i]).uniform(lo, hi))


def _solve_one(args) -> np.ndarray:
    equation, coef, grid, solver_kwargs = args
    p = make_problem(equation, coef, GridSpec.from_dict(grid))
    return reference_solution(p, **solver_kwargs).values


def generate_dataset(equation: str, n: int = 4000, coef_min: float | None = None,
                     coef_max: float | None = None, seed: int = 0,
                     spec: GridSpec | None = None, workers: int = 1,
                     **solver_kwargs) -> Dataset:
    """Solve the canonical problem at ``n`` uniformly drawn coefficients.

    The output depends only on the arguments, never on ``workers``.
    """
    if equation not in DEFAULT_RANGES:
        raise ConfigError(f"unknown equation {equation!r}; expected one of {EQUATIONS}")
    lo, hi = DEFAULT_RANGES[equation]
    lo = lo if coef_min is None else float(coef_min)
    hi = hi if coef_max is None else float(coef_max)
    if not lo < hi:
        raise ConfigError(f"coefficient range must satisfy min < max, got [{lo}, {hi}]")
    if lo <= 0:
        raise ConfigError("coefficients must be positive")
    if n < 1:
        raise ConfigError("n must be at least 1")
    spec = spec or GridSpec.square(64)
    coefs = np.array([sample_coefficient(seed, i, lo, hi) for i in range(n)])
    jobs = [(equation, c, spec.to_dict(), solver_kwargs) for c in coefs]
    values = np.empty((n,) + spec.shape)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for i, v in enumerate(pool.map(_solve_one, jobs, chunksize=8)):
                values[i] = v
    else:
        for i, job in enumerate(jobs):
            try:
                values[i] = _solve_one(job)
            except Exception as exc:
                raise type(exc)(f"sample {i} (coef={coefs[i]:.6g}): {exc}") from exc
    return Dataset(equation, coefs, values, spec, seed=seed,
                   extra={"range": [lo, hi], **({"solver": solver_kwargs} if solver_kwargs else {})})


# --------------------------------------------------------------------------
# normalization

def normalize(d: Dataset) -> Dataset:
    """Divide by the global max |value|; the accumulated factor goes into ``scale``."""
    if len(d) == 0:
        raise DataError("cannot normalize an empty dataset")
    peak = float(np.max(np.abs(d.values)))
    if peak == 0.0:
        raise DataError("cannot normalize an all-zero dataset")
    return replace(d, values=d.values / peak, scale=d.scale * peak)


def denormalize(d: Dataset) -> Dataset:
    return replace(d, values=d.values * d.scale, scale=1.0)


# --------------------------------------------------------------------------
# file helpers

def atomic_write(path: str | os.PathLike, data: bytes) -> None:
    """Write to a temporary sibling and rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    atomic_write(path, text.encode("utf-8"))


def _read(path) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except FileNotFoundError as exc:
        raise FileNotFoundError(f"no such file: {path}") from exc


def encode_fields(values: np.ndarray, spec: GridSpec, scale: float = 1.0) -> bytes:
    v = np.asarray(values, dtype=np.float64)
    if v.ndim == 2:
        v = v[None]
    if v.shape[1:] != spec.shape:
        raise DataError(f"values of shape {v.shape} do not match grid {spec.shape}")
    payload = np.ascontiguousarray(v, dtype="<f4").tobytes()
    header = _FIELD_HEADER.pack(FIELD_MAGIC, FORMAT_VERSION, _DTYPE_F32, v.shape[0],
                                spec.nx, spec.ny, spec.lx, spec.ly, float(scale),
                                zlib.crc32(payload))
    return header + payload


def decode_fields(blob: bytes) -> tuple[np.ndarray, GridSpec, float]:
    """Parse a field container into (values[n, nx, ny], grid, scale)."""
    if len(blob) < FIELD_HEADER_SIZE:
        raise FormatError(f"file too short for a field header ({len(blob)} bytes)")
    magic, version, dtype, n, nx, ny, lx, ly, scale, crc = _FIELD_HEADER.unpack_from(blob)
    if magic != FIELD_MAGIC:
        raise FormatError(f"bad magic {magic!r}; not a field file (unsupported version)")
    if version != FORMAT_VERSION:
        raise FormatError(f"field format version {version} is not supported (expected {FORMAT_VERSION})")
    if dtype != _DTYPE_F32:
        raise FormatError(f"unknown dtype code {dtype}")
    payload = blob[FIELD_HEADER_SIZE:]
    expected = 4 * n * nx * ny
    if len(payload) != expected:
        raise FormatError(f"payload has {len(payload)} bytes, header promises {expected} (truncated?)")
    if zlib.crc32(payload) != crc:
        raise FormatError("checksum mismatch; file is corrupted")
    spec = GridSpec(nx, ny, lx, ly)
    values = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(n, nx, ny)
    return values, spec, scale


def save_field(u: Field, path, meta: dict | None = None) -> None:
    """Single field (n = 1).  ``meta`` is echoed to a ``.json`` sidecar."""
    atomic_write(path, encode_fields(u.values, u.spec))
    if meta is not None:
        atomic_write_text(str(path) + ".json", json.dumps(meta, indent=2, sort_keys=True))


def load_field(path) -> Field:
    values, spec, _ = decode_fields(_read(path))
    if values.shape[0] != 1:
        raise FormatError(f"{path} holds {values.shape[0]} fields; use load_dataset")
    return Field(spec, values[0])


def save_dataset(d: Dataset, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    atomic_write(path / "fields.bin", encode_fields(d.values, d.spec, d.scale))
    atomic_write_text(path / "meta.json", json.dumps(d.meta(), indent=2))


def load_dataset(path) -> Dataset:
    path = Path(path)
    try:
        meta = json.loads(_read(path / "meta.json"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path / 'meta.json'}: {exc}") from exc
    if meta.get("version") != FORMAT_VERSION:
        raise FormatError(f"dataset version {meta.get('version')} is not supported")
    values, spec, scale = decode_fields(_read(path / "fields.bin"))
    if spec != GridSpec.from_dict(meta["grid"]) or values.shape[0] != meta["n"]:
        raise FormatError("meta.json disagrees with fields.bin")
    return Dataset(meta["equation"], np.array(meta["coefficients"]), values, spec,
                   seed=meta.get("seed"), scale=scale, extra=meta.get("extra", {}))


# --------------------------------------------------------------------------
# checkpoints

def encode_checkpoint(descriptor: dict, schedule: dict, tensors: dict[str, np.ndarray],
                      extra: dict | None = None) -> bytes:
    table = []
    chunks = []
    offset = 0
    for name, arr in tensors.items():
        a = np.ascontiguousarray(arr)
        a = a.astype(a.dtype.newbyteorder("<"), copy=False)
        raw = a.tobytes()
        table.append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape),
                      "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    head = json.dumps({"descriptor": descriptor, "schedule": schedule,
                       "tensors": table, "extra": extra or {}}).encode("utf-8")
    payload = b"".join(chunks)
    header = _CKPT_HEADER.pack(CKPT_MAGIC, FORMAT_VERSION, 0, len(head), len(payload),
                               zlib.crc32(payload, zlib.crc32(head)))
    return header + head + payload


def decode_checkpoint(blob: bytes) -> tuple[dict, dict, dict[str, np.ndarray], dict]:
    if len(blob) < CKPT_HEADER_SIZE:
        raise FormatError("file too short for a checkpoint header")
    magic, version, _, jlen, plen, crc = _CKPT_HEADER.unpack_from(blob)
    if magic != CKPT_MAGIC:
        raise FormatError(f"bad magic {magic!r}; not a checkpoint (unsupported version)")
    if version != FORMAT_VERSION:
        raise FormatError(f"checkpoint version {version} is not supported (expected {FORMAT_VERSION})")
    body = blob[CKPT_HEADER_SIZE:]
    if len(body) != jlen + plen:
        raise FormatError(f"checkpoint body has {len(body)} bytes, header promises {jlen + plen}")
    head, payload = body[:jlen], body[jlen:]
    if zlib.crc32(payload, zlib.crc32(head)) != crc:
        raise FormatError("checksum mismatch; checkpoint is corrupted")
    meta = json.loads(head)
    tensors = {}
    for t in meta["tensors"]:
        raw = payload[t["offset"]:t["offset"] + t["nbytes"]]
        tensors[t["name"]] = np.frombuffer(raw, dtype=np.dtype(t["dtype"])).reshape(t["shape"]).copy()
    return meta["descriptor"], meta["schedule"], tensors, meta.get("extra", {})


def save_checkpoint(path, descriptor: dict, schedule: dict, tensors: dict[str, np.ndarray],
                    extra: dict | None = None) -> None:
    atomic_write(path, encode_checkpoint(descriptor, schedule, tensors, extra))


def load_checkpoint(path) -> tuple[dict, dict, dict[str, np.ndarray], dict]:
    return decode_checkpoint(_read(path))
