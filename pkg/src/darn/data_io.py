"""Dataset loading, binarisation, checkpoints and PGM output.

Checkpoint layout (every integer little-endian)::

    b"DARN"  u32 version
    u32 n_x  u32 visible_autoregressive  u32 n_layers
    n_layers x (u32 n_h, u32 det_width, u32 encoder_ar, u32 decoder_ar)
    u64 seed
    parameter blocks, float64 LE, in ``model.param_layout`` order
    u32 has_optimizer [mean_sq blocks, step blocks in the same order]
    u32 config_length, UTF-8 JSON training-config echo
"""
from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (BadMagicError, CheckpointError, DataError, NonBinaryError, TruncatedFileError,
                     UnsupportedTypeError)
from .model import Architecture, ModelParams, StochasticLayerSpec, param_layout
from .training import OptimizerState

CHECKPOINT_MAGIC = b"DARN"
CHECKPOINT_VERSION = 1
IDX_UBYTE = 0x08


@dataclass(frozen=True, eq=False)
class Dataset:
    """Binary data, one example per row."""
    rows: np.ndarray
    image_shape: tuple[int, int] | None = None

    def __post_init__(self):
        rows = np.asarray(self.rows)
        if rows.ndim != 2:
            raise DataError(f"dataset must be a 2-D matrix, got shape {rows.shape}")
        if np.any((rows != 0) & (rows != 1)):
            raise NonBinaryError("dataset entries must be 0 or 1")
        rows = rows.astype(np.uint8)
        rows.flags.writeable = False
        object.__setattr__(self, "rows", rows)
        if self.image_shape is not None:
            shape = tuple(int(v) for v in self.image_shape)
            if len(shape) != 2 or shape[0] * shape[1] != rows.shape[1]:
                raise DataError(f"image shape {shape} does not match {rows.shape[1]} columns")
            object.__setattr__(self, "image_shape", shape)

    def __len__(self) -> int:
        return self.rows.shape[0]

    @property
    def n_x(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True, eq=False)
class Images:
    """Raw uint8 intensities as read from an IDX file, one flattened item per row."""
    values: np.ndarray
    image_shape: tuple[int, int] | None = None


# --------------------------------------------------------------------------
# IDX


def parse_idx(raw: bytes) -> Images:
    if len(raw) < 4:
        raise TruncatedFileError(f"IDX header needs 4 bytes, file has {len(raw)}")
    magic = struct.unpack(">I", raw[:4])[0]
    if raw[0] != 0 or raw[1] != 0 or raw[3] == 0:
        raise BadMagicError(f"bad IDX magic 0x{magic:08x}")
    if raw[2] != IDX_UBYTE:
        raise UnsupportedTypeError(f"unsupported IDX element type 0x{raw[2]:02x} (only 0x08 uint8)")
    ndim = raw[3]
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise TruncatedFileError(f"IDX header declares {ndim} dimensions but file ends at byte {len(raw)}")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    count = math.prod(dims)
    if len(raw) < header + count:
        raise TruncatedFileError(f"IDX payload needs {count} bytes, found {len(raw) - header}")
    if len(raw) > header + count:
        raise DataError(f"IDX file has {len(raw) - header - count} trailing bytes")
    values = np.frombuffer(raw, dtype=np.uint8, count=count, offset=header)
    if ndim == 1:
        return Images(values.reshape(dims[0], 1).copy())
    image_shape = (dims[1], dims[2]) if ndim == 3 else None
    return Images(values.reshape(dims[0], -1).copy(), image_shape)


def load_idx(path) -> Images:
    """Read an IDX file; pixels are returned as raw intensities for ``binarize``."""
    return parse_idx(Path(path).read_bytes())


def write_idx(path, values: np.ndarray) -> None:
    values = np.asarray(values, dtype=np.uint8)
    header = bytes([0, 0, IDX_UBYTE, values.ndim]) + struct.pack(f">{values.ndim}I", *values.shape)
    Path(path).write_bytes(header + values.tobytes())


def binarize(intensities, mode: str = "threshold", threshold: float = 0.5, seed: int = 0) -> Dataset:
    """Map intensities in [0, 1] (or raw ``Images``, scaled by 1/255) to bits.

    ``threshold`` sets bit = intensity >= threshold; ``stochastic`` draws
    bit ~ Bernoulli(intensity) from PCG64(seed).
    """
    image_shape = None
    if isinstance(intensities, Images):
        image_shape = intensities.image_shape
        values = intensities.values.astype(np.float64) / 255.0
    else:
        values = np.atleast_2d(np.asarray(intensities, dtype=np.float64))
    if np.any(~np.isfinite(values)) or np.any(values < 0) or np.any(values > 1):
        raise DataError("intensities must lie in [0, 1]")
    if mode == "threshold":
        bits = values >= threshold
    elif mode == "stochastic":
        rng = np.random.Generator(np.random.PCG64(seed))
        bits = rng.random(values.shape) < values
    else:
        raise ValueError(f"unknown binarisation mode {mode!r}")
    return Dataset(bits.astype(np.uint8), image_shape)


# --------------------------------------------------------------------------
# delimited text


def load_binary_csv(path, delimiter: str = ",") -> Dataset:
    rows = []
    with open(path, newline="") as fh:
        for lineno, record in enumerate(csv.reader(fh, delimiter=delimiter), start=1):
            if not record or all(not tok.strip() for tok in record):
                continue
            row = []
            for col, tok in enumerate(record, start=1):
                tok = tok.strip()
                if tok not in ("0", "1"):
                    raise NonBinaryError(f"{path}: row {lineno}, column {col}: non-binary token {tok!r}")
                row.append(int(tok))
            if rows and len(row) != len(rows[0]):
                raise DataError(f"{path}: row {lineno} has {len(row)} columns, expected {len(rows[0])}")
            rows.append(row)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return Dataset(np.array(rows, dtype=np.uint8))


def write_binary_csv(path, rows, delimiter: str = ",") -> None:
    rows = np.atleast_2d(np.asarray(rows, dtype=np.uint8))
    with open(path, "w") as fh:
        for row in rows:
            fh.write(delimiter.join(str(int(v)) for v in row) + "\n")


def load_dataset(path, binarize_mode: str = "threshold", threshold: float = 0.5, seed: int = 0) -> Dataset:
    """IDX files (detected by their magic) are binarised; anything else is read as binary CSV."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if len(head) == 4 and head[0] == 0 and head[1] == 0 and head[3] != 0:
        return binarize(load_idx(path), binarize_mode, threshold, seed)
    return load_binary_csv(path)


# --------------------------------------------------------------------------
# PGM


def pgm_bytes(pixels: np.ndarray) -> bytes:
    """Binary P5 image of a 2-D array of values in [0, 1], byte = floor(255 p + 1/2)."""
    pixels = np.asarray(pixels, dtype=np.float64)
    if pixels.ndim != 2:
        raise DataError(f"PGM needs a 2-D pixel grid, got shape {pixels.shape}")
    if np.any(~np.isfinite(pixels)) or np.any(pixels < 0) or np.any(pixels > 1):
        raise DataError("PGM pixel values must lie in [0, 1]")
    data = np.floor(255.0 * pixels + 0.5).astype(np.uint8)
    h, w = pixels.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + data.tobytes()


def write_pgm(samples, path, image_shape: tuple[int, int] | None = None) -> None:
    """Write one image, or a ``Dataset`` whose rows are stacked vertically, as P5.

    Bits map to 0/255; real values in [0, 1] (sample probabilities) map to
    round(255 p) with halves rounded up.
    """
    if isinstance(samples, Dataset):
        image_shape = image_shape or samples.image_shape
        rows = samples.rows
    else:
        rows = np.asarray(samples, dtype=np.float64)
        if rows.ndim == 2 and image_shape is None:
            Path(path).write_bytes(pgm_bytes(rows))
            return
        rows = np.atleast_2d(rows)
    if image_shape is None:
        raise DataError("writing a PGM needs an image shape (height, width)")
    h, w = image_shape
    if rows.shape[1] != h * w:
        raise DataError(f"rows of length {rows.shape[1]} cannot be shown as {h}x{w} images")
    Path(path).write_bytes(pgm_bytes(rows.reshape(-1, w)))


# --------------------------------------------------------------------------
# checkpoints


@dataclass(eq=False)
class Checkpoint:
    params: ModelParams
    optimizer: OptimizerState | None = None
    config: dict = field(default_factory=dict)
    seed: int = 0
    version: int = CHECKPOINT_VERSION

    @property
    def arch(self) -> Architecture:
        return self.params.arch


def _blocks_bytes(arch: Architecture, blocks) -> bytes:
    return b"".join(np.ascontiguousarray(blocks[name], dtype="<f8").tobytes()
                    for name, _ in param_layout(arch))


def checkpoint_bytes(cp: Checkpoint) -> bytes:
    arch = cp.arch
    out = [CHECKPOINT_MAGIC, struct.pack("<I", cp.version),
           struct.pack("<III", arch.n_x, int(arch.visible_autoregressive), arch.n_layers)]
    for spec in arch.layers:
        out.append(struct.pack("<IIII", spec.n_h, spec.det_width, int(spec.encoder_autoregressive),
                               int(spec.decoder_autoregressive)))
    out.append(struct.pack("<Q", cp.seed))
    out.append(_blocks_bytes(arch, cp.params.blocks))
    if cp.optimizer is None:
        out.append(struct.pack("<I", 0))
    else:
        out.append(struct.pack("<I", 1))
        out.append(_blocks_bytes(arch, cp.optimizer.mean_sq))
        out.append(_blocks_bytes(arch, cp.optimizer.step))
    config = json.dumps(cp.config, sort_keys=True).encode("utf-8")
    out.append(struct.pack("<I", len(config)) + config)
    return b"".join(out)


def save_checkpoint(path, cp: Checkpoint) -> None:
    Path(path).write_bytes(checkpoint_bytes(cp))


class _Reader:
    def __init__(self, raw: bytes):
        self.raw, self.pos = raw, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise CheckpointError(f"checkpoint truncated at byte {len(self.raw)} (needed {self.pos + n})")
        chunk = self.raw[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def blocks(self, arch: Architecture) -> dict[str, np.ndarray]:
        out = {}
        for name, shape in param_layout(arch):
            n = math.prod(shape)
            out[name] = np.frombuffer(self.take(8 * n), dtype="<f8").astype(np.float64).reshape(shape)
        return out


def parse_checkpoint(raw: bytes, expected_arch: Architecture | None = None) -> Checkpoint:
    reader = _Reader(raw)
    magic = reader.take(4)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"not a DARN checkpoint (magic {magic!r})")
    (version,) = reader.unpack("<I")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})")
    n_x, visible_ar, n_layers = reader.unpack("<III")
    try:
        layers = tuple(StochasticLayerSpec(n_h, det, bool(enc), bool(dec))
                       for n_h, det, enc, dec in (reader.unpack("<IIII") for _ in range(n_layers)))
        arch = Architecture(n_x, layers, bool(visible_ar))
    except ValueError as exc:
        raise CheckpointError(f"invalid architecture in checkpoint: {exc}") from exc
    if expected_arch is not None and arch != expected_arch:
        raise CheckpointError(f"checkpoint architecture {arch} does not match requested {expected_arch}")
    (seed,) = reader.unpack("<Q")
    try:
        params = ModelParams(arch, reader.blocks(arch))
    except DataError:
        raise
    except ValueError as exc:
        raise CheckpointError(f"invalid parameters in checkpoint: {exc}") from exc
    (has_opt,) = reader.unpack("<I")
    optimizer = None
    if has_opt:
        optimizer = OptimizerState(reader.blocks(arch), reader.blocks(arch))
    (config_len,) = reader.unpack("<I")
    try:
        config = json.loads(reader.take(config_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable config echo in checkpoint: {exc}") from exc
    if reader.pos != len(raw):
        raise CheckpointError(f"checkpoint has {len(raw) - reader.pos} trailing bytes")
    return Checkpoint(params, optimizer, config, seed, version)


def load_checkpoint(path, expected_arch: Architecture | None = None) -> Checkpoint:
    return parse_checkpoint(Path(path).read_bytes(), expected_arch)
