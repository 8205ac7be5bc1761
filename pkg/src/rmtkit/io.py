"""Binary containers, socket frames, and NDJSON emission.

Wire formats (all little-endian):

Activation container ("SPAC", version 1):
    magic "SPAC" | u16 version | u16 flags (bit 0: structured label) |
    u32 T | u32 D | T * D float32, row-major by time step.
    Header is exactly 16 bytes.

Socket frame:
    u32 payload length (= 4 * D) | D float32.

Recurrent-head checkpoint ("SPHD", version 1):
    magic "SPHD" | u16 version | u16 cell kind (0 vanilla, 1 gru, 2 lstm) |
    u32 hidden size | u32 input size | parameter tensors in registry order,
    float64.

Dense-network checkpoint ("SPKD", version 1):
    magic "SPKD" | u16 version | u16 reserved | u32 n_layers |
    n_layers * (u32 d_out, u32 d_in) | per layer: weight then bias, float64.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import BinaryIO, Iterator

import numpy as np

__all__ = [
    "ContainerError",
    "SPAC_HEADER_SIZE",
    "write_activations",
    "read_activations",
    "encode_frame",
    "read_frames",
    "write_ndjson_line",
]

SPAC_MAGIC = b"SPAC"
SPHD_MAGIC = b"SPHD"
SPKD_MAGIC = b"SPKD"
SPAC_VERSION = 1
SPAC_HEADER_SIZE = 16
FLAG_STRUCTURED = 0x0001

CELL_KIND_CODES = {"vanilla": 0, "gru": 1, "lstm": 2}
CELL_KIND_NAMES = {v: k for k, v in CELL_KIND_CODES.items()}


class ContainerError(ValueError):
    """Malformed binary container; the message names the failing byte offset."""


def write_activations(path: str | Path, data: np.ndarray, structured: bool = False) -> None:
    """Write a T x D activation matrix as an "SPAC" v1 container."""
    arr = np.ascontiguousarray(data, dtype="<f4")
    if arr.ndim != 2:
        raise ValueError(f"activations must be 2-D, got shape {arr.shape}")
    t, d = arr.shape
    flags = FLAG_STRUCTURED if structured else 0
    with open(path, "wb") as fh:
        fh.write(SPAC_MAGIC)
        fh.write(struct.pack("<HHII", SPAC_VERSION, flags, t, d))
        fh.write(arr.tobytes())


def read_activations(path: str | Path) -> tuple[np.ndarray, bool]:
    """Read an "SPAC" container; returns (T x D float32 array, structured flag)."""
    blob = Path(path).read_bytes()
    if len(blob) < SPAC_HEADER_SIZE:
        raise ContainerError(
            f"{path}: truncated header, need {SPAC_HEADER_SIZE} bytes, got {len(blob)} (at byte 0)"
        )
    if blob[:4] != SPAC_MAGIC:
        raise ContainerError(f"{path}: bad magic {blob[:4]!r} (at byte 0)")
    version, flags, t, d = struct.unpack_from("<HHII", blob, 4)
    if version != SPAC_VERSION:
        raise ContainerError(f"{path}: unsupported version {version} (at byte 4)")
    expected = SPAC_HEADER_SIZE + 4 * t * d
    if len(blob) != expected:
        raise ContainerError(
            f"{path}: payload size mismatch, expected {expected} bytes, got {len(blob)} "
            f"(at byte {min(len(blob), expected)})"
        )
    data = np.frombuffer(blob, dtype="<f4", offset=SPAC_HEADER_SIZE).reshape(t, d)
    return data.copy(), bool(flags & FLAG_STRUCTURED)


def encode_frame(row: np.ndarray) -> bytes:
    """One activation vector as a length-prefixed socket frame."""
    payload = np.ascontiguousarray(row, dtype="<f4").tobytes()
    return struct.pack("<I", len(payload)) + payload


def read_frames(stream: BinaryIO) -> Iterator[np.ndarray]:
    """Yield float32 vectors from a length-prefixed frame stream until EOF."""
    offset = 0
    while True:
        header = stream.read(4)
        if len(header) == 0:
            return
        if len(header) < 4:
            raise ContainerError(f"truncated frame length (at byte {offset})")
        (length,) = struct.unpack("<I", header)
        if length == 0 or length % 4 != 0:
            raise ContainerError(f"invalid frame payload length {length} (at byte {offset})")
        payload = stream.read(length)
        if len(payload) < length:
            raise ContainerError(f"truncated frame payload (at byte {offset + 4})")
        yield np.frombuffer(payload, dtype="<f4").copy()
        offset += 4 + length


def write_ndjson_line(fh, record: dict) -> None:
    """Append one JSON record as a single line."""
    fh.write(json.dumps(record, allow_nan=False))
    fh.write("\n")


# --- checkpoint containers ---------------------------------------------------


def _write_tensors(fh, tensors: list[np.ndarray]) -> None:
    for t in tensors:
        fh.write(np.ascontiguousarray(t, dtype="<f8").tobytes())


def _read_tensor(blob: bytes, offset: int, shape: tuple[int, ...], path) -> tuple[np.ndarray, int]:
    count = int(np.prod(shape)) if shape else 1
    nbytes = 8 * count
    if offset + nbytes > len(blob):
        raise ContainerError(f"{path}: truncated tensor data (at byte {offset})")
    arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape).copy()
    return arr, offset + nbytes


def write_head_checkpoint(path: str | Path, params) -> None:
    """Serialize RecurrentHeadParams as an "SPHD" v1 container."""
    from .recurrent import param_registry  # local import to avoid a cycle

    order = param_registry(params.cell_kind)
    with open(path, "wb") as fh:
        fh.write(SPHD_MAGIC)
        fh.write(
            struct.pack(
                "<HHII",
                1,
                CELL_KIND_CODES[params.cell_kind],
                params.hidden_size,
                params.input_size,
            )
        )
        _write_tensors(fh, [params.tensors[name] for name in order])


def read_head_checkpoint(path: str | Path):
    """Load an "SPHD" container back into RecurrentHeadParams."""
    from .recurrent import RecurrentHeadParams, param_registry, param_shapes

    blob = Path(path).read_bytes()
    if len(blob) < 16 or blob[:4] != SPHD_MAGIC:
        raise ContainerError(f"{path}: bad or truncated SPHD header (at byte 0)")
    version, kind_code, hidden, inputs = struct.unpack_from("<HHII", blob, 4)
    if version != 1:
        raise ContainerError(f"{path}: unsupported SPHD version {version} (at byte 4)")
    if kind_code not in CELL_KIND_NAMES:
        raise ContainerError(f"{path}: unknown cell kind code {kind_code} (at byte 6)")
    kind = CELL_KIND_NAMES[kind_code]
    shapes = param_shapes(kind, hidden, inputs)
    tensors = {}
    offset = 16
    for name in param_registry(kind):
        tensors[name], offset = _read_tensor(blob, offset, shapes[name], path)
    if offset != len(blob):
        raise ContainerError(f"{path}: trailing bytes after parameters (at byte {offset})")
    return RecurrentHeadParams(cell_kind=kind, hidden_size=hidden, input_size=inputs, tensors=tensors)


def write_dense_checkpoint(path: str | Path, model) -> None:
    """Serialize a DenseNet as an "SPKD" v1 container."""
    with open(path, "wb") as fh:
        fh.write(SPKD_MAGIC)
        fh.write(struct.pack("<HHI", 1, 0, len(model.weights)))
        for w in model.weights:
            fh.write(struct.pack("<II", w.shape[0], w.shape[1]))
        for w, b in zip(model.weights, model.biases):
            _write_tensors(fh, [w, b])


def read_dense_checkpoint(path: str | Path):
    """Load an "SPKD" container back into a DenseNet."""
    from .compress import DenseNet

    blob = Path(path).read_bytes()
    if len(blob) < 12 or blob[:4] != SPKD_MAGIC:
        raise ContainerError(f"{path}: bad or truncated SPKD header (at byte 0)")
    version, _, n_layers = struct.unpack_from("<HHI", blob, 4)
    if version != 1:
        raise ContainerError(f"{path}: unsupported SPKD version {version} (at byte 4)")
    offset = 12
    shapes = []
    for _ in range(n_layers):
        if offset + 8 > len(blob):
            raise ContainerError(f"{path}: truncated layer table (at byte {offset})")
        d_out, d_in = struct.unpack_from("<II", blob, offset)
        shapes.append((d_out, d_in))
        offset += 8
    weights, biases = [], []
    for d_out, d_in in shapes:
        w, offset = _read_tensor(blob, offset, (d_out, d_in), path)
        b, offset = _read_tensor(blob, offset, (d_out,), path)
        weights.append(w)
        biases.append(b)
    if offset != len(blob):
        raise ContainerError(f"{path}: trailing bytes after parameters (at byte {offset})")
    return DenseNet(weights=weights, biases=biases)
