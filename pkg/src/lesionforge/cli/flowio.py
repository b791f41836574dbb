"""The LFLO dense-flow file format.

Layout (little-endian):

    bytes 0..3    magic "LFLO"
    bytes 4..5    version, u16 (currently 1)
    bytes 6..9    width, u32
    bytes 10..13  height, u32
    then          width*height interleaved (dx, dy) float32 pairs, row-major
    then          validity bitmap, one bit per pixel in row-major order,
                  LSB-first within each byte, padded to a whole byte

Total payload after the 14-byte header is 8*w*h + ceil(w*h/8) bytes.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..synth import FlowField

MAGIC = b"LFLO"
VERSION = 1
_HEADER = struct.Struct("<4sHII")


def flow_to_bytes(flow: FlowField) -> bytes:
    h, w = flow.valid.shape
    header = _HEADER.pack(MAGIC, VERSION, w, h)
    vectors = np.ascontiguousarray(flow.vectors.astype("<f4"))
    bits = np.packbits(flow.valid.ravel().astype(np.uint8), bitorder="little")
    return header + vectors.tobytes() + bits.tobytes()


def flow_from_bytes(data: bytes) -> FlowField:
    if len(data) < _HEADER.size:
        raise ValueError("flow file truncated: missing header")
    magic, version, w, h = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ValueError(f"bad flow magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"unsupported flow version {version}")
    n = w * h
    expected = _HEADER.size + 8 * n + (n + 7) // 8
    if len(data) != expected:
        raise ValueError(
            f"flow payload is {len(data) - _HEADER.size} bytes, expected "
            f"{expected - _HEADER.size} for {w}x{h}")
    vec = np.frombuffer(data, dtype="<f4", count=2 * n, offset=_HEADER.size)
    vectors = vec.reshape(h, w, 2).astype(np.float64)
    bits = np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size + 8 * n)
    valid = np.unpackbits(bits, count=n, bitorder="little").astype(bool)
    return FlowField(vectors=vectors, valid=valid.reshape(h, w))


def write_flow(path, flow: FlowField) -> None:
    Path(path).write_bytes(flow_to_bytes(flow))


def read_flow(path) -> FlowField:
    return flow_from_bytes(Path(path).read_bytes())
