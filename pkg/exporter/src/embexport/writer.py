"""EMBV1 writer (little-endian): magic "EMBV1\\0", u32 dim, u64 record
count, then (u32 sentence_id, u32 token_index, dim x f32) per record."""

from __future__ import annotations

import struct
from typing import BinaryIO, Sequence

import numpy as np

_MAGIC = b"EMBV1\x00"
_HEADER = struct.Struct("<6sIQ")
_REC = struct.Struct("<II")


def write_embv1(
    sink: BinaryIO, dim: int, records: Sequence[tuple[int, int, np.ndarray]]
) -> None:
    sink.write(_HEADER.pack(_MAGIC, dim, len(records)))
    for sentence_id, token_index, vec in records:
        vec = np.asarray(vec, dtype="<f4")
        if vec.shape != (dim,):
            raise ValueError(f"record ({sentence_id},{token_index}) has shape {vec.shape}")
        sink.write(_REC.pack(sentence_id, token_index))
        sink.write(vec.tobytes())
