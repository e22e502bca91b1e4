"""Writers for the binary interchange formats the inference toolkit reads.

These mirror the published layouts byte for byte; the exporter talks to the
toolkit only through these files.

PQCK checkpoint: magic "PQCK", u32 version=1, six u32 config words
(vocab_size, block_size, n_layer, n_head, n_embd, flags with bit0 = tied
lm_head), u32 tensor count, then per tensor u16 name length + UTF-8 name,
u8 rank, u64 dims, u8 dtype (0 = float32), raw little-endian values, and a
trailing CRC32 over everything before it.

PQTK token file: magic "PQTK", u32 version=1, u32 vocab size, u64 count,
u16 little-endian ids.

Fixture file: u32 count, then per fixture u32 length, u16 ids, f32 logits
(length x vocab, row major).
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

PQCK_MAGIC = b"PQCK"
PQTK_MAGIC = b"PQTK"
VERSION = 1
FLAG_TIED_LM_HEAD = 1


@dataclass(frozen=True)
class ModelShape:
    vocab_size: int
    block_size: int
    n_layer: int
    n_head: int
    n_embd: int


def write_pqck(path, shape: ModelShape, tensors: dict[str, np.ndarray],
               tied_lm_head: bool = False) -> None:
    out = bytearray()
    out += PQCK_MAGIC
    flags = FLAG_TIED_LM_HEAD if tied_lm_head else 0
    out += struct.pack("<7I", VERSION, shape.vocab_size, shape.block_size,
                       shape.n_layer, shape.n_head, shape.n_embd, flags)
    out += struct.pack("<I", len(tensors))
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        enc = name.encode("utf-8")
        out += struct.pack("<H", len(enc))
        out += enc
        out += struct.pack("<B", arr.ndim)
        out += struct.pack(f"<{arr.ndim}Q", *arr.shape)
        out += struct.pack("<B", 0)
        out += arr.tobytes(order="C")
    out += struct.pack("<I", zlib.crc32(bytes(out)) & 0xFFFFFFFF)
    with open(path, "wb") as f:
        f.write(out)


def read_pqck_header(path) -> tuple[ModelShape, bool]:
    """Read back just the config words (used by tests and the manifest)."""
    with open(path, "rb") as f:
        head = f.read(32)
    if head[:4] != PQCK_MAGIC:
        raise ValueError(f"not a PQCK file: magic {head[:4]!r}")
    version, vocab, block, n_layer, n_head, n_embd, flags = struct.unpack(
        "<7I", head[4:32]
    )
    if version != VERSION:
        raise ValueError(f"unsupported PQCK version {version}")
    shape = ModelShape(vocab, block, n_layer, n_head, n_embd)
    return shape, bool(flags & FLAG_TIED_LM_HEAD)


def write_pqtk(path, ids, vocab_size: int) -> None:
    ids = np.asarray(ids, dtype=np.uint16)
    if ids.size and int(ids.max()) >= vocab_size:
        raise ValueError(f"token id {int(ids.max())} >= vocab size {vocab_size}")
    with open(path, "wb") as f:
        f.write(PQTK_MAGIC)
        f.write(struct.pack("<IIQ", VERSION, vocab_size, ids.size))
        f.write(ids.astype("<u2").tobytes())


def read_pqtk(path) -> tuple[int, np.ndarray]:
    with open(path, "rb") as f:
        buf = f.read()
    if buf[:4] != PQTK_MAGIC:
        raise ValueError(f"not a PQTK file: magic {buf[:4]!r}")
    version, vocab, count = struct.unpack("<IIQ", buf[4:20])
    if version != VERSION:
        raise ValueError(f"unsupported PQTK version {version}")
    ids = np.frombuffer(buf[20:], dtype="<u2")
    if ids.size != count:
        raise ValueError(f"token count mismatch: header {count}, payload {ids.size}")
    return vocab, ids.copy()


def write_vocab(path, chars) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for c in chars:
            f.write(f"{ord(c)}\n")


def read_vocab(path) -> list[str]:
    with open(path, "r", encoding="utf-8") as f:
        return [chr(int(line)) for line in f if line.strip()]


def write_fixtures(path, fixtures: list[tuple[np.ndarray, np.ndarray]]) -> None:
    """fixtures: list of (token ids, logits[len x vocab]) pairs."""
    out = bytearray()
    out += struct.pack("<I", len(fixtures))
    for ids, logits in fixtures:
        ids = np.asarray(ids, dtype=np.uint16)
        logits = np.ascontiguousarray(logits, dtype=np.float32)
        if logits.shape[0] != ids.size:
            raise ValueError("fixture logits rows must match token count")
        out += struct.pack("<I", ids.size)
        out += ids.astype("<u2").tobytes()
        out += logits.tobytes(order="C")
    with open(path, "wb") as f:
        f.write(out)


def read_fixtures(path, vocab_size: int) -> list[tuple[np.ndarray, np.ndarray]]:
    with open(path, "rb") as f:
        buf = f.read()
    (count,) = struct.unpack_from("<I", buf, 0)
    pos = 4
    fixtures = []
    for _ in range(count):
        (length,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        ids = np.frombuffer(buf, dtype="<u2", count=length, offset=pos)
        pos += 2 * length
        logits = np.frombuffer(buf, dtype="<f4", count=length * vocab_size, offset=pos)
        pos += 4 * length * vocab_size
        fixtures.append((ids.copy(), logits.reshape(length, vocab_size).copy()))
    if pos != len(buf):
        raise ValueError(f"{len(buf) - pos} trailing byte(s) in fixture file")
    return fixtures


def crc32_of(path) -> int:
    crc = 0
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            crc = zlib.crc32(chunk, crc)
    return crc & 0xFFFFFFFF
