"""Binary checkpoint format (PQCK).

Layout, all little-endian:

* magic ``PQCK``, u32 version (=1)
* config block of six u32: vocab_size, block_size, n_layer, n_head,
  n_embd, flags (bit 0: lm_head tied to the token embedding)
* u32 tensor count, then per tensor: u16 name length, UTF-8 name,
  u8 rank, u64 dims[rank], u8 dtype code (0 = float32), raw values
* trailing CRC32 over every preceding byte
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import FormatError

MAGIC = b"PQCK"
VERSION = 1
FLAG_TIED_LM_HEAD = 1
DTYPE_F32 = 0


@dataclass(frozen=True)
class GPTConfig:
    vocab_size: int
    block_size: int
    n_layer: int
    n_head: int
    n_embd: int

    def __post_init__(self):
        if self.n_embd % self.n_head != 0:
            raise FormatError(
                f"n_embd {self.n_embd} not divisible by n_head {self.n_head}"
            )


CHAR_PRESET = dict(vocab_size=65, block_size=64, n_head=4, n_embd=128)
GPT2_PRESET = GPTConfig(vocab_size=50257, block_size=1024, n_layer=12, n_head=12, n_embd=768)


def write_checkpoint(path, config: GPTConfig, tensors: dict[str, np.ndarray],
                     tied_lm_head: bool = False) -> None:
    """Serialize named float32 tensors plus the architecture header."""
    out = bytearray()
    out += MAGIC
    flags = FLAG_TIED_LM_HEAD if tied_lm_head else 0
    out += struct.pack(
        "<7I", VERSION, config.vocab_size, config.block_size,
        config.n_layer, config.n_head, config.n_embd, flags,
    )
    out += struct.pack("<I", len(tensors))
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        enc = name.encode("utf-8")
        out += struct.pack("<H", len(enc))
        out += enc
        out += struct.pack("<B", arr.ndim)
        out += struct.pack(f"<{arr.ndim}Q", *arr.shape)
        out += struct.pack("<B", DTYPE_F32)
        out += arr.tobytes(order="C")
    out += struct.pack("<I", zlib.crc32(bytes(out)) & 0xFFFFFFFF)
    with open(path, "wb") as f:
        f.write(out)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(
                f"checkpoint truncated: needed {n} byte(s) for {what}, "
                f"have {len(self.buf) - self.pos}"
            )
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def read_checkpoint(path) -> tuple[GPTConfig, dict[str, np.ndarray], bool]:
    """Load and verify a PQCK file.

    Returns (config, tensors, tied_lm_head). Raises FormatError with a
    distinct diagnostic for bad magic, version mismatch, byte-count
    mismatch, or checksum failure.
    """
    with open(path, "rb") as f:
        buf = f.read()
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise FormatError(f"bad magic: expected {MAGIC!r}, got {buf[:4]!r}")
    if len(buf) < 8:
        raise FormatError("checkpoint truncated: missing version field")
    stored_crc = struct.unpack("<I", buf[-4:])[0]
    actual_crc = zlib.crc32(buf[:-4]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise FormatError(
            f"checksum failure: stored {stored_crc:#010x}, computed {actual_crc:#010x}"
        )

    r = _Reader(buf[:-4])
    r.take(4, "magic")
    (version,) = r.unpack("<I", "version")
    if version != VERSION:
        raise FormatError(f"version mismatch: file has {version}, reader supports {VERSION}")
    vocab, block, n_layer, n_head, n_embd, flags = r.unpack("<6I", "config block")
    config = GPTConfig(vocab, block, n_layer, n_head, n_embd)
    (count,) = r.unpack("<I", "tensor count")

    tensors: dict[str, np.ndarray] = {}
    for i in range(count):
        (name_len,) = r.unpack("<H", f"tensor {i} name length")
        name = r.take(name_len, f"tensor {i} name").decode("utf-8")
        (rank,) = r.unpack("<B", f"{name}: rank")
        dims = r.unpack(f"<{rank}Q", f"{name}: dims") if rank else ()
        (dtype,) = r.unpack("<B", f"{name}: dtype")
        if dtype != DTYPE_F32:
            raise FormatError(f"{name}: unsupported dtype code {dtype}")
        n_elem = 1
        for d in dims:
            n_elem *= d
        raw = r.take(4 * n_elem, f"{name}: {n_elem} float32 values")
        tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).copy()
    if r.pos != len(r.buf):
        raise FormatError(
            f"byte-count mismatch: {len(r.buf) - r.pos} trailing byte(s) after last tensor"
        )
    return config, tensors, bool(flags & FLAG_TIED_LM_HEAD)
