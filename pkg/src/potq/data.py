"""Dataset preprocessing: char-level vocabulary, token files, batches.

Token files (PQTK) are little-endian: magic ``PQTK``, u32 version, u32
vocab size, u64 token count, then the ids as unsigned 16-bit integers.
The vocab sidecar stores one decimal Unicode code point per line, with the
line index as the token id (literal characters would break on newline).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError

MAGIC = b"PQTK"
VERSION = 1


@dataclass(frozen=True)
class CharVocab:
    chars: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.chars)) != len(self.chars):
            raise DataError("vocabulary characters must be unique")

    @property
    def size(self) -> int:
        return len(self.chars)

    @classmethod
    def from_text(cls, text: str) -> "CharVocab":
        if not text:
            raise DataError("cannot build a vocabulary from empty text")
        return cls(chars=tuple(sorted(set(text))))

    def encode(self, text: str) -> np.ndarray:
        table = {c: i for i, c in enumerate(self.chars)}
        try:
            return np.array([table[c] for c in text], dtype=np.uint16)
        except KeyError as exc:
            raise DataError(f"character {exc.args[0]!r} not in vocabulary") from exc

    def decode(self, ids) -> str:
        ids = np.asarray(ids)
        if ids.size and (ids.min() < 0 or ids.max() >= self.size):
            raise DataError(f"token id out of range for vocab of size {self.size}")
        return "".join(self.chars[int(i)] for i in ids)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for c in self.chars:
                f.write(f"{ord(c)}\n")

    @classmethod
    def load(cls, path) -> "CharVocab":
        with open(path, "r", encoding="utf-8") as f:
            chars = tuple(chr(int(line)) for line in f if line.strip())
        return cls(chars=chars)


def build_char_vocab(text: str) -> CharVocab:
    return CharVocab.from_text(text)


def write_tokens(path, ids, vocab_size: int) -> None:
    ids = np.asarray(ids, dtype=np.uint16)
    if ids.size and int(ids.max()) >= vocab_size:
        raise DataError(f"token id {int(ids.max())} >= vocab size {vocab_size}")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IIQ", VERSION, vocab_size, ids.size))
        f.write(ids.astype("<u2").tobytes())


@dataclass(frozen=True)
class TokenFile:
    vocab_size: int
    ids: np.ndarray

    @classmethod
    def load(cls, path) -> "TokenFile":
        with open(path, "rb") as f:
            buf = f.read()
        if buf[:4] != MAGIC:
            raise FormatError(f"bad magic: expected {MAGIC!r}, got {buf[:4]!r}")
        if len(buf) < 20:
            raise FormatError("token file truncated: incomplete header")
        version, vocab_size, count = struct.unpack("<IIQ", buf[4:20])
        if version != VERSION:
            raise FormatError(f"version mismatch: file has {version}, reader supports {VERSION}")
        payload = buf[20:]
        if len(payload) != 2 * count:
            raise FormatError(
                f"byte-count mismatch: header says {count} tokens, payload has {len(payload)} bytes"
            )
        ids = np.frombuffer(payload, dtype="<u2").copy()
        if ids.size and int(ids.max()) >= vocab_size:
            raise FormatError(f"token id {int(ids.max())} >= declared vocab {vocab_size}")
        return cls(vocab_size=vocab_size, ids=ids)

    def __len__(self) -> int:
        return int(self.ids.size)


def prepare_dataset(text_path, out_dir, ratios=(0.8, 0.1, 0.1)) -> dict[str, Path]:
    """Tokenize a text corpus and write contiguous train/val/test splits."""
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise DataError(f"need three positive ratios, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"ratios must sum to 1, got {sum(ratios)}")
    try:
        text = Path(text_path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {text_path}: {exc}") from exc
    if not text:
        raise DataError(f"{text_path} is empty")

    vocab = CharVocab.from_text(text)
    ids = vocab.encode(text)
    n = ids.size
    cut1 = round(n * ratios[0])
    cut2 = round(n * (ratios[0] + ratios[1]))
    splits = {"train": ids[:cut1], "val": ids[cut1:cut2], "test": ids[cut2:]}

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}
    for name, part in splits.items():
        paths[name] = out_dir / f"{name}.bin"
        write_tokens(paths[name], part, vocab.size)
    paths["vocab"] = out_dir / "vocab.txt"
    vocab.save(paths["vocab"])
    return paths


def sample_batch(tf: TokenFile, block: int, batch: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniformly random windows; targets are inputs shifted one position."""
    n = len(tf)
    if n <= block + 1:
        raise DataError(f"token file too small: {n} tokens for block size {block}")
    rng = np.random.default_rng(seed)
    starts = rng.integers(0, n - block, size=batch)
    ids = tf.ids.astype(np.int64)
    inputs = np.stack([ids[s:s + block] for s in starts])
    targets = np.stack([ids[s + 1:s + block + 1] for s in starts])
    return inputs, targets
