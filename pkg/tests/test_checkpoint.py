import struct

import numpy as np
import pytest

from potq.checkpoint import GPTConfig, read_checkpoint, write_checkpoint
from potq.errors import FormatError, ShapeError
from potq.model import GPTWeights, load_checkpoint

from conftest import make_weights


@pytest.fixture
def sample(tmp_path, tiny_cfg):
    w = make_weights(tiny_cfg, seed=5, with_bias=True)
    path = tmp_path / "model.pqck"
    write_checkpoint(path, tiny_cfg, w.tensors)
    return path, tiny_cfg, w


class TestRoundTrip:
    def test_config_and_tensors_survive(self, sample):
        path, cfg, w = sample
        config, tensors, tied = read_checkpoint(path)
        assert config == cfg
        assert not tied
        assert set(tensors) == set(w.tensors)
        for name in w.tensors:
            np.testing.assert_array_equal(tensors[name], w.tensors[name])

    def test_load_checkpoint_builds_weights(self, sample):
        path, cfg, _ = sample
        config, weights = load_checkpoint(path)
        assert config == cfg
        assert weights.linear_weight("lm_head").shape == (cfg.n_embd, cfg.vocab_size)

    def test_tied_flag_round_trips(self, tmp_path, tiny_cfg):
        w = make_weights(tiny_cfg, seed=6, tied=True)
        path = tmp_path / "tied.pqck"
        write_checkpoint(path, tiny_cfg, w.tensors, tied_lm_head=True)
        config, weights = load_checkpoint(path)
        assert weights.tied_lm_head
        np.testing.assert_array_equal(
            weights.linear_weight("lm_head"), weights.table("tok_emb").T
        )

    def test_writes_are_deterministic(self, tmp_path, tiny_cfg):
        w = make_weights(tiny_cfg, seed=7)
        p1, p2 = tmp_path / "a.pqck", tmp_path / "b.pqck"
        write_checkpoint(p1, tiny_cfg, w.tensors)
        write_checkpoint(p2, tiny_cfg, w.tensors)
        assert p1.read_bytes() == p2.read_bytes()


class TestDiagnostics:
    def test_bad_magic(self, sample, tmp_path):
        path, _, _ = sample
        raw = bytearray(path.read_bytes())
        raw[:4] = b"NOPE"
        bad = tmp_path / "magic.pqck"
        bad.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="magic"):
            read_checkpoint(bad)

    def test_version_mismatch(self, sample, tmp_path):
        path, _, _ = sample
        raw = bytearray(path.read_bytes())
        raw[4:8] = struct.pack("<I", 99)
        raw[-4:] = struct.pack("<I", __import__("zlib").crc32(bytes(raw[:-4])))
        bad = tmp_path / "ver.pqck"
        bad.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="version"):
            read_checkpoint(bad)

    def test_truncated_file_is_byte_count_error(self, sample, tmp_path):
        path, _, _ = sample
        raw = path.read_bytes()[: len(path.read_bytes()) // 2]
        # keep the checksum consistent so the truncation itself is diagnosed
        import zlib

        patched = raw[:-4] + struct.pack("<I", zlib.crc32(raw[:-4]))
        bad = tmp_path / "trunc.pqck"
        bad.write_bytes(patched)
        with pytest.raises(FormatError, match="truncated|byte"):
            read_checkpoint(bad)

    def test_corrupted_tensor_block_is_checksum_error(self, sample, tmp_path):
        path, _, _ = sample
        raw = bytearray(path.read_bytes())
        raw[len(raw) // 2] ^= 0xFF
        bad = tmp_path / "corrupt.pqck"
        bad.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="checksum"):
            read_checkpoint(bad)

    def test_trailing_garbage_is_byte_count_error(self, sample, tmp_path):
        import zlib

        path, _, _ = sample
        raw = path.read_bytes()[:-4] + b"\x00\x00\x00\x00"
        patched = raw + struct.pack("<I", zlib.crc32(raw))
        bad = tmp_path / "extra.pqck"
        bad.write_bytes(patched)
        with pytest.raises(FormatError, match="byte-count"):
            read_checkpoint(bad)


class TestWeightValidation:
    def test_missing_tensor_rejected(self, tiny_cfg):
        w = make_weights(tiny_cfg, seed=8)
        broken = dict(w.tensors)
        del broken["layer0.mlp_up.weight"]
        with pytest.raises(ShapeError, match="layer0.mlp_up.weight"):
            GPTWeights(config=tiny_cfg, tensors=broken)

    def test_wrong_shape_rejected(self, tiny_cfg):
        w = make_weights(tiny_cfg, seed=9)
        broken = dict(w.tensors)
        broken["tok_emb"] = broken["tok_emb"][:, :-1]
        with pytest.raises(ShapeError, match="tok_emb"):
            GPTWeights(config=tiny_cfg, tensors=broken)

    def test_head_divisibility_enforced(self):
        with pytest.raises(FormatError, match="divisible"):
            GPTConfig(vocab_size=11, block_size=8, n_layer=1, n_head=3, n_embd=16)
