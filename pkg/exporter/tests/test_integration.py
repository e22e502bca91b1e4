"""Cross-implementation checks against the inference toolkit.

These consume the toolkit through its published file formats and compare
its float forward pass with this package's reference logits.
"""

import numpy as np
import pytest

from gptexport.fixtures import emit_fixtures
from gptexport.formats import read_fixtures, read_pqck_header
from gptexport.train import train_char_model

potq = pytest.importorskip("potq", reason="inference toolkit not installed")


@pytest.fixture
def trained_ckpt(char_data, tmp_path):
    data_dir, vocab = char_data
    ckpt = tmp_path / "char.pqck"
    train_char_model(
        data_dir, ckpt, iters=40, lr=3e-3, seed=0, n_layer=2, n_head=2,
        n_embd=16, block_size=16, batch_size=8, dropout=0.0, eval_every=0,
        log=lambda *_: None,
    )
    return ckpt, vocab


class TestCrossImplementation:
    def test_toolkit_loads_exported_checkpoint(self, trained_ckpt):
        ckpt, vocab = trained_ckpt
        config, weights = potq.load_checkpoint(ckpt)
        assert config.vocab_size == vocab
        assert weights.tied_lm_head

    def test_forward_matches_reference_logits(self, trained_ckpt, tmp_path):
        ckpt, vocab = trained_ckpt
        fx_path = emit_fixtures(ckpt, tmp_path / "fx.bin", n=4, length=16, seed=1)
        _, weights = potq.load_checkpoint(ckpt)
        for ids, ref_logits in read_fixtures(fx_path, vocab):
            got = potq.forward(weights, ids.astype(np.int64))
            assert np.abs(got - ref_logits).max() <= 1e-3

    def test_toolkit_quantizes_exported_checkpoint(self, trained_ckpt):
        ckpt, _ = trained_ckpt
        _, weights = potq.load_checkpoint(ckpt)
        model = potq.quantize_model(weights, potq.parse_quant_spec("pot:e0..4"))
        toks = np.arange(8) % weights.config.vocab_size
        logits = potq.forward(model, toks)
        assert logits.shape == (8, weights.config.vocab_size)
