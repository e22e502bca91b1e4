import pytest

from potq.errors import PotqError
from potq.pipeline import describe_scheme
from potq.qspec import parse_quant_spec, parse_scheme
from potq.quant import Affine, PoT, Symmetric


class TestParseScheme:
    def test_float(self):
        assert parse_scheme("float") is None

    def test_symmetric(self):
        assert parse_scheme("sym:8") == Symmetric(8)

    def test_affine(self):
        assert parse_scheme("affine:16") == Affine(16)

    def test_pot_basic(self):
        s = parse_scheme("pot:e0..7")
        assert isinstance(s, PoT)
        assert (s.config.e_min, s.config.e_max) == (0, 7)

    def test_pot_options_and_negatives(self):
        s = parse_scheme("pot:e-3..5,eps=1e-10,ztr=0.4")
        assert s.config.e_min == -3
        assert s.config.epsilon == 1e-10
        assert s.config.zero_threshold_ratio == 0.4

    @pytest.mark.parametrize("bad", ["pot:nonsense", "sym:x", "int8", "pot:e5..1",
                                     "pot:e0..4,foo=1", "sym:40"])
    def test_rejections(self, bad):
        with pytest.raises(PotqError):
            parse_scheme(bad)

    @pytest.mark.parametrize(
        "text", ["float", "sym:8", "affine:16", "pot:e0..7",
                 "pot:e-2..4,eps=1e-10", "pot:e0..4,ztr=0.4"]
    )
    def test_round_trip_through_description(self, text):
        scheme = parse_scheme(text)
        assert parse_scheme(describe_scheme(scheme)) == scheme


class TestParseQuantSpec:
    def test_unscoped_becomes_wildcard(self):
        spec = parse_quant_spec("sym:8")
        assert spec.scheme_for("layer3.mlp_up") == Symmetric(8)

    def test_first_match_wins(self):
        spec = parse_quant_spec("lm_head=float;layer0.*=sym:8;*=pot:e0..4")
        assert spec.scheme_for("lm_head") is None
        assert spec.scheme_for("layer0.attn_qkv") == Symmetric(8)
        assert isinstance(spec.scheme_for("layer1.attn_qkv"), PoT)

    def test_scoped_pot_with_options(self):
        spec = parse_quant_spec("*=pot:e0..7,eps=1e-9")
        assert spec.scheme_for("tok_emb").config.epsilon == 1e-9

    def test_activation_scheme(self):
        spec = parse_quant_spec("sym:8", activations="affine:16")
        assert spec.activations == Affine(16)

    def test_non_affine_activations_rejected(self):
        with pytest.raises(PotqError, match="affine"):
            parse_quant_spec("sym:8", activations="sym:8")

    def test_float_activations_means_none(self):
        spec = parse_quant_spec("sym:8", activations="float")
        assert spec.activations is None
