import math

import numpy as np
import pytest

from potq.errors import AuditError, SchemeError, ShapeError
from potq.kernels import (
    OpCounter,
    audit_shift_overflow,
    available_backends,
    gelu,
    get_backend,
    layernorm,
    linear_fakequant,
    matmul_f32,
    set_backend,
    shift_linear,
    softmax_rows,
)
from potq.kernels import numpy_backend
from potq.quant import (
    Affine,
    PoTConfig,
    PoTWeight,
    QTensor,
    QuantParams,
    dequantize,
    pot_dequantize,
    pot_quantize,
)

HAVE_EXT = "ext" in available_backends()


@pytest.fixture(params=["auto"] + available_backends())
def backend(request):
    previous = get_backend()
    set_backend(request.param)
    yield request.param
    set_backend(previous)


def random_pot_weight(rng, k, n, cfg=PoTConfig(0, 4), scale=1.0, zero_frac=0.1):
    exponent = rng.integers(cfg.e_min, cfg.e_max + 1, (k, n)).astype(np.int16)
    sign = rng.choice(np.array([-1, 1], np.int8), (k, n))
    is_zero = rng.random((k, n)) < zero_frac
    return PoTWeight(scale=scale, exponent=exponent, sign=sign, is_zero=is_zero, config=cfg)


def random_affine_qtensor(rng, m, k, bits=16, scale=0.03):
    lo, hi = -(1 << (bits - 1)), (1 << (bits - 1)) - 1
    vals = rng.integers(lo, hi + 1, (m, k)).astype(np.int64)
    zp = int(rng.integers(lo // 2, hi // 2))
    p = QuantParams(scheme=Affine(bits), scale=scale, zero_point=zp)
    return QTensor(values=vals, params=p)


class TestMatmul:
    def test_identity(self, backend):
        m = np.array([[1.0, 2.0], [3.0, 4.0]], np.float32)
        assert np.array_equal(matmul_f32(np.eye(2, dtype=np.float32), m), m)

    def test_hand_dot(self, backend):
        out = matmul_f32(np.array([[1.0, 2.0]]), np.array([[3.0], [4.0]]))
        assert out.tolist() == [[11.0]]

    def test_zeros(self, backend):
        out = matmul_f32(np.zeros((3, 4), np.float32), np.ones((4, 5), np.float32))
        assert np.all(out == 0.0)

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
            matmul_f32(np.zeros((2, 3)), np.zeros((2, 2)))

    def test_multiply_count(self):
        c = OpCounter()
        matmul_f32(np.zeros((3, 4), np.float32), np.zeros((4, 5), np.float32), counter=c)
        assert c.multiplies == 3 * 4 * 5
        assert c.shifts == 0

    @pytest.mark.skipif(not HAVE_EXT, reason="compiled core not built")
    def test_backends_agree(self):
        rng = np.random.default_rng(0)
        a = rng.normal(0, 1, (17, 33)).astype(np.float32)
        b = rng.normal(0, 1, (33, 9)).astype(np.float32)
        set_backend("numpy")
        r1 = matmul_f32(a, b)
        set_backend("ext")
        r2 = matmul_f32(a, b)
        set_backend("auto")
        np.testing.assert_allclose(r1, r2, rtol=1e-6, atol=1e-6)


class TestFakequantLinear:
    def test_all_zero_codes_gives_bias(self):
        rng = np.random.default_rng(1)
        w = random_pot_weight(rng, 4, 3, zero_frac=1.1)  # everything zero
        x = rng.normal(0, 1, (2, 4)).astype(np.float32)
        bias = np.array([1.0, -2.0, 3.0], np.float32)
        out = linear_fakequant(x, w, bias)
        assert np.array_equal(out, np.broadcast_to(bias, (2, 3)))

    def test_identity_powers(self):
        cfg = PoTConfig(0, 4)
        eye = np.eye(4, dtype=np.float32)
        w = pot_quantize(eye, 1.0, cfg)
        x = np.random.default_rng(2).normal(0, 1, (3, 4)).astype(np.float32)
        bias = np.zeros(4, np.float32)
        out = linear_fakequant(x, w, bias)
        np.testing.assert_array_equal(out, matmul_f32(x, pot_dequantize(w)))

    def test_matches_explicit_dequant_bitwise(self, backend):
        rng = np.random.default_rng(3)
        w = random_pot_weight(rng, 4, 4)
        x = rng.normal(0, 1, (4, 4)).astype(np.float32)
        out = linear_fakequant(x, w)
        ref = matmul_f32(x, pot_dequantize(w))
        assert np.array_equal(out, ref)

    def test_qtensor_payload(self):
        rng = np.random.default_rng(4)
        q = random_affine_qtensor(rng, 4, 4, bits=8, scale=0.1)
        # weight positions use symmetric codes in practice; any QTensor works
        x = rng.normal(0, 1, (2, 4)).astype(np.float32)
        out = linear_fakequant(x, q)
        assert np.array_equal(out, matmul_f32(x, dequantize(q)))

    def test_rejects_plain_arrays(self):
        with pytest.raises(SchemeError):
            linear_fakequant(np.zeros((2, 2)), np.zeros((2, 2)))


class TestShiftLinear:
    def test_hand_worked_example(self):
        # activations dequantize to [1.0, 1.5]; weights to [2, -1]
        xq = QTensor(
            values=np.array([[2, 3]], np.int64),
            params=QuantParams(scheme=Affine(16), scale=0.5, zero_point=0),
        )
        cfg = PoTConfig(0, 4)
        w = PoTWeight(
            scale=1.0,
            exponent=np.array([[1], [0]], np.int16),
            sign=np.array([[1], [-1]], np.int8),
            is_zero=np.zeros((2, 1), bool),
            config=cfg,
        )
        out = shift_linear(xq, w)
        assert out.shape == (1, 1)
        assert out[0, 0] == pytest.approx(0.5, abs=1e-12)

    def test_all_zero_codes_returns_bias(self):
        rng = np.random.default_rng(5)
        xq = random_affine_qtensor(rng, 2, 3)
        w = random_pot_weight(rng, 3, 2, zero_frac=1.1)
        bias = np.array([0.5, -0.5], np.float32)
        c = OpCounter()
        out = shift_linear(xq, w, bias=bias, counter=c)
        assert np.array_equal(out, np.broadcast_to(bias, (2, 2)))
        assert c.shifts == 0

    def test_negative_e_min_keeps_shifts_non_negative(self):
        xq = QTensor(
            values=np.array([[3]], np.int64),
            params=QuantParams(scheme=Affine(16), scale=1.0, zero_point=0),
        )
        cfg = PoTConfig(-2, 2)
        w = PoTWeight(
            scale=1.0,
            exponent=np.array([[-2]], np.int16),
            sign=np.array([[1]], np.int8),
            is_zero=np.zeros((1, 1), bool),
            config=cfg,
        )
        out = shift_linear(xq, w)
        # 3 * 2^-2 = 0.75: the 2^e_min factor lands in the output scale
        assert out[0, 0] == pytest.approx(0.75, abs=1e-12)

    def test_bridge_against_float_path(self, backend):
        rng = np.random.default_rng(6)
        for _ in range(100):
            m, k, n = rng.integers(1, 9, 3)
            cfg = PoTConfig(int(rng.integers(-4, 1)), int(rng.integers(1, 7)))
            xq = random_affine_qtensor(rng, m, k, bits=int(rng.integers(2, 17)),
                                       scale=float(rng.uniform(0.001, 0.1)))
            w = random_pot_weight(rng, k, n, cfg=cfg,
                                  scale=float(rng.uniform(0.01, 2.0)))
            bias = rng.normal(0, 1, n).astype(np.float32)
            out = shift_linear(xq, w, bias=bias)
            ref = matmul_f32(dequantize(xq), pot_dequantize(w)) + bias
            amax = float(np.abs(ref).max()) + 1e-30
            assert np.abs(out - ref).max() <= 1e-5 * max(amax, 1.0)

    def test_integer_accumulation_exact_vs_bigint(self, backend):
        rng = np.random.default_rng(7)
        impl = numpy_backend if backend == "numpy" else None
        for _ in range(10):
            m, k, n = rng.integers(1, 7, 3)
            xq = random_affine_qtensor(rng, m, k, bits=16)
            cfg = PoTConfig(0, 12)
            w = random_pot_weight(rng, k, n, cfg=cfg)
            shift = (w.exponent - cfg.e_min).astype(np.int16)
            acc = np.empty((m, n), np.int64)
            from potq.kernels import _shift_impl

            _shift_impl().shift_accumulate(
                np.ascontiguousarray(xq.values), xq.params.zero_point,
                np.ascontiguousarray(w.sign), np.ascontiguousarray(shift),
                np.ascontiguousarray(w.is_zero, np.uint8), acc,
            )
            # unbounded-precision oracle in plain python ints
            for i in range(m):
                for j in range(n):
                    total = 0
                    for p in range(k):
                        if w.is_zero[p, j]:
                            continue
                        total += int(w.sign[p, j]) * (
                            (int(xq.values[i, p]) - xq.params.zero_point)
                            << int(shift[p, j])
                        )
                    assert total == int(acc[i, j])

    @pytest.mark.skipif(not HAVE_EXT, reason="compiled core not built")
    def test_backends_bitwise_identical(self):
        rng = np.random.default_rng(8)
        xq = random_affine_qtensor(rng, 5, 7)
        w = random_pot_weight(rng, 7, 4, cfg=PoTConfig(-1, 6))
        set_backend("numpy")
        r1 = shift_linear(xq, w)
        set_backend("ext")
        r2 = shift_linear(xq, w)
        set_backend("auto")
        assert np.array_equal(r1, r2)

    def test_op_counts(self):
        rng = np.random.default_rng(9)
        m, k, n = 4, 6, 5
        xq = random_affine_qtensor(rng, m, k)
        w = random_pot_weight(rng, k, n, zero_frac=0.3)
        c = OpCounter()
        shift_linear(xq, w, counter=c)
        assert c.multiplies == 2 * m * n
        assert c.shifts == m * w.nonzero_count
        assert c.shifts <= m * k * n

    def test_overflow_audit_rejects(self):
        audit_shift_overflow(16, 40, 16)  # 16 + 40 + 4 = 60: fine
        with pytest.raises(AuditError, match="overflow"):
            audit_shift_overflow(16, 44, 16)  # 16 + 44 + 4 = 64 > 62

    def test_out_of_range_exponent_rejected(self):
        xq = QTensor(
            values=np.array([[1]], np.int64),
            params=QuantParams(scheme=Affine(16), scale=1.0, zero_point=0),
        )
        w = PoTWeight(
            scale=1.0,
            exponent=np.array([[9]], np.int16),  # above e_max
            sign=np.array([[1]], np.int8),
            is_zero=np.zeros((1, 1), bool),
            config=PoTConfig(0, 4),
        )
        with pytest.raises(AuditError, match="clip range"):
            shift_linear(xq, w)

    def test_wide_activations_rejected(self):
        rng = np.random.default_rng(10)
        vals = rng.integers(-100, 100, (2, 3)).astype(np.int64)
        xq = QTensor(values=vals, params=QuantParams(scheme=Affine(32), scale=0.1, zero_point=0))
        w = random_pot_weight(rng, 3, 2)
        with pytest.raises(AuditError, match="16 bits"):
            shift_linear(xq, w)

    def test_symmetric_activations_rejected(self):
        from potq.quant import Symmetric, quantize_symmetric

        p = QuantParams(scheme=Symmetric(8), scale=0.1)
        xq = quantize_symmetric(np.zeros((2, 3), np.float32), p)
        w = random_pot_weight(np.random.default_rng(11), 3, 2)
        with pytest.raises(SchemeError, match="affine"):
            shift_linear(xq, w)

    def test_shape_mismatch(self):
        rng = np.random.default_rng(12)
        xq = random_affine_qtensor(rng, 2, 3)
        w = random_pot_weight(rng, 4, 2)
        with pytest.raises(ShapeError):
            shift_linear(xq, w)


class TestElementwiseKernels:
    def test_layernorm_constant_row(self):
        out = layernorm(np.full((2, 8), 3.0, np.float32), np.ones(8), np.zeros(8))
        np.testing.assert_allclose(out, 0.0, atol=1e-6)

    def test_layernorm_two_point(self):
        out = layernorm(np.array([[1.0, -1.0]], np.float32), np.ones(2), np.zeros(2),
                        eps=1e-12)
        np.testing.assert_allclose(out, [[1.0, -1.0]], atol=1e-5)

    def test_layernorm_zero_gamma_broadcasts_beta(self):
        rng = np.random.default_rng(0)
        x = rng.normal(0, 2, (3, 8)).astype(np.float32)
        beta = rng.normal(0, 1, 8).astype(np.float32)
        out = layernorm(x, np.zeros(8), beta)
        np.testing.assert_allclose(out, np.broadcast_to(beta, (3, 8)), atol=1e-6)

    def test_layernorm_unit_variance_pre_affine(self):
        rng = np.random.default_rng(1)
        x = rng.normal(3, 5, (10, 64)).astype(np.float32)
        out = layernorm(x, np.ones(64), np.zeros(64), eps=1e-10)
        np.testing.assert_allclose(out.var(axis=-1), 1.0, atol=1e-5)
        np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-5)

    def test_softmax_uniform(self):
        np.testing.assert_allclose(softmax_rows([[0.0, 0.0]]), [[0.5, 0.5]], atol=1e-7)

    def test_softmax_large_inputs_stable(self):
        out = softmax_rows([[1000.0, 1000.0]])
        np.testing.assert_allclose(out, [[0.5, 0.5]], atol=1e-7)

    def test_softmax_hand_values(self):
        x = np.log(np.array([[1.0, 2.0, 3.0]]))
        np.testing.assert_allclose(
            softmax_rows(x), [[1 / 6, 2 / 6, 3 / 6]], atol=1e-6
        )

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(2)
        x = rng.normal(0, 50, (100, 33)).astype(np.float32)
        out = softmax_rows(x)
        assert np.all(out >= 0)
        np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-6)

    def test_gelu_fixed_points(self):
        assert gelu([0.0])[0] == 0.0
        x = np.array([8.0, 12.0], np.float32)
        np.testing.assert_allclose(gelu(x), x, rtol=1e-3)
        np.testing.assert_allclose(gelu(-x), 0.0, atol=1e-3)

    def test_gelu_monotone_on_grid(self):
        # gelu has its minimum near -0.75 and increases to the right of it
        x = np.linspace(-0.7, 6.0, 501).astype(np.float32)
        y = gelu(x)
        assert np.all(np.diff(y) >= 0)
        # left tail approaches zero from below without crossing it
        left = gelu(np.linspace(-8.0, -2.0, 101).astype(np.float32))
        assert np.all(left <= 0.0)
        assert np.all(left >= -0.2)


class TestOpCounter:
    def test_merge_by_summation(self):
        a = OpCounter(1, 2, 3)
        a.add(OpCounter(10, 20, 30))
        assert (a.multiplies, a.shifts, a.adds) == (11, 22, 33)

    def test_conservation_vs_float(self):
        rng = np.random.default_rng(13)
        m, k, n = 6, 32, 5
        xq = random_affine_qtensor(rng, m, k)
        w = random_pot_weight(rng, k, n)
        cs, cf = OpCounter(), OpCounter()
        shift_linear(xq, w, counter=cs)
        matmul_f32(dequantize(xq), pot_dequantize(w), counter=cf)
        assert cs.multiplies <= 2 * m * n
        assert cf.multiplies == m * k * n
        assert cs.shifts <= m * k * n
