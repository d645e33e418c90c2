import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from oran_isac.channel import Scene, Target, apply_channel
from oran_isac.fronthaul import (AAD_BYTES, EXPONENT_MIN, AssociatedData, CompressedIQ,
                                 CompressionConfig, FronthaulLoadReport, IntegrityError,
                                 NonceReuseError, Placement, SealedRDMap, SealingKey,
                                 compress_bfp, decompress_bfp, fronthaul_load, mantissa_range,
                                 nmse, open_rd_map, seal_rd_map)
from oran_isac.processing import RangeDopplerMap, estimate_channel, range_doppler_map, resolutions
from oran_isac.waveform import Numerology, ResourceGrid, build_signal_plan, generate_grid


def rgrid(data):
    data = np.asarray(data, complex)
    return ResourceGrid(data, Numerology(*data.shape))


def qpsk(num, seed=0):
    return generate_grid(build_signal_plan(num, "STOCHASTIC_DATA", seed=seed), num)


def oracle_bfp(values, bits):
    """Scalar search for the smallest fitting exponent of one block."""
    lo, hi = mantissa_range(bits)
    parts = [p for v in values for p in (v.real, v.imag)]
    for e in range(-128, 128):
        q = [round(p / 2.0 ** e) for p in parts]
        if all(lo <= x <= hi for x in q):
            if not any(q):
                return EXPONENT_MIN, [0] * len(q)
            return e, q
    raise AssertionError("no exponent fits")


finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


class TestBfp:
    def test_zero_grid(self):
        c = compress_bfp(rgrid(np.zeros((12, 4))))
        assert not c.mantissas.any()
        assert np.all(c.exponents == EXPONENT_MIN)
        assert not decompress_bfp(c).data.any()

    def test_sixteen_bit_bound_example(self):
        g = rgrid(np.array([[1.0, 0.0], [0.5, 0.0]]))
        back = decompress_bfp(compress_bfp(g, 16, 4)).data
        assert np.max(np.abs(back - g.data)) <= 2.0 ** -14

    def test_one_bit_much_worse_than_nine(self):
        g = qpsk(Numerology(48, 14))
        err = {b: nmse(g.data, decompress_bfp(compress_bfp(g, b)).data) for b in (1, 9)}
        assert err[1] > 100 * err[9]

    @pytest.mark.parametrize("bits", [0, 17, -1])
    def test_bits_precondition(self, bits):
        with pytest.raises(ValueError):
            compress_bfp(rgrid(np.ones((12, 2))), bits)
        with pytest.raises(ValueError):
            CompressionConfig(mantissa_bits=bits)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            compress_bfp(rgrid(np.array([[np.nan, 0], [0, 0]])))

    def test_block_count_and_padding(self):
        g = rgrid(np.ones((5, 5)))
        c = compress_bfp(g, 9, 12)
        assert c.n_blocks == math.ceil(25 / 12)
        np.testing.assert_array_equal(decompress_bfp(c).data, g.data)

    def test_malformed_layout_rejected(self):
        c = compress_bfp(rgrid(np.ones((12, 2))))
        with pytest.raises(ValueError):
            CompressedIQ(c.exponents[:1], c.mantissas, 12, 9, c.numerology)
        with pytest.raises(ValueError):
            CompressedIQ(c.exponents, c.mantissas * 0 + 400, 12, 9, c.numerology)

    @given(hnp.arrays(complex, (6, 4), elements=st.complex_numbers(max_magnitude=1e3,
                                                                   allow_nan=False)),
           st.integers(1, 16), st.sampled_from([1, 3, 12]))
    def test_matches_scalar_oracle(self, data, bits, block):
        c = compress_bfp(rgrid(data), bits, block)
        flat = data.ravel(order="F")
        for b in range(c.n_blocks):
            vals = list(flat[b * block:(b + 1) * block])
            vals += [0j] * (block - len(vals))
            e, q = oracle_bfp(vals, bits)
            assert c.exponents[b] == e
            assert c.mantissas[b].ravel().tolist() == q

    @given(hnp.arrays(complex, (8, 3), elements=st.complex_numbers(max_magnitude=1e4,
                                                                   allow_nan=False)),
           st.integers(2, 16))
    def test_error_bound_half_step(self, data, bits):
        c = compress_bfp(rgrid(data), bits, 12)
        err = decompress_bfp(c).data - data
        flat = err.ravel(order="F")
        for b, e in enumerate(c.exponents):
            blk = flat[b * 12:(b + 1) * 12]
            worst = max(np.max(np.abs(blk.real)), np.max(np.abs(blk.imag)))
            assert worst <= 2.0 ** (int(e) - 1) * (1 + 1e-12)

    @given(hnp.arrays(complex, (6, 4), elements=st.complex_numbers(max_magnitude=1e3,
                                                                   allow_nan=False)),
           st.integers(1, 16))
    def test_idempotent(self, data, bits):
        c = compress_bfp(rgrid(data), bits)
        assert compress_bfp(decompress_bfp(c), bits) == c

    def test_nmse_strictly_decreasing_in_bits(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            g = rgrid(rng.normal(size=(48, 14)) + 1j * rng.normal(size=(48, 14)))
            errs = [nmse(g.data, decompress_bfp(compress_bfp(g, b)).data) for b in (4, 6, 9, 12)]
            assert all(a > b for a, b in zip(errs, errs[1:]))

    def test_nmse_rejects_zero_reference(self):
        with pytest.raises(ValueError):
            nmse(np.zeros(3), np.ones(3))

    def test_peak_snr_non_increasing_as_bits_drop(self):
        num = Numerology(48, 14)
        res = resolutions(num)
        t = Target(12 * res.range_res, 2 * res.velocity_res)
        snr = {b: [] for b in (12, 9, 6, 4)}
        for s in range(50):
            tx = qpsk(num, s)
            rx = apply_channel(tx, Scene((t,), 0.05, 0.0, s, reference_range=t.range))
            for b in snr:
                est = estimate_channel(decompress_bfp(compress_bfp(rx, b)), tx)
                rd = range_doppler_map(est, 1, num)
                k, l = rd.nearest_bin(t.range, t.radial_velocity)
                snr[b].append(rd.power[k, l] / rd.noise_floor_estimate)
        means = [np.mean(snr[b]) for b in (12, 9, 6, 4)]
        assert all(a >= b for a, b in zip(means, means[1:]))


KEY_SEED = 11


def sealed_example(payload=b"range-doppler-map", slot=7):
    key = SealingKey.generate(KEY_SEED)
    aad = AssociatedData(1, slot, 3)
    return key, aad, seal_rd_map(payload, key, aad)


class TestSealing:
    def test_round_trip(self):
        key, aad, s = sealed_example()
        assert open_rd_map(s, key) == b"range-doppler-map"
        assert open_rd_map(s.to_wire(), key) == b"range-doppler-map"
        assert s.ciphertext != b"range-doppler-map"

    def test_map_round_trip_through_wire(self):
        rd = RangeDopplerMap(np.arange(12.0).reshape(3, 4), 1.0, 2.0, 2)
        key = SealingKey.generate(0)
        s = seal_rd_map(rd.to_bytes(), key, AssociatedData(1, 0, 0))
        back = RangeDopplerMap.from_bytes(open_rd_map(s.to_wire(), key))
        np.testing.assert_array_equal(back.power, rd.power)

    def test_wire_layout(self):
        _, aad, s = sealed_example()
        w = s.to_wire()
        assert w[:4] == AAD_BYTES.to_bytes(4, "little")
        assert w[4:4 + AAD_BYTES] == aad.to_bytes()
        assert w[-16:] == s.auth_tag
        assert len(w) == 4 + 16 + 4 + 12 + 4 + len(s.ciphertext) + 16
        assert SealedRDMap.from_wire(w) == s

    @given(st.data())
    def test_any_bit_flip_fails(self, data):
        key, _, s = sealed_example()
        w = bytearray(s.to_wire())
        i = data.draw(st.integers(0, len(w) * 8 - 1))
        w[i // 8] ^= 1 << (i % 8)
        with pytest.raises(IntegrityError):
            open_rd_map(bytes(w), key)

    def test_slot_counter_change_fails(self):
        key, aad, s = sealed_example()
        forged = SealedRDMap(s.ciphertext, s.auth_tag, AssociatedData(1, 8, 3), s.nonce)
        with pytest.raises(IntegrityError) as err:
            open_rd_map(forged, key)
        assert err.value.slot_counter == 8
        with pytest.raises(IntegrityError):
            open_rd_map(s, key, AssociatedData(1, 8, 3))

    def test_wrong_key(self):
        _, _, s = sealed_example()
        with pytest.raises(IntegrityError):
            open_rd_map(s, SealingKey.generate(KEY_SEED + 1))

    @pytest.mark.parametrize("cut", [1, 16, 17])
    def test_truncation(self, cut):
        key, _, s = sealed_example()
        with pytest.raises(IntegrityError):
            open_rd_map(s.to_wire()[:-cut], key)

    def test_nonce_reuse_is_fatal(self):
        key = SealingKey.generate(0)
        aad = AssociatedData(1, 0, 0)
        s = seal_rd_map(b"a", key, aad)
        with pytest.raises(NonceReuseError):
            seal_rd_map(b"b", key, AssociatedData(1, 1, 0), nonce=s.nonce)

    def test_nonces_unique(self):
        key = SealingKey.generate(0)
        nonces = {seal_rd_map(b"x", key, AssociatedData(1, i, 0)).nonce for i in range(200)}
        assert len(nonces) == 200

    def test_automatic_nonce_skips_claimed(self):
        key = SealingKey.generate(0)
        seal_rd_map(b"x", key, AssociatedData(1, 0, 0), nonce=(0).to_bytes(12, "big"))
        s = seal_rd_map(b"y", key, AssociatedData(1, 1, 0))
        assert s.nonce == (1).to_bytes(12, "big")

    def test_aad_round_trip(self):
        a = AssociatedData(7, 2 ** 40, 63)
        assert len(a.to_bytes()) == AAD_BYTES
        assert AssociatedData.from_bytes(a.to_bytes()) == a


class TestLoad:
    NUM = Numerology(3276, 14)

    def test_du_example(self):
        r = fronthaul_load("DU_PROCESSING", self.NUM, CompressionConfig(9, 12))
        assert r.bits_per_slot == 3822 * (8 + 216) == 856_128

    def test_ru_example(self):
        r = fronthaul_load("RU_PROCESSING", self.NUM)
        assert r.bits_per_slot == 524_288 + 352
        assert r.breakdown == {"rd_map_payload": 524_288, "auth_tag": 128, "nonce": 96,
                               "aad": 128}

    def test_framing_extras(self):
        r = fronthaul_load("RU_PROCESSING", self.NUM, include_framing=True)
        assert r.bits_per_slot == 524_640 + 8 * 48 + 96

    def test_tx_capture_doubles(self):
        a = fronthaul_load("DU_PROCESSING", self.NUM)
        b = fronthaul_load("DU_PROCESSING", self.NUM, charge_tx_capture=True)
        assert b.bits_per_slot == 2 * a.bits_per_slot

    @given(st.integers(1, 16), st.integers(1, 24), st.integers(2, 512), st.integers(2, 140))
    def test_du_formula_and_breakdown(self, bits, block, n, m):
        num = Numerology(n, m)
        r = fronthaul_load(Placement.DU_PROCESSING, num, CompressionConfig(bits, block))
        assert r.bits_per_slot == sum(r.breakdown.values())
        g = rgrid(np.zeros((n, m)))
        assert r.bits_per_slot == compress_bfp(g, bits, block).n_bits

    @pytest.mark.parametrize("bits", [6, 9, 12, 16])
    def test_ru_below_du(self, bits):
        ru = fronthaul_load("RU_PROCESSING", self.NUM).bits_per_slot
        du = fronthaul_load("DU_PROCESSING", self.NUM, CompressionConfig(bits)).bits_per_slot
        assert ru < du

    def test_ordering_inverts_at_four_bits(self):
        # at 4-bit mantissas the compressed IQ undercuts one sealed f32 map
        ru = fronthaul_load("RU_PROCESSING", self.NUM).bits_per_slot
        du = fronthaul_load("DU_PROCESSING", self.NUM, CompressionConfig(4)).bits_per_slot
        assert du == 397_488 < ru

    def test_breakdown_must_sum(self):
        with pytest.raises(ValueError):
            FronthaulLoadReport(Placement.RU_PROCESSING, 5, {"a": 4})
