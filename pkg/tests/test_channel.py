import cmath
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oran_isac.channel import (SPEED_OF_LIGHT, BeamConfig, Scene, Target, apply_channel,
                               beam_gain, doppler_shift, max_unambiguous_range,
                               reflection_amplitude, round_trip_delay)
from oran_isac.waveform import Numerology, ResourceGrid, build_signal_plan, generate_grid

NUM = Numerology(32, 8)
TX = generate_grid(build_signal_plan(NUM, "STOCHASTIC_DATA", seed=1), NUM)


def unit_scene(*targets, **kw):
    # reference_amplitude 1 at the first target's range makes its amplitude 1
    ref = targets[0].range if targets else 10.0
    return Scene(targets, leakage_gain=kw.pop("leakage_gain", 0.0), reference_range=ref, **kw)


class TestGeometry:
    def test_delay_examples(self):
        assert round_trip_delay(0) == 0
        assert round_trip_delay(149.896229) == pytest.approx(1e-6, rel=1e-9)
        assert round_trip_delay(1500) == pytest.approx(10.007e-6, rel=1e-4)

    def test_negative_range(self):
        with pytest.raises(ValueError):
            round_trip_delay(-1)

    def test_doppler_examples(self):
        assert doppler_shift(0, 3.5e9) == 0
        assert doppler_shift(30, 3.5e9) == pytest.approx(700.48, abs=0.01)
        assert doppler_shift(-30, 3.5e9) == pytest.approx(-700.48, abs=0.01)

    def test_unambiguous_range(self):
        assert max_unambiguous_range(Numerology(64, 4)) == pytest.approx(4996.54, abs=0.01)

    def test_amplitude_law(self):
        t = Target(10.0)
        assert reflection_amplitude(t, 3.5e9, 10.0, 0.3) == pytest.approx(0.3)
        assert reflection_amplitude(Target(20.0), 3.5e9, 10.0, 0.3) == pytest.approx(0.3 / 4)
        assert (reflection_amplitude(Target(10.0, rcs=4), 3.5e9, 10.0, 1.0)
                / reflection_amplitude(Target(10.0, rcs=1), 3.5e9, 10.0, 1.0)) == pytest.approx(2)

    @given(st.floats(0.1, 4000), st.floats(0.1, 4000))
    def test_amplitude_monotone_in_range(self, r1, r2):
        a1 = reflection_amplitude(Target(r1), 3.5e9, 10.0, 1.0)
        a2 = reflection_amplitude(Target(r2), 3.5e9, 10.0, 1.0)
        assert (r1 - r2) * (a1 - a2) <= 0

    @pytest.mark.parametrize("kw", [dict(range=0), dict(range=-3), dict(range=5, rcs=0)])
    def test_target_invariants(self, kw):
        with pytest.raises(ValueError):
            Target(**kw)

    def test_azimuth_wraps(self):
        assert Target(5, azimuth=370).azimuth == pytest.approx(10)


class TestBeams:
    def test_pattern_examples(self):
        b = BeamConfig(10, 0.0, 120.0, 4.0)
        assert b.boresight == pytest.approx(10.5 * 120 / 64)
        assert beam_gain(b, b.boresight) == 1.0
        assert beam_gain(b, b.boresight + 4.0) == 0.0
        assert beam_gain(b, b.boresight - 2.0) == pytest.approx(0.5)

    @given(st.integers(0, 63), st.floats(-720, 720))
    def test_gain_bounded(self, idx, az):
        g = beam_gain(BeamConfig(idx), az)
        assert 0.0 <= g <= 1.0

    @pytest.mark.parametrize("idx", [-1, 64])
    def test_index_bounds(self, idx):
        with pytest.raises(ValueError):
            BeamConfig(idx)

    def test_beamwidth_positive(self):
        with pytest.raises(ValueError):
            BeamConfig(0, beamwidth=0)


class TestApplyChannel:
    def test_empty_scene_is_zero(self):
        y = apply_channel(TX, Scene(leakage_gain=0.0))
        assert not y.data.any()

    def test_near_zero_range_is_identity(self):
        y = apply_channel(TX, unit_scene(Target(1e-9)))
        np.testing.assert_allclose(y.data, TX.data, atol=1e-9)

    def test_on_grid_phase_ramp(self):
        n = NUM.n_subcarriers
        rng_m = 8 * SPEED_OF_LIGHT / (2 * NUM.subcarrier_spacing * n)
        y = apply_channel(TX, Scene((Target(rng_m),), leakage_gain=0.0,
                                    reference_range=10.0, reference_amplitude=0.7))
        a = 0.7 * (10.0 / rng_m) ** 2
        for i in range(n):
            for m in range(NUM.n_symbols):
                want = a * cmath.exp(-2j * math.pi * i * 8 / n)
                assert abs(y.data[i, m] / TX.data[i, m] - want) < 1e-9

    def test_doppler_sign(self):
        y = apply_channel(TX, unit_scene(Target(1e-9, radial_velocity=20.0)))
        h = y.data / TX.data
        step = np.angle(h[0, 1] / h[0, 0])
        fd = doppler_shift(20.0, NUM.carrier_freq)
        assert step == pytest.approx(2 * math.pi * NUM.symbol_duration_total * fd, abs=1e-9)
        assert step > 0

    def test_leakage_term(self):
        y = apply_channel(TX, Scene(leakage_gain=0.25))
        np.testing.assert_allclose(y.data, 0.25 * TX.data)

    def test_beyond_unambiguous_range(self):
        bound = max_unambiguous_range(NUM)
        with pytest.raises(ValueError, match=f"{bound:.3f}"):
            apply_channel(TX, unit_scene(Target(bound * 1.01)))

    @given(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
           st.floats(1, 4000), st.floats(-300, 300))
    def test_linearity(self, alpha, r, v):
        sc = Scene((Target(r, v),), leakage_gain=0.01)
        lhs = apply_channel(ResourceGrid(alpha * TX.data, NUM), sc).data
        rhs = alpha * apply_channel(TX, sc).data
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)

    @given(st.floats(1, 4000), st.floats(1, 4000), st.floats(-300, 300), st.floats(0.1, 10))
    def test_superposition(self, r1, r2, v, rcs):
        t1, t2 = Target(r1, v), Target(r2, -v, rcs)
        both = apply_channel(TX, Scene((t1, t2), leakage_gain=0.0)).data
        parts = (apply_channel(TX, Scene((t1,), leakage_gain=0.0)).data
                 + apply_channel(TX, Scene((t2,), leakage_gain=0.0)).data)
        np.testing.assert_allclose(both, parts, atol=1e-12)

    def test_noise_statistics(self):
        num = Numerology(512, 256)
        zero = ResourceGrid(np.zeros(num.shape, complex), num)
        y = apply_channel(zero, Scene(noise_power=0.37, leakage_gain=0.0, rng_seed=5)).data
        assert y.size >= 1e5
        assert np.var(y) == pytest.approx(0.37, rel=0.02)
        assert abs(np.mean(y.real * y.imag)) < 0.01 * 0.37

    def test_noise_deterministic_per_seed(self):
        sc = Scene(noise_power=1.0, rng_seed=9)
        assert apply_channel(TX, sc).data.tobytes() == apply_channel(TX, sc).data.tobytes()

    def test_beam_suppression_bit_exact(self):
        beam = BeamConfig(0, 0.0, 120.0, 4.0)
        seen, hidden = Target(30.0, 5.0, azimuth=beam.boresight), Target(60.0, azimuth=90.0)
        with_hidden = apply_channel(TX, Scene((seen, hidden), noise_power=0.1, rng_seed=3), beam)
        without = apply_channel(TX, Scene((seen,), noise_power=0.1, rng_seed=3), beam)
        assert with_hidden.data.tobytes() == without.data.tobytes()

    def test_multiple_beams_take_best_gain(self):
        beams = [BeamConfig(0), BeamConfig(10)]
        t = Target(30.0, azimuth=beams[1].boresight)
        y = apply_channel(TX, unit_scene(t), beams)
        np.testing.assert_allclose(np.abs(y.data), 1.0, atol=1e-12)

    @pytest.mark.parametrize("kw", [dict(noise_power=-1), dict(leakage_gain=1.0),
                                    dict(leakage_gain=-0.1)])
    def test_scene_invariants(self, kw):
        with pytest.raises(ValueError):
            Scene(**kw)
