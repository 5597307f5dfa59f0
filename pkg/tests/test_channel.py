import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles as O
from dmtsim.channel import (
    FiberParams,
    FilterParams,
    NoiseParams,
    add_ase,
    apply_dispersion,
    attenuate,
    bessel_response,
    bandpass_response,
    load_ase,
    measure_osnr,
    mzm_modulate,
    optical_bandpass,
    pin_detect,
    resample,
    set_power,
    ssfm_propagate,
)
from dmtsim.signalcore import SignalBlock

FS = 168e9


def field(rng, n=4096, fs=FS):
    return SignalBlock(rng.standard_normal(n) + 1j * rng.standard_normal(n), fs)


def tone(f, n=4096, fs=FS, amp=1.0):
    return amp * np.exp(2j * np.pi * f * np.arange(n) / fs)


def rms(x):
    return float(np.sqrt(np.mean(np.abs(x) ** 2)))


class TestMzm:
    def test_zero_drive_quadrature(self):
        out = mzm_modulate(SignalBlock(np.zeros(16), 1.0), bias_phase=math.pi / 4)
        np.testing.assert_allclose(out.samples, math.cos(math.pi / 4))

    def test_null_bias(self):
        out = mzm_modulate(SignalBlock(np.zeros(16), 1.0), bias_phase=math.pi / 2)
        np.testing.assert_allclose(out.samples, 0, atol=1e-15)

    def test_small_drive_is_linear(self):
        # Taylor oracle: cos(b + x) = cos b - x sin b - x^2/2 cos b + ...  The
        # odd part carries the drive and must be linear within 1 %; the even
        # part is the quadratic term, whose power must stay below 1 % of it.
        d = np.linspace(-1, 1, 201)
        bias = math.pi / 4
        x = math.pi / 2 * 0.05 * d
        out = mzm_modulate(SignalBlock(d, 1.0), mod_index=0.05, bias_phase=bias).samples.real
        odd = (out - out[::-1]) / 2
        even = (out + out[::-1]) / 2 - math.cos(bias)
        lin = -math.sin(bias) * x
        mask = d != 0
        assert np.max(np.abs(odd[mask] - lin[mask]) / np.abs(lin[mask])) < 0.01
        assert np.mean(even**2) < 0.01 * np.mean(lin**2)
        np.testing.assert_allclose(even, -math.cos(bias) * x**2 / 2, atol=5e-6)  # x^4 term

    def test_vpi_sets_index(self):
        d = SignalBlock(np.array([-2.0, 0.0, 2.0]), 1.0)
        a = mzm_modulate(d, vpi=4.0)
        b = mzm_modulate(d, mod_index=0.5)
        np.testing.assert_allclose(a.samples, b.samples)

    def test_default_bias_is_linear_field_point(self):
        from dmtsim.config import MzmParams

        assert MzmParams().bias_phase == pytest.approx(math.pi / 4)


class TestFilter:
    def test_three_db_edges(self):
        filt = FilterParams(39.0, 3.0)
        h = bandpass_response(np.array([-19.5e9, 19.5e9, 0.0]), filt)
        np.testing.assert_allclose(np.abs(h[:2]) ** 2, 0.5, rtol=1e-12)
        assert h[2] == pytest.approx(1.0)

    def test_offset_puts_carrier_on_edge(self):
        filt = FilterParams(39.0, 3.0, center_offset_ghz=-20.0)
        h0 = abs(bandpass_response(np.array([0.0]), filt)[0]) ** 2
        assert 10 * np.log10(h0) < -3.0
        lower = abs(bandpass_response(np.array([-10e9]), filt)[0])
        upper = abs(bandpass_response(np.array([10e9]), filt)[0])
        assert lower > 10 * upper

    def test_high_order_is_rectangular(self):
        f = np.array([-19e9, 0.0, 19e9, 20.5e9])
        h = np.abs(bandpass_response(f, FilterParams(39.0, 200.0)))
        np.testing.assert_allclose(h[:3], 1.0, atol=1e-3)
        assert h[3] < 1e-6

    def test_tone_gain(self):
        f = 117 * FS / 1024  # on a bin of the grid
        x = SignalBlock(tone(f, 1024), FS)
        y = optical_bandpass(x, FilterParams(2 * f / 1e9, 3.0))
        assert rms(y.samples) ** 2 == pytest.approx(0.5, rel=1e-9)


class TestDispersion:
    def test_zero_length(self, rng):
        x = field(rng)
        y = apply_dispersion(x, FiberParams(L=0))
        assert np.array_equal(y.samples, x.samples)

    @given(st.floats(0, 200), st.floats(0, 30))
    def test_all_pass(self, L, D):
        x = field(np.random.default_rng(1), 1024)
        y = apply_dispersion(x, FiberParams(D=D, L=L))
        assert y.power == pytest.approx(x.power, rel=1e-12)

    def test_fading_tone(self):
        # carrier plus two weak sidebands: detected beat follows |cos(pi D L lam^2 f^2 / c)|
        n = 8192
        fs = FS
        for k_bin in (100, 300, 331, 500):
            f = k_bin * fs / n
            t = np.arange(n) / fs
            m = 1e-3
            E = SignalBlock(1 + m * np.cos(2 * np.pi * f * t), fs)
            y = apply_dispersion(E, FiberParams(L=80))
            i = np.abs(y.samples) ** 2
            beat = 2 * np.abs(np.fft.fft(i)[k_bin]) / n
            expected = 2 * m * O.dsb_fading_gain(f, 17, 80)
            assert beat == pytest.approx(expected, abs=2e-6)

    def test_first_null_frequency(self):
        nulls = FiberParams(L=80).fading_nulls(3) / 1e9
        np.testing.assert_allclose(nulls, O.FROZEN_FADING_NULLS_GHZ, rtol=1e-6)


class TestSsfm:
    def test_linear_limit_matches_closed_form(self, rng):
        x = field(rng, 2048)
        fib = FiberParams(L=80, gamma=0.0)
        ref = attenuate(apply_dispersion(set_power(x, 3.0), fib), fib)
        for step in (1.0, 7.0, 80.0):
            y = ssfm_propagate(x, fib, 3.0, step)
            assert rms(y.samples - ref.samples) <= 1e-9 * rms(ref.samples)

    def test_step_halving_converges(self, rng):
        x = mzm_modulate(SignalBlock(rng.standard_normal(2048), FS), 0.3)
        fib = FiberParams(L=80)
        a = ssfm_propagate(x, fib, 0.0, 0.5).samples
        b = ssfm_propagate(x, fib, 0.0, 0.25).samples
        assert rms(a - b) < 1e-6 * max(rms(a), 1.0)
        assert rms(a - b) < 1e-6

    def test_cw_phase(self):
        fib = FiberParams(L=50, gamma=1.3, alpha_db_per_km=0.2)
        x = SignalBlock(np.ones(256, complex), FS)
        P = 1e-3 * 10 ** (6 / 10)
        y = ssfm_propagate(x, fib, 6.0, 2.0).samples
        a = fib.alpha_np_per_m
        l_eff = (1 - math.exp(-a * fib.L * 1e3)) / a
        np.testing.assert_allclose(np.angle(y), 1.3e-3 * P * l_eff, rtol=1e-9)
        np.testing.assert_allclose(np.abs(y) ** 2, P * math.exp(-a * fib.L * 1e3), rtol=1e-9)

    def test_step_longer_than_fiber(self, rng):
        with pytest.raises(ValueError):
            ssfm_propagate(field(rng, 64), FiberParams(L=10), 0.0, 20.0)


class TestAse:
    def test_disabled(self, rng):
        x = field(rng, 64)
        assert load_ase(x, NoiseParams(None), rng) is x

    def test_target_32(self, rng):
        x = SignalBlock(np.ones(1 << 16, complex), FS)
        y = load_ase(x, NoiseParams(32.0), rng)
        assert measure_osnr(x, y.samples - x.samples) == pytest.approx(32.0, abs=0.1)

    @pytest.mark.parametrize("target", [15, 20, 25, 30, 35, 40])
    def test_targets(self, target):
        rng = np.random.default_rng(target)
        x = SignalBlock(np.full(1 << 16, 0.03 + 0j), FS)
        y, reported = add_ase(x, float(target), rng)
        noise = y.samples - x.samples
        # independent periodogram: noise density over the full band
        density = np.mean(np.abs(np.fft.fft(noise)) ** 2) / (noise.size * FS)
        osnr = 10 * np.log10(x.power / (density * 12.5e9))
        assert osnr == pytest.approx(target, abs=0.1)
        assert reported == pytest.approx(osnr, abs=1e-9)

    def test_two_loads_add(self, rng):
        x = SignalBlock(np.ones(1 << 16, complex), FS)
        y, _ = add_ase(x, 35.0, rng)
        n1 = y.samples - x.samples
        z, _ = add_ase(SignalBlock(x.samples, FS), 35.0, rng)
        total = n1 + (z.samples - x.samples)
        assert measure_osnr(x, total) == pytest.approx(35 - 10 * np.log10(2), abs=0.1)

    def test_zero_signal(self, rng):
        with pytest.raises(ValueError):
            add_ase(SignalBlock(np.zeros(16, complex), FS), 30.0, rng)


class TestPin:
    def test_constant_field(self):
        y = pin_detect(SignalBlock(np.full(64, 2.0 + 0j), FS), None)
        np.testing.assert_allclose(y.samples, 0.0, atol=1e-15)  # a^2 removed by AC coupling

    def test_square_law_before_filter(self, rng):
        x = field(rng, 256)
        y = pin_detect(x, None)
        np.testing.assert_allclose(y.samples + np.mean(np.abs(x.samples) ** 2), np.abs(x.samples) ** 2, atol=1e-12)

    def test_bessel_bandwidth(self):
        h = bessel_response(np.array([0.0, 30e9, 60e9]), 30.0)
        assert abs(h[0]) == pytest.approx(1.0)
        assert abs(h[1]) ** 2 == pytest.approx(0.5, rel=1e-6)
        assert abs(h[2]) < abs(h[1])

    def test_detected_tone_follows_bessel(self):
        n = 4096
        k = 600  # about 24.6 GHz
        f = k * FS / n
        x = SignalBlock(1 + 0.01 * np.cos(2 * np.pi * f * np.arange(n) / FS), FS)
        y = np.fft.fft(pin_detect(x, 30.0).samples)
        ref = np.fft.fft(pin_detect(x, None).samples)
        assert abs(y[k] / ref[k]) == pytest.approx(abs(bessel_response(np.array([f]), 30.0)[0]), rel=1e-9)

    def test_electrical_noise_variance(self, rng):
        x = SignalBlock(np.ones(1 << 15, complex), FS)
        y = pin_detect(x, None, NoiseParams(None, 1e-4), rng)
        assert np.var(y.samples) == pytest.approx(1e-4, rel=0.05)

    def test_output_rate(self, rng):
        y = pin_detect(field(rng, 512), 30.0, out_rate=FS / 2)
        assert len(y) == 256 and y.sample_rate == FS / 2 and np.isrealobj(y.samples)


class TestCascade:
    def test_superposition(self, rng):
        fib = FiberParams(L=80)
        mux = demux = FilterParams()

        def chain(x):
            return optical_bandpass(apply_dispersion(optical_bandpass(x, mux), fib), demux).samples

        a, b = field(rng, 2048), field(rng, 2048)
        alpha, beta = 0.7 - 0.2j, -1.3
        lhs = chain(SignalBlock(alpha * a.samples + beta * b.samples, FS))
        rhs = alpha * chain(a) + beta * chain(b)
        assert rms(lhs - rhs) <= 1e-9 * rms(lhs)

    def test_time_invariance(self, rng):
        fib = FiberParams(L=80)
        x = field(rng, 2048)
        y1 = apply_dispersion(optical_bandpass(SignalBlock(np.roll(x.samples, 37), FS), FilterParams()), fib)
        y2 = apply_dispersion(optical_bandpass(x, FilterParams()), fib)
        np.testing.assert_allclose(y1.samples, np.roll(y2.samples, 37), atol=1e-9)


class TestResample:
    def test_round_trip(self, rng):
        x = SignalBlock(np.fft.irfft(np.concatenate([rng.standard_normal(100) + 1j * rng.standard_normal(100),
                                                      np.zeros(157)]), 512), 84e9)
        up = resample(x, 168e9)
        assert len(up) == 1024 and np.isrealobj(up.samples)
        back = resample(up, 84e9)
        np.testing.assert_allclose(back.samples, x.samples, atol=1e-12)

    def test_non_integer_ratio(self, rng):
        with pytest.raises(ValueError):
            resample(SignalBlock(np.zeros(10), 1.0), 1.05)
