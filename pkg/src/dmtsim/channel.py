"""Field-level optical channel: MZM, mux/demux filters, fiber, ASE loading and PIN detection.

Fields are complex baseband envelopes around the carrier in sqrt(W).  All
spectral operations act on the whole block with one FFT, so a block is
treated as one period of a looped waveform (as a DAC replaying its memory).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT
from scipy.signal import bessel, freqs

from dmtsim.signalcore import SignalBlock

OSNR_REF_BW = 12.5e9


@dataclass(frozen=True)
class FiberParams:
    D: float = 17.0  # ps/(nm km)
    L: float = 80.0  # km
    alpha_db_per_km: float = 0.2
    gamma: float = 1.3  # 1/(W km)
    f0: float = 194.25e12

    def __post_init__(self):
        if self.L < 0 or self.alpha_db_per_km < 0 or self.gamma < 0 or self.f0 <= 0:
            raise ValueError("fiber parameters out of range")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.f0

    @property
    def alpha_np_per_m(self) -> float:
        """Power attenuation in 1/m."""
        return self.alpha_db_per_km * math.log(10) / 10 / 1e3

    def beta(self) -> float:
        """Dispersion phase coefficient per metre: phase(f, z) = beta * z * f^2."""
        return math.pi * (self.D * 1e-6) * self.wavelength**2 / SPEED_OF_LIGHT

    def fading_nulls(self, n: int = 3) -> np.ndarray:
        """Frequencies (Hz) where DSB intensity detection cancels after length L."""
        if self.L == 0 or self.D == 0:
            return np.full(n, np.inf)
        k = np.arange(1, n + 1)
        return np.sqrt((2 * k - 1) * SPEED_OF_LIGHT / (2 * (self.D * 1e-6) * self.wavelength**2 * self.L * 1e3))


@dataclass(frozen=True)
class FilterParams:
    bw_3db_ghz: float = 39.0
    order: float = 3.0
    center_offset_ghz: float = 0.0

    def __post_init__(self):
        if self.bw_3db_ghz <= 0 or self.order < 1:
            raise ValueError("filter needs bw > 0 and order >= 1")


@dataclass(frozen=True)
class NoiseParams:
    target_osnr_db: float | None = 35.0
    rx_electrical_noise: float | None = None  # A^2 at the ADC, unit responsivity

    def __post_init__(self):
        if self.target_osnr_db is not None and math.isnan(self.target_osnr_db):
            raise ValueError("target_osnr_db must be a number or None")
        if self.rx_electrical_noise is not None and self.rx_electrical_noise < 0:
            raise ValueError("rx_electrical_noise must be >= 0")

    @property
    def osnr_enabled(self) -> bool:
        return self.target_osnr_db is not None and math.isfinite(self.target_osnr_db)


def _freqs(n: int, fs: float) -> np.ndarray:
    return np.fft.fftfreq(n, 1 / fs)


def _apply_response(block: SignalBlock, H: np.ndarray) -> SignalBlock:
    return block.replace(np.fft.ifft(np.fft.fft(block.samples) * H))


def resample(block: SignalBlock, new_rate: float) -> SignalBlock:
    """Periodic band-limited resampling by spectral zero-padding or truncation.

    Real input stays real.  The length ratio must be an integer ratio of rates.
    """
    n = len(block)
    m_f = n * new_rate / block.sample_rate
    m = int(round(m_f))
    if abs(m - m_f) > 1e-6:
        raise ValueError("resampling must map the block onto a whole number of samples")
    if m == n:
        return block
    real = not np.iscomplexobj(block.samples) or block.is_real
    X = np.fft.fft(block.samples)
    Y = np.zeros(m, dtype=np.complex128)
    k = min(n, m) // 2
    Y[:k] = X[:k]
    Y[-k:] = X[-k:]
    y = np.fft.ifft(Y) * (m / n)
    return SignalBlock(y.real if real else y, new_rate)


def mzm_modulate(drive: SignalBlock, mod_index: float = 0.5, bias_phase: float = math.pi / 4,
                 vpi: float | None = None, full_scale: float | None = None) -> SignalBlock:
    """Push-pull (chirp-free) MZM field: cos(pi/2 * m * d(t) + bias).

    ``d`` is the drive scaled to unit peak (``full_scale`` if given, else the
    block's own peak).  With ``vpi`` set the drive is taken in volts and
    ``m = peak / vpi``.  bias pi/4 is the linear-field point, pi/2 the null.
    """
    x = np.real(drive.samples)
    peak = full_scale if full_scale is not None else float(np.max(np.abs(x), initial=0.0))
    if vpi is not None:
        if vpi <= 0:
            raise ValueError("vpi must be positive")
        mod_index = peak / vpi
    d = x / peak if peak > 0 else np.zeros_like(x)
    return SignalBlock(np.cos(math.pi / 2 * mod_index * d + bias_phase).astype(np.complex128), drive.sample_rate)


def bandpass_response(f: np.ndarray, filt: FilterParams) -> np.ndarray:
    """Super-Gaussian amplitude response; -3 dB in power at center +/- bw/2."""
    u = (f - filt.center_offset_ghz * 1e9) / (filt.bw_3db_ghz * 1e9 / 2)
    with np.errstate(over="ignore", under="ignore"):
        return np.exp(-math.log(2) / 2 * np.abs(u) ** (2 * filt.order))


def optical_bandpass(field: SignalBlock, filt: FilterParams) -> SignalBlock:
    return _apply_response(field, bandpass_response(_freqs(len(field), field.sample_rate), filt))


def dispersion_response(f: np.ndarray, fiber: FiberParams, length_m: float | None = None) -> np.ndarray:
    z = fiber.L * 1e3 if length_m is None else length_m
    return np.exp(1j * fiber.beta() * z * f**2)


def apply_dispersion(field: SignalBlock, fiber: FiberParams) -> SignalBlock:
    """All-pass chromatic dispersion of the whole fiber length (no loss)."""
    if fiber.L == 0 or fiber.D == 0:
        return field
    return _apply_response(field, dispersion_response(_freqs(len(field), field.sample_rate), fiber))


def attenuate(field: SignalBlock, fiber: FiberParams) -> SignalBlock:
    return field.replace(field.samples * math.exp(-fiber.alpha_np_per_m * fiber.L * 1e3 / 2))


def set_power(field: SignalBlock, power_dbm: float) -> SignalBlock:
    p = field.power
    if p <= 0:
        raise ValueError("cannot scale a zero field to a launch power")
    return field.replace(field.samples * math.sqrt(1e-3 * 10 ** (power_dbm / 10) / p))


def ssfm_propagate(field: SignalBlock, fiber: FiberParams, launch_power_dbm: float, step_km: float = 1.0) -> SignalBlock:
    """Symmetric split-step propagation with dispersion, loss and Kerr phase.

    Each step is half linear, full nonlinear, half linear.  The nonlinear phase
    uses the mid-step power and the loss-weighted step length, which makes a CW
    input rotate by exactly gamma * P * L_eff for any step size.
    """
    if step_km <= 0:
        raise ValueError("step_km must be positive")
    if fiber.L > 0 and step_km > fiber.L:
        raise ValueError("step_km exceeds the fiber length")
    E = set_power(field, launch_power_dbm).samples
    if fiber.L == 0:
        return field.replace(E)
    n_steps = int(math.ceil(fiber.L / step_km - 1e-12))
    h = fiber.L * 1e3 / n_steps
    a = fiber.alpha_np_per_m
    gamma = fiber.gamma * 1e-3  # 1/(W m)
    f = _freqs(len(field), field.sample_rate)
    half = dispersion_response(f, fiber, h / 2) * math.exp(-a * h / 4)
    l_eff = h if a == 0 else 2 / a * math.sinh(a * h / 2)
    E = np.fft.fft(E)
    for i in range(n_steps):
        E = np.fft.ifft(E * half)
        if gamma:
            E = E * np.exp(1j * gamma * l_eff * (E.real**2 + E.imag**2))
        E = np.fft.fft(E) * half
    return field.replace(np.fft.ifft(E))


def measure_osnr(signal: SignalBlock, noise: np.ndarray) -> float:
    """OSNR (dB, 12.5 GHz reference) from signal power and the noise periodogram level."""
    n = np.asarray(noise)
    periodogram = np.abs(np.fft.fft(n)) ** 2 / (len(n) * signal.sample_rate)
    density = float(np.mean(periodogram))
    return 10 * math.log10(signal.power / (density * OSNR_REF_BW))


def add_ase(field: SignalBlock, osnr_db: float, rng: np.random.Generator) -> tuple[SignalBlock, float]:
    """Add white circular Gaussian noise for the requested OSNR; returns (field, measured OSNR)."""
    p = field.power
    if not p > 0:
        raise ValueError("signal power must be positive for noise loading")
    density = p / (OSNR_REF_BW * 10 ** (osnr_db / 10))
    sigma = math.sqrt(density * field.sample_rate / 2)
    n = sigma * (rng.standard_normal(len(field)) + 1j * rng.standard_normal(len(field)))
    return field.replace(field.samples + n), measure_osnr(field, n)


def load_ase(field: SignalBlock, noise: NoiseParams, rng: np.random.Generator) -> SignalBlock:
    if not noise.osnr_enabled:
        return field
    return add_ase(field, noise.target_osnr_db, rng)[0]


@lru_cache(maxsize=8)
def _bessel_coeffs(bw_hz: float, order: int):
    return bessel(order, 2 * math.pi * bw_hz, btype="low", analog=True, norm="mag")


def bessel_response(f: np.ndarray, bw_ghz: float, order: int = 5) -> np.ndarray:
    b, a = _bessel_coeffs(bw_ghz * 1e9, order)
    return freqs(b, a, worN=2 * math.pi * f)[1]


def pin_detect(field: SignalBlock, elec_bw_ghz: float | None = 30.0, noise: NoiseParams | None = None,
               rng: np.random.Generator | None = None, out_rate: float | None = None) -> SignalBlock:
    """Square-law detection, 5th-order Bessel low-pass, AC coupling, optional ADC resampling
    and additive electrical noise (variance given at the output rate)."""
    i = np.abs(field.samples) ** 2
    out = SignalBlock(i, field.sample_rate)
    if elec_bw_ghz is not None:
        H = bessel_response(_freqs(len(i), field.sample_rate), elec_bw_ghz)
        out = out.replace(np.fft.ifft(np.fft.fft(i) * H).real)
    out = out.replace(out.samples - out.samples.mean())
    if out_rate is not None:
        out = resample(out, out_rate)
    if noise is not None and noise.rx_electrical_noise:
        if rng is None:
            raise ValueError("electrical noise needs an rng")
        out = out.replace(out.samples + math.sqrt(noise.rx_electrical_noise) * rng.standard_normal(len(out)))
    return out
