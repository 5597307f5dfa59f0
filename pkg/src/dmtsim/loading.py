"""SNR estimation, bit/power loading and the framing arithmetic behind the rate target."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT
from scipy.stats import norm


class LoadingError(ValueError):
    """Base class for loading failures."""


class InfeasibleLoading(LoadingError):
    """Target bits cannot be carried by the given SNR profile."""


class LoadingDidNotConverge(LoadingError):
    """Margin iteration ended too far from the target."""


def gap_db_for_ser(p: float) -> float:
    """SNR gap (dB) for a target symbol-decision error rate ``p``."""
    return 10 * math.log10(norm.isf(p / 2) ** 2 / 3)


DEFAULT_GAP_DB = gap_db_for_ser(1e-3)
SNR_CEILING_DB = 60.0


@dataclass(frozen=True)
class LoadingConfig:
    gap_db: float = DEFAULT_GAP_DB
    b_max: int = 8
    margin_tol_bits: float = 16.0
    max_iters: int = 200
    snr_ceiling_db: float = SNR_CEILING_DB

    def __post_init__(self):
        if self.gap_db < 0:
            raise ValueError("gap_db must be >= 0")
        if not 1 <= self.b_max <= 8:
            raise ValueError("b_max must be in 1..8")
        if self.max_iters < 0 or self.margin_tol_bits < 0:
            raise ValueError("max_iters and margin_tol_bits must be >= 0")

    @property
    def gap(self) -> float:
        return 10 ** (self.gap_db / 10)


@dataclass(frozen=True)
class SnrProfile:
    """Linear SNR of subcarriers 1..n_data (array index 0 is subcarrier 1)."""

    snr: np.ndarray
    fft_len: int

    def __post_init__(self):
        if np.any(~np.isfinite(self.snr)) or np.any(self.snr < 0):
            raise ValueError("SNR values must be finite and >= 0")

    @property
    def n_data(self) -> int:
        return len(self.snr)

    @property
    def snr_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 10 * np.log10(self.snr)

    def freqs(self, fs: float) -> np.ndarray:
        """Baseband frequency of each subcarrier in Hz."""
        return np.arange(1, self.n_data + 1) * fs / self.fft_len


@dataclass(frozen=True)
class SubcarrierPlan:
    """Per-subcarrier bits and power plus the framing of one DMT frame.

    ``bits[i]`` and ``power[i]`` describe subcarrier ``i + 1``; subcarriers
    above ``n_data`` are never used.
    """

    bits: np.ndarray
    power: np.ndarray
    fft_len: int
    cp_samples: int
    n_ts: int
    frame_symbols: int = 128
    oversampling: float = 1.05

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.int64)
        power = np.asarray(self.power, dtype=float)
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "power", power)
        n_data = usable_subcarriers(self.fft_len, self.oversampling)
        if bits.shape != (n_data,) or power.shape != (n_data,):
            raise ValueError(f"plan needs {n_data} subcarrier entries for N={self.fft_len}")
        if bits.min(initial=0) < 0 or bits.max(initial=0) > 8:
            raise ValueError("bits must be in 0..8")
        if np.any(power < 0) or np.any(power[bits == 0] != 0):
            raise ValueError("power must be >= 0 and zero wherever bits == 0")
        if self.cp_samples < 0:
            raise ValueError("cp_samples must be >= 0")
        if not 0 <= self.n_ts < self.frame_symbols:
            raise ValueError("need 0 <= n_ts < frame_symbols")

    @property
    def n_data(self) -> int:
        return len(self.bits)

    @property
    def bits_per_symbol(self) -> int:
        return int(self.bits.sum())

    @property
    def payload_symbols(self) -> int:
        return self.frame_symbols - self.n_ts

    @property
    def payload_bits(self) -> int:
        return self.payload_symbols * self.bits_per_symbol

    @property
    def symbol_len(self) -> int:
        return self.fft_len + self.cp_samples

    @property
    def frame_len(self) -> int:
        return self.frame_symbols * self.symbol_len

    @property
    def active(self) -> np.ndarray:
        return self.bits > 0

    def with_framing(self, **kw) -> "SubcarrierPlan":
        return replace(self, **kw)

    @classmethod
    def uniform(cls, fft_len, cp_samples, n_ts, bits=4, frame_symbols=128, oversampling=1.05):
        """Equal bits and unit power on every usable subcarrier (the SNR probe plan)."""
        n = usable_subcarriers(fft_len, oversampling)
        return cls(np.full(n, bits), np.ones(n), fft_len, cp_samples, n_ts, frame_symbols, oversampling)


# ---------------------------------------------------------------------------
# framing arithmetic

def usable_subcarriers(fft_len: int, oversampling: float = 1.0) -> int:
    if oversampling < 1:
        raise ValueError("oversampling must be >= 1")
    if fft_len < 4 or fft_len & (fft_len - 1):
        raise ValueError(f"FFT length must be a power of two, got {fft_len}")
    # the small epsilon keeps exact ratios like 63/1.05 from flooring one short
    return int(math.floor((fft_len // 2 - 1) / oversampling + 1e-9))


def cp_min_samples(D: float, L: float, f0: float, B_dmt: float, fs: float) -> int:
    """Smallest cyclic prefix (samples) covering the dispersive delay spread.

    ``D`` in ps/(nm km), ``L`` in km, frequencies in Hz.
    """
    if min(D, L, B_dmt, fs) < 0 or f0 <= 0:
        raise ValueError("inputs must be non-negative and f0 > 0")
    spread_s = (D * 1e-6) * (L * 1e3) * (SPEED_OF_LIGHT / f0**2) * B_dmt
    return int(math.ceil(fs * spread_s - 1e-9))


def rate_budget(net_rate, fft_len, cp_samples, n_ts, frame_symbols, fs) -> int:
    """Bits each payload symbol must carry to deliver ``net_rate`` after CP and TS overhead."""
    if n_ts >= frame_symbols:
        raise ValueError("n_ts must be smaller than frame_symbols")
    num = Fraction(net_rate) * frame_symbols * (fft_len + cp_samples)
    den = Fraction(fs) * (frame_symbols - n_ts)
    return math.ceil(num / den)


# ---------------------------------------------------------------------------
# SNR estimation and loading

def estimate_snr(rx_symbols, tx_symbols, fft_len: int, snr_ceiling_db: float = SNR_CEILING_DB) -> SnrProfile:
    """Data-aided per-subcarrier SNR from probe symbols of shape (M, n_data).

    A least-squares one-tap gain is fitted per subcarrier first, so the
    estimate holds whether or not ``rx_symbols`` were already equalized.
    A (blocks, M, n_data) input fits one gain per block (frames captured
    with different timing) and pools the signal and error powers.
    """
    Y = np.asarray(rx_symbols, dtype=np.complex128)
    X = np.asarray(tx_symbols, dtype=np.complex128)
    if Y.shape != X.shape or Y.ndim not in (2, 3):
        raise ValueError("rx and tx symbols must share shape (M, n_data) or (blocks, M, n_data)")
    if Y.ndim == 2:
        Y, X = Y[None], X[None]
    ex = np.sum(np.abs(X) ** 2, axis=1)
    h = np.divide(np.sum(Y * X.conj(), axis=1), ex, out=np.zeros(ex.shape, complex), where=ex > 0)
    sig = np.sum(np.abs(h) ** 2 * ex, axis=0)
    err = np.sum(np.abs(Y - h[:, None, :] * X) ** 2, axis=(0, 1))
    ceiling = 10 ** (snr_ceiling_db / 10)
    with np.errstate(divide="ignore", invalid="ignore"):
        snr = np.where(err > 0, sig / err, np.where(sig > 0, ceiling, 0.0))
    return SnrProfile(np.minimum(snr, ceiling), fft_len)


def _as_snr(snr) -> np.ndarray:
    return np.asarray(snr.snr if isinstance(snr, SnrProfile) else snr, dtype=float)


def chow_bitload(snr, target_bits: int, cfg: LoadingConfig = LoadingConfig(), adjust: bool = True) -> np.ndarray:
    """Margin-adaptive bit allocation (Chow, Cioffi, Bingham).

    The system margin is raised or lowered until the rounded allocation
    carries ``target_bits``; any remaining difference is settled one bit at a
    time on the subcarriers with the largest (adding) or smallest (removing)
    rounding residue, lowest index first on ties.
    """
    snr = _as_snr(snr)
    target = int(target_bits)
    usable = snr > 0
    cap = cfg.b_max * int(usable.sum())
    if target < 0 or target > cap:
        raise InfeasibleLoading(f"{target} bits requested, at most {cap} can be loaded")
    bits = np.zeros(snr.shape, dtype=np.int64)
    if target == 0:
        return bits

    margin_db = 0.0
    best = None
    above = below = False
    for _ in range(max(cfg.max_iters, 1)):
        bf = np.log2(1 + snr / (cfg.gap * 10 ** (margin_db / 10)))
        b = np.clip(np.rint(bf), 0, cfg.b_max).astype(np.int64)
        total = int(b.sum())
        above |= total >= target
        below |= total <= target
        if best is None or abs(total - target) < abs(best[1] - target):
            best = (b, total, bf)
        if total == target:
            break
        used = int((b > 0).sum())
        if used == 0:
            margin_db -= 10.0
            continue
        margin_db += 10 * math.log10(2.0 ** ((total - target) / used))
    b, total, bf = best
    # once the margin has been seen on both sides of the target the rest is
    # a rounding tie (equal SNRs crossing a boundary together) that the
    # single-bit adjustment settles
    if abs(total - target) > cfg.margin_tol_bits and not (above and below):
        raise LoadingDidNotConverge(f"margin iteration stopped {total - target:+d} bits from target")
    if not adjust:
        return b

    b = b.copy()
    resid = bf - b
    while total != target:
        if total < target:
            cand = np.flatnonzero(usable & (b < cfg.b_max))
            k = cand[np.argmax(resid[cand])]
            b[k] += 1
            resid[k] -= 1
            total += 1
        else:
            cand = np.flatnonzero(b > 0)
            k = cand[np.argmin(resid[cand])]
            b[k] -= 1
            resid[k] += 1
            total -= 1
    return b


def cioffi_powerload(snr, bits, cfg: LoadingConfig = LoadingConfig()) -> np.ndarray:
    """Margin-equalizing power per subcarrier, mean 1 over the loaded ones."""
    snr = _as_snr(snr)
    bits = np.asarray(bits, dtype=np.int64)
    on = bits > 0
    if np.any(snr[on] <= 0):
        raise LoadingError("bits loaded on a subcarrier with zero SNR")
    p = np.zeros(snr.shape)
    p[on] = (2.0 ** bits[on] - 1) * cfg.gap / snr[on]
    if on.any():
        p[on] /= p[on].mean()
    return p


def margins(snr, bits, power, cfg: LoadingConfig = LoadingConfig()) -> np.ndarray:
    """Per-subcarrier SNR margin P_k snr_k / ((2^b_k - 1) gap); NaN where unloaded."""
    snr = _as_snr(snr)
    bits = np.asarray(bits)
    out = np.full(snr.shape, np.nan)
    on = bits > 0
    out[on] = power[on] * snr[on] / ((2.0 ** bits[on] - 1) * cfg.gap)
    return out


def load(snr: SnrProfile, target_bits: int, framing: dict, cfg: LoadingConfig = LoadingConfig()) -> SubcarrierPlan:
    """Bit loading then power loading, packaged as a plan with the given framing."""
    bits = chow_bitload(snr, target_bits, cfg)
    power = cioffi_powerload(snr, bits, cfg)
    return SubcarrierPlan(bits, power, fft_len=snr.fft_len, **framing)
