"""Receiver DSP: Schmidl-Cox timing, FFT demodulation, decision-directed one-tap EQ, BER."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from dmtsim import kernels
from dmtsim.loading import SnrProfile, SubcarrierPlan
from dmtsim.signalcore import SignalBlock, constellation, forward_fft_real, labels_to_bits
from dmtsim.txchain import payload_bit_layout

FEC_LIMIT = 3.8e-3


class SyncError(RuntimeError):
    """No preamble found in the capture."""


@dataclass(frozen=True)
class ChannelEstimate:
    h: np.ndarray
    update_gain: float = 0.1

    def __post_init__(self):
        if not 0 <= self.update_gain <= 1:
            raise ValueError("update gain must be in [0, 1]")


@dataclass(frozen=True)
class BerCount:
    bit_errors: int
    bits_counted: int
    fec_threshold: float = FEC_LIMIT

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits_counted if self.bits_counted else float("nan")

    @property
    def below_fec(self) -> bool:
        return self.ber <= self.fec_threshold


@dataclass
class Metrics:
    ber: float
    bit_errors: int
    bits_counted: int
    snr_profile: SnrProfile | None = None
    measured_osnr_db: float = float("nan")
    frames: int = 0
    stop_reason: str = ""
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class DemodResult:
    bits: np.ndarray
    labels: np.ndarray  # (payload_symbols, n_data), -1 on unloaded subcarriers
    equalized: np.ndarray  # Y / h per payload symbol, before the DD update
    raw: np.ndarray  # FFT output of every frame symbol, (frame_symbols, n_data)
    h_initial: np.ndarray
    h_final: np.ndarray


# ---------------------------------------------------------------------------
# timing

def sc_metric(samples, fft_len: int) -> np.ndarray:
    r = samples.samples if isinstance(samples, SignalBlock) else samples
    return kernels.sc_metric(np.ascontiguousarray(np.real(r), dtype=float), fft_len // 2)


def _plateau_estimate(M: np.ndarray, peak: int, threshold: float, cp_samples: int) -> int:
    above = M >= threshold * M[peak]
    lo = peak
    while lo > 0 and above[lo - 1]:
        lo -= 1
    hi = peak
    while hi < M.size - 1 and above[hi + 1]:
        hi += 1
    # An undistorted repeated half gives M = 1 to rounding over exactly the
    # cp + 1 positions of the true plateau, while M may exceed 1 next to it.
    # Use that run when present; otherwise the thresholded region.
    exact = lo + np.flatnonzero(np.abs(M[lo : hi + 1] - 1.0) <= 1e-9)
    if exact.size:
        lo = hi = int(exact[0])
        while hi + 1 <= exact[-1] and abs(M[hi + 1] - 1.0) <= 1e-9:
            hi += 1
    return int(np.floor((lo + hi - cp_samples) / 2 + 0.5))


def _refine(x: np.ndarray, p: np.ndarray, coarse: int, cp_samples: int) -> int:
    """Re-centre ``coarse`` on the impulse response measured through the known symbols.

    ``p`` holds the bodies of consecutive known symbols starting with the
    preamble.  Only the even tones, which every row carries, are used, so the
    impulse response is resolved modulo N/2.  The window of cp + 1 taps
    holding the most energy is found; the weighted centre of the run of
    windows within 5 % of that maximum is the delay spread midpoint, which is what the
    metric plateau midpoint estimates on a clean channel.
    """
    k_sym, n = p.shape
    half = n // 2
    sym = n + cp_samples
    if cp_samples + 1 >= half or coarse + cp_samples < 0 or coarse + k_sym * sym > x.size:
        return coarse
    X = np.fft.rfft(p, axis=1)[:, 2:half:2]
    idx = coarse + cp_samples + np.arange(k_sym)[:, None] * sym + np.arange(n)[None, :]
    Y = np.fft.rfft(x[idx], axis=1)[:, 2:half:2]
    ok = np.abs(X[0]) > 1e-9 * np.abs(X[0]).max(initial=0.0)
    if not ok.any():
        return coarse
    H = np.zeros(half // 2 + 1, dtype=np.complex128)
    H[1 : 1 + X.shape[1]][ok] = np.mean(Y[:, ok] / X[:, ok], axis=0)
    e = np.fft.irfft(H, half) ** 2
    # taps at noise level would make the energy plateau ripple.  A real
    # Gaussian tap's energy has its 20th percentile at 0.0642 sigma^2; the
    # response rarely fills 80 % of the lags, so that quantile is noise.
    floored = np.maximum(e - 9 / 0.0642 * np.quantile(e, 0.2), 0.0)
    if floored.any():
        e = floored
    # window energy E[u] = sum of e[u .. u + cp] (circular)
    ext = np.concatenate([e, e[: cp_samples + 1]])
    cs = np.concatenate([[0.0], np.cumsum(ext)])
    E = cs[cp_samples + 1 : cp_samples + 1 + half] - cs[:half]
    k = int(np.argmax(E))
    near = E >= 0.95 * E[k]
    lo = hi = 0
    while lo > -half // 2 and near[(k + lo - 1) % half]:
        lo -= 1
    while hi < half // 2 and near[(k + hi + 1) % half]:
        hi += 1
    u = np.arange(lo, hi + 1)
    w = E[(k + u) % half] - 0.95 * E[k]
    centre = k + (float(np.sum(w * u) / np.sum(w)) if w.sum() > 0 else 0.0) + cp_samples / 2
    # lags are circular: take the image nearest the coarse estimate
    shift = (centre + half / 2) % half - half / 2
    return coarse + int(np.floor(shift + 0.5))


def _fit_quality(x: np.ndarray, p: np.ndarray, start: int, cp_samples: int) -> float:
    """Share of the received known-symbol energy explained by one gain per tone.

    Near 1 when ``start`` is the frame; about 1/k for k symbols of unrelated data.
    """
    k_sym, n = p.shape
    sym = n + cp_samples
    if start + cp_samples < 0 or start + k_sym * sym > x.size:
        return -np.inf
    # all tones: even ones alone cannot tell shifts of n/2 apart
    X = np.fft.rfft(p, axis=1)[:, 1 : n // 2]
    idx = start + cp_samples + np.arange(k_sym)[:, None] * sym + np.arange(n)[None, :]
    Y = np.fft.rfft(x[idx], axis=1)[:, 1 : n // 2]
    on = np.abs(X) > 1e-9 * np.abs(X).max(initial=0.0)
    Y = np.where(on, Y, 0.0)
    total = np.sum(np.abs(Y) ** 2)
    if total == 0:
        return -np.inf
    # least-squares gain per tone over the symbols that carry it
    den = np.sum(np.abs(X) ** 2, axis=0)
    H = np.divide(np.sum(Y * np.conj(X), axis=0), den, out=np.zeros(X.shape[1], complex), where=den > 0)
    return float(1.0 - np.sum(np.abs(Y - H * X) ** 2) / total)


def _peaks(M: np.ndarray, lo: int, hi: int, count: int, spacing: int) -> list[int]:
    """Up to ``count`` largest values of M[lo:hi], each at least ``spacing`` from the others."""
    seg = M[lo:hi].astype(float)
    out = []
    for _ in range(count):
        i = int(np.argmax(seg))
        if not np.isfinite(seg[i]):
            break
        out.append(lo + i)
        seg[max(i - spacing, 0) : i + spacing + 1] = -np.inf
    return out


def schmidl_cox_sync(samples, fft_len: int, cp_samples: int, threshold: float = 0.9,
                     min_peak: float = 0.05, search: tuple[int, int] | None = None,
                     preamble: np.ndarray | None = None, candidates: int = 8) -> int:
    """Estimate the first sample (start of cyclic prefix) of the preamble symbol.

    The metric is flat over the cp + 1 window positions that fit in the
    repeated-halves region; the coarse estimate is the midpoint of the
    contiguous run around the peak where the metric stays above
    ``threshold`` times the peak, minus cp/2.  ``search`` limits where the
    peak may lie (the run itself may extend past it).

    With ``preamble`` (the N-sample body of the timing symbol as sent, or
    a (k, N) array of it and the known symbols that follow) the coarse estimate is refined through the channel impulse response measured
    on it: the result is the midpoint of the delay spread, so that on a
    dispersive channel the window lands where the CP absorbs the most energy.
    With two or more known symbols the ``candidates`` strongest metric peaks
    and as many peaks of the correlation with the known waveform are all
    tried, and the one whose known symbols fit a per-tone channel best is
    kept.  At low SNR and short symbols data can outgrow the preamble's
    own metric peak.
    """
    x = np.real(samples.samples if isinstance(samples, SignalBlock) else samples)
    M = sc_metric(x, fft_len)
    lo_s, hi_s = (0, M.size) if search is None else (max(search[0], 0), min(search[1], M.size))
    if hi_s <= lo_s:
        raise SyncError("capture shorter than one symbol")
    peak = lo_s + int(np.argmax(M[lo_s:hi_s]))
    if not M[peak] >= min_peak:
        raise SyncError(f"timing metric peak {M[peak]:.3g} below detection threshold")
    if preamble is None:
        return _plateau_estimate(M, peak, threshold, cp_samples)
    p = np.atleast_2d(np.asarray(preamble, dtype=float))
    if p.shape[1] != fft_len:
        raise ValueError("preamble rows must hold one symbol body of fft_len samples")
    if p.shape[0] < 2:
        return _refine(x, p, _plateau_estimate(M, peak, threshold, cp_samples), cp_samples)
    count = max(candidates, 1)
    starts = [_plateau_estimate(M, pk, threshold, cp_samples) for pk in _peaks(M, lo_s, hi_s, count, fft_len)]
    # the known waveform matched against the capture; the link may invert it
    ref = np.concatenate([np.concatenate([b[fft_len - cp_samples :] if cp_samples else b[:0], b]) for b in p])
    n_fft = 1 << int(np.ceil(np.log2(x.size + ref.size)))
    xc = np.fft.irfft(np.fft.rfft(x, n_fft) * np.conj(np.fft.rfft(ref, n_fft)), n_fft)[: x.size]
    starts += _peaks(np.abs(xc), lo_s, hi_s, count, fft_len)
    best, best_q = None, -np.inf
    for start in starts:
        est = _refine(x, p, start, cp_samples)
        q = _fit_quality(x, p, est, cp_samples)
        if best is None or q > best_q:
            best, best_q = est, q
    return best


def estimate_cfo(samples, fft_len: int, start: int, cp_samples: int) -> float:
    """Carrier offset in subcarrier spacings from the preamble's half-symbol phase.

    Unambiguous within +/-1 spacing.  A real capture has no carrier, so the
    estimate there is zero.
    """
    r = samples.samples if isinstance(samples, SignalBlock) else np.asarray(samples)
    half = fft_len // 2
    d = start + cp_samples
    if d < 0 or d + fft_len > r.shape[0]:
        raise ValueError("preamble lies outside the capture")
    P = np.vdot(r[d : d + half], r[d + half : d + fft_len])
    return float(np.angle(P) / np.pi)


def correct_cfo(samples, cfo: float, fft_len: int):
    """Remove a carrier offset of ``cfo`` subcarrier spacings (identity for zero)."""
    r = samples.samples if isinstance(samples, SignalBlock) else np.asarray(samples)
    if cfo == 0:
        return samples
    out = r * np.exp(-2j * np.pi * cfo * np.arange(r.shape[0]) / fft_len)
    return samples.replace(out) if isinstance(samples, SignalBlock) else out


def window_backoff(cp_samples: int) -> int:
    """Samples by which each FFT window starts before the end of its CP."""
    return cp_samples // 4


# ---------------------------------------------------------------------------
# demodulation

@lru_cache(maxsize=None)
def _tables():
    tables = np.zeros((9, 256), dtype=np.complex128)
    sizes = np.zeros(9, dtype=np.int64)
    for b in range(1, 9):
        pts = constellation(b).points
        tables[b, : pts.size] = pts
        sizes[b] = pts.size
    tables.setflags(write=False)
    sizes.setflags(write=False)
    return tables, sizes


def frame_spectra(samples, plan: SubcarrierPlan, start: int = 0, backoff: int | None = None) -> np.ndarray:
    """FFT of every symbol window of a frame beginning at ``start``; shape (frame_symbols, n_data)."""
    x = np.real(samples.samples if isinstance(samples, SignalBlock) else samples)
    b = window_backoff(plan.cp_samples) if backoff is None else backoff
    first = start + plan.cp_samples - b
    need = first + plan.frame_len - plan.cp_samples
    if first < 0 or need > x.shape[0]:
        raise ValueError(f"capture of {x.shape[0]} samples cannot hold the frame starting at {start}")
    idx = first + np.arange(plan.frame_symbols)[:, None] * plan.symbol_len + np.arange(plan.fft_len)[None, :]
    return forward_fft_real(x[idx], plan.fft_len)[:, : plan.n_data]


def initial_estimate(Y_ts: np.ndarray, ts: np.ndarray, plan: SubcarrierPlan) -> np.ndarray:
    """Average Y/X over training symbols 2..n_ts; with only the preamble, interpolate its even tones."""
    active = plan.active
    h = np.ones(plan.n_data, dtype=np.complex128)
    if plan.n_ts >= 2:
        h[active] = np.mean(Y_ts[1:, active] / ts[1:, active], axis=0)
        return h
    known = active & (ts[0] != 0)
    if not known.any():
        return h
    k = np.flatnonzero(known)
    est = Y_ts[0, known] / ts[0, known]
    a = np.flatnonzero(active)
    h[a] = np.interp(a, k, est.real) + 1j * np.interp(a, k, est.imag)
    return h


def demodulate_frame(samples, plan: SubcarrierPlan, ts: np.ndarray, start: int = 0,
                     update_gain: float = 0.1, backoff: int | None = None) -> DemodResult:
    """Drop CP, FFT, one-tap equalize with decision-directed tracking, demap.

    ``start`` is the frame start returned by :func:`schmidl_cox_sync`.
    Unloaded subcarriers are never decided and never update the estimate.
    """
    Y = frame_spectra(samples, plan, start, backoff)
    h0 = initial_estimate(Y[: plan.n_ts], ts, plan)
    tables, sizes = _tables()
    labels, h1, z = kernels.dd_equalize(
        Y[plan.n_ts :], h0, plan.bits, np.sqrt(plan.power), tables, sizes, float(update_gain)
    )
    bits = np.zeros((plan.payload_symbols, plan.bits_per_symbol), dtype=np.uint8)
    for b, idx, cols in payload_bit_layout(plan):
        bits[:, cols] = labels_to_bits(labels[:, idx], b)
    return DemodResult(bits.ravel(), labels, z, Y, h0, h1)


def count_ber(tx_bits, rx_bits, fec_threshold: float = FEC_LIMIT) -> BerCount:
    tx = np.asarray(tx_bits).ravel()
    rx = np.asarray(rx_bits).ravel()
    if tx.shape != rx.shape:
        raise ValueError(f"bit streams differ in length ({tx.size} vs {rx.size})")
    return BerCount(int(np.count_nonzero(tx != rx)), int(tx.size), fec_threshold)
