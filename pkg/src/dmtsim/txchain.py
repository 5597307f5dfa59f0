"""DMT frame assembly and the DAC-side signal conditioning (clipping, quantization)."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from dmtsim.loading import SubcarrierPlan
from dmtsim.signalcore import SignalBlock, constellation, hermitian_ifft, qam_map

FS_DEFAULT = 84e9


@dataclass(frozen=True)
class TxConfig:
    clip_ratio_db: float | None = 9.0
    dac_bits: int | None = None

    def __post_init__(self):
        if self.clip_ratio_db is not None and not self.clip_ratio_db > 0:
            raise ValueError("clip_ratio_db must be > 0 (None or inf disables clipping)")
        if self.dac_bits is not None and not 1 <= self.dac_bits <= 16:
            raise ValueError("dac_bits must be in 1..16")


@dataclass(frozen=True)
class DmtFrame:
    payload_bits: np.ndarray
    symbols: np.ndarray  # (frame_symbols, n_data), before the IFFT
    time: SignalBlock


def _qpsk(rng: np.random.Generator, shape) -> np.ndarray:
    pts = constellation(2).points
    return pts[rng.integers(0, 4, size=shape)]


def make_training_symbols(plan: SubcarrierPlan, rng: np.random.Generator) -> np.ndarray:
    """Training spectra, shape (n_ts, n_data).

    Row 0 is the timing preamble: QPSK on even-numbered active subcarriers
    only, so its time-domain symbol repeats after N/2 samples.  The other rows
    carry QPSK on every active subcarrier.  Each row's total power matches a
    payload symbol's.
    """
    if plan.n_ts < 1:
        raise ValueError("at least one training symbol is needed for synchronization")
    active = plan.active
    n_active = int(active.sum())
    k = np.arange(1, plan.n_data + 1)
    even = active & (k % 2 == 0)
    ts = np.zeros((plan.n_ts, plan.n_data), dtype=np.complex128)
    ts[:, active] = _qpsk(rng, (plan.n_ts, n_active))
    ts[0, ~even] = 0
    if even.any():
        ts[0, even] *= math.sqrt(n_active / even.sum())
    return ts


def payload_bit_layout(plan: SubcarrierPlan) -> list[tuple[int, np.ndarray, np.ndarray]]:
    """For each constellation order: (bits, subcarrier indices, bit-column indices).

    Within a symbol, bits are consumed subcarrier by subcarrier in increasing
    frequency order.
    """
    offsets = np.concatenate([[0], np.cumsum(plan.bits)[:-1]])
    out = []
    for b in range(1, 9):
        idx = np.flatnonzero(plan.bits == b)
        if idx.size:
            cols = offsets[idx][:, None] + np.arange(b)[None, :]
            out.append((b, idx, cols))
    return out


def map_payload(payload_bits, plan: SubcarrierPlan) -> np.ndarray:
    """Payload spectra (payload_symbols, n_data), scaled by sqrt(power)."""
    bits = np.asarray(payload_bits, dtype=np.uint8)
    if bits.size != plan.payload_bits:
        raise ValueError(f"expected {plan.payload_bits} payload bits, got {bits.size}")
    bits = bits.reshape(plan.payload_symbols, plan.bits_per_symbol)
    sym = np.zeros((plan.payload_symbols, plan.n_data), dtype=np.complex128)
    for b, idx, cols in payload_bit_layout(plan):
        sym[:, idx] = qam_map(bits[:, cols], b)
    return sym * np.sqrt(plan.power)


def modulate_symbols(symbols: np.ndarray, plan: SubcarrierPlan) -> np.ndarray:
    """IFFT every row and prepend its cyclic prefix; returns the concatenated samples."""
    n_bins = plan.fft_len // 2 - 1
    full = np.zeros((symbols.shape[0], n_bins), dtype=np.complex128)
    full[:, : plan.n_data] = symbols
    t = hermitian_ifft(full, plan.fft_len)
    if plan.cp_samples:
        cp = plan.cp_samples
        # a CP longer than N wraps around the symbol more than once
        reps = -(-cp // plan.fft_len)
        t = np.concatenate([np.tile(t, reps)[:, -cp:], t], axis=1)
    return t.ravel()


def build_frame(payload_bits, plan: SubcarrierPlan, ts: np.ndarray, fs: float = FS_DEFAULT) -> DmtFrame:
    if ts.shape != (plan.n_ts, plan.n_data):
        raise ValueError(f"training block must be ({plan.n_ts}, {plan.n_data}), got {ts.shape}")
    payload = map_payload(payload_bits, plan)
    symbols = np.concatenate([ts, payload], axis=0)
    return DmtFrame(np.asarray(payload_bits, dtype=np.uint8), symbols, SignalBlock(modulate_symbols(symbols, plan), fs))


def assemble_frame(payload_bits, plan: SubcarrierPlan, ts: np.ndarray, fs: float = FS_DEFAULT) -> SignalBlock:
    """Training symbols followed by payload symbols as one real waveform."""
    return build_frame(payload_bits, plan, ts, fs).time


def clip_level(block: SignalBlock, clip_ratio_db: float | None) -> float:
    x = np.real(block.samples)
    if clip_ratio_db is None or math.isinf(clip_ratio_db):
        return float(np.max(np.abs(x), initial=0.0))
    return float(np.sqrt(np.mean(x * x)) * 10 ** (clip_ratio_db / 20))


def clip(block: SignalBlock, clip_ratio_db: float | None) -> SignalBlock:
    """Symmetric clipping at rms * 10^(CR/20), rms taken once before clipping."""
    if clip_ratio_db is None or math.isinf(clip_ratio_db):
        return block
    a = clip_level(block, clip_ratio_db)
    return block.replace(np.clip(np.real(block.samples), -a, a))


def quantize(block: SignalBlock, dac_bits: int | None, full_scale: float) -> SignalBlock:
    """Uniform mid-rise quantizer with 2^dac_bits levels spanning [-full_scale, full_scale]."""
    if dac_bits is None:
        return block
    step = 2 * full_scale / 2**dac_bits
    top = full_scale - step / 2
    q = (np.floor(np.real(block.samples) / step) + 0.5) * step
    return block.replace(np.clip(q, -top, top))


def condition(block: SignalBlock, cfg: TxConfig) -> SignalBlock:
    """Clip then (optionally) quantize, both against the same full-scale level."""
    a = clip_level(block, cfg.clip_ratio_db)
    out = clip(block, cfg.clip_ratio_db)
    return quantize(out, cfg.dac_bits, a)


def export_waveform(block: SignalBlock, path, layout: dict | None = None) -> Path:
    """Write samples as little-endian float64 plus a ``.json`` sidecar.

    Complex blocks are stored interleaved (re, im).
    """
    path = Path(path)
    x = np.asarray(block.samples)
    is_complex = np.iscomplexobj(x) and not block.is_real
    data = np.column_stack([x.real, x.imag]).ravel() if is_complex else np.real(x)
    data.astype("<f8").tofile(path)
    meta = {
        "sample_rate": block.sample_rate,
        "num_samples": int(x.shape[0]),
        "dtype": "float64-le",
        "complex_interleaved": bool(is_complex),
    }
    if layout:
        meta["layout"] = layout
    sidecar = path.with_name(path.name + ".json")
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True))
    return sidecar


def load_waveform(path) -> SignalBlock:
    path = Path(path)
    meta = json.loads(path.with_name(path.name + ".json").read_text())
    data = np.fromfile(path, dtype="<f8")
    if meta.get("complex_interleaved"):
        data = data[0::2] + 1j * data[1::2]
    return SignalBlock(data, meta["sample_rate"])


def frame_layout(plan: SubcarrierPlan) -> dict:
    return {
        "fft_len": plan.fft_len,
        "cp_samples": plan.cp_samples,
        "n_ts": plan.n_ts,
        "frame_symbols": plan.frame_symbols,
        "n_data": plan.n_data,
        "bits_per_symbol": plan.bits_per_symbol,
    }
