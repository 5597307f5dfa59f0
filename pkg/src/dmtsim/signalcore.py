"""Numeric primitives shared by the whole link: waveforms, QAM tables, real DMT transforms."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from dmtsim import kernels


@dataclass(frozen=True)
class SignalBlock:
    """Uniformly sampled waveform.

    Real-valued signals are stored as float arrays; optical fields as complex.
    """

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")

    def __len__(self):
        return len(self.samples)

    @property
    def is_real(self) -> bool:
        s = self.samples
        if not np.iscomplexobj(s):
            return True
        rms = np.sqrt(np.mean(np.abs(s) ** 2)) if s.size else 0.0
        return bool(np.max(np.abs(s.imag), initial=0.0) <= 1e-10 * rms)

    @property
    def power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2))

    def replace(self, samples: np.ndarray) -> "SignalBlock":
        return SignalBlock(samples, self.sample_rate)


class Rng:
    """Seeded random source with independent, order-free sub-streams.

    ``Rng(seed).stream("noise", frame)`` always returns the same generator
    state for the same keys, regardless of what else was drawn before.
    """

    def __init__(self, seed: int):
        if not 0 <= int(seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self.seed = int(seed)

    @staticmethod
    def _key(k) -> int:
        if isinstance(k, str):
            # stable across interpreter runs (unlike hash())
            return int.from_bytes(k.encode()[:8].ljust(8, b"\0"), "little")
        return int(k)

    def stream(self, *keys) -> np.random.Generator:
        entropy = [self.seed, *(self._key(k) for k in keys)]
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))

    def derive_seed(self, *keys) -> int:
        ss = np.random.SeedSequence([self.seed, *(self._key(k) for k in keys)])
        return int(ss.generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------------------
# constellations

def _gray_levels(nbits: int) -> np.ndarray:
    """PAM amplitude for each label, reflected Gray code, label 0 at the top level."""
    m = 1 << nbits
    labels = np.arange(m)
    # gray -> binary position
    pos = labels.copy()
    shift = labels >> 1
    while shift.any():
        pos ^= shift
        shift >>= 1
    return (m - 1 - 2 * pos).astype(float)


def _rect_points(bits_i: int, bits_q: int) -> np.ndarray:
    """Rectangular grid; label = I bits (MSBs) followed by Q bits."""
    li = _gray_levels(bits_i) if bits_i else np.zeros(1)
    lq = _gray_levels(bits_q) if bits_q else np.zeros(1)
    return (li[:, None] + 1j * lq[None, :]).ravel()


def _cross_points(b: int) -> np.ndarray:
    # Fold the outer I columns of a 2^((b+1)/2) x 2^((b-1)/2) Gray grid onto
    # new rows above/below the core.  Cross sets admit no perfect Gray
    # labeling; this keeps most neighbor pairs at one bit.
    bi, bq = (b + 1) // 2, (b - 1) // 2
    pts = _rect_points(bi, bq)
    x, y = pts.real.copy(), pts.imag.copy()
    m_q = 1 << bq
    edge = 3 * m_q // 2
    outer = np.abs(x) > edge
    xs, ys = x[outer], y[outer]
    half = m_q // 2
    new_x = np.empty_like(xs)
    new_y = np.empty_like(ys)
    for ci, cm in enumerate(np.unique(np.abs(xs))):
        for ri, rm in enumerate(np.unique(np.abs(ys))):
            sel = (np.abs(xs) == cm) & (np.abs(ys) == rm)
            new_x[sel] = np.sign(xs[sel]) * (2 * (half - ri) - 1)
            new_y[sel] = np.sign(ys[sel]) * (m_q + 1 + 2 * ci)
    x[outer], y[outer] = new_x, new_y
    return x + 1j * y


@dataclass(frozen=True)
class Constellation:
    """Unit-average-power, Gray-labeled QAM table. ``points[label]`` is the symbol."""

    order_bits: int
    points: np.ndarray

    @property
    def size(self) -> int:
        return 1 << self.order_bits


@lru_cache(maxsize=None)
def constellation(order_bits: int) -> Constellation:
    """Return the constellation for ``order_bits`` in 1..8.

    Even orders are square QAM; 1 is BPSK on the real axis; 3 is the 4x2
    rectangle; 5 and 7 are cross constellations (32-cross, 128-cross).
    """
    b = int(order_bits)
    if not 1 <= b <= 8:
        raise ValueError(f"order_bits must be in 1..8, got {order_bits}")
    if b == 1:
        pts = np.array([1.0 + 0j, -1.0 + 0j])
    elif b % 2 == 0:
        pts = _rect_points(b // 2, b // 2)
    elif b == 3:
        pts = _rect_points(2, 1)
    else:
        pts = _cross_points(b)
    pts = pts / np.sqrt(np.mean(np.abs(pts) ** 2))
    pts.setflags(write=False)
    return Constellation(b, pts)


def _bits_to_labels(bits: np.ndarray, b: int) -> np.ndarray:
    weights = 1 << np.arange(b - 1, -1, -1)
    return (bits.astype(np.int64) * weights).sum(axis=-1)


def labels_to_bits(labels: np.ndarray, b: int) -> np.ndarray:
    shifts = np.arange(b - 1, -1, -1)
    return ((np.asarray(labels)[..., None] >> shifts) & 1).astype(np.uint8)


def qam_map(bits, order_bits: int):
    """Map bit groups to constellation symbols.

    ``bits`` has shape (..., order_bits); a 1-D vector maps to a scalar.
    The first half of the bits (rounded up) selects the in-phase level.
    """
    c = constellation(order_bits)
    bits = np.asarray(bits)
    if bits.shape[-1:] != (order_bits,):
        raise ValueError(f"expected trailing bit dimension {order_bits}, got shape {bits.shape}")
    if bits.size and (bits.min() < 0 or bits.max() > 1):
        raise ValueError("bits must be 0 or 1")
    sym = c.points[_bits_to_labels(bits, order_bits)]
    return sym[()] if sym.ndim == 0 else sym


def qam_decide(symbols, order_bits: int) -> np.ndarray:
    """Minimum-distance labels; equidistant inputs take the lowest label."""
    c = constellation(order_bits)
    return kernels.nearest_label(np.ascontiguousarray(symbols, dtype=np.complex128).ravel(), c.points).reshape(
        np.shape(symbols)
    )


def qam_demap(symbols, order_bits: int) -> np.ndarray:
    """Hard-decision demapping; returns bits with a trailing ``order_bits`` axis."""
    return labels_to_bits(qam_decide(symbols, order_bits), order_bits)


# ---------------------------------------------------------------------------
# real-valued multicarrier transforms

def _check_fft_len(n: int) -> None:
    if n < 4 or n & (n - 1):
        raise ValueError(f"FFT length must be a power of two >= 4, got {n}")


def hermitian_ifft(bins, fft_len: int) -> np.ndarray:
    """Real time-domain symbol(s) from subcarriers 1..N/2-1.

    DC and Nyquist are held at zero and the negative-frequency half is the
    conjugate mirror, so the output is exactly real.  The 1/N factor lives
    here; :func:`forward_fft_real` is unscaled.  Works row-wise on 2-D input.
    """
    _check_fft_len(fft_len)
    bins = np.asarray(bins, dtype=np.complex128)
    half = fft_len // 2
    if bins.shape[-1] != half - 1:
        raise ValueError(f"need {half - 1} bins for N={fft_len}, got {bins.shape[-1]}")
    spec = np.zeros(bins.shape[:-1] + (half + 1,), dtype=np.complex128)
    spec[..., 1:half] = bins
    return np.fft.irfft(spec, n=fft_len, axis=-1)


def forward_fft_real(block, fft_len: int | None = None) -> np.ndarray:
    """Subcarriers 1..N/2-1 of real time-domain symbol(s); row-wise on 2-D input."""
    x = block.samples if isinstance(block, SignalBlock) else np.asarray(block)
    n = x.shape[-1] if fft_len is None else fft_len
    _check_fft_len(n)
    if x.shape[-1] != n:
        raise ValueError(f"block length {x.shape[-1]} does not match N={n}")
    return np.fft.rfft(np.real(x), axis=-1)[..., 1 : n // 2]
