"""Reference numpy implementations of the hot receiver kernels.

Arithmetic is written out on real/imaginary parts in the same order as the
compiled versions in ``_kernels_c.pyx`` so both backends make identical
decisions.
"""

import numpy as np

_CHUNK = 8192


def nearest_label(symbols, points):
    """Index of the closest point for each symbol; ties go to the lower index."""
    symbols = np.asarray(symbols, dtype=np.complex128)
    pr = np.ascontiguousarray(points.real)
    pi = np.ascontiguousarray(points.imag)
    out = np.empty(symbols.shape[0], dtype=np.int64)
    for lo in range(0, symbols.shape[0], _CHUNK):
        s = symbols[lo : lo + _CHUNK]
        dr = s.real[:, None] - pr[None, :]
        di = s.imag[:, None] - pi[None, :]
        out[lo : lo + _CHUNK] = np.argmin(dr * dr + di * di, axis=1)
    return out


def _div(yr, yi, xr, xi):
    den = xr * xr + xi * xi
    return (yr * xr + yi * xi) / den, (yi * xr - yr * xi) / den


def dd_equalize(Y, h0, orders, scale, tables, sizes, mu):
    """Decision-directed one-tap equalization over consecutive symbols.

    Parameters
    ----------
    Y : complex array (S, K)
        Received subcarrier values, one row per symbol.
    h0 : complex array (K,)
        Initial channel estimate.
    orders : int array (K,)
        Bits per subcarrier; 0 marks an unused subcarrier (never decided or updated).
    scale : float array (K,)
        Transmit amplitude sqrt(P_k) of each subcarrier.
    tables, sizes : constellation points per order, padded to 256 columns.
    mu : float
        Update gain; 0 freezes the estimate.

    Returns
    -------
    labels : int64 (S, K), -1 where unused
    h : final channel estimate
    z : equalized (Y / h) values, before the per-symbol update
    """
    Y = np.asarray(Y, dtype=np.complex128)
    S, K = Y.shape
    hr = np.array(h0.real, dtype=float)
    hi = np.array(h0.imag, dtype=float)
    labels = np.full((S, K), -1, dtype=np.int64)
    z = np.zeros((S, K), dtype=np.complex128)
    groups = [(b, np.flatnonzero(orders == b)) for b in range(1, 9)]
    groups = [(b, idx) for b, idx in groups if idx.size]
    active = np.flatnonzero(orders > 0)
    keep = 1.0 - mu
    xr = np.zeros(K)
    xi = np.zeros(K)
    for s in range(S):
        yr, yi = Y[s].real, Y[s].imag
        zr, zi = _div(yr[active], yi[active], hr[active], hi[active])
        z[s, active] = zr + 1j * zi
        for b, idx in groups:
            pts = tables[b, : sizes[b]]
            ur = z[s, idx].real / scale[idx]
            ui = z[s, idx].imag / scale[idx]
            dr = ur[:, None] - pts.real[None, :]
            di = ui[:, None] - pts.imag[None, :]
            lab = np.argmin(dr * dr + di * di, axis=1)
            labels[s, idx] = lab
            xr[idx] = scale[idx] * pts.real[lab]
            xi[idx] = scale[idx] * pts.imag[lab]
        if mu > 0.0:
            qr, qi = _div(yr[active], yi[active], xr[active], xi[active])
            hr[active] = keep * hr[active] + mu * qr
            hi[active] = keep * hi[active] + mu * qi
    return labels, hr + 1j * hi, z


def sc_metric(r, half):
    """Schmidl-Cox timing metric for a real signal.

    M(d) = P(d)^2 / R(d)^2 with P the lag-``half`` correlation and R the
    energy of the second half, both over ``half`` samples.  Running sums make
    it O(n).  R == 0 yields M = 0.
    """
    r = np.asarray(r, dtype=float)
    n = r.shape[0] - 2 * half + 1
    if n <= 0:
        return np.zeros(0)
    prod = np.zeros(r.shape[0] - half + 1)
    prod[1:] = np.cumsum(r[:-half] * r[half:])
    eng = np.zeros(r.shape[0] + 1)
    eng[1:] = np.cumsum(r * r)
    P = prod[half : half + n] - prod[:n]
    R = eng[2 * half : 2 * half + n] - eng[half : half + n]
    out = np.zeros(n)
    ok = R > 0
    out[ok] = (P[ok] * P[ok]) / (R[ok] * R[ok])
    return out
