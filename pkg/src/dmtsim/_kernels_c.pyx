# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled receiver kernels; same contracts and arithmetic order as _kernels_py."""

import numpy as np


def nearest_label(const double complex[::1] symbols, points):
    cdef const double[::1] pr = np.ascontiguousarray(points.real, dtype=np.float64)
    cdef const double[::1] pi = np.ascontiguousarray(points.imag, dtype=np.float64)
    cdef Py_ssize_t n = symbols.shape[0], m = pr.shape[0], i, j, best
    cdef double sr, si, dr, di, d, dbest
    out = np.empty(n, dtype=np.int64)
    cdef long long[::1] o = out
    with nogil:
        for i in range(n):
            sr = symbols[i].real
            si = symbols[i].imag
            best = 0
            dr = sr - pr[0]
            di = si - pi[0]
            dbest = dr * dr + di * di
            for j in range(1, m):
                dr = sr - pr[j]
                di = si - pi[j]
                d = dr * dr + di * di
                if d < dbest:
                    dbest = d
                    best = j
            o[i] = best
    return out


def dd_equalize(Y, h0, orders, scale, tables, sizes, double mu):
    cdef const double complex[:, ::1] y = np.ascontiguousarray(Y, dtype=np.complex128)
    cdef Py_ssize_t S = y.shape[0], K = y.shape[1], s, k, j, best, m
    cdef double[::1] hr = np.array(np.real(h0), dtype=np.float64)
    cdef double[::1] hi = np.array(np.imag(h0), dtype=np.float64)
    cdef const long long[::1] od = np.ascontiguousarray(orders, dtype=np.int64)
    cdef const double[::1] sc = np.ascontiguousarray(scale, dtype=np.float64)
    cdef const double[:, ::1] tr = np.ascontiguousarray(np.real(tables), dtype=np.float64)
    cdef const double[:, ::1] ti = np.ascontiguousarray(np.imag(tables), dtype=np.float64)
    cdef const long long[::1] sz = np.ascontiguousarray(sizes, dtype=np.int64)
    labels = np.full((S, K), -1, dtype=np.int64)
    zout = np.zeros((S, K), dtype=np.complex128)
    cdef long long[:, ::1] lab = labels
    cdef double complex[:, ::1] zo = zout
    cdef double keep = 1.0 - mu
    cdef double yr, yi, den, zr, zi, ur, ui, dr, di, d, dbest, xr, xi, qr, qi
    cdef long long b
    with nogil:
        for s in range(S):
            for k in range(K):
                b = od[k]
                if b <= 0:
                    continue
                yr = y[s, k].real
                yi = y[s, k].imag
                den = hr[k] * hr[k] + hi[k] * hi[k]
                zr = (yr * hr[k] + yi * hi[k]) / den
                zi = (yi * hr[k] - yr * hi[k]) / den
                zo[s, k].real = zr
                zo[s, k].imag = zi
                ur = zr / sc[k]
                ui = zi / sc[k]
                m = sz[b]
                best = 0
                dr = ur - tr[b, 0]
                di = ui - ti[b, 0]
                dbest = dr * dr + di * di
                for j in range(1, m):
                    dr = ur - tr[b, j]
                    di = ui - ti[b, j]
                    d = dr * dr + di * di
                    if d < dbest:
                        dbest = d
                        best = j
                lab[s, k] = best
                if mu > 0.0:
                    xr = sc[k] * tr[b, best]
                    xi = sc[k] * ti[b, best]
                    den = xr * xr + xi * xi
                    qr = (yr * xr + yi * xi) / den
                    qi = (yi * xr - yr * xi) / den
                    hr[k] = keep * hr[k] + mu * qr
                    hi[k] = keep * hi[k] + mu * qi
    return labels, np.asarray(hr) + 1j * np.asarray(hi), zout


def sc_metric(r, Py_ssize_t half):
    cdef const double[::1] x = np.ascontiguousarray(r, dtype=np.float64)
    cdef Py_ssize_t L = x.shape[0], n = L - 2 * half + 1, i, d
    if n <= 0:
        return np.zeros(0)
    prod_a = np.zeros(L - half + 1)
    eng_a = np.zeros(L + 1)
    out = np.zeros(n)
    cdef double[::1] prod = prod_a, eng = eng_a, o = out
    cdef double P, R
    with nogil:
        for i in range(L - half):
            prod[i + 1] = prod[i] + x[i] * x[i + half]
        for i in range(L):
            eng[i + 1] = eng[i] + x[i] * x[i]
        for d in range(n):
            P = prod[d + half] - prod[d]
            R = eng[d + 2 * half] - eng[d + half]
            if R > 0:
                o[d] = (P * P) / (R * R)
    return out
