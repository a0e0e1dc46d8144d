# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-round kernels. Mirrors ``_fallback`` function by function."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, log, fabs

cnp.import_array()


cdef inline void _project_row(double* v, double* u, Py_ssize_t n) noexcept nogil:
    """Project ``v`` (length n) onto the simplex in place; ``u`` is scratch."""
    cdef Py_ssize_t i, j
    cdef double key, css, theta, run
    for i in range(n):
        u[i] = v[i]
    # insertion sort, descending; n is the commodity count so this stays tiny
    for i in range(1, n):
        key = u[i]
        j = i - 1
        while j >= 0 and u[j] < key:
            u[j + 1] = u[j]
            j -= 1
        u[j + 1] = key
    run = 0.0
    theta = 0.0
    for i in range(n):
        run += u[i]
        css = run - 1.0
        if u[i] - css / (i + 1.0) > 0:
            theta = css / (i + 1.0)
    for i in range(n):
        key = v[i] - theta
        v[i] = key if key > 0.0 else 0.0


def project_simplex_rows(y):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.array(y, dtype=np.float64, copy=True, order="C", ndmin=2)
    if np.ndim(y) != 2:
        raise ValueError("project_simplex_rows expects a 2-d array")
    cdef Py_ssize_t rows = out.shape[0], n = out.shape[1], r
    cdef double[:, ::1] o = out
    cdef double[::1] scratch = np.empty(max(n, 1), dtype=np.float64)
    with nogil:
        for r in range(rows):
            _project_row(&o[r, 0], &scratch[0], n)
    return out


def queue_step(q, mu, lam, src, dst):
    cdef const double[:, ::1] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef const double[:, ::1] muv = np.ascontiguousarray(mu, dtype=np.float64)
    cdef const double[:, ::1] lamv = np.ascontiguousarray(lam, dtype=np.float64)
    cdef const cnp.int64_t[::1] s = np.ascontiguousarray(src, dtype=np.int64)
    cdef const cnp.int64_t[::1] d = np.ascontiguousarray(dst, dtype=np.int64)
    cdef Py_ssize_t n = qv.shape[0], k_count = qv.shape[1], links = muv.shape[0]
    out_arr = np.zeros((n, k_count), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[:, ::1] outflow = np.zeros((n, k_count), dtype=np.float64)
    cdef Py_ssize_t l, i, k
    cdef double val
    with nogil:
        for l in range(links):
            for k in range(k_count):
                outflow[s[l], k] += muv[l, k]
        for i in range(n):
            for k in range(k_count):
                val = qv[i, k] - outflow[i, k]
                out[i, k] = (val if val > 0.0 else 0.0) + lamv[i, k]
        for l in range(links):
            for k in range(k_count):
                out[d[l], k] += muv[l, k]
        for i in range(n):
            if i < k_count:
                out[i, i] = 0.0
    return out_arr


def grid_act(points, weights):
    cdef const double[:, :, ::1] x = np.ascontiguousarray(points, dtype=np.float64)
    cdef const double[:, ::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t b_count = x.shape[0], e_count = x.shape[1], n = x.shape[2], b, e, k
    out_arr = np.zeros((b_count, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for b in range(b_count):
            for e in range(e_count):
                for k in range(n):
                    out[b, k] += w[b, e] * x[b, e, k]
    return out_arr


def grid_feed(double[:, :, ::1] points, double[:, ::1] weights, double[::1] sq_sum,
              losses, const double[::1] etas, double mix):
    cdef const double[:, ::1] g = np.ascontiguousarray(losses, dtype=np.float64)
    cdef Py_ssize_t b_count = points.shape[0], e_count = points.shape[1], n = points.shape[2]
    cdef Py_ssize_t b, e, k
    cdef double mag, lmin, beta, total, acc, ln_e = log(<double> e_count)
    cdef double[::1] el = np.empty(e_count, dtype=np.float64)
    cdef double[::1] scratch = np.empty(max(n, 1), dtype=np.float64)
    with nogil:
        for b in range(b_count):
            mag = 0.0
            for k in range(n):
                if fabs(g[b, k]) > mag:
                    mag = fabs(g[b, k])
            if mag == 0.0:
                continue
            sq_sum[b] += mag * mag
            for e in range(e_count):
                acc = 0.0
                for k in range(n):
                    acc += points[b, e, k] * g[b, k]
                el[e] = acc
            lmin = el[0]
            for e in range(1, e_count):
                if el[e] < lmin:
                    lmin = el[e]
            beta = sqrt(8.0 * ln_e / (1.0 + sq_sum[b]))
            total = 0.0
            for e in range(e_count):
                weights[b, e] = weights[b, e] * exp(-beta * (el[e] - lmin))
                total += weights[b, e]
            for e in range(e_count):
                weights[b, e] = (1.0 - mix) * (weights[b, e] / total) + mix / e_count
            for e in range(e_count):
                for k in range(n):
                    points[b, e, k] = points[b, e, k] - etas[e] * g[b, k]
                _project_row(&points[b, e, 0], &scratch[0], n)
