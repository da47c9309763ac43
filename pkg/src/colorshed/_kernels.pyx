# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-frame kernels. Signatures mirror ``_kernels_py``."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def accumulate_pf(const cnp.int64_t[:, ::1] cells,
                  const cnp.int64_t[::1] counts,
                  const cnp.uint8_t[::1] hue_lut,
                  const cnp.int64_t[::1] sat_map,
                  const cnp.int64_t[::1] val_map,
                  Py_ssize_t n_sat, Py_ssize_t n_val):
    cdef Py_ssize_t n = cells.shape[0]
    cdef Py_ssize_t k, b
    cdef cnp.int64_t c, hue_total = 0
    out = np.zeros(n_sat * n_val, dtype=np.float64)
    cdef double[::1] pf = out
    for k in range(n):
        if hue_lut[cells[k, 0]]:
            c = counts[k]
            pf[sat_map[cells[k, 1]] * n_val + val_map[cells[k, 2]]] += c
            hue_total += c
    if hue_total > 0:
        for b in range(n_sat * n_val):
            pf[b] /= <double>hue_total
    return out, int(hue_total)


def hue_count(const cnp.int64_t[:, ::1] cells,
              const cnp.int64_t[::1] counts,
              const cnp.uint8_t[::1] hue_lut):
    cdef Py_ssize_t k
    cdef cnp.int64_t total = 0
    for k in range(cells.shape[0]):
        if hue_lut[cells[k, 0]]:
            total += counts[k]
    return int(total)


def weighted_sum(const double[::1] weights, const double[::1] values):
    cdef Py_ssize_t k, n = weights.shape[0]
    cdef double acc = 0.0
    if values.shape[0] != n:
        raise ValueError("length mismatch")
    for k in range(n):
        acc += weights[k] * values[k]
    return acc


def weighted_sum_rows(const double[::1] weights, const double[:, ::1] rows):
    cdef Py_ssize_t i, k, n = weights.shape[0], m = rows.shape[0]
    cdef double acc
    if rows.shape[1] != n:
        raise ValueError("length mismatch")
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] res = out
    for i in range(m):
        acc = 0.0
        for k in range(n):
            acc += weights[k] * rows[i, k]
        res[i] = acc
    return out
