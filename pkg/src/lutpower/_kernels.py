"""Compiled evaluation kernels for the system-level predictor.

Row layout (float64, contiguous)::

    [g_1 .. g_C, x_11 .. x_1J, ..., x_C1 .. x_CJ, y_1 .. y_K]

CPU weights: ``[L, G_1 .. G_C, A_11 .. A_CJ]``; GPU weights: ``[K, B_1 .. B_K]``.
The summation order matches ``predict_cpu``/``predict_gpu`` term for term,
so results are bit-identical to the pure-Python path.
"""

import numba
import numpy as np


@numba.njit(cache=True, nogil=True)
def cpu_power(cw, n_cores, n_events, row):
    total = cw[0]
    for i in range(n_cores):
        s = row[i] * cw[1 + i]
        xb = n_cores + i * n_events
        wb = 1 + n_cores + i * n_events
        for j in range(n_events):
            s += row[xb + j] * cw[wb + j]
        total += s
    return total


@numba.njit(cache=True, nogil=True)
def gpu_power(gw, offset, row):
    total = gw[0]
    for j in range(gw.shape[0] - 1):
        total += row[offset + j] * gw[1 + j]
    return total


@numba.njit(cache=True, nogil=True)
def evaluate_rows(cw, gw, n_cores, n_events, rows, out_cpu, out_gpu, out_total):
    offset = n_cores + n_cores * n_events
    for r in range(rows.shape[0]):
        row = rows[r]
        c = cpu_power(cw, n_cores, n_events, row)
        g = gpu_power(gw, offset, row)
        out_cpu[r] = c
        out_gpu[r] = g
        out_total[r] = c + g


@numba.njit(cache=True, nogil=True)
def bench_batch(cw, gw, n_cores, n_events, rows, start, count, sink):
    """Evaluate ``count`` rows cyclically from ``start``; results land in ``sink``."""
    offset = n_cores + n_cores * n_events
    n = rows.shape[0]
    m = sink.shape[0]
    r = start % n
    for k in range(count):
        row = rows[r]
        sink[k % m] = cpu_power(cw, n_cores, n_events, row) + gpu_power(gw, offset, row)
        r += 1
        if r == n:
            r = 0
    return r


def warm_up():
    cw = np.zeros(3)
    gw = np.zeros(2)
    rows = np.zeros((1, 4))
    out = np.zeros(1)
    evaluate_rows(cw, gw, 1, 1, rows, out, out.copy(), out.copy())
    bench_batch(cw, gw, 1, 1, rows, 0, 1, out)
