"""Numba kernels for the windowed recurrence sweep.

The sweep never materializes the recurrence matrix: distances are recomputed
inline during the diagonal and vertical line scans, which keeps the memory
footprint at the size of the embedded vectors and lets a window of ~5000
state vectors be processed in a single pass."""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, fastmath=True)
def window_line_stats(vectors, eps2, theiler):
    """Recurrence-point count and diagonal/vertical maximal-line histograms
    for the thresholded pairwise-distance matrix of ``vectors``.

    ``eps2`` is the squared recurrence threshold; pairs closer than ``theiler``
    in index are treated as non-recurrent when ``theiler > 0``.
    Returns ``(n_points, diag_hist, vert_hist)`` with histograms indexed by
    line length (0..N).
    """
    n, d = vectors.shape
    diag_hist = np.zeros(n + 1, dtype=np.int64)
    vert_hist = np.zeros(n + 1, dtype=np.int64)
    n_points = 0

    # Vertical lines: scan full columns. The matrix is symmetric, so column j
    # has the same content as row j and rows give contiguous access.
    for j in range(n):
        run = 0
        for i in range(n):
            rec = False
            sep = i - j if i >= j else j - i
            if theiler > 0 and sep <= theiler:
                rec = False
            else:
                s = 0.0
                for k in range(d):
                    dd = vectors[i, k] - vectors[j, k]
                    s += dd * dd
                    if s > eps2:
                        break
                rec = s <= eps2
            if rec:
                run += 1
                n_points += 1
            else:
                if run > 0:
                    vert_hist[run] += 1
                run = 0
        if run > 0:
            vert_hist[run] += 1

    # Diagonal lines: scan offsets m >= 0; each m > 0 stands for the pair of
    # symmetric diagonals, so its runs count twice.
    for m in range(n):
        if theiler > 0 and m <= theiler:
            continue
        weight = 1 if m == 0 else 2
        if m == 0:
            # self-distances are zero: one unbroken line of length n
            diag_hist[n] += 1
            continue
        run = 0
        for g in range(n - m):
            s = 0.0
            for k in range(d):
                dd = vectors[g, k] - vectors[g + m, k]
                s += dd * dd
                if s > eps2:
                    break
            if s <= eps2:
                run += 1
            else:
                if run > 0:
                    diag_hist[run] += weight
                run = 0
        if run > 0:
            diag_hist[run] += weight

    return n_points, diag_hist, vert_hist


@njit(cache=True)
def matrix_line_stats(bits, theiler):
    """Same statistics computed from an explicit dense binary matrix."""
    n = bits.shape[0]
    diag_hist = np.zeros(n + 1, dtype=np.int64)
    vert_hist = np.zeros(n + 1, dtype=np.int64)
    n_points = 0
    for j in range(n):
        run = 0
        for i in range(n):
            sep = i - j if i >= j else j - i
            if bits[i, j] != 0 and not (theiler > 0 and sep <= theiler):
                run += 1
                n_points += 1
            else:
                if run > 0:
                    vert_hist[run] += 1
                run = 0
        if run > 0:
            vert_hist[run] += 1
    for m in range(n):
        if theiler > 0 and m <= theiler:
            continue
        weight = 1 if m == 0 else 2
        run = 0
        for g in range(n - m):
            if bits[g, g + m] != 0:
                run += 1
            else:
                if run > 0:
                    diag_hist[run] += weight
                run = 0
        if run > 0:
            diag_hist[run] += weight
    return n_points, diag_hist, vert_hist
