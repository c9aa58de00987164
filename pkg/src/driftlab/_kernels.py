"""Hot loops for the detectors.

Each kernel exists as plain Python source (``*_py``) and, when numba is
enabled, as a compiled twin. The public names point at the active variant.
"""

import math

import numpy as np

from ._accel import HAVE_NUMBA, jit

# ADWIN scalar slots
WIDTH, TOTAL, VARIANCE = 0, 1, 2


def _adwin_cut(n0, n1, u0, u1, window_var, delta, width, min_len):
    mean_diff = abs(u0 / n0 - u1 / n1)
    dd = math.log(2.0 * math.log(width) / delta)
    m = 1.0 / (n0 - min_len + 1) + 1.0 / (n1 - min_len + 1)
    eps = math.sqrt(2.0 * m * window_var * dd) + 2.0 / 3.0 * dd * m
    return mean_diff >= eps


def _adwin_drop_oldest(totals, variances, counts, scal):
    level = counts.shape[0] - 1
    while level > 0 and counts[level] == 0:
        level -= 1
    size = 2.0**level
    t = totals[level, 0]
    v = variances[level, 0]
    for j in range(counts[level] - 1):
        totals[level, j] = totals[level, j + 1]
        variances[level, j] = variances[level, j + 1]
    counts[level] -= 1
    scal[WIDTH] -= size
    scal[TOTAL] -= t
    width = scal[WIDTH]
    if width > 0:
        mu = t / size
        scal[VARIANCE] -= v + size * width * (mu - scal[TOTAL] / width) ** 2 / (size + width)
        if scal[VARIANCE] < 0.0:
            scal[VARIANCE] = 0.0
    else:
        scal[TOTAL] = 0.0
        scal[VARIANCE] = 0.0


def _adwin_update_py(totals, variances, counts, scal, value, delta, max_buckets, min_len, min_width):
    """Insert ``value``, compress, then cut while any split is significant.

    Buckets of level ``i`` hold ``2**i`` items; within a level index 0 is the
    oldest. Returns the number of cuts made (0 means no change detected).
    """
    width = scal[WIDTH] + 1.0
    if width > 1.0:
        prev_mean = scal[TOTAL] / (width - 1.0)
        scal[VARIANCE] += (width - 1.0) * (value - prev_mean) ** 2 / width
    scal[TOTAL] += value
    scal[WIDTH] = width

    c = counts[0]
    totals[0, c] = value
    variances[0, c] = 0.0
    counts[0] = c + 1

    n_levels = counts.shape[0]
    for i in range(n_levels - 1):
        if counts[i] <= max_buckets:
            break
        size = 2.0**i
        t1 = totals[i, 0]
        t2 = totals[i, 1]
        u1 = t1 / size
        u2 = t2 / size
        merged_var = variances[i, 0] + variances[i, 1] + size * size * (u1 - u2) ** 2 / (2.0 * size)
        j = counts[i + 1]
        totals[i + 1, j] = t1 + t2
        variances[i + 1, j] = merged_var
        counts[i + 1] = j + 1
        for k in range(counts[i] - 2):
            totals[i, k] = totals[i, k + 2]
            variances[i, k] = variances[i, k + 2]
        counts[i] -= 2

    cuts = 0
    searching = True
    while searching and scal[WIDTH] > min_width:
        searching = False
        width = scal[WIDTH]
        window_var = scal[VARIANCE] / width
        n0 = 0.0
        u0 = 0.0
        n1 = width
        u1 = scal[TOTAL]
        top = n_levels - 1
        while top > 0 and counts[top] == 0:
            top -= 1
        for level in range(top, -1, -1):
            size = 2.0**level
            for j in range(counts[level]):
                n0 += size
                u0 += totals[level, j]
                n1 -= size
                u1 -= totals[level, j]
                if n1 <= min_len:
                    break
                if n0 > min_len and _adwin_cut(n0, n1, u0, u1, window_var, delta, width, min_len):
                    searching = True
                    break
            if searching or n1 <= min_len:
                break
        if searching:
            cuts += 1
            _adwin_drop_oldest(totals, variances, counts, scal)
    return cuts


def _ks_merge_py(a, b):
    """Exact two-sample KS statistic of two *sorted* arrays by merging."""
    n = a.shape[0]
    m = b.shape[0]
    i = 0
    j = 0
    d = 0.0
    while i < n and j < m:
        x = a[i] if a[i] <= b[j] else b[j]
        while i < n and a[i] == x:
            i += 1
        while j < m and b[j] == x:
            j += 1
        diff = abs(i / n - j / m)
        if diff > d:
            d = diff
    return d


def ks_statistic_numpy(a, b):
    """Same statistic via searchsorted; vectorised fallback."""
    a = np.sort(a)
    b = np.sort(b)
    pts = np.concatenate((a, b))
    ca = np.searchsorted(a, pts, side="right")
    cb = np.searchsorted(b, pts, side="right")
    return float(np.max(np.abs(ca / a.shape[0] - cb / b.shape[0])))


def kswin_stats_numpy(window, split):
    """KS statistic per column between rows [:split] and rows [split:]."""
    old = np.sort(window[:split], axis=0)
    new = np.sort(window[split:], axis=0)
    out = np.empty(window.shape[1])
    for f in range(window.shape[1]):
        pts = np.concatenate((old[:, f], new[:, f]))
        ca = np.searchsorted(old[:, f], pts, side="right")
        cb = np.searchsorted(new[:, f], pts, side="right")
        out[f] = np.max(np.abs(ca / old.shape[0] - cb / new.shape[0]))
    return out


if HAVE_NUMBA:
    # rebinding the helpers lets the compiled update resolve compiled callees
    _adwin_cut = jit(_adwin_cut)
    _adwin_drop_oldest = jit(_adwin_drop_oldest)
    adwin_update = jit(_adwin_update_py)
    ks_merge = jit(_ks_merge_py)

    @jit
    def kswin_stats(window, split):
        n_feat = window.shape[1]
        out = np.empty(n_feat)
        for f in range(n_feat):
            old = np.sort(window[:split, f])
            new = np.sort(window[split:, f])
            out[f] = ks_merge(old, new)
        return out

else:
    adwin_update = _adwin_update_py
    ks_merge = _ks_merge_py
    kswin_stats = kswin_stats_numpy
