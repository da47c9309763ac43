"""Pure-Python (numpy) versions of the per-frame kernels.

Used when the compiled ``_kernels`` extension is missing or when
``COLORSHED_PURE=1`` is set. Sums run left to right so results match the
compiled path bit for bit.
"""

import numpy as np


def accumulate_pf(cells, counts, hue_lut, sat_map, val_map, n_sat, n_val):
    pf = np.zeros(n_sat * n_val, dtype=np.float64)
    if len(counts) == 0:
        return pf, 0
    mask = hue_lut[cells[:, 0]].astype(bool)
    if not mask.any():
        return pf, 0
    sel = cells[mask]
    weights = counts[mask]
    idx = sat_map[sel[:, 1]] * n_val + val_map[sel[:, 2]]
    np.add.at(pf, idx, weights.astype(np.float64))
    total = int(weights.sum())
    pf /= float(total)
    return pf, total


def hue_count(cells, counts, hue_lut):
    if len(counts) == 0:
        return 0
    return int(counts[hue_lut[cells[:, 0]].astype(bool)].sum())


def weighted_sum(weights, values):
    if len(values) != len(weights):
        raise ValueError("length mismatch")
    acc = 0.0
    for w, x in zip(weights.tolist(), values.tolist()):
        acc += w * x
    return acc


def weighted_sum_rows(weights, rows):
    if rows.shape[1] != len(weights):
        raise ValueError("length mismatch")
    # column-wise accumulation keeps the per-row summation order sequential
    acc = np.zeros(rows.shape[0], dtype=np.float64)
    for k, w in enumerate(weights.tolist()):
        acc += w * rows[:, k]
    return acc
