"""Statistical primitives for per-SOC curves.

Curves are float arrays of length 101 indexed directly by SOC percent
(index 0 is SOC 0). Missing entries are NaN.
"""
from __future__ import annotations

import numpy as np
from scipy import stats as sps

from .exceptions import TooSparse

N_SOC = 101

LEFT = "left"
NOT_LEFT = "not_left"


def empty_curve() -> np.ndarray:
    return np.full(N_SOC, np.nan)


def as_curve(values) -> np.ndarray:
    """Coerce a mapping ``{soc: value}`` or a length-101 sequence to a curve."""
    if isinstance(values, dict):
        curve = empty_curve()
        for soc, v in values.items():
            curve[int(soc)] = np.nan if v is None else float(v)
        return curve
    curve = np.array([np.nan if v is None else v for v in values], dtype=float)
    if curve.shape != (N_SOC,):
        raise ValueError(f"curve must have {N_SOC} entries, got {curve.shape}")
    return curve


def skew_direction(values, alpha: float = 0.05, min_n: int = 20) -> str:
    """Classify a sample as left-skewed or not.

    A likelihood-ratio (G) goodness-of-fit test compares the counts of
    values below and above the mean against an even split. The sample is
    ``"left"`` only when the split is significant at ``alpha`` and the
    sample skewness is negative. Samples smaller than ``min_n`` are
    reported as ``"not_left"``.
    """
    x = np.asarray(values, dtype=float)
    x = x[np.isfinite(x)]
    n = x.size
    if n < min_n:
        return NOT_LEFT
    # shift first so adding a constant cannot change the comparison
    centered = x - x.mean()
    below = int(np.count_nonzero(centered < 0))
    above = n - below
    if below == 0 or above == 0:
        return NOT_LEFT
    g, p = sps.power_divergence([below, above], lambda_="log-likelihood")
    if p < alpha and sps.skew(centered) < 0:
        return LEFT
    return NOT_LEFT


def grubbs_critical(n: int, alpha: float) -> float:
    """Two-sided Grubbs critical value for sample size ``n``."""
    t = sps.t.ppf(1.0 - alpha / (2.0 * n), n - 2)
    return (n - 1) / np.sqrt(n) * np.sqrt(t * t / (n - 2 + t * t))


def grubbs_iterative(values, alpha: float = 0.05, min_n: int = 7) -> list[int]:
    """Indices removed by repeated two-sided Grubbs tests.

    Non-finite entries are ignored. Constant data and samples with fewer
    than ``min_n`` finite values have no outliers.
    """
    x = np.asarray(values, dtype=float)
    idx = np.flatnonzero(np.isfinite(x))
    if idx.size < max(min_n, 3):
        return []
    removed = []
    while idx.size >= 3:
        sub = x[idx]
        sd = sub.std(ddof=1)
        if sd == 0.0:
            break
        dev = np.abs(sub - sub.mean())
        j = int(np.argmax(dev))
        if dev[j] / sd <= grubbs_critical(idx.size, alpha):
            break
        removed.append(int(idx[j]))
        idx = np.delete(idx, j)
    return sorted(removed)


def interpolate_curve(curve, lo: int, hi: int) -> np.ndarray:
    """Fill nulls in ``[lo, hi]`` by linear interpolation.

    Entries outside the range are left alone. Gaps at either end of the
    range take the nearest known value.

    Raises
    ------
    TooSparse
        If fewer than two entries in the range are known.
    """
    out = np.array(curve, dtype=float, copy=True)
    lo, hi = int(lo), int(hi)
    soc = np.arange(lo, hi + 1)
    seg = out[lo:hi + 1]
    known = np.isfinite(seg)
    if np.count_nonzero(known) < 2:
        raise TooSparse(f"need 2 known entries in [{lo}, {hi}], got {np.count_nonzero(known)}")
    out[lo:hi + 1] = np.interp(soc, soc[known], seg[known])
    return out


def outlier_clean_voltage(curve, lo: int, hi: int, alpha: float = 0.05,
                          min_n: int = 7) -> np.ndarray:
    """Replace voltage entries that create outlying SOC-to-SOC jumps.

    Absolute differences between consecutive entries in ``[lo, hi]`` go
    through :func:`grubbs_iterative`; the entry at the upper end of each
    flagged difference is nulled and the range is re-interpolated.
    """
    out = np.array(curve, dtype=float, copy=True)
    lo, hi = int(lo), int(hi)
    diffs = np.abs(np.diff(out[lo:hi + 1]))
    flagged = grubbs_iterative(diffs, alpha=alpha, min_n=min_n)
    if not flagged:
        return out
    for k in flagged:
        out[lo + k + 1] = np.nan
    return interpolate_curve(out, lo, hi)
