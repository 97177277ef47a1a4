"""FCC estimation from the charging rate seen in SOC update timestamps.

The constant-current phase pushes a fixed current into the battery, so
the relative rate (C-rate) observed while it lasts scales inversely with
the present full charge capacity::

    fcc_now = fcc_new * c_new / c_now

Rates are computed from SOC timestamps alone: one percent takes 36 s at
1 C.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import curve_fit

from .exceptions import (EmptyCurve, FitDiverged, InsufficientData,
                         InvalidInterval, MissingEntries, NoCCPhase)
from .stats import empty_curve, interpolate_curve

SECONDS_PER_PERCENT_AT_1C = 36.0
FIRST_SEGMENT_END = 10  # SOC below this is the steep first segment, excluded

AT_CC_END = "at_cc_end"
MAX_IN_CC = "max_in_cc"
STRATEGIES = (AT_CC_END, MAX_IN_CC)


def round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


@dataclass(frozen=True)
class FccEstimate:
    fcc_now_mah: int
    c_new: float
    c_now: float
    loss_fraction: float
    cc_end_soc: int
    strategy: str
    start_soc: int = FIRST_SEGMENT_END

    def as_dict(self) -> dict:
        return {
            "fcc_now_mah": self.fcc_now_mah,
            "c_new": self.c_new,
            "c_now": self.c_now,
            "loss_fraction": self.loss_fraction,
            "cc_end_soc": self.cc_end_soc,
            "start_soc": self.start_soc,
            "strategy": self.strategy,
        }


def c_rate_over_interval(soc_i: float, soc_j: float, t_i: float, t_j: float) -> float:
    """Average C-rate while charging from ``soc_i`` to ``soc_j``."""
    if not soc_j > soc_i:
        raise InvalidInterval(f"SOC must increase: {soc_i} -> {soc_j}")
    if not t_j > t_i:
        raise InvalidInterval(f"time must increase: {t_i} -> {t_j}")
    return SECONDS_PER_PERCENT_AT_1C * (soc_j - soc_i) / (t_j - t_i)


def cumulative_rate_curve(time_curve, start_soc: int, end_soc: int | None = None) -> np.ndarray:
    """Cumulative C-rate from ``start_soc`` to every later SOC.

    ``time_curve[k]`` is the time in seconds to charge from ``k - 1`` to
    ``k``. Entry ``k`` of the result is the rate over ``(start_soc, k]``.
    Without ``end_soc`` the curve runs to the last entry of the contiguous
    known block after ``start_soc``.
    """
    tc = np.asarray(time_curve, dtype=float)
    start = int(start_soc)
    if end_soc is None:
        end = start
        while end + 1 < tc.size and np.isfinite(tc[end + 1]):
            end += 1
    else:
        end = int(end_soc)
    seg = tc[start + 1:end + 1]
    if seg.size == 0:
        raise MissingEntries(f"no time entries after SOC {start}")
    if not np.all(np.isfinite(seg)):
        missing = [start + 1 + i for i in np.flatnonzero(~np.isfinite(seg))]
        raise MissingEntries(f"time curve has nulls at SOC {missing}")
    out = empty_curve()
    steps = np.arange(1, seg.size + 1)
    out[start + 1:end + 1] = SECONDS_PER_PERCENT_AT_1C * steps / np.cumsum(seg)
    return out


def detect_cc_end(voltage_curve, v_max_mv: float, tol_mv: float = 50.0,
                  lo: int = FIRST_SEGMENT_END) -> int | None:
    """Smallest SOC >= ``lo`` whose voltage is within ``tol_mv`` of ``v_max_mv``.

    Returns None when the threshold is never met.
    """
    vc = np.asarray(voltage_curve, dtype=float)
    seg = vc[lo:]
    known = np.isfinite(seg)
    if not known.any():
        raise EmptyCurve(f"voltage curve has no entries at SOC >= {lo}")
    hits = np.flatnonzero(known & (seg >= v_max_mv - tol_mv))
    if hits.size == 0:
        return None
    return lo + int(hits[0])


def select_c_rate(rate_curve, cc_end: int, strategy: str = AT_CC_END) -> float:
    """Pick the rate that stands for the CC phase."""
    rc = np.asarray(rate_curve, dtype=float)
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    if not np.isfinite(rc[cc_end]):
        raise MissingEntries(f"rate curve has no entry at cc_end {cc_end}")
    if strategy == AT_CC_END:
        return float(rc[cc_end])
    return float(np.nanmax(rc[:cc_end + 1]))


def estimate_fcc(fcc_new_mah: float, c_new: float, c_now: float) -> float:
    if fcc_new_mah <= 0 or c_new <= 0 or c_now <= 0:
        raise ValueError("fcc_new_mah, c_new and c_now must be positive")
    return fcc_new_mah * c_new / c_now


# -- capacity profile and two-term exponential model -------------------------

def build_capacity_profile(c_new: float, i_bat_ma: float, step: float = 0.01,
                           span: float = 2.5) -> np.ndarray:
    """Rows of ``(delta_c, fcc_fraction)`` for C_now stepped up from ``c_new``."""
    if step <= 0:
        raise ValueError("step must be positive")
    n = int(round(span / step))
    c_now = c_new + step * np.arange(n + 1)
    fcc = i_bat_ma / c_now
    return np.column_stack([c_now - c_new, fcc / (i_bat_ma / c_new)])


def _two_exp(x, a, b, c, d):
    return a * np.exp(b * x) + c * np.exp(d * x)


@dataclass(frozen=True)
class ExpCapacityModel:
    """``fraction = a*exp(b*dc) + c*exp(d*dc)`` with ``dc = C_now - C_new``."""

    a: float
    b: float
    c: float
    d: float
    r2: float = float("nan")
    rmse: float = float("nan")

    def __call__(self, delta_c):
        return _two_exp(np.asarray(delta_c, dtype=float), self.a, self.b, self.c, self.d)


_FIT_SEED = (0.5, -1.0, 0.5, -3.0)


def fit_exp_model(profile, max_nfev: int = 5000, restarts: int = 4,
                  seed: int = 0) -> ExpCapacityModel:
    """Least-squares fit of the two-term exponential to a capacity profile.

    Starts from ``a=0.5, b=-1, c=0.5, d=-3`` and retries from jittered
    seeds when the solver fails. Decay rates are bounded to be <= 0.
    """
    prof = np.asarray(profile, dtype=float)
    if prof.ndim != 2 or prof.shape[1] != 2 or prof.shape[0] < 8:
        raise ValueError("profile needs at least 8 (delta_c, fraction) rows")
    x, y = prof[:, 0], prof[:, 1]
    rng = np.random.default_rng(seed)
    bounds = ([-np.inf, -np.inf, -np.inf, -np.inf], [np.inf, 0.0, np.inf, 0.0])
    seeds = [np.array(_FIT_SEED)]
    seeds += [np.array(_FIT_SEED) * rng.uniform(0.5, 1.5, 4) for _ in range(restarts)]
    best = None
    for p0 in seeds:
        try:
            popt, _ = curve_fit(_two_exp, x, y, p0=p0, bounds=bounds, max_nfev=max_nfev)
        except (RuntimeError, ValueError):
            continue
        resid = y - _two_exp(x, *popt)
        sse = float(resid @ resid)
        if not np.isfinite(sse):
            continue
        if best is None or sse < best[1]:
            best = (popt, sse)
    if best is None:
        raise FitDiverged("two-term exponential fit failed from every seed")
    popt, sse = best
    sst = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - sse / sst if sst > 0 else 1.0
    rmse = math.sqrt(sse / y.size)
    return ExpCapacityModel(*map(float, popt), r2=r2, rmse=rmse)


# -- estimation from a telemetry trace ---------------------------------------

def _attr(s, name):
    return s[name] if isinstance(s, dict) else getattr(s, name)


def curves_from_samples(samples: Iterable) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-SOC voltage curve, first-arrival times and one-percent time curve.

    Repeated samples at one SOC keep the maximum voltage and the earliest
    timestamp. When SOC jumps by several percent between updates the
    elapsed time is spread evenly over the skipped percents.
    """
    volts = empty_curve()
    first_t = empty_curve()
    for s in samples:
        k = int(_attr(s, "soc"))
        v = float(_attr(s, "voltage_mv"))
        t = float(_attr(s, "t"))
        if not np.isfinite(volts[k]) or v > volts[k]:
            volts[k] = v
        if not np.isfinite(first_t[k]) or t < first_t[k]:
            first_t[k] = t
    times = empty_curve()
    known = np.flatnonzero(np.isfinite(first_t))
    for j, k in zip(known[:-1], known[1:]):
        dt = first_t[k] - first_t[j]
        if dt > 0:
            times[j + 1:k + 1] = dt / (k - j)
    return volts, first_t, times


def estimate_from_samples(samples: Sequence, fcc_new_mah: float, c_new: float,
                          v_max_mv: float = 4200.0, strategy: str = AT_CC_END,
                          tol_mv: float = 50.0) -> FccEstimate:
    """Estimate the present FCC from one uninterrupted charging event.

    The rate curve starts at the first observed SOC at or above 10 and
    ends at the CC-phase end found on the voltage curve. A trace that
    never reaches the voltage threshold is still inside its CC phase, so
    its last observed SOC serves as the boundary.

    Raises
    ------
    InsufficientData
        Fewer than two SOC transitions inside the CC phase.
    NoCCPhase
        The voltage is already at its maximum at the first usable SOC.
    """
    samples = list(samples)
    if not samples:
        raise InsufficientData("no samples")
    volts, first_t, times = curves_from_samples(samples)
    observed = np.flatnonzero(np.isfinite(first_t))
    usable = observed[observed >= FIRST_SEGMENT_END]
    if usable.size < 2:
        raise InsufficientData("fewer than 2 SOC updates at or above SOC 10")
    start, last = int(usable[0]), int(usable[-1])
    vc = interpolate_curve(volts, start, last)
    cc_end = detect_cc_end(vc, v_max_mv, tol_mv, lo=start)
    if cc_end is None:
        cc_end = last
    elif cc_end <= start:
        raise NoCCPhase(f"voltage within {tol_mv:g} mV of {v_max_mv:g} mV from SOC {start}")
    if np.count_nonzero((usable > start) & (usable <= cc_end)) < 2:
        raise InsufficientData(f"fewer than 2 SOC transitions in CC phase [{start}, {cc_end}]")
    rates = cumulative_rate_curve(times, start, cc_end)
    c_now = select_c_rate(rates, cc_end, strategy)
    fcc = estimate_fcc(fcc_new_mah, c_new, c_now)
    return FccEstimate(
        fcc_now_mah=round_half_away(fcc),
        c_new=float(c_new),
        c_now=c_now,
        loss_fraction=1.0 - fcc / fcc_new_mah,
        cc_end_soc=cc_end,
        strategy=strategy,
        start_soc=start,
    )
