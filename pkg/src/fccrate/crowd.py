"""Crowdsourced capacity-loss pipeline.

Samples from many devices of one model are pooled into a reference
voltage curve and a reference one-percent time curve. The reference
C-rate at the end of the CC phase (``m_rate``) stands in for a new
battery's rate; each device's own rate over its recent samples
(``u_rate``) gives the remaining capacity as ``m_rate / u_rate``.
"""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .cell_sim import ChargingSample
from .estimator import (FIRST_SEGMENT_END, cumulative_rate_curve, detect_cc_end)
from .exceptions import InsufficientSamples, NoCCPhase, TooSparse
from .stats import (LEFT, N_SOC, empty_curve, grubbs_iterative, interpolate_curve,
                    outlier_clean_voltage, skew_direction)

log = logging.getLogger(__name__)

MAX_SECONDS_PER_PERCENT = 36.0 / 0.07  # slowest possible percent before cutoff
FORMAT_VERSION = 1

OK = "ok"
DEGRADED = "degraded"
SEVERE = "severe"
INSUFFICIENT = "insufficient_data"


@dataclass(frozen=True)
class PipelineParams:
    tol_mv: float = 50.0
    skew_alpha: float = 0.05
    grubbs_alpha: float = 0.05
    min_model_samples: int = 250
    min_user_samples: int = 25
    coverage_floor: float = 0.6
    temp_range_c: tuple = (21.0, 40.0)
    max_step_s: float = MAX_SECONDS_PER_PERCENT
    window_s: float = 30 * 86400.0
    min_loss: float = 0.05
    cpu_max: float | None = None
    v_max_candidates: tuple = (4200.0, 4350.0)

    def __post_init__(self):
        for name in ("tol_mv", "skew_alpha", "grubbs_alpha", "min_model_samples",
                     "min_user_samples", "coverage_floor", "max_step_s", "window_s"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 <= self.min_loss < 1:
            raise ValueError("min_loss must be in [0, 1)")


@dataclass(frozen=True)
class ChargingEvent:
    device_id: str
    model_id: str
    samples: tuple
    delta_t: tuple  # seconds since the previous sample, None for the first

    @property
    def soc_steps(self) -> tuple:
        socs = [s.soc for s in self.samples]
        return (None,) + tuple(b - a for a, b in zip(socs, socs[1:]))


@dataclass
class PreprocessResult:
    events: dict = field(default_factory=dict)  # device_id -> [ChargingEvent]
    n_input: int = 0
    n_kept: int = 0
    n_malformed: int = 0

    def models(self) -> dict:
        """model_id -> {device_id: [ChargingEvent]}"""
        out = defaultdict(dict)
        for dev, evts in self.events.items():
            out[evts[0].model_id][dev] = evts
        return dict(sorted(out.items()))


def preprocess(samples: Iterable, params: PipelineParams = PipelineParams()) -> PreprocessResult:
    """Filter to good AC charging at room temperature and split into events.

    Dict records are validated on the way in; records that fail are
    counted as malformed and skipped. A new event starts whenever SOC
    drops or more than ``max_step_s`` passes between samples.
    """
    from .io import sample_from_dict

    res = PreprocessResult()
    per_device = defaultdict(list)
    t_lo, t_hi = params.temp_range_c
    for rec in samples:
        res.n_input += 1
        if not isinstance(rec, ChargingSample):
            try:
                rec = sample_from_dict(rec)
            except (ValueError, TypeError, KeyError):
                res.n_malformed += 1
                continue
        if rec.charger != "ac" or rec.health != "good":
            continue
        if not t_lo <= rec.temp_c <= t_hi:
            continue
        if params.cpu_max is not None and rec.cpu > params.cpu_max:
            continue
        per_device[rec.device_id].append(rec)
        res.n_kept += 1

    for dev in sorted(per_device):
        recs = sorted(per_device[dev], key=lambda s: (s.t, s.soc))
        events, cur = [], [recs[0]]
        for prev, s in zip(recs, recs[1:]):
            if s.t - prev.t > params.max_step_s or s.soc < prev.soc:
                events.append(cur)
                cur = []
            cur.append(s)
        events.append(cur)
        res.events[dev] = [
            ChargingEvent(dev, e[0].model_id, tuple(e),
                          (None,) + tuple(float(b.t - a.t) for a, b in zip(e, e[1:])))
            for e in events
        ]
    return res


# -- reference construction --------------------------------------------------

@dataclass
class ReferenceModel:
    model_id: str
    voltage_curve: np.ndarray
    mcc: int
    time_curve: np.ndarray
    m_rate: float
    sample_count: int
    coverage_fraction: float
    v_max_mv: float = 4200.0

    def as_dict(self) -> dict:
        def arr(a):
            return [None if not np.isfinite(v) else float(v) for v in a]
        return {
            "format_version": FORMAT_VERSION,
            "model_id": self.model_id,
            "voltage_curve": arr(self.voltage_curve),
            "mcc": int(self.mcc),
            "time_curve": arr(self.time_curve),
            "m_rate": float(self.m_rate),
            "sample_count": int(self.sample_count),
            "coverage_fraction": float(self.coverage_fraction),
            "v_max_mv": float(self.v_max_mv),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReferenceModel":
        if d.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported reference format {d.get('format_version')!r}")

        def arr(xs):
            return np.array([np.nan if v is None else v for v in xs], dtype=float)
        return cls(d["model_id"], arr(d["voltage_curve"]), int(d["mcc"]), arr(d["time_curve"]),
                   float(d["m_rate"]), int(d["sample_count"]), float(d["coverage_fraction"]),
                   float(d.get("v_max_mv", 4200.0)))


def aggregate(values, alpha: float = 0.05) -> float:
    """Median for a left-skewed sample, 75th percentile otherwise."""
    if skew_direction(values, alpha) == LEFT:
        return float(np.median(values))
    return float(np.percentile(values, 75))


def infer_v_max(voltages, candidates=(4200.0, 4350.0)) -> float:
    p99 = float(np.percentile(voltages, 99))
    return min(candidates, key=lambda c: (abs(c - p99), c))


def _one_percent_steps(events):
    """Yield (soc, delta_t, sample) for samples reached by a single-percent step."""
    for e in events:
        for s, step, dt in zip(e.samples, e.soc_steps, e.delta_t):
            if step == 1 and dt is not None and dt > 0:
                yield s.soc, dt, s


def build_reference(model_id: str, events, params: PipelineParams = PipelineParams()) -> ReferenceModel:
    """Reference curves and rate for one device model.

    ``events`` is an iterable of :class:`ChargingEvent` from all devices of
    the model.

    Raises
    ------
    InsufficientSamples
        Fewer than ``min_model_samples`` samples.
    TooSparse
        Voltage curve coverage below ``coverage_floor`` or too few time entries.
    """
    events = list(events)
    n = sum(len(e.samples) for e in events)
    if n < params.min_model_samples:
        raise InsufficientSamples(f"{model_id}: {n} samples < {params.min_model_samples}")

    by_soc = defaultdict(list)
    for e in events:
        for s in e.samples:
            by_soc[s.soc].append(s.voltage_mv)
    v_max = infer_v_max([v for vs in by_soc.values() for v in vs], params.v_max_candidates)

    raw = empty_curve()
    for k, vs in by_soc.items():
        raw[k] = aggregate(vs, params.skew_alpha)
    coverage = float(np.count_nonzero(np.isfinite(raw[1:]))) / (N_SOC - 1)
    if coverage < params.coverage_floor:
        raise TooSparse(f"{model_id}: SOC coverage {coverage:.2f} < {params.coverage_floor}")

    lo = FIRST_SEGMENT_END
    known = np.flatnonzero(np.isfinite(raw))
    top = int(known.max())
    vc = interpolate_curve(raw, lo, top)
    mcc = _cc_end_or_top(vc, v_max, params.tol_mv, top)
    vc = outlier_clean_voltage(vc, lo, mcc, params.grubbs_alpha)
    mcc = _cc_end_or_top(vc, v_max, params.tol_mv, top)
    if mcc <= lo + 1:
        raise NoCCPhase(f"{model_id}: reference CC phase ends at SOC {mcc}")

    steps = defaultdict(list)
    for k, dt, _ in _one_percent_steps(events):
        if lo < k <= mcc:
            steps[k].append(dt)
    tc = empty_curve()
    for k, dts in steps.items():
        tc[k] = aggregate(dts, params.skew_alpha)
    seg = tc[lo + 1:mcc + 1]
    for j in grubbs_iterative(seg, params.grubbs_alpha):
        tc[lo + 1 + j] = np.nan
    tc = interpolate_curve(tc, lo + 1, mcc)
    m_rate = float(cumulative_rate_curve(tc, lo, mcc)[mcc])
    return ReferenceModel(model_id, vc, mcc, tc, m_rate, n, coverage, v_max)


def _cc_end_or_top(vc, v_max, tol, top) -> int:
    cc = detect_cc_end(vc, v_max, tol)
    return top if cc is None else cc


# -- per-device assessment ---------------------------------------------------

@dataclass(frozen=True)
class DeviceAssessment:
    device_id: str
    model_id: str
    ucc: int | None
    u_rate: float | None
    capacity_fraction: float | None
    loss_fraction: float | None
    status: str
    n_samples: int = 0

    def as_dict(self) -> dict:
        return {
            "device_id": self.device_id, "model_id": self.model_id, "ucc": self.ucc,
            "u_rate": self.u_rate, "capacity_fraction": self.capacity_fraction,
            "loss_fraction": self.loss_fraction, "status": self.status,
            "n_samples": self.n_samples,
        }


def _recent(events, window_s):
    newest = max(s.t for e in events for s in e.samples)
    cutoff = newest - window_s
    out = []
    for e in events:
        keep = [i for i, s in enumerate(e.samples) if s.t >= cutoff]
        if keep:
            out.append(ChargingEvent(e.device_id, e.model_id,
                                     tuple(e.samples[i] for i in keep),
                                     tuple(e.delta_t[i] if i > keep[0] else None for i in keep)))
    return out


def assess_device(events, reference: ReferenceModel,
                  params: PipelineParams = PipelineParams()) -> DeviceAssessment:
    """Capacity loss of one device against its model's reference.

    Uses the device's most recent ``window_s`` of samples and the maximum
    voltage per SOC. Status ``severe`` means no usable CC phase: the
    voltage is at its maximum from the first SOC, or never reaches it
    although the device charged past the reference CC end.
    """
    events = list(events)
    dev, model = events[0].device_id, events[0].model_id

    def result(status, ucc=None, u_rate=None, cap=None, loss=None, n=0):
        return DeviceAssessment(dev, model, ucc, u_rate, cap, loss, status, n)

    events = _recent(events, params.window_s)
    lo = FIRST_SEGMENT_END
    n_cc = sum(1 for e in events for s in e.samples if lo <= s.soc <= reference.mcc)
    if n_cc < params.min_user_samples:
        return result(INSUFFICIENT, n=n_cc)

    volts = empty_curve()
    for e in events:
        for s in e.samples:
            if not volts[s.soc] >= s.voltage_mv:
                volts[s.soc] = s.voltage_mv
    best_v = empty_curve()
    times = empty_curve()
    for k, dt, s in _one_percent_steps(events):
        if not best_v[k] >= s.voltage_mv:
            best_v[k], times[k] = s.voltage_mv, dt

    known = np.flatnonzero(np.isfinite(volts))
    known = known[known >= lo]
    if known.size < 2:
        return result(INSUFFICIENT, n=n_cc)
    first, top = int(known[0]), int(known[-1])
    vc = interpolate_curve(volts, first, top)
    ucc = detect_cc_end(vc, reference.v_max_mv, params.tol_mv, lo=first)
    if ucc is None:
        if top >= reference.mcc:
            return result(SEVERE, n=n_cc)
        return result(INSUFFICIENT, n=n_cc)
    if ucc <= first:
        return result(SEVERE, ucc=0, n=n_cc)

    start = max(first, lo)
    try:
        tc = interpolate_curve(times, start + 1, ucc)
        u_rate = float(cumulative_rate_curve(tc, start, ucc)[ucc])
    except TooSparse:
        return result(INSUFFICIENT, ucc=ucc, n=n_cc)
    if u_rate > reference.m_rate:
        cap = reference.m_rate / u_rate
        loss = 1.0 - cap
        status = DEGRADED if loss >= params.min_loss else OK
        return result(status, ucc, u_rate, cap, loss, n_cc)
    return result(OK, ucc, u_rate, 1.0, 0.0, n_cc)


# -- reporting ---------------------------------------------------------------

@dataclass(frozen=True)
class ModelSummary:
    model_id: str
    n_devices: int
    n_assessed: int
    n_degraded: int
    degraded_fraction: float
    n_severe: int
    n_insufficient: int
    loss_min: float
    loss_q1: float
    loss_median: float
    loss_q3: float
    loss_max: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def fleet_report(assessments: Iterable[DeviceAssessment]) -> list[ModelSummary]:
    """Per-model degraded counts and loss quartiles of degraded devices.

    Devices with insufficient data are excluded from the degraded
    fraction's denominator. Quartiles are 0 when no device is degraded.
    """
    per_model = defaultdict(list)
    for a in assessments:
        per_model[a.model_id].append(a)
    out = []
    for model in sorted(per_model):
        rows = per_model[model]
        assessed = [a for a in rows if a.status != INSUFFICIENT]
        losses = np.array([a.loss_fraction for a in rows if a.status == DEGRADED], dtype=float)
        qs = np.percentile(losses, [0, 25, 50, 75, 100]) if losses.size else np.zeros(5)
        out.append(ModelSummary(
            model_id=model,
            n_devices=len(rows),
            n_assessed=len(assessed),
            n_degraded=int(losses.size),
            degraded_fraction=losses.size / len(assessed) if assessed else 0.0,
            n_severe=sum(a.status == SEVERE for a in rows),
            n_insufficient=len(rows) - len(assessed),
            loss_min=float(qs[0]), loss_q1=float(qs[1]), loss_median=float(qs[2]),
            loss_q3=float(qs[3]), loss_max=float(qs[4]),
        ))
    return out


# -- orchestration -----------------------------------------------------------

@dataclass
class Reject:
    model_id: str
    reason: str
    detail: str


def build_references(pre: PreprocessResult, params: PipelineParams = PipelineParams()):
    """References for every qualifying model, plus rejects with reasons."""
    refs, rejects = {}, []
    for model, devices in pre.models().items():
        events = [e for dev in sorted(devices) for e in devices[dev]]
        try:
            refs[model] = build_reference(model, events, params)
        except InsufficientSamples as exc:
            rejects.append(Reject(model, "insufficient_samples", str(exc)))
        except TooSparse as exc:
            rejects.append(Reject(model, "too_sparse", str(exc)))
        except NoCCPhase as exc:
            rejects.append(Reject(model, "no_cc_phase", str(exc)))
    return refs, rejects


def assess_fleet(pre: PreprocessResult, references: dict,
                 params: PipelineParams = PipelineParams()) -> list[DeviceAssessment]:
    out = []
    for model, devices in pre.models().items():
        ref = references.get(model)
        if ref is None:
            continue
        for dev in sorted(devices):
            out.append(assess_device(devices[dev], ref, params))
    return out
