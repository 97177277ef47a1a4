"""CC-CV charging simulator for smartphone lithium-ion cells.

The cell is an open-circuit voltage source in series with an internal
resistance. During constant current the terminal voltage is
``ocv(soc) + I * r_eff``; once it reaches ``v_max_mv`` the controller
holds the voltage and the current falls to ``(v_max - ocv) / r_eff``
until it drops to the cutoff C-rate. SOC is coulomb-counted against the
cell's present capacity and a telemetry sample is emitted every time the
integer SOC changes.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .exceptions import InvalidSpec, NonConvergence

# piecewise-linear (soc %, mV) breakpoints
DEFAULT_OCV = ((0.0, 3400.0), (10.0, 3600.0), (90.0, 4100.0), (100.0, 4180.0))

VOLTAGE_RANGE_MV = (2500.0, 4600.0)
CHARGER_KINDS = ("ac", "usb", "none")
HEALTH_STATES = ("good", "dead", "cold", "other")


@dataclass(frozen=True)
class CellSpec:
    fcc_new_mah: float
    fcc_now_mah: float
    v_max_mv: float = 4200.0
    ocv_curve: tuple = DEFAULT_OCV
    r_internal_mohm: float = 92.0
    cutoff_c_rate: float = 0.07
    r_aging_exponent: float = 1.0

    def __post_init__(self):
        if self.fcc_new_mah <= 0:
            raise InvalidSpec("fcc_new_mah must be positive")
        if not 0 < self.fcc_now_mah <= 1.1 * self.fcc_new_mah:
            raise InvalidSpec(f"fcc_now_mah {self.fcc_now_mah} outside (0, 1.1 * fcc_new_mah]")
        if self.r_internal_mohm <= 0:
            raise InvalidSpec("r_internal_mohm must be positive")
        if not 0 < self.cutoff_c_rate < 1:
            raise InvalidSpec("cutoff_c_rate must be in (0, 1)")
        pts = np.asarray(self.ocv_curve, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise InvalidSpec("ocv_curve must be (soc, mV) pairs")
        if pts[0, 0] > 0 or pts[-1, 0] < 100 or np.any(np.diff(pts[:, 0]) <= 0):
            raise InvalidSpec("ocv_curve SOC breakpoints must increase and span 0..100")
        if np.any(np.diff(pts[:, 1]) < 0):
            raise InvalidSpec("ocv_curve must be nondecreasing")
        if self.ocv(100.0) > self.v_max_mv:
            raise InvalidSpec("ocv at 100% exceeds v_max_mv")
        object.__setattr__(self, "ocv_curve", tuple(map(tuple, pts.tolist())))

    def ocv(self, soc):
        pts = self.ocv_curve
        return np.interp(soc, [p[0] for p in pts], [p[1] for p in pts])

    def r_eff_mohm(self, temp_c: float = 25.0) -> float:
        aging = (self.fcc_new_mah / self.fcc_now_mah) ** self.r_aging_exponent
        return self.r_internal_mohm * aging * temp_factor(temp_c)


@dataclass(frozen=True)
class ChargerSpec:
    max_current_ma: float
    kind: str = "ac"

    def __post_init__(self):
        if self.max_current_ma <= 0:
            raise InvalidSpec("charger max_current_ma must be positive")
        if self.kind not in ("ac", "usb"):
            raise InvalidSpec(f"charger kind must be ac or usb, got {self.kind!r}")


@dataclass(frozen=True)
class ControllerSpec:
    max_current_ma: float
    derating: float = 1.0

    def __post_init__(self):
        if self.max_current_ma <= 0:
            raise InvalidSpec("controller max_current_ma must be positive")
        if not 0 < self.derating <= 1:
            raise InvalidSpec("derating must be in (0, 1]")


@dataclass(frozen=True)
class LoadProfile:
    """System current draw as a function of seconds since plug-in."""

    i_sys: Callable[[float], float] = field(default=lambda t: 0.0)

    @classmethod
    def constant(cls, ma: float) -> "LoadProfile":
        if ma < 0:
            raise InvalidSpec("system current must be >= 0")
        return cls(lambda t: ma)

    def __call__(self, t: float) -> float:
        i = float(self.i_sys(t))
        if i < 0:
            raise InvalidSpec(f"negative system current {i} at t={t}")
        return i


@dataclass(frozen=True)
class ChargingSample:
    t: int
    soc: int
    voltage_mv: float
    temp_c: float = 25.0
    charger: str = "ac"
    health: str = "good"
    cpu: float = 0.0
    device_id: str = "dev0"
    model_id: str = "model0"

    def __post_init__(self):
        if not 0 <= self.soc <= 100:
            raise ValueError(f"soc {self.soc} outside [0, 100]")
        lo, hi = VOLTAGE_RANGE_MV
        if not lo <= self.voltage_mv <= hi:
            raise ValueError(f"voltage {self.voltage_mv} mV outside [{lo}, {hi}]")
        if self.charger not in CHARGER_KINDS:
            raise ValueError(f"unknown charger {self.charger!r}")
        if self.health not in HEALTH_STATES:
            raise ValueError(f"unknown health {self.health!r}")
        if not 0 <= self.cpu <= 1:
            raise ValueError(f"cpu {self.cpu} outside [0, 1]")

    def as_dict(self) -> dict:
        return {
            "t": self.t, "soc": self.soc, "voltage_mv": self.voltage_mv,
            "temp_c": self.temp_c, "charger": self.charger, "health": self.health,
            "cpu": self.cpu, "device_id": self.device_id, "model_id": self.model_id,
        }


@dataclass
class ChargeResult:
    samples: list
    delivered_mah: float
    cc_end_soc: float | None  # SOC where terminal voltage first hit v_max
    cc_current_ma: float
    duration_s: float
    terminated_by: str  # "cutoff", "full" or "unplugged"
    trajectory: np.ndarray | None = None  # rows of (t, soc, current mA, voltage mV, in_cv)


def temp_factor(temp_c: float) -> float:
    """Resistance multiplier: 1 in [21, 40] C, rising linearly to 3 at 0 C."""
    if temp_c >= 21.0:
        return 1.0
    return 1.0 + 2.0 * (21.0 - max(temp_c, 0.0)) / 21.0


def effective_charger_current(charger: ChargerSpec, controller: ControllerSpec) -> float:
    return min(charger.max_current_ma, controller.max_current_ma) * controller.derating


def battery_current(i_chg: float, i_sys: float) -> float:
    if i_chg < 0 or i_sys < 0:
        raise ValueError("currents must be >= 0")
    return i_chg - i_sys


def measure_fcc_by_discharge(cell: CellSpec) -> float:
    """Ground-truth capacity, read the way a lab discharge test would."""
    return cell.fcc_now_mah


def run_charge(cell: CellSpec, charger: ChargerSpec, controller: ControllerSpec,
               load: LoadProfile | None = None, start_soc: float = 0.0, dt: float = 1.0,
               temp_c: float = 25.0, *, t0: int = 0, jitter_s: float = 0.0,
               rng: np.random.Generator | None = None, stop_soc: float = 100.0,
               stall_s: float = 6 * 3600.0, device_id: str = "dev0",
               model_id: str = "model0", cpu: float = 0.0,
               record: bool = False) -> ChargeResult:
    """Integrate one charge and return the samples plus ground truth.

    ``stop_soc`` below 100 models unplugging early. ``stall_s`` bounds the
    simulated time allowed between two SOC increments. With ``record`` the
    per-step state is kept in ``ChargeResult.trajectory``.
    """
    if not start_soc < 100:
        raise InvalidSpec("start_soc must be < 100")
    if not 0.1 < dt <= 60:
        raise InvalidSpec("dt must be in (0.1, 60] s")
    load = load or LoadProfile()
    if jitter_s and rng is None:
        rng = np.random.default_rng(0)

    fcc = cell.fcc_now_mah
    r_ohm = cell.r_eff_mohm(temp_c) / 1000.0
    i_chg = effective_charger_current(charger, controller)
    i_cut = cell.cutoff_c_rate * fcc
    v_max = cell.v_max_mv
    soc_pts = [p[0] for p in cell.ocv_curve]
    ocv_pts = [p[1] for p in cell.ocv_curve]

    def ocv(s):
        # scalar np.interp dominates the loop; same result
        j = min(max(bisect.bisect_right(soc_pts, s), 1), len(soc_pts) - 1)
        x0, x1 = soc_pts[j - 1], soc_pts[j]
        y0, y1 = ocv_pts[j - 1], ocv_pts[j]
        if s <= x0:
            return y0
        if s >= x1:
            return y1
        return y0 + (y1 - y0) * (s - x0) / (x1 - x0)

    samples = []

    def emit(t, soc, v):
        stamp = t0 + t
        if jitter_s:
            stamp += rng.uniform(-jitter_s, jitter_s)
        v = min(max(v, VOLTAGE_RANGE_MV[0]), VOLTAGE_RANGE_MV[1])
        samples.append(ChargingSample(
            t=int(round(stamp)), soc=int(soc), voltage_mv=float(round(v)), temp_c=temp_c,
            charger=charger.kind, health="good", cpu=cpu,
            device_id=device_id, model_id=model_id))

    q = start_soc / 100.0 * fcc
    soc = start_soc
    t = 0.0
    cv = False
    cc_end_soc = None
    delivered = 0.0
    last_advance = 0.0
    i_cc0 = battery_current(i_chg, load(0.0))
    first_i = i_cc0
    v0 = ocv(soc) + i_cc0 * r_ohm
    if v0 >= v_max:
        cv, cc_end_soc = True, soc
        v0 = v_max
    emit(0.0, math.floor(soc), v0)
    next_k = math.floor(soc) + 1
    terminated_by = "full"
    rows = [] if record else None

    while True:
        i_cc = battery_current(i_chg, load(t))
        if not cv:
            if ocv(soc) + i_cc * r_ohm >= v_max:
                cv, cc_end_soc = True, soc
        if cv:
            i = min(i_cc, (v_max - ocv(soc)) / r_ohm)
            if i <= i_cut:
                terminated_by = "cutoff"
                break
        else:
            i = i_cc
        if record:
            rows.append((t, soc, i, v_max if cv else ocv(soc) + i * r_ohm, float(cv)))
        dq = i * dt / 3600.0
        new_q = min(q + dq, fcc)
        new_soc = 100.0 * new_q / fcc
        delivered += new_q - q
        while next_k <= 100 and new_soc >= next_k - 1e-12 and next_k <= stop_soc:
            frac = (next_k - soc) / (new_soc - soc)
            tk = t + frac * dt
            v = v_max if cv else ocv(next_k) + i * r_ohm
            emit(tk, next_k, v)
            next_k += 1
            last_advance = tk
        q, soc, t = new_q, new_soc, t + dt
        if soc >= 100.0 - 1e-9 or soc >= stop_soc:
            terminated_by = "full" if soc >= 100.0 - 1e-9 else "unplugged"
            break
        if t - last_advance > stall_s:
            raise NonConvergence(
                f"SOC stuck at {soc:.2f}% for {stall_s:.0f} s (battery current {i:.1f} mA)")
    return ChargeResult(samples=samples, delivered_mah=delivered, cc_end_soc=cc_end_soc,
                        cc_current_ma=first_i, duration_s=t, terminated_by=terminated_by,
                        trajectory=np.array(rows) if record else None)


def simulate_charge(cell: CellSpec, charger: ChargerSpec, controller: ControllerSpec,
                    load: LoadProfile | None = None, start_soc: float = 0.0,
                    dt: float = 1.0, temp_c: float = 25.0, **kwargs) -> list:
    """Samples emitted at every integer SOC change of one CC-CV charge."""
    return run_charge(cell, charger, controller, load, start_soc, dt, temp_c, **kwargs).samples


# -- presets and synthetic fleets --------------------------------------------

@dataclass(frozen=True)
class ModelPreset:
    model_id: str
    fcc_new_mah: float
    controller_ma: float
    ac_charger_ma: float
    r_internal_mohm: float
    usb_charger_ma: float = 426.0
    v_max_mv: float = 4200.0
    ocv_curve: tuple = DEFAULT_OCV

    def cell(self, fcc_now_mah: float | None = None, **kw) -> CellSpec:
        return CellSpec(self.fcc_new_mah, fcc_now_mah or self.fcc_new_mah,
                        v_max_mv=self.v_max_mv, ocv_curve=self.ocv_curve,
                        r_internal_mohm=self.r_internal_mohm, **kw)

    def charger(self, kind: str = "ac") -> ChargerSpec:
        return ChargerSpec(self.ac_charger_ma if kind == "ac" else self.usb_charger_ma, kind)

    def controller(self, derating: float = 1.0) -> ControllerSpec:
        return ControllerSpec(self.controller_ma, derating)

    def c_new(self, kind: str = "ac") -> float:
        """Label C-rate of a new battery on the given charger."""
        return effective_charger_current(self.charger(kind), self.controller()) / self.fcc_new_mah


# resistances put the 50 mV CC-end threshold at SOC 74 / 85 / 76 when idle
PRESETS = {
    "GT-I9100": ModelPreset("GT-I9100", 1650.0, 650.0, 700.0, 241.0),
    "GT-I9300": ModelPreset("GT-I9300", 2100.0, 925.0, 1000.0, 92.0),
    "GT-I9505": ModelPreset("GT-I9505", 2600.0, 1560.0, 2100.0, 91.0),
}
PRESET_ALIASES = {"gs2": "GT-I9100", "gs3": "GT-I9300", "gs4": "GT-I9505"}


def get_preset(name: str) -> ModelPreset:
    key = PRESET_ALIASES.get(name.lower(), name)
    try:
        return PRESETS[key]
    except KeyError:
        raise InvalidSpec(f"unknown model preset {name!r}; known: {sorted(PRESETS)}") from None


@dataclass(frozen=True)
class FleetConfig:
    """One device model's share of a synthetic crowd."""

    preset: ModelPreset
    n_devices: int = 100
    degraded_fraction: float = 0.3
    loss_range: tuple = (0.10, 0.50)
    new_spread: float = 0.0
    events_per_device: int = 4
    days: float = 45.0
    start_soc_range: tuple = (0.0, 30.0)
    unplug_prob: float = 0.2
    i_sys_range_ma: tuple = (0.0, 10.0)
    temp_range_c: tuple = (22.0, 35.0)
    usb_event_prob: float = 0.1
    jitter_s: float = 0.0
    voltage_noise_mv: float = 0.0
    dt: float = 2.0
    t0: int = 1_357_000_000

    def __post_init__(self):
        if self.n_devices < 1:
            raise InvalidSpec("n_devices must be >= 1")
        if not 0 <= self.degraded_fraction <= 1:
            raise InvalidSpec("degraded_fraction must be in [0, 1]")
        lo, hi = self.loss_range
        if not 0 <= lo <= hi < 1:
            raise InvalidSpec("loss_range must satisfy 0 <= lo <= hi < 1")
        if self.events_per_device < 1:
            raise InvalidSpec("events_per_device must be >= 1")


@dataclass(frozen=True)
class DeviceTruth:
    device_id: str
    model_id: str
    fcc_new_mah: float
    fcc_now_mah: float
    loss_fraction: float
    degraded: bool
    c_new: float

    def as_dict(self) -> dict:
        return {
            "device_id": self.device_id, "model_id": self.model_id,
            "fcc_new_mah": self.fcc_new_mah, "fcc_now_mah": self.fcc_now_mah,
            "loss_fraction": self.loss_fraction, "degraded": int(self.degraded),
            "c_new": self.c_new,
        }


def simulate_fleet(configs, seed: int = 0) -> tuple[list, list]:
    """Samples and ground truth for a synthetic crowd of devices.

    Exactly ``round(n_devices * degraded_fraction)`` devices per model are
    degraded, with loss drawn uniformly from ``loss_range``. Every device
    gets its own generator derived from ``seed`` so output does not
    depend on model ordering.
    """
    if isinstance(configs, FleetConfig):
        configs = [configs]
    samples, truths = [], []
    for m, cfg in enumerate(configs):
        p = cfg.preset
        n_deg = int(round(cfg.n_devices * cfg.degraded_fraction))
        order = np.random.default_rng([seed, m]).permutation(cfg.n_devices)
        degraded = set(order[:n_deg].tolist())
        for i in range(cfg.n_devices):
            rng = np.random.default_rng([seed, m, i])
            dev_id = f"{p.model_id}-{i:04d}"
            if i in degraded:
                loss = float(rng.uniform(*cfg.loss_range))
            else:
                loss = float(rng.uniform(-cfg.new_spread, cfg.new_spread)) if cfg.new_spread else 0.0
            fcc_now = p.fcc_new_mah * (1.0 - loss)
            truths.append(DeviceTruth(dev_id, p.model_id, p.fcc_new_mah, fcc_now, loss,
                                      i in degraded, p.c_new("ac")))
            cell = p.cell(fcc_now)
            i_sys = float(rng.uniform(*cfg.i_sys_range_ma))
            days = np.sort(rng.uniform(0.0, cfg.days, cfg.events_per_device))
            for day in days:
                kind = "usb" if rng.uniform() < cfg.usb_event_prob else "ac"
                start = float(rng.uniform(*cfg.start_soc_range))
                stop = float(rng.uniform(60.0, 100.0)) if rng.uniform() < cfg.unplug_prob else 100.0
                temp = float(rng.uniform(*cfg.temp_range_c))
                t_start = cfg.t0 + int(day * 86400)
                res = run_charge(cell, p.charger(kind), p.controller(), LoadProfile.constant(i_sys),
                                 start_soc=start, dt=cfg.dt, temp_c=round(temp, 1), t0=t_start,
                                 jitter_s=cfg.jitter_s, rng=rng, stop_soc=stop,
                                 device_id=dev_id, model_id=p.model_id)
                evt = res.samples
                if cfg.voltage_noise_mv:
                    noise = rng.normal(0.0, cfg.voltage_noise_mv, len(evt))
                    evt = [_with_voltage(s, s.voltage_mv + n) for s, n in zip(evt, noise)]
                samples.extend(evt)
    samples.sort(key=lambda s: (s.device_id, s.t, s.soc))
    return samples, truths


def _with_voltage(s: ChargingSample, v: float) -> ChargingSample:
    v = min(max(round(v), VOLTAGE_RANGE_MV[0]), VOLTAGE_RANGE_MV[1])
    return ChargingSample(s.t, s.soc, float(v), s.temp_c, s.charger, s.health, s.cpu,
                          s.device_id, s.model_id)
