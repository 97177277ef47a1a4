"""File formats: JSONL samples, key=value config, reference JSON, CSV reports."""
from __future__ import annotations

import configparser
import csv
import json
import math
import os
from dataclasses import dataclass, fields
from pathlib import Path

from .cell_sim import ChargingSample

SAMPLE_FIELDS = ("t", "soc", "voltage_mv", "temp_c", "charger", "health", "cpu",
                 "device_id", "model_id")
CONFIG_ENV = "FCCRATE_CONFIG"


def sample_from_dict(d: dict) -> ChargingSample:
    """Build a sample from a JSON record; unknown keys are ignored."""
    t = d["t"]
    soc = d["soc"]
    if isinstance(t, bool) or isinstance(soc, bool):
        raise TypeError("t and soc must be numbers")
    if float(t) != int(t) or float(soc) != int(soc):
        raise ValueError("t and soc must be integers")
    return ChargingSample(
        t=int(t), soc=int(soc), voltage_mv=float(d["voltage_mv"]),
        temp_c=float(d.get("temp_c", 25.0)), charger=str(d.get("charger", "ac")),
        health=str(d.get("health", "good")), cpu=float(d.get("cpu", 0.0)),
        device_id=str(d["device_id"]), model_id=str(d["model_id"]))


def read_samples(path) -> tuple[list, int]:
    """Parse a JSONL sample file. Returns (samples, malformed line count)."""
    samples, bad = [], 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                samples.append(sample_from_dict(rec))
            except (ValueError, TypeError, KeyError, AttributeError):
                bad += 1
    return samples, bad


def write_samples(samples, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in samples:
            fh.write(json.dumps(s.as_dict(), separators=(",", ":")) + "\n")


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return v


def write_csv(rows, path, columns=None) -> None:
    rows = list(rows)
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r.get(c)) for c in columns])


def read_csv(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def write_reference(ref, path) -> None:
    Path(path).write_text(json.dumps(ref.as_dict(), indent=1, sort_keys=True) + "\n",
                          encoding="utf-8")


def read_reference(path):
    from .crowd import ReferenceModel
    return ReferenceModel.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# -- run configuration -------------------------------------------------------

class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Plain ``key = value`` settings shared by every command."""

    # simulator
    model: str = "gs3"
    fcc_new_mah: float | None = None
    fcc_now_mah: float | None = None
    r_internal_mohm: float | None = None
    v_max_mv: float | None = None
    cutoff_c_rate: float = 0.07
    r_aging_exponent: float = 1.0
    charger: str = "ac"
    charger_ma: float | None = None
    controller_ma: float | None = None
    derating: float = 1.0
    i_sys_ma: float = 10.0
    start_soc: float = 0.0
    dt: float = 1.0
    temp_c: float = 25.0
    jitter_s: float = 0.0
    # fleet
    n_devices: int = 1
    degraded_fraction: float = 0.0
    loss_min: float = 0.10
    loss_max: float = 0.50
    events_per_device: int = 4
    days: float = 45.0
    unplug_prob: float = 0.2
    usb_event_prob: float = 0.1
    voltage_noise_mv: float = 0.0
    # estimator
    tol_mv: float = 50.0
    strategy: str = "at_cc_end"
    c_new: float | None = None
    # pipeline
    min_model_samples: int = 250
    min_user_samples: int = 25
    temp_min_c: float = 21.0
    temp_max_c: float = 40.0
    skew_alpha: float = 0.05
    grubbs_alpha: float = 0.05
    coverage_floor: float = 0.6
    window_days: float = 30.0
    min_loss: float = 0.05
    cpu_max: float | None = None
    seed: int = 0

    _positive = ("cutoff_c_rate", "dt", "n_devices", "events_per_device", "days", "tol_mv",
                 "min_model_samples", "min_user_samples", "skew_alpha", "grubbs_alpha",
                 "coverage_floor", "window_days")

    def validate(self) -> "RunConfig":
        for name in self._positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.strategy not in ("at_cc_end", "max_in_cc"):
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        if self.charger not in ("ac", "usb"):
            raise ConfigError(f"charger must be ac or usb, got {self.charger!r}")
        if not 0 <= self.degraded_fraction <= 1:
            raise ConfigError("degraded_fraction must be in [0, 1]")
        return self

    def pipeline_params(self):
        from .crowd import PipelineParams
        return PipelineParams(
            tol_mv=self.tol_mv, skew_alpha=self.skew_alpha, grubbs_alpha=self.grubbs_alpha,
            min_model_samples=self.min_model_samples, min_user_samples=self.min_user_samples,
            coverage_floor=self.coverage_floor, temp_range_c=(self.temp_min_c, self.temp_max_c),
            window_s=self.window_days * 86400.0, min_loss=self.min_loss, cpu_max=self.cpu_max,
            **({"v_max_candidates": (self.v_max_mv,)} if self.v_max_mv else {}))


def _coerce(name: str, raw: str):
    hint = RunConfig.__dataclass_fields__[name].type
    raw = raw.strip()
    if raw.lower() in ("", "none") and "None" in str(hint):
        return None
    try:
        if hint.startswith("int"):
            return int(raw)
        if hint.startswith("float"):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r}") from None
    return raw


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        cp.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    known = {f.name for f in fields(RunConfig)}
    values = {}
    for key, raw in cp["run"].items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = _coerce(key, raw)
    return RunConfig(**values).validate()


def load_config(path=None) -> RunConfig:
    """Read the config at ``path``, else ``$FCCRATE_CONFIG``, else defaults."""
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return RunConfig().validate()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)
