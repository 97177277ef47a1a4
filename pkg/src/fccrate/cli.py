"""Command-line entry point: ``fccrate simulate|estimate|crowd``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import cell_sim, crowd
from .estimator import estimate_from_samples
from .exceptions import FccError, InsufficientData, InvalidSpec, NoCCPhase
from .io import (ConfigError, load_config, read_csv, read_reference, read_samples,
                 write_csv, write_reference, write_samples)

log = logging.getLogger("fccrate")

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_INSUFFICIENT = 4
EXIT_NO_CC = 5

ASSESSMENT_COLUMNS = ("device_id", "model_id", "status", "ucc", "u_rate",
                      "capacity_fraction", "loss_fraction", "n_samples")
SUMMARY_COLUMNS = ("model_id", "n_devices", "n_assessed", "n_degraded", "degraded_fraction",
                   "n_severe", "n_insufficient", "loss_min", "loss_q1", "loss_median",
                   "loss_q3", "loss_max")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _config(args):
    try:
        cfg = load_config(args.config)
        overrides = {}
        if getattr(args, "seed", None) is not None:
            overrides["seed"] = args.seed
        if getattr(args, "strategy", None):
            overrides["strategy"] = args.strategy.replace("-", "_")
        if getattr(args, "vmax", None) is not None:
            overrides["v_max_mv"] = args.vmax
        if getattr(args, "tol_mv", None) is not None:
            overrides["tol_mv"] = args.tol_mv
        return replace(cfg, **overrides).validate()
    except ConfigError as exc:
        raise CliError(EXIT_CONFIG, f"config error: {exc}") from None


def _preset(cfg):
    try:
        base = cell_sim.get_preset(cfg.model)
    except InvalidSpec as exc:
        raise CliError(EXIT_CONFIG, f"config error: {exc}") from None
    kw = {}
    for key, attr in (("fcc_new_mah", "fcc_new_mah"), ("r_internal_mohm", "r_internal_mohm"),
                      ("v_max_mv", "v_max_mv"), ("controller_ma", "controller_ma")):
        if getattr(cfg, key) is not None:
            kw[attr] = getattr(cfg, key)
    if cfg.charger_ma is not None:
        kw["ac_charger_ma" if cfg.charger == "ac" else "usb_charger_ma"] = cfg.charger_ma
    return replace(base, **kw)


# -- simulate ----------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _config(args)
    preset = _preset(cfg)
    try:
        if cfg.n_devices == 1 and cfg.degraded_fraction == 0:
            samples, truths = _simulate_single(cfg, preset)
        else:
            fleet = cell_sim.FleetConfig(
                preset, n_devices=cfg.n_devices, degraded_fraction=cfg.degraded_fraction,
                loss_range=(cfg.loss_min, cfg.loss_max), events_per_device=cfg.events_per_device,
                days=cfg.days, unplug_prob=cfg.unplug_prob, usb_event_prob=cfg.usb_event_prob,
                i_sys_range_ma=(0.0, cfg.i_sys_ma), jitter_s=cfg.jitter_s,
                voltage_noise_mv=cfg.voltage_noise_mv, dt=cfg.dt)
            samples, truths = cell_sim.simulate_fleet(fleet, seed=cfg.seed)
    except InvalidSpec as exc:
        raise CliError(EXIT_CONFIG, f"config error: {exc}") from None
    out = Path(args.out)
    truth_path = out.with_name(out.name + ".truth.csv")
    try:
        write_samples(samples, out)
        write_csv([t.as_dict() for t in truths], truth_path)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write output: {exc}") from None
    print(f"wrote {len(samples)} samples from {len(truths)} device(s) to {out}")
    print(f"ground truth: {truth_path}")
    return 0


def _simulate_single(cfg, preset):
    cell = cell_sim.CellSpec(preset.fcc_new_mah, cfg.fcc_now_mah or preset.fcc_new_mah,
                             v_max_mv=preset.v_max_mv, ocv_curve=preset.ocv_curve,
                             r_internal_mohm=preset.r_internal_mohm,
                             cutoff_c_rate=cfg.cutoff_c_rate,
                             r_aging_exponent=cfg.r_aging_exponent)
    rng = np.random.default_rng(cfg.seed)
    dev = f"{preset.model_id}-0000"
    res = cell_sim.run_charge(cell, preset.charger(cfg.charger), preset.controller(cfg.derating),
                              cell_sim.LoadProfile.constant(cfg.i_sys_ma), cfg.start_soc, cfg.dt,
                              cfg.temp_c, t0=1_357_000_000, jitter_s=cfg.jitter_s, rng=rng,
                              device_id=dev, model_id=preset.model_id)
    truth = cell_sim.DeviceTruth(dev, preset.model_id, cell.fcc_new_mah, cell.fcc_now_mah,
                                 1.0 - cell.fcc_now_mah / cell.fcc_new_mah,
                                 cell.fcc_now_mah < cell.fcc_new_mah, preset.c_new(cfg.charger))
    return res.samples, [truth]


# -- estimate ----------------------------------------------------------------

def _split_events(samples, max_step_s=crowd.MAX_SECONDS_PER_PERCENT):
    samples = sorted(samples, key=lambda s: (s.t, s.soc))
    events, cur = [], []
    for s in samples:
        if cur and (s.t - cur[-1].t > max_step_s or s.soc < cur[-1].soc):
            events.append(cur)
            cur = []
        cur.append(s)
    if cur:
        events.append(cur)
    return events


def cmd_estimate(args) -> int:
    cfg = _config(args)
    try:
        samples, bad = read_samples(args.samples)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {args.samples}: {exc}") from None
    preset = _preset(cfg)
    fcc_new = args.fcc_new or cfg.fcc_new_mah or preset.fcc_new_mah
    c_new = args.c_new or cfg.c_new or preset.c_new(cfg.charger)
    v_max = cfg.v_max_mv or preset.v_max_mv
    events = _split_events(samples)
    if not events:
        raise CliError(EXIT_INSUFFICIENT, "InsufficientData: no well-formed samples")
    # the longest uninterrupted event, latest on ties
    event = max(events, key=lambda e: (len(e), e[-1].t))
    try:
        est = estimate_from_samples(event, fcc_new, c_new, v_max, cfg.strategy, cfg.tol_mv)
    except InsufficientData as exc:
        raise CliError(EXIT_INSUFFICIENT, f"InsufficientData: {exc}") from None
    except NoCCPhase as exc:
        raise CliError(EXIT_NO_CC, f"NoCCPhase: {exc}") from None
    if args.json:
        d = est.as_dict()
        d.update(fcc_new_mah=fcc_new, malformed_lines=bad)
        print(json.dumps(d, sort_keys=True))
    else:
        print(f"fcc_now_mah   {est.fcc_now_mah}")
        print(f"fcc_new_mah   {fcc_new:g}")
        print(f"loss          {100 * est.loss_fraction:.1f} %")
        print(f"c_new         {est.c_new:.4f} C")
        print(f"c_now         {est.c_now:.4f} C")
        print(f"cc_end_soc    {est.cc_end_soc}")
        print(f"strategy      {est.strategy}")
        if bad:
            print(f"malformed     {bad} line(s) skipped")
    return 0


# -- crowd -------------------------------------------------------------------

def _read_for_crowd(path):
    try:
        return read_samples(path)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc}") from None


def cmd_build_reference(args) -> int:
    cfg = _config(args)
    params = cfg.pipeline_params()
    samples, bad = _read_for_crowd(args.samples)
    pre = crowd.preprocess(samples, params)
    refs, rejects = crowd.build_references(pre, params)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        for model, ref in refs.items():
            write_reference(ref, out / f"reference_{model}.json")
        write_csv([r.__dict__ for r in rejects], out / "rejects.csv",
                  ["model_id", "reason", "detail"])
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write references: {exc}") from None
    print(f"samples {pre.n_input}, kept {pre.n_kept}, malformed {bad}")
    print(f"{'model':<14}{'mcc':>5}{'m_rate':>9}{'samples':>9}{'coverage':>10}")
    for model, ref in refs.items():
        print(f"{model:<14}{ref.mcc:>5}{ref.m_rate:>9.4f}{ref.sample_count:>9}"
              f"{ref.coverage_fraction:>10.2f}")
    for r in rejects:
        print(f"rejected {r.model_id}: {r.reason}")
    return 0


def cmd_assess(args) -> int:
    cfg = _config(args)
    params = cfg.pipeline_params()
    ref_dir = Path(args.ref_dir)
    ref_paths = sorted(ref_dir.glob("reference_*.json")) if ref_dir.is_dir() else []
    if not ref_paths:
        raise CliError(EXIT_CONFIG, f"no reference models in {ref_dir}; run build-reference first")
    refs = {}
    for p in ref_paths:
        try:
            ref = read_reference(p)
        except (OSError, ValueError, KeyError) as exc:
            raise CliError(EXIT_IO, f"cannot read {p}: {exc}") from None
        refs[ref.model_id] = ref
    samples, bad = _read_for_crowd(args.samples)
    assessments = crowd.assess_fleet(crowd.preprocess(samples, params), refs, params)
    try:
        write_csv([a.as_dict() for a in assessments], args.out, ASSESSMENT_COLUMNS)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {args.out}: {exc}") from None
    counts = {}
    for a in assessments:
        counts[a.status] = counts.get(a.status, 0) + 1
    print(f"assessed {len(assessments)} device(s): "
          + ", ".join(f"{k} {v}" for k, v in sorted(counts.items())))
    return 0


def _opt_float(s):
    return None if s in ("", None) else float(s)


def _opt_int(s):
    return None if s in ("", None) else int(s)


def read_assessments(path) -> list:
    return [crowd.DeviceAssessment(
        device_id=r["device_id"], model_id=r["model_id"], ucc=_opt_int(r["ucc"]),
        u_rate=_opt_float(r["u_rate"]), capacity_fraction=_opt_float(r["capacity_fraction"]),
        loss_fraction=_opt_float(r["loss_fraction"]), status=r["status"],
        n_samples=int(r["n_samples"])) for r in read_csv(path)]


def cmd_report(args) -> int:
    path = Path(args.assessments)
    if not path.is_file():
        raise CliError(EXIT_CONFIG, f"no assessment file {path}; run assess first")
    try:
        summaries = crowd.fleet_report(read_assessments(path))
    except (KeyError, ValueError) as exc:
        raise CliError(EXIT_IO, f"malformed assessment file {path}: {exc}") from None
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_csv([s.as_dict() for s in summaries], out / "report.csv", SUMMARY_COLUMNS)
        plot_rows = [{"model_id": s.model_id, "stat": name, "loss": getattr(s, f"loss_{name}")}
                     for s in summaries for name in ("min", "q1", "median", "q3", "max")]
        write_csv(plot_rows, out / "plot_data.csv", ["model_id", "stat", "loss"])
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write report: {exc}") from None
    print(f"{'model':<14}{'devices':>8}{'degraded':>9}{'frac':>7}{'severe':>7}"
          f"{'q1':>7}{'median':>8}{'q3':>7}")
    for s in summaries:
        print(f"{s.model_id:<14}{s.n_devices:>8}{s.n_degraded:>9}{s.degraded_fraction:>7.2f}"
              f"{s.n_severe:>7}{s.loss_q1:>7.3f}{s.loss_median:>8.3f}{s.loss_q3:>7.3f}")
    return 0


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file (default: $FCCRATE_CONFIG)")
    common.add_argument("--seed", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="fccrate", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="simulate a cell or a fleet")
    s.add_argument("--out", required=True, help="output JSONL sample file")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", parents=[common], help="estimate FCC from one device's samples")
    e.add_argument("samples")
    e.add_argument("--fcc-new", type=float, help="labeled capacity, mAh")
    e.add_argument("--c-new", type=float, help="C-rate of a new battery on this charger")
    e.add_argument("--strategy", choices=("at-cc-end", "max-in-cc"))
    e.add_argument("--vmax", type=float, help="CV threshold voltage, mV")
    e.add_argument("--tol-mv", type=float)
    e.add_argument("--json", action="store_true")
    e.set_defaults(func=cmd_estimate)

    c = sub.add_parser("crowd", help="crowdsourced reference and loss pipeline")
    csub = c.add_subparsers(dest="crowd_command", required=True)
    b = csub.add_parser("build-reference", parents=[common])
    b.add_argument("samples")
    b.add_argument("--out", required=True, help="directory for reference JSON and rejects")
    b.add_argument("--vmax", type=float)
    b.add_argument("--tol-mv", type=float)
    b.set_defaults(func=cmd_build_reference)
    a = csub.add_parser("assess", parents=[common])
    a.add_argument("samples")
    a.add_argument("--ref-dir", required=True)
    a.add_argument("--out", required=True, help="assessment CSV")
    a.add_argument("--tol-mv", type=float)
    a.set_defaults(func=cmd_assess)
    r = csub.add_parser("report", parents=[common])
    r.add_argument("assessments", help="assessment CSV from 'crowd assess'")
    r.add_argument("--out", required=True, help="directory for report.csv and plot_data.csv")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"fccrate: {exc}", file=sys.stderr)
        return exc.code
    except FccError as exc:
        print(f"fccrate: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
