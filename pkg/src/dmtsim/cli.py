"""Command-line front end: ``dmtsim <subcommand> [--config F] [--seed S] [--out F] [--set k=v ...]``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from dmtsim import harness as H
from dmtsim.config import ConfigError, LinkConfig, parse_value
from dmtsim.loading import margins
from dmtsim.signalcore import Rng
from dmtsim.txchain import export_waveform, frame_layout

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_UNREACHABLE = 4

OSNR_CURVE_HEADER = ["osnr_db", "ber", "bit_errors", "bits_counted", "fft_len", "cp_samples", "n_ts",
                     "sideband", "distance_km", "seed"]
SPECTRUM_HEADER = ["subcarrier", "freq_ghz", "snr_db"]

SWEEPS = {
    "sweep-cp": ("cp_samples", [2, 4, 8, 16, 32, 64, 128, 256, 512]),
    "sweep-ts": ("n_ts", list(range(1, 21))),
    "sweep-detune": ("detune_ghz", [0, 5, 10, 15, 20, 25, 30]),
    "sweep-power": ("launch_power_dbm", list(range(-7, 10))),
}


def fmt(v) -> str:
    """CSV cell: integers verbatim, floats with 9 significant digits."""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.9g}"
    return str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def write_meta(out: str | None, meta: dict) -> None:
    """JSON sidecar next to ``out`` (skipped for stdout)."""
    if out is not None:
        Path(out + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def parse_list(text: str) -> list[float]:
    """``a,b,c`` or ``start:stop:step`` (stop inclusive)."""
    if ":" in text:
        start, stop, step = (float(p) for p in text.split(":"))
        if step <= 0:
            raise ConfigError("grid step must be positive")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        vals = [start + i * step for i in range(n)]
    else:
        vals = [float(p) for p in text.split(",") if p.strip()]
    return [int(v) if float(v).is_integer() else v for v in vals]


def load_config(args) -> LinkConfig:
    cfg = LinkConfig()
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        cfg = LinkConfig.from_json(text)
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = parse_value(value)
    if args.seed is not None:
        overrides["seed"] = args.seed
    return cfg.with_overrides(overrides) if overrides else cfg


def sweep_meta(cfg: LinkConfig, res: H.SweepResult) -> dict:
    return {
        "parameter": res.parameter,
        "fingerprint": res.fingerprint,
        "seed": res.seed,
        "frames_cap": res.frames_cap,
        "min_errors": cfg.sim.min_errors,
        "frames": [r.metrics.frames for r in res.rows],
        "stop_reasons": [r.metrics.stop_reason for r in res.rows],
        "notes": res.notes,
        "config": cfg.to_dict(),
    }


# ---------------------------------------------------------------------------
# subcommands


def cmd_calibrate(cfg: LinkConfig, args) -> int:
    snr = H.probe_snr(cfg)
    plan = H.calibrate(cfg, snr)
    m = margins(snr, plan.bits, plan.power, cfg.loading)
    doc = {
        "fingerprint": cfg.fingerprint(),
        "seed": cfg.seed,
        "target_bits": H.target_bits(cfg),
        "bits_per_symbol": plan.bits_per_symbol,
        "bits": plan.bits.tolist(),
        "power": [float(f"{p:.9g}") for p in plan.power],
        "snr_db": [float(f"{s:.9g}") for s in snr.snr_db],
        "margin_db": float(f"{10 * math.log10(float(np.mean(m[plan.active]))):.9g}") if plan.active.any() else None,
    }
    emit(json.dumps(doc, indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_run(cfg: LinkConfig, args) -> int:
    snr = H.probe_snr(cfg)
    plan = H.calibrate(cfg, snr)
    m = H.run_link(cfg, plan, snr=snr)
    osnr = cfg.noise.target_osnr_db if cfg.noise.osnr_enabled else math.inf
    row = [osnr, m.ber, m.bit_errors, m.bits_counted, cfg.fft_len, cfg.cp_samples, cfg.n_ts, cfg.sideband,
           cfg.distance_km, cfg.seed]
    emit(csv_text(OSNR_CURVE_HEADER, [row]), args.out)
    write_meta(args.out, {"fingerprint": cfg.fingerprint(), "seed": cfg.seed, "frames": m.frames,
                          "frames_cap": cfg.frames_per_point, "min_errors": cfg.sim.min_errors,
                          "stop_reason": m.stop_reason, "measured_osnr_db": m.measured_osnr_db,
                          "config": cfg.to_dict()})
    if args.waveform:
        bits = Rng(cfg.seed).stream("payload", "frame", 0).integers(0, 2, plan.payload_bits, dtype=np.uint8)
        _, drive, _ = H.transmit(cfg, plan, H.training_symbols(cfg, plan), bits)
        export_waveform(drive, args.waveform, frame_layout(plan))
    return EXIT_OK


def cmd_sweep(cfg: LinkConfig, args) -> int:
    param, default = SWEEPS[args.command]
    values = parse_list(args.values) if args.values else default
    res = H.sweep(cfg, param, values)
    rows = [[r.value, r.metrics.ber, r.metrics.bit_errors, r.metrics.bits_counted, r.seed] for r in res.rows]
    emit(csv_text([param, "ber", "bit_errors", "bits_counted", "seed"], rows), args.out)
    write_meta(args.out, sweep_meta(cfg, res))
    return EXIT_OK


def _grid(args):
    return parse_list(args.grid) if args.grid else None


def cmd_osnr_curve(cfg: LinkConfig, args) -> int:
    grid = _grid(args) or list(np.arange(14.0, 51.0, 1.0))
    res = H.sweep(cfg, "target_osnr_db", grid)
    rows = [[r.value, r.metrics.ber, r.metrics.bit_errors, r.metrics.bits_counted, cfg.fft_len, cfg.cp_samples,
             cfg.n_ts, cfg.sideband, cfg.distance_km, r.seed] for r in res.rows]
    emit(csv_text(OSNR_CURVE_HEADER, rows), args.out)
    write_meta(args.out, sweep_meta(cfg, res))
    return EXIT_OK


def cmd_required_osnr(cfg: LinkConfig, args) -> int:
    try:
        req = H.required_osnr(cfg, args.target, _grid(args))
    except H.UnreachableTarget as exc:
        sys.stderr.write(f"dmtsim: {exc}\n")
        emit(json.dumps({"reachable": False, "best_ber": exc.best_ber}, indent=2) + "\n", args.out)
        return EXIT_UNREACHABLE
    doc = {
        "reachable": True,
        "required_osnr_db": float(f"{req.osnr_db:.9g}"),
        "saturated": req.saturated,
        "ber_target": args.target,
        "diagnostics": req.diagnostics,
        "fingerprint": cfg.fingerprint(),
        "seed": cfg.seed,
        "frames_cap": cfg.frames_per_point,
        "curve": [[r.value, float(f"{r.metrics.ber:.9g}"), r.metrics.bit_errors, r.metrics.bits_counted]
                  for r in req.curve.rows],
    }
    emit(json.dumps(doc, indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_snr_spectrum(cfg: LinkConfig, args) -> int:
    rows = H.snr_spectrum(cfg)
    emit(csv_text(SPECTRUM_HEADER, rows), args.out)
    write_meta(args.out, {"fingerprint": cfg.fingerprint(), "seed": cfg.seed,
                          "probe_frames": cfg.sim.probe_frames, "config": cfg.to_dict()})
    return EXIT_OK


COMMANDS = {
    "calibrate": cmd_calibrate,
    "run": cmd_run,
    **{name: cmd_sweep for name in SWEEPS},
    "osnr-curve": cmd_osnr_curve,
    "required-osnr": cmd_required_osnr,
    "snr-spectrum": cmd_snr_spectrum,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON LinkConfig; unknown keys are rejected")
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config field, dotted for nested ones (fiber.L=0)")
    common.add_argument("-v", "--verbose", action="store_true", help="progress on stderr")

    p = argparse.ArgumentParser(prog="dmtsim", description="IM/DD DMT link simulator")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("calibrate", parents=[common], help="probe SNR and print the bit/power allocation")
    run = sub.add_parser("run", parents=[common], help="calibrate and measure BER at one point")
    run.add_argument("--waveform", help="also write the first transmitted frame (float64 LE + .json sidecar)")
    for name, (param, default) in SWEEPS.items():
        sp = sub.add_parser(name, parents=[common], help=f"BER vs {param}")
        sp.add_argument("--values", help=f"a,b,c or start:stop:step (default {default[0]}..{default[-1]})")
    oc = sub.add_parser("osnr-curve", parents=[common], help="BER vs OSNR")
    oc.add_argument("--grid", help="OSNR grid in dB, a,b,c or start:stop:step (default 14:50:1)")
    ro = sub.add_parser("required-osnr", parents=[common], help="OSNR where BER crosses the target")
    ro.add_argument("--grid", help="OSNR grid in dB (default 14:50:1)")
    ro.add_argument("--target", type=float, default=H.FEC_LIMIT, help="BER target (default 3.8e-3)")
    sub.add_parser("snr-spectrum", parents=[common], help="per-subcarrier SNR from a probe run")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        sys.stderr.write(f"dmtsim: invalid config: {exc}\n")
        return EXIT_CONFIG
    except H.CalibrationError as exc:
        sys.stderr.write(f"dmtsim: calibration infeasible: {exc}\n")
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
