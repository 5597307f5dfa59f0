"""Experiment orchestration: the end-to-end link, calibration, Monte Carlo BER and sweeps."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from dmtsim import channel as ch
from dmtsim.config import LinkConfig
from dmtsim.loading import (
    InfeasibleLoading,
    LoadingError,
    SnrProfile,
    SubcarrierPlan,
    chow_bitload,
    cioffi_powerload,
    estimate_snr,
    rate_budget,
)
from dmtsim.rxchain import (
    FEC_LIMIT,
    Metrics,
    correct_cfo,
    count_ber,
    demodulate_frame,
    estimate_cfo,
    frame_spectra,
    schmidl_cox_sync,
)
from dmtsim.signalcore import Rng, SignalBlock, hermitian_ifft
from dmtsim.txchain import build_frame, clip_level, condition, make_training_symbols

log = logging.getLogger(__name__)

SWEEP_PARAMETERS = {
    "cp_samples": "cp_samples",
    "n_ts": "n_ts",
    "detune_ghz": "detune_ghz",
    "launch_power_dbm": "launch_power_dbm",
    "target_osnr_db": "noise.target_osnr_db",
    "fft_len": "fft_len",
}


class LinkError(RuntimeError):
    """A stage of the simulated link failed; ``stage`` names it."""

    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"{stage}: {exc}")
        self.stage = stage
        self.__cause__ = exc


class CalibrationError(RuntimeError):
    """The rate target cannot be loaded onto the measured SNR profile."""


class UnreachableTarget(RuntimeError):
    def __init__(self, msg: str, best_ber: float):
        super().__init__(msg)
        self.best_ber = best_ber


# ---------------------------------------------------------------------------
# the link


def framing(cfg: LinkConfig) -> dict:
    return dict(cp_samples=cfg.cp_samples, n_ts=cfg.n_ts, frame_symbols=cfg.frame_symbols,
                oversampling=cfg.oversampling)


def target_bits(cfg: LinkConfig) -> int:
    return rate_budget(cfg.net_rate * cfg.rate_multiplier, cfg.fft_len, cfg.cp_samples, cfg.n_ts,
                       cfg.frame_symbols, cfg.fs)


def training_symbols(cfg: LinkConfig, plan: SubcarrierPlan) -> np.ndarray:
    return make_training_symbols(plan, Rng(cfg.seed).stream("ts"))


def transmit(cfg: LinkConfig, plan: SubcarrierPlan, ts: np.ndarray, payload_bits) -> tuple:
    """Frame assembly and DAC conditioning; returns (frame, drive, full-scale level)."""
    frame = build_frame(payload_bits, plan, ts, cfg.fs)
    level = clip_level(frame.time, cfg.tx.clip_ratio_db)
    return frame, condition(frame.time, cfg.tx), level


def propagate(cfg: LinkConfig, drive: SignalBlock, full_scale: float, rng: Rng, key) -> tuple[SignalBlock, float]:
    """MZM -> mux -> fiber -> ASE -> demux -> PIN/TIA -> ADC.  Returns (ADC samples, measured OSNR)."""
    stage = "mzm"
    try:
        os_rate = cfg.fs * cfg.sim.optical_oversampling
        field_ = ch.mzm_modulate(ch.resample(drive, os_rate), cfg.mzm.mod_index, cfg.mzm.bias_phase,
                                 cfg.mzm.vpi, full_scale=full_scale)
        mux, demux = cfg.filters()
        stage = "mux"
        field_ = ch.optical_bandpass(field_, mux)
        stage = "fiber"
        if cfg.nonlinear:
            field_ = ch.ssfm_propagate(field_, cfg.fiber, cfg.launch_power_dbm, cfg.sim.ssfm_step_km)
        else:
            field_ = ch.attenuate(ch.apply_dispersion(ch.set_power(field_, cfg.launch_power_dbm), cfg.fiber),
                                  cfg.fiber)
        stage = "ase"
        osnr = math.inf
        if cfg.noise.osnr_enabled:
            field_, osnr = ch.add_ase(field_, cfg.noise.target_osnr_db, rng.stream("ase", *key))
        stage = "demux"
        field_ = ch.optical_bandpass(field_, demux)
        stage = "pin"
        rx = ch.pin_detect(field_, cfg.rx.elec_bw_ghz, cfg.noise, rng.stream("elec", *key), out_rate=cfg.fs)
    except Exception as exc:  # noqa: BLE001 - re-raised with the stage attached
        raise LinkError(stage, exc) from exc
    return rx, osnr


def capture(rx: SignalBlock, guard: int, offset: int) -> tuple[np.ndarray, int]:
    """Cut a capture from the looped receive waveform with the frame starting at ``guard + offset``."""
    n = len(rx)
    start = guard + offset
    idx = (np.arange(start + n + guard) - start) % n
    return rx.samples[idx], start


def preamble_body(plan: SubcarrierPlan, ts: np.ndarray) -> np.ndarray:
    """Time-domain bodies (without CP) of the training symbols, shape (n_ts, N)."""
    full = np.zeros((ts.shape[0], plan.fft_len // 2 - 1), dtype=np.complex128)
    full[:, : plan.n_data] = ts
    return hermitian_ifft(full, plan.fft_len)


@dataclass
class FrameOutcome:
    tx_bits: np.ndarray
    rx_bits: np.ndarray
    tx_symbols: np.ndarray
    spectra: np.ndarray
    true_start: int
    est_start: int
    osnr_db: float


def simulate_frame(cfg: LinkConfig, plan: SubcarrierPlan, ts: np.ndarray, rng: Rng, key, demod: bool = True) -> FrameOutcome:
    bits = rng.stream("payload", *key).integers(0, 2, plan.payload_bits, dtype=np.uint8)
    frame, drive, level = transmit(cfg, plan, ts, bits)
    rx, osnr = propagate(cfg, drive, level, rng, key)
    guard = 2 * plan.symbol_len
    offset = int(rng.stream("offset", *key).integers(0, plan.frame_len))
    samples, true_start = capture(rx, guard, offset)
    try:
        # every capture holds a frame, so a weak metric still yields a
        # best guess; a wrong one just demodulates to errors
        est = schmidl_cox_sync(samples, plan.fft_len, plan.cp_samples, cfg.rx.sync_threshold, min_peak=0.0,
                               search=(guard // 2, guard // 2 + plan.frame_len),
                               preamble=preamble_body(plan, ts))
    except Exception as exc:  # noqa: BLE001
        raise LinkError("sync", exc) from exc
    # the capture is periodic: fold the estimate onto a whole frame; a wild
    # estimate is clamped and simply demodulates to errors
    room = len(samples) - plan.frame_len
    if not 0 <= est <= room:
        est %= plan.frame_len
        est = min(est, room)
    if cfg.rx.cfo_correction:
        samples = correct_cfo(samples, estimate_cfo(samples, plan.fft_len, est, plan.cp_samples), plan.fft_len)
    if demod:
        res = demodulate_frame(samples, plan, ts, est, cfg.rx.update_gain)
        rx_bits, spectra = res.bits, res.raw
    else:
        rx_bits, spectra = None, frame_spectra(samples, plan, est)
    return FrameOutcome(bits, rx_bits, frame.symbols, spectra, true_start, est, osnr)


def probe_snr(cfg: LinkConfig) -> SnrProfile:
    """Per-subcarrier SNR measured with equal-power 16-QAM on every usable subcarrier."""
    probe = SubcarrierPlan.uniform(cfg.fft_len, cfg.cp_samples, cfg.n_ts, 4, cfg.frame_symbols, cfg.oversampling)
    ts = training_symbols(cfg, probe)
    rng = Rng(cfg.seed)
    Ys, Xs = [], []
    for i in range(cfg.sim.probe_frames):
        out = simulate_frame(cfg, probe, ts, rng, ("probe", i), demod=False)
        Ys.append(out.spectra[cfg.n_ts :])
        Xs.append(out.tx_symbols[cfg.n_ts :])
    return estimate_snr(np.stack(Ys), np.stack(Xs), cfg.fft_len, cfg.loading.snr_ceiling_db)


def calibrate(cfg: LinkConfig, snr: SnrProfile | None = None) -> SubcarrierPlan:
    """Probe the link, then bit-load the rate target and equalize margins with power loading."""
    snr = probe_snr(cfg) if snr is None else snr
    target = target_bits(cfg)
    try:
        bits = chow_bitload(snr, target, cfg.loading)
        power = cioffi_powerload(snr, bits, cfg.loading)
    except InfeasibleLoading as exc:
        raise CalibrationError(f"infeasible: {exc}") from exc
    except LoadingError as exc:
        raise CalibrationError(str(exc)) from exc
    return SubcarrierPlan(bits, power, cfg.fft_len, **framing(cfg))


def run_link(cfg: LinkConfig, plan: SubcarrierPlan, n_frames: int | None = None,
             min_errors: int | None = None, snr: SnrProfile | None = None) -> Metrics:
    """Monte Carlo BER: frames until ``min_errors`` bit errors or ``n_frames`` frames."""
    n_frames = cfg.frames_per_point if n_frames is None else n_frames
    min_errors = cfg.sim.min_errors if min_errors is None else min_errors
    ts = training_symbols(cfg, plan)
    rng = Rng(cfg.seed)
    errors = counted = 0
    osnrs = []
    frames = 0
    reason = "max_frames"
    for i in range(n_frames):
        out = simulate_frame(cfg, plan, ts, rng, ("frame", i))
        c = count_ber(out.tx_bits, out.rx_bits)
        errors += c.bit_errors
        counted += c.bits_counted
        osnrs.append(out.osnr_db)
        frames += 1
        if errors >= min_errors:
            reason = "min_errors"
            break
    ber = errors / counted if counted else float("nan")
    m_osnr = float(10 * np.log10(np.mean(10 ** (np.array(osnrs) / 10)))) if osnrs else float("nan")
    return Metrics(ber, errors, counted, snr, m_osnr + cfg.sim.osnr_report_offset_db, frames, reason)


def evaluate(cfg: LinkConfig) -> Metrics:
    """Calibrate at this point, then measure BER."""
    snr = probe_snr(cfg)
    plan = calibrate(cfg, snr)
    return run_link(cfg, plan, snr=snr)


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepRow:
    value: float
    metrics: Metrics
    seed: int


@dataclass
class SweepResult:
    parameter: str
    rows: list[SweepRow]
    fingerprint: str
    seed: int
    frames_cap: int
    notes: list[str] = field(default_factory=list)

    def best(self) -> SweepRow:
        return min(self.rows, key=lambda r: (r.metrics.ber, r.value))


def point_config(cfg: LinkConfig, parameter: str, value, index: int) -> LinkConfig:
    key = SWEEP_PARAMETERS[parameter]
    seed = Rng(cfg.seed).derive_seed("point", index)
    return cfg.with_overrides({key: value, "seed": seed})


def sweep(cfg: LinkConfig, parameter: str, values) -> SweepResult:
    """Recalibrate and measure at each value; rows come back ordered by value."""
    if parameter not in SWEEP_PARAMETERS:
        raise ValueError(f"unknown sweep parameter {parameter!r}; choose from {sorted(SWEEP_PARAMETERS)}")
    values = sorted(values)
    rows = []
    notes = []
    for i, v in enumerate(values):
        pcfg = point_config(cfg, parameter, v, i)
        try:
            m = evaluate(pcfg)
        except CalibrationError as exc:
            # the point cannot carry the rate at all: report it as a total failure
            notes.append(f"{parameter}={v}: {exc}")
            m = Metrics(0.5, 0, 0, None, float("nan"), 0, "infeasible")
        log.info("%s=%s ber=%.3g (%d errors, %d frames)", parameter, v, m.ber, m.bit_errors, m.frames)
        rows.append(SweepRow(v, m, pcfg.seed))
    return SweepResult(parameter, rows, cfg.fingerprint(), cfg.seed, cfg.frames_per_point, notes)


@dataclass
class RequiredOsnr:
    osnr_db: float
    saturated: bool
    curve: SweepResult
    diagnostics: list[str] = field(default_factory=list)


def interpolate_crossing(osnr, ber, target: float = FEC_LIMIT, floor=None) -> tuple[float, bool]:
    """First OSNR where log10(BER) crosses ``target``, linear between grid points.

    ``floor`` gives per-point lower bounds used in place of zero BER.
    Returns (osnr_db, saturated); raises UnreachableTarget if never reached.
    """
    osnr = np.asarray(osnr, dtype=float)
    ber = np.asarray(ber, dtype=float)
    if floor is not None:
        ber = np.maximum(ber, np.asarray(floor, dtype=float))
    order = np.argsort(osnr)
    osnr, ber = osnr[order], ber[order]
    below = np.flatnonzero(ber <= target)
    if below.size == 0:
        raise UnreachableTarget(f"BER target {target:g} not reached; best {ber.min():.3g}", float(ber.min()))
    i = int(below[0])
    if i == 0:
        return float(osnr[0]), True
    y0, y1 = math.log10(ber[i - 1]), math.log10(ber[i])
    x0, x1 = osnr[i - 1], osnr[i]
    t = (math.log10(target) - y0) / (y1 - y0)
    return float(x0 + t * (x1 - x0)), False


def required_osnr(cfg: LinkConfig, ber_target: float = FEC_LIMIT, osnr_grid=None) -> RequiredOsnr:
    """Required OSNR for ``ber_target`` from an OSNR sweep with per-point recalibration."""
    grid = np.arange(14.0, 51.0, 1.0) if osnr_grid is None else np.asarray(osnr_grid, dtype=float)
    curve = sweep(cfg, "target_osnr_db", grid)
    osnr = np.array([r.value for r in curve.rows])
    ber = np.array([r.metrics.ber for r in curve.rows])
    floor = np.array([0.5 / r.metrics.bits_counted if r.metrics.bits_counted else 0.5 for r in curve.rows])
    diags = list(curve.notes)
    for a, b in zip(curve.rows, curve.rows[1:]):
        ma, mb = a.metrics, b.metrics
        if mb.bit_errors and ma.bits_counted and mb.ber > ma.ber:
            # allow three standard deviations of counting noise
            slack = 3 * math.sqrt(mb.bit_errors) / mb.bits_counted + 3 * math.sqrt(max(ma.bit_errors, 1)) / ma.bits_counted
            if mb.ber - ma.ber > slack:
                diags.append(f"non-monotone: BER rises from {ma.ber:.3g} at {a.value} dB to {mb.ber:.3g} at {b.value} dB")
    osnr_db, sat = interpolate_crossing(osnr, ber, ber_target, floor)
    return RequiredOsnr(osnr_db, sat, curve, diags)


def snr_spectrum(cfg: LinkConfig) -> list[tuple[int, float, float]]:
    """(subcarrier, frequency GHz, SNR dB) from a calibration probe run."""
    prof = probe_snr(cfg)
    f = prof.freqs(cfg.fs) / 1e9
    return [(k + 1, float(f[k]), float(prof.snr_db[k])) for k in range(prof.n_data)]


def with_point(cfg: LinkConfig, **kw) -> LinkConfig:
    return replace(cfg, **kw)
