"""Pipeline orchestration: calibrate -> simulate -> dsp -> estimate -> keyrate.

Every stage reads and writes plain files in one output directory so it can
run on its own; :func:`run_scenario` chains them in memory without storing
waveforms.  Frames are independent given ``(master_seed, frame_id)``, so the
thread count never changes a result.  No timestamps are written anywhere.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import channel, estimation, rx, security, tx
from .config import Scenario, load_scenario
from .errors import IntegrityError, MissingArtifact, PipelineError
from .io import (
    ensure_dir, read_csv, read_iq, read_json, sha256_file, write_csv, write_iq, write_json,
)
from .snu import CalibrationRecord, calibrate, db_to_transmittance

log = logging.getLogger(__name__)

REPORT_SCHEMA = "cvqkd.report/1"
KEYRATE_SCHEMA = "cvqkd.keyrate/1"
MANIFEST = "manifest.json"

DIAG_HEADER = ["frame_index", "freq_offset_hz", "pilot_freq_hz", "pilot_snr_db",
               "residual_phase_var_rad2", "n_symbols", "lag_symbols"]
ESTIMATE_HEADER = ["frame_index", "n_symbols", "eta_hat", "xi_hat_mSNU", "sum_x2", "sum_y2", "sum_xy"]
SERIES_HEADER = ["frame_index", "accumulated_symbols", "xi_hat_mSNU", "ci_low_mSNU", "ci_high_mSNU",
                 "classical_channels_flag"]
LOSS_HEADER = ["loss_db", "eta", "rate_asymptotic", "rate_finite", "N", "positive", "cutoff_db"]
GRID_HEADER = ["beta", "N", "rate_finite", "feasible", "min_N_for_beta"]


def _map(fn, items, threads):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))  # preserves input order


# --------------------------------------------------------------------------
# manifest


def _update_manifest(out, sc: Scenario, files):
    out = Path(out)
    path = out / MANIFEST
    man = read_json(path) if path.exists() else {"files": {}}
    man.update({"scenario": sc.name, "config_sha256": sc.config_hash, "master_seed": sc.master_seed,
                "config": sc.resolved})
    for f in files:
        man["files"][Path(f).relative_to(out).as_posix()] = sha256_file(f)
    write_json(path, man)
    return man


def verify_manifest(out):
    out = Path(out)
    man = read_json(out / MANIFEST)
    for name, digest in man["files"].items():
        p = out / name
        if not p.exists():
            raise MissingArtifact(f"{p} listed in manifest but missing")
        if sha256_file(p) != digest:
            raise IntegrityError(f"checksum mismatch for {p}")
    return man


# --------------------------------------------------------------------------
# stages


def run_calibration(sc: Scenario, frame_id=0):
    vac, ele = channel.simulate_calibration(sc.channel, sc.calibration_samples, frame_id)
    return calibrate(vac, ele, sc.channel.fs)


def stage_calibrate(sc: Scenario, out):
    out = ensure_dir(out)
    cal = run_calibration(sc)
    cal.save(out / "calibration.json")
    _update_manifest(out, sc, [out / "calibration.json"])
    return cal


def simulate_frame(sc: Scenario, frame_id, keep_phase=False):
    wave, block = tx.transmit_frame(sc.tx, sc.params.V_M, frame_id)
    frame = channel.simulate_link(wave, sc.channel, sc.tx, frame_id)
    if not keep_phase:
        frame.meta.pop("true_phase", None)
    return frame, block


def stage_simulate(sc: Scenario, out, threads=1):
    out = ensure_dir(out)
    fdir = ensure_dir(out / "frames")

    def one(k):
        frame, block = simulate_frame(sc, k)
        meta = {"scenario": sc.name, "config_sha256": sc.config_hash}
        write_iq(fdir / f"rx_{k:04d}.iq", frame.samples, kind="waveform", frame_id=k,
                 sample_rate_hz=frame.fs, symbol_rate_hz=sc.tx.symbol_rate, seed=sc.master_seed,
                 units="raw", extra=meta)
        write_iq(fdir / f"tx_{k:04d}.iq", block.tx_symbols, kind="symbols", frame_id=k,
                 symbol_rate_hz=sc.tx.symbol_rate, seed=sc.master_seed, units="snu", extra=meta)
        return [fdir / f"rx_{k:04d}.iq", fdir / f"rx_{k:04d}.json", fdir / f"tx_{k:04d}.iq",
                fdir / f"tx_{k:04d}.json"]

    files = [f for fs in _map(one, range(sc.frames), threads) for f in fs]
    _update_manifest(out, sc, files)
    return files


def _with_frame(fn, frame_id, *args):
    try:
        return fn(*args)
    except PipelineError as e:
        if e.frame_index is not None:
            raise
        raise type(e)(str(e), frame_id) from e


def dsp_frame(sc: Scenario, cal: CalibrationRecord, frame, tx_symbols):
    u = sc.ukf
    kw = {"init_phase_var": u.init_phase_var, "alpha": u.alpha, "beta": u.beta, "kappa": u.kappa}
    return _with_frame(rx.run_dsp, frame.frame_id, frame, cal, sc.tx, tx_symbols, sc.params.delta_f,
                       sc.params.combined_linewidth, u.decimation, None, kw)


def _diag_row(d):
    return [d[k] for k in DIAG_HEADER]


def stage_dsp(sc: Scenario, out, threads=1):
    out = Path(out)
    cal = CalibrationRecord.load(out / "calibration.json")
    fdir = out / "frames"
    sdir = ensure_dir(out / "symbols")
    ids = sorted(int(p.stem[3:]) for p in fdir.glob("rx_*.iq"))
    if not ids:
        raise MissingArtifact(f"no frames in {fdir}")

    def one(k):
        hdr, ch = read_iq(fdir / f"rx_{k:04d}.iq")
        _, txs = read_iq(fdir / f"tx_{k:04d}.iq")
        frame = tx.SampleFrame(ch["data"], hdr["sample_rate_hz"], k)
        res = dsp_frame(sc, cal, frame, txs["data"])
        write_iq(sdir / f"sym_{k:04d}.iq", {"tx": res.block.tx_symbols, "rx": res.block.rx_symbols},
                 kind="symbol_pairs", frame_id=k, symbol_rate_hz=sc.tx.symbol_rate, seed=sc.master_seed,
                 units="snu", extra={"scenario": sc.name, "config_sha256": sc.config_hash})
        return res.diagnostics

    diags = _map(one, ids, threads)
    write_csv(out / "dsp_diagnostics.csv", DIAG_HEADER, [_diag_row(d) for d in diags], sc.provenance())
    files = [out / "dsp_diagnostics.csv"]
    for k in ids:
        files += [sdir / f"sym_{k:04d}.iq", sdir / f"sym_{k:04d}.json"]
    _update_manifest(out, sc, files)
    return diags


def _estimate_row(e: estimation.ParamEstimate):
    s = e.stats
    return [e.frame_id, e.n_symbols, e.eta_hat, e.xi_hat * 1e3, float(s.sxx), float(s.syy), float(s.sxy)]


def estimates_from_csv(path, tau, V_el, eps):
    _, header, rows = read_csv(path)
    if header != ESTIMATE_HEADER:
        raise IntegrityError(f"unexpected header in {path}")
    out = []
    for r in rows:
        st = estimation.SufficientStats(2 * int(r[1]), Fraction(float(r[4])), Fraction(float(r[5])),
                                        Fraction(float(r[6])))
        out.append(estimation.estimate_from_stats(st, tau, V_el, eps, int(r[0])))
    return out


def write_estimates(sc: Scenario, out, cal: CalibrationRecord, estimates):
    out = Path(out)
    prov = sc.provenance()
    write_csv(out / "frame_estimates.csv", ESTIMATE_HEADER, [_estimate_row(e) for e in estimates], prov)
    series = estimation.cumulative_series(estimates, sc.budget.eps_PE, sc.classical_channels)
    write_csv(out / "excess_noise.csv", SERIES_HEADER,
              [[r.frame_index, r.accumulated_symbols, r.xi_hat * 1e3, r.ci_low * 1e3, r.ci_high * 1e3,
                r.classical_channels] for r in series], prov)
    pooled = estimation.pool(*estimates)
    ci = estimation.confidence_interval(pooled, sc.budget.eps_PE, two_sided=True, min_symbols=0)
    summary = {
        "schema": "cvqkd.estimates/1",
        **prov,
        "tau": pooled.tau,
        "V_el_snu": pooled.V_el,
        "calibration_V_el_snu": cal.v_el,
        "n_symbols": pooled.n_symbols,
        "eta_hat": pooled.eta_hat,
        "xi_hat_snu": pooled.xi_hat,
        "eta_interval": [ci.eta_low, ci.eta_high],
        "xi_interval_snu": [ci.xi_low, ci.xi_high],
        "z_two_sided": ci.z,
        "worst_case_one_sided": {"eta": pooled.eta_wc, "xi_snu": pooled.xi_wc},
        "injected": {"eta": sc.params.eta, "xi_snu": sc.params.xi},
    }
    write_json(out / "estimates.json", summary)
    _update_manifest(out, sc, [out / "frame_estimates.csv", out / "excess_noise.csv", out / "estimates.json"])
    return summary, series


def stage_estimate(sc: Scenario, out):
    out = Path(out)
    cal = CalibrationRecord.load(out / "calibration.json")
    sdir = out / "symbols"
    ids = sorted(int(p.stem[4:]) for p in sdir.glob("sym_*.iq"))
    if not ids:
        raise MissingArtifact(f"no symbol blocks in {sdir}")
    ests = []
    for k in ids:
        _, ch = read_iq(sdir / f"sym_{k:04d}.iq")
        blk = tx.SymbolBlock(ch["tx"], ch["rx"], k)
        ests.append(_with_frame(estimation.estimate_params, k, blk, sc.params.tau, cal.v_el, sc.params.V_M,
                                sc.budget.eps_PE))
    return write_estimates(sc, out, cal, ests)


def keyrate_summary(sc: Scenario, estimates_summary=None):
    """Key-rate report dict.

    Fast path (no estimates) uses the scenario parameters as truth.  With
    measured estimates the asymptotic rate uses the pooled point estimates;
    the finite-size rate uses the measured one-sided worst case when the run
    holds at least N symbols and otherwise the worst case expected at N
    around the measured point estimate.
    """
    p = sc.params
    path = "fast"
    basis = "expected"
    wc = None
    if estimates_summary is not None:
        path = "full"
        p = p.replace(eta=min(estimates_summary["eta_hat"], 1.0), xi=max(estimates_summary["xi_hat_snu"], 0.0))
        if estimates_summary["n_symbols"] >= sc.N:
            w = estimates_summary["worst_case_one_sided"]
            wc = (w["eta"], w["xi_snu"])
            basis = "measured"
        else:
            basis = "extrapolated"
    asym = security.key_rate(p, sc.beta, None, sc.budget, "asymptotic", sc.fer)
    fin = security.key_rate(p, sc.beta, sc.N, sc.budget, "finite", sc.fer, worst_case=wc,
                            pe_fraction=sc.pe_fraction)
    return {
        "schema": KEYRATE_SCHEMA,
        **sc.provenance(),
        "path": path,
        "finite_basis": basis,
        "beta": sc.beta,
        "fer": sc.fer,
        "N": sc.N,
        "asymptotic": asym.to_dict(),
        "finite": fin.to_dict(),
    }


def stage_keyrate(sc: Scenario, out, fast=False):
    out = ensure_dir(out)
    est = None if fast else read_json(Path(out) / "estimates.json")
    rep = keyrate_summary(sc, est)
    write_json(out / "keyrate.json", rep)
    _update_manifest(out, sc, [out / "keyrate.json"])
    return rep


def stage_sweep(sc: Scenario, out, fast=True, threads=1):
    """Loss sweep and (N, beta) feasibility grid from the scenario's ``sweep`` block."""
    out = ensure_dir(out)
    sw = sc.sweep
    prov = sc.provenance()
    step = sw["loss_db_step"]
    if step > 0 and sw["loss_db_max"] >= sw["loss_db_min"]:
        n_pts = int(math.floor((sw["loss_db_max"] - sw["loss_db_min"]) / step + 1e-9)) + 1
        loss = sw["loss_db_min"] + step * np.arange(n_pts)
    else:
        loss = np.array([])
    beta = sw["sweep_beta"]
    if fast:
        base = sc.params
    else:
        base = _full_path_params(sc, threads)
    sweep = security.rate_vs_loss_sweep(base, loss, beta, "asymptotic")
    fin = [security.key_rate(r_p, beta, sc.N, sc.budget, "finite", 0.0, pe_fraction=sc.pe_fraction).rate
           for r_p in (base.replace(eta=db_to_transmittance(L)) for L in loss)]
    rows = [[L, db_to_transmittance(L), r, f, sc.N, bool(r > 0), sweep.cutoff_db] for L, r, f in zip(loss, sweep.rate, fin)]
    write_csv(out / "loss_sweep.csv", LOSS_HEADER, rows, prov)
    grid = security.blocksize_beta_grid(base, sw["N_grid"], sw["beta_grid"], sc.budget, sw["sweep_fer"],
                                        sc.pe_fraction)
    grows = []
    for i, b in enumerate(grid.beta):
        for j, N in enumerate(grid.N):
            grows.append([b, N, grid.rate[i, j], bool(grid.rate[i, j] > 0), grid.min_N[i]])
    write_csv(out / "blocksize_grid.csv", GRID_HEADER, grows, prov)
    _update_manifest(out, sc, [out / "loss_sweep.csv", out / "blocksize_grid.csv"])
    return sweep, grid


def _full_path_params(sc, threads):
    cal = run_calibration(sc)
    ests = _map(lambda k: process_frame(sc, cal, k)[1], range(sc.frames), threads)
    pooled = estimation.pool(*ests)
    return sc.params.replace(eta=min(pooled.eta_hat, 1.0), xi=max(pooled.xi_hat, 0.0))


def process_frame(sc: Scenario, cal: CalibrationRecord, frame_id):
    """Simulate, demodulate and estimate one frame in memory."""
    frame, block = simulate_frame(sc, frame_id)
    res = dsp_frame(sc, cal, frame, block.tx_symbols)
    del frame
    est = _with_frame(estimation.estimate_params, frame_id, res.block, sc.params.tau, cal.v_el, sc.params.V_M,
                      sc.budget.eps_PE)
    log.info("frame %d: xi_hat %.4f mSNU, pilot SNR %.1f dB", frame_id, est.xi_hat * 1e3,
             res.diagnostics["pilot_snr_db"])
    return res.diagnostics, est


def run_scenario(sc: Scenario, out, threads=1, fast=False):
    """Full pipeline; returns the key-rate report dict.  R = 0 is a valid outcome."""
    out = ensure_dir(out)
    if fast:
        return stage_keyrate(sc, out, fast=True)
    cal = stage_calibrate(sc, out)
    results = _map(lambda k: process_frame(sc, cal, k), range(sc.frames), threads)
    diags = [d for d, _ in results]
    ests = [e for _, e in results]
    write_csv(out / "dsp_diagnostics.csv", DIAG_HEADER, [_diag_row(d) for d in diags], sc.provenance())
    _update_manifest(out, sc, [out / "dsp_diagnostics.csv"])
    write_estimates(sc, out, cal, ests)
    return stage_keyrate(sc, out, fast=False)


# --------------------------------------------------------------------------
# report


def emit_report(out_dirs, path=None):
    """Aggregate one or more output directories into a single JSON summary.

    Checksums in each manifest are verified first; any mismatch raises
    :class:`IntegrityError`.
    """
    entries = []
    for d in out_dirs:
        d = Path(d)
        man = verify_manifest(d)
        entry = {
            "scenario": man["scenario"],
            "config_sha256": man["config_sha256"],
            "master_seed": man["master_seed"],
            "files": man["files"],
        }
        if (d / "estimates.json").exists():
            entry["estimates"] = read_json(d / "estimates.json")
        if (d / "keyrate.json").exists():
            k = read_json(d / "keyrate.json")
            entry["keyrate"] = {
                "path": k["path"],
                "rate_asymptotic": k["asymptotic"]["rate_asymptotic"],
                "rate_finite": k["finite"]["rate_finite"],
                "skr_bps": k["asymptotic"]["skr_bps"],
                "skr_bps_net": k["asymptotic"]["skr_bps_net"],
            }
        entries.append(entry)
    if not entries:
        raise MissingArtifact("no output directories given")
    report = {"schema": REPORT_SCHEMA, "entries": sorted(entries, key=lambda e: (e["scenario"], e["config_sha256"]))}
    if path is not None:
        write_json(path, report)
    return report


__all__ = [
    "load_scenario", "run_scenario", "stage_calibrate", "stage_simulate", "stage_dsp", "stage_estimate",
    "stage_keyrate", "stage_sweep", "emit_report", "verify_manifest", "process_frame", "keyrate_summary",
]
