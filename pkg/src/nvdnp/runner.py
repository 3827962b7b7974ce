"""Config-driven runs: build models and plans, dispatch, persist, and report."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import analysis as A
from . import engine as E
from .config import ExperimentConfig, parse_subsets
from .errors import ConfigError
from .io import RunManifest, atomic_write_text, export_plotdata, csv_text, dumps, ensure_writable, read_odmr, write_sweep
from .lindblad import DriveTone, LindbladModel, default_dissipators
from .spin import nv_system

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_PARTIAL = 4

PLOT_LAYOUT = {"spectrum": "fig2", "power-sweep": "fig3", "laser-model": "fig4", "multitone": "fig5"}


@dataclass
class RunOutcome:
    manifest: RunManifest
    exit_code: int
    report: list[str] = field(default_factory=list)
    result: object = None


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def build_template(cfg: ExperimentConfig, frequency: float | None = None) -> LindbladModel:
    """Model with one tone from the ``system``, ``dissipators`` and ``drive`` sections."""
    s, d, dr = cfg.sections["system"], cfg.sections["dissipators"], cfg.sections["drive"]
    spec = nv_system(s["nitrogen"], s["carbon"], s["field"], s["zfs"], s["a_n"], s["a_zz_c"], s["a_zx_c"])
    diss = default_dissipators(spec, d["pump"], d["electron_t2"], d["electron_t1"], d["nuclear_t1"])
    target = int(dr["transition"])
    f = frequency or dr["frequency"] or spec.zero_field_splitting + target * spec.spins[0].gyromagnetic_ratio * spec.static_field
    tone = DriveTone(f, dr["rabi"], 0.0, (0, target))
    return LindbladModel(spec, (tone,), diss, temperature=s["temperature"])


def build_plan(cfg: ExperimentConfig) -> E.SweepPlan:
    sw = cfg.sections["sweep"]
    axis = {"spectrum": "mw_frequency", "power-sweep": "mw_rabi", "laser-model": "laser_density"}[cfg.kind]
    kwargs = {}
    if "protocol" in cfg.sections and cfg.sections["protocol"]["mode"] == "evolve":
        kwargs = {"protocol": "evolve", "duration": cfg.sections["protocol"]["duration"]}
    make = E.SweepPlan.geomspace if sw["spacing"] == "geometric" else E.SweepPlan.linspace
    return make(axis, sw["start"], sw["stop"], sw["points"], **kwargs)


def _stem(cfg):
    return cfg.sections["output"]["prefix"] or cfg.kind


def _sweep_status(result) -> int:
    if result.n_failed == 0:
        return EXIT_OK
    return EXIT_NUMERIC if result.n_failed == len(result.errors) else EXIT_PARTIAL


def _run_spectrum(cfg, out, workers, manifest):
    plan = build_plan(cfg)
    template = build_template(cfg, plan.points[0])
    result = E.polarization_spectrum(template, plan, workers=workers)
    paths = write_sweep(result, out, _stem(cfg), {"kind": cfg.kind, "config_hash": cfg.fingerprint()})
    manifest.add(paths["csv"], "spectrum")
    manifest.add(paths["json"], "spectrum-peaks")
    comps = result.peaks.get("components", [])
    report = [f"{len(comps)} hyperfine component(s)"]
    report += [f"  centre {c['centre_hz'] / 1e6:.4f} MHz, lobe separation {c['lobe_separation_hz'] / 1e6:.4f} MHz"
               for c in comps]
    return result, _sweep_status(result), report


def _power_tone_frequency(cfg):
    if cfg.sections["drive"]["frequency"]:
        return cfg.sections["drive"]["frequency"]
    template = build_template(cfg)
    tones = E.lobe_tones(template, int(cfg.sections["drive"]["lobe_sign"]))
    return tones[len(tones) // 2].frequency


def _run_power(cfg, out, workers, manifest):
    plan = build_plan(cfg)
    f = _power_tone_frequency(cfg)
    template = build_template(cfg, f)
    result = E.power_dependence(template, plan, workers=workers)
    paths = write_sweep(result, out, _stem(cfg),
                        {"kind": cfg.kind, "config_hash": cfg.fingerprint(), "tone_frequency_hz": f})
    manifest.add(paths["csv"], "power-sweep")
    manifest.add(paths["json"], "power-sweep-summary")
    s = result.summary
    report = []
    if s:
        report.append(f"tone {f / 1e6:.4f} MHz; max P {s['max_polarization']:.4e} at Rabi "
                      f"{s['argmax_rabi_hz'] / 1e3:.1f} kHz; P(end)/P(max) = {s['end_to_max_ratio']:.3f}")
    return result, _sweep_status(result), report


def _run_multitone(cfg, out, workers, manifest):
    mt = cfg.sections["multitone"]
    template = build_template(cfg)
    if mt["tones"]:
        base = template.tones[0]
        tones = [DriveTone(f, base.rabi_amplitude, 0.0, base.transition) for f in mt["tones"]]
    else:
        tones = E.lobe_tones(template, int(cfg.sections["drive"]["lobe_sign"]))
    subsets = parse_subsets(mt["subsets"], len(tones))
    plan = E.MultiTonePlan(template, tuple(tuple(tones[i] for i in s) for s in subsets))
    entries = E.multi_tone_comparison(plan, method=mt["method"])
    rows = [(e.label, len(s), " ".join(repr(t.frequency) for t in sub), float(e.polarization), float(e.ratio),
             e.warning or "")
            for e, s, sub in zip(entries, subsets, plan.subsets)]
    name = f"{_stem(cfg)}-{cfg.fingerprint()[:12]}"
    p_csv = atomic_write_text(Path(out) / f"{name}.csv", csv_text(
        ["label", "n_tones", "tone_frequencies_hz", "polarization", "ratio", "warning"], rows))
    manifest.add(p_csv, "multitone")
    bad = [e for e in entries if not math.isfinite(e.polarization)]
    code = EXIT_OK if not bad else (EXIT_NUMERIC if len(bad) == len(entries) else EXIT_PARTIAL)
    report = [f"{e.label}: P = {e.polarization:.4e}, ratio {e.ratio:.3f}" + (f"  [{e.warning}]" if e.warning else "")
              for e in entries]
    return entries, code, report


def _run_laser(cfg, out, workers, manifest):
    lp = cfg.sections["laser"]
    params = E.LaserModelParams(lp["alpha"], lp["beta"], lp["c"], lp["base_temperature"])
    plan = build_plan(cfg)
    points = E.laser_composite_curve(params, plan.points)
    name = f"{_stem(cfg)}-{cfg.fingerprint()[:12]}"
    p_csv = atomic_write_text(Path(out) / f"{name}.csv", csv_text(
        ["laser_density_mw_per_mm2", "p_nv", "p_thermal", "p_hyper"], [tuple(p) for p in points]))
    hyper = np.array([p.p_hyper for p in points])
    increasing = bool(np.all(np.diff(hyper) * np.sign(np.diff(plan.points)) > 0))
    summary = {"strictly_increasing": increasing,
               "max_temperature_k": params.base_temperature + params.alpha * max(plan.points)}
    p_json = atomic_write_text(Path(out) / f"{name}.json", dumps({"params": vars(params), "summary": summary}))
    manifest.add(p_csv, "laser-model")
    manifest.add(p_json, "laser-model-summary")
    verdict = "strictly increasing" if increasing else "not monotone"
    return points, EXIT_OK, [f"P_hyper is {verdict} over {len(points)} densities"]


def estimate_line(inputs: A.EnhancementInputs) -> str:
    p = A.estimate_polarization(inputs)
    eps = A.enhancement_factor(inputs)
    return f"P_Hyper = {p:.6e} ({100 * p:.4f} %)  epsilon = {eps:.6e}"


def thermometry_line(f_minus, f_plus, d_ref, t_ref) -> str:
    d = A.zero_field_splitting(f_minus, f_plus)
    t = A.temperature_from_zfs(f_minus, f_plus, d_ref, t_ref)
    return f"D = {d / 1e9:.6f} GHz  T = {t:.2f} K  (dT = {t - t_ref:+.2f} K)"


def _run_estimate(cfg, out, workers, manifest, mode="estimate"):
    e, th = cfg.sections["estimate"], cfg.sections["thermometry"]
    data, report = {}, []
    if mode == "estimate":
        if e["s_hyper"] is None:
            raise ConfigError("estimate needs s_hyper and s_thermal", "estimate.s_hyper", None, "two integrals")
        inputs = A.EnhancementInputs(e["s_hyper"], e["s_thermal"], e["b_sm"], e["b_em"], e["t_l"], e["t_r"],
                                     e["gamma_n"])
        data["estimate"] = {"inputs": vars(inputs), "p_hyper": A.estimate_polarization(inputs),
                            "enhancement": A.enhancement_factor(inputs)}
        report.append(estimate_line(inputs))
    else:
        f_minus, f_plus = th["f_minus"], th["f_plus"]
        if th["odmr_file"]:
            freqs, signal = read_odmr(th["odmr_file"])
            fit = A.odmr_doublet_fit(freqs, signal)
            f_minus, f_plus = fit.f_minus, fit.f_plus
            data["fit"] = {"f_minus": fit.f_minus, "f_plus": fit.f_plus, "linewidths": fit.linewidths,
                           "centre_errors": fit.centre_errors, "residual_norm": fit.residual_norm}
        if f_minus is None:
            raise ConfigError("thermometry needs f_minus/f_plus or odmr_file", "thermometry.f_minus", None,
                              "two resonance frequencies")
        data["thermometry"] = {"f_minus": f_minus, "f_plus": f_plus,
                               "zfs": A.zero_field_splitting(f_minus, f_plus),
                               "temperature": A.temperature_from_zfs(f_minus, f_plus, th["d_ref"], th["t_ref"])}
        report.append(thermometry_line(f_minus, f_plus, th["d_ref"], th["t_ref"]))
    stem = cfg.sections["output"]["prefix"] or ("estimate" if mode == "estimate" else "odmr-temp")
    path = atomic_write_text(Path(out) / f"{stem}-{cfg.fingerprint()[:12]}.json", dumps(data))
    manifest.add(path, mode)
    return data, EXIT_OK, report


_DISPATCH = {
    "spectrum": _run_spectrum,
    "power-sweep": _run_power,
    "multitone": _run_multitone,
    "laser-model": _run_laser,
    "estimate": _run_estimate,
}


def run(cfg: ExperimentConfig, out, workers: int | None = None, mode: str | None = None) -> RunOutcome:
    """Execute ``cfg`` and write results plus ``manifest.json`` into ``out``.

    ``mode='odmr-temp'`` selects the thermometry half of an estimate config.
    The output directory is checked before any computation starts.

    Raises:
        OSError: ``out`` is not writable.
    """
    out = ensure_writable(out)
    manifest = RunManifest(cfg.kind, cfg.fingerprint(), __version__, _now(), "", "running")
    fn = _DISPATCH[cfg.kind]
    if cfg.kind == "estimate":
        result, code, report = fn(cfg, out, workers, manifest, mode or "estimate")
    else:
        result, code, report = fn(cfg, out, workers, manifest)
    if cfg.kind in ("spectrum", "power-sweep"):
        manifest.n_failed = result.n_failed
    if code == EXIT_NUMERIC:
        manifest.status = "failed"
    else:
        manifest.status = "partial" if code == EXIT_PARTIAL else "ok"
    manifest.finished = _now()
    atomic_write_text(Path(out) / "config.ini", cfg.render())
    manifest.add(Path(out) / "config.ini", "config")
    manifest.write(out)
    layout = PLOT_LAYOUT.get(cfg.kind)
    if layout and cfg.sections["output"]["plotdata"] and code != EXIT_NUMERIC:
        manifest.add(export_plotdata(out, layout), f"plotdata-{layout}")
        manifest.write(out)
    return RunOutcome(manifest, code, report, result)

