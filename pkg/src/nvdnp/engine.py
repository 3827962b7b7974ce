"""Experiment-level sweeps: polarization spectra, power dependence, multi-tone
drive and the laser-power composite model.

The simulated readout is the 13C ``<2Iz>`` of the few-spin model at the end
of the per-point protocol; it stands in for the normalized FT integral of
the bulk NMR signal.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.optimize import curve_fit, minimize_scalar

from . import constants as C
from .errors import NvdnpError
from .lindblad import (
    DriveTone,
    LindbladModel,
    as_generator,
    evolve,
    initial_state,
    nuclear_polarization_operator,
    observable,
    secular_steady_state,
    steady_state,
)
from .spin import build_hamiltonian, electron_projector

AXES = ("mw_frequency", "mw_rabi", "laser_density")
PROTOCOLS = ("steady_state", "evolve")


@dataclass(frozen=True)
class SweepPlan:
    """Sweep abscissa (Hz, Hz or mW/mm^2) and per-point protocol."""

    axis: str
    points: tuple[float, ...]
    protocol: str = "steady_state"
    duration: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(float(p) for p in self.points))
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}, got {self.axis!r}")
        if not self.points:
            raise ValueError("sweep needs at least one point")
        d = np.diff(self.points)
        if len(d) and not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("sweep points must be strictly monotone")
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"protocol must be one of {PROTOCOLS}")
        if self.protocol == "evolve" and not (self.duration and self.duration > 0):
            raise ValueError("evolve protocol needs a positive duration")

    @classmethod
    def linspace(cls, axis, start, stop, num, **kwargs) -> "SweepPlan":
        return cls(axis, tuple(np.linspace(start, stop, num)), **kwargs)

    @classmethod
    def geomspace(cls, axis, start, stop, num, **kwargs) -> "SweepPlan":
        return cls(axis, tuple(np.geomspace(start, stop, num)), **kwargs)

    def to_dict(self) -> dict:
        return {"axis": self.axis, "points": list(self.points),
                "protocol": self.protocol, "duration": self.duration}


@dataclass
class SpectrumResult:
    axis: str
    values: np.ndarray
    polarization: np.ndarray
    errors: list
    fingerprint: str
    timestamp: str
    peaks: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    @property
    def n_failed(self) -> int:
        return sum(e is not None for e in self.errors)

    def normalized(self) -> np.ndarray:
        """Polarization scaled so that max |P| = 1 (the convention for figure output)."""
        peak = np.nanmax(np.abs(self.polarization)) if np.any(np.isfinite(self.polarization)) else 0.0
        return self.polarization / peak if peak > 0 else self.polarization.copy()


@dataclass(frozen=True)
class LaserModelParams:
    """Slopes of the heating (alpha, K per mW/mm^2) and NV-polarization
    (beta, per mW/mm^2) curves and the thermal numerator ``c`` (K)."""

    alpha: float
    beta: float
    c: float
    base_temperature: float = 300.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0 and self.c > 0):
            raise ValueError("alpha, beta and c must be positive")


class LaserPoint(NamedTuple):
    sigma: float
    p_nv: float
    p_thermal: float
    p_hyper: float


@dataclass(frozen=True)
class MultiTonePlan:
    """Tone subsets compared on a shared baseline model.

    The first subset is the single-tone reference.
    """

    baseline: LindbladModel
    subsets: tuple[tuple[DriveTone, ...], ...]
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        subsets = tuple(tuple(s) for s in self.subsets)
        object.__setattr__(self, "subsets", subsets)
        if not subsets or any(len(s) == 0 for s in subsets):
            raise ValueError("every tone subset must be nonempty")
        labels = tuple(self.labels) or tuple(
            "+".join(f"f{i + 1}" for i in range(len(s))) for s in subsets
        )
        if len(labels) != len(subsets):
            raise ValueError("one label per subset")
        object.__setattr__(self, "labels", labels)


class MultiToneEntry(NamedTuple):
    label: str
    polarization: float
    ratio: float
    warning: str | None


# --- per-point evaluation -----------------------------------------------------

def carbon_polarization_operator(spec) -> np.ndarray:
    """Mean ``2Iz`` over the 13C spins (all spin-1/2 nuclei if none is labeled)."""
    idx = [i for i in spec.nuclear_indices if spec.spins[i].label == "13C"]
    if not idx:
        idx = [i for i in spec.nuclear_indices if spec.spins[i].spin == 0.5]
    if not idx:
        raise ValueError("system has no spin-1/2 nucleus to read out")
    return sum(nuclear_polarization_operator(spec, i) for i in idx) / len(idx)


def final_state(model: LindbladModel, protocol: str = "steady_state",
                duration: float | None = None, method: str = "auto") -> np.ndarray:
    """State at the end of the per-point protocol, starting from the
    electron-mixed / nuclear-thermal state."""
    rho0 = initial_state(model)
    if protocol == "steady_state":
        if method == "secular":
            return secular_steady_state(model, rho0)
        return steady_state(model, rho0, method=method)
    gen = as_generator(model)
    f_max = gen.max_frequency()
    step = min(duration, 1 / (20 * f_max)) if f_max > 0 else duration
    n = math.ceil(duration / step - 1e-9)
    traj = evolve(gen, rho0, duration, step, stride=n)
    return traj.states[-1]


def point_polarization(model: LindbladModel, protocol: str = "steady_state",
                       duration: float | None = None, method: str = "auto") -> float:
    rho = final_state(model, protocol, duration, method)
    return observable(rho, carbon_polarization_operator(model.spec))


def _safe_point(args):
    model, protocol, duration = args
    try:
        p = point_polarization(model, protocol, duration)
    except (NvdnpError, np.linalg.LinAlgError, ArithmeticError, ValueError) as exc:
        return math.nan, f"{type(exc).__name__}: {exc}"
    if not np.isfinite(p) or abs(p) > 1 + 1e-9:
        return math.nan, f"NumericError: polarization {p!r} outside [-1, 1]"
    return p, None


def _map(fn, items, workers):
    if workers is None:
        workers = os.cpu_count() or 1
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _fingerprint(*parts) -> str:
    text = json.dumps(parts, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _single_tone(template: LindbladModel) -> DriveTone:
    if len(template.tones) != 1:
        raise ValueError(f"template needs exactly one sweepable tone, has {len(template.tones)}")
    return template.tones[0]


def _sweep(models, plan, workers):
    rows = _map(_safe_point, [(m, plan.protocol, plan.duration) for m in models], workers)
    pol = np.array([r[0] for r in rows], float)
    errs = [r[1] for r in rows]
    return pol, errs


# --- peak analysis ------------------------------------------------------------

def find_lobes(x: Sequence[float], p: Sequence[float], evaluate: Callable[[float], float] | None = None,
               threshold: float = 0.2, xatol: float = 1e3) -> dict:
    """Locate signed polarization lobes and pair them into hyperfine components.

    Lobes are interior local extrema with ``|P| >= threshold * max|P|``.
    With ``evaluate`` each lobe is refined by a bounded scalar search between
    its grid neighbours. Adjacent lobes of opposite sign form a component;
    its centre is the midpoint of the pair.
    """
    x = np.asarray(x, float)
    p = np.asarray(p, float)
    order = np.argsort(x)
    x, p = x[order], p[order]
    finite = np.isfinite(p)
    if not np.any(finite):
        return {"lobes": [], "components": []}
    cut = threshold * np.nanmax(np.abs(p))
    lobes = []
    for i in range(1, len(x) - 1):
        if not (finite[i - 1] and finite[i] and finite[i + 1]):
            continue
        sign = 0
        if p[i] >= cut and p[i] >= p[i - 1] and p[i] > p[i + 1]:
            sign = 1
        elif p[i] <= -cut and p[i] <= p[i - 1] and p[i] < p[i + 1]:
            sign = -1
        if not sign:
            continue
        pos, val, refined = x[i], p[i], False
        if evaluate is not None:
            res = minimize_scalar(lambda f: -sign * evaluate(f), bounds=(x[i - 1], x[i + 1]),
                                  method="bounded", options={"xatol": xatol})
            if res.success and -res.fun >= sign * p[i]:
                pos, val, refined = float(res.x), float(-sign * res.fun), True
        lobes.append({"position_hz": float(pos), "polarization": float(val),
                      "sign": sign, "refined": refined})
    components = []
    i = 0
    while i < len(lobes) - 1:
        a, b = lobes[i], lobes[i + 1]
        if a["sign"] != b["sign"]:
            pos_lobe, neg_lobe = (a, b) if a["sign"] > 0 else (b, a)
            components.append({
                "centre_hz": 0.5 * (a["position_hz"] + b["position_hz"]),
                "lobe_separation_hz": b["position_hz"] - a["position_hz"],
                "positive_hz": pos_lobe["position_hz"],
                "negative_hz": neg_lobe["position_hz"],
                "amplitude": 0.5 * (abs(a["polarization"]) + abs(b["polarization"])),
            })
            i += 2
        else:
            i += 1
    return {"lobes": lobes, "components": components}


# --- sweeps -------------------------------------------------------------------

def polarization_spectrum(template: LindbladModel, plan: SweepPlan, workers: int | None = 1,
                          refine: bool = True) -> SpectrumResult:
    """13C polarization versus MW frequency of the template's single tone."""
    if plan.axis != "mw_frequency":
        raise ValueError("polarization_spectrum needs a mw_frequency plan")
    tone = _single_tone(template)
    models = [template.with_tones([replace(tone, frequency=f)]) for f in plan.points]
    pol, errs = _sweep(models, plan, workers)

    def evaluate(f):
        m = template.with_tones([replace(tone, frequency=f)])
        return point_polarization(m, plan.protocol, plan.duration)

    peaks = find_lobes(plan.points, pol, evaluate if refine else None)
    comps = peaks["components"]
    summary = {"n_components": len(comps)}
    if len(comps) > 1:
        summary["component_spacings_hz"] = list(np.diff([c["centre_hz"] for c in comps]))
    return SpectrumResult(plan.axis, np.array(plan.points), pol, errs,
                          _fingerprint(template.to_dict(), plan.to_dict()), _now(), peaks, summary)


def power_dependence(template: LindbladModel, plan: SweepPlan, workers: int | None = 1) -> SpectrumResult:
    """13C polarization versus Rabi amplitude at a fixed tone frequency."""
    if plan.axis != "mw_rabi":
        raise ValueError("power_dependence needs a mw_rabi plan")
    tone = _single_tone(template)
    models = [template.with_tones([replace(tone, rabi_amplitude=r)]) for r in plan.points]
    pol, errs = _sweep(models, plan, workers)
    summary = {}
    if np.any(np.isfinite(pol)):
        k = int(np.nanargmax(pol))
        summary = {
            "argmax_index": k,
            "argmax_rabi_hz": plan.points[k],
            "max_polarization": float(pol[k]),
            "interior_max": 0 < k < len(pol) - 1,
            "end_to_max_ratio": float(pol[-1] / pol[k]) if pol[k] != 0 else math.nan,
        }
    return SpectrumResult(plan.axis, np.array(plan.points), pol, errs,
                          _fingerprint(template.to_dict(), plan.to_dict()), _now(), {}, summary)


def rabi_from_power(power_w, kappa: float = C.RABI_PER_SQRT_WATT):
    """Rabi amplitude (Hz) for MW power (W) under ``Omega = kappa sqrt(P)``."""
    return kappa * np.sqrt(power_w)


def power_from_rabi(rabi_hz, kappa: float = C.RABI_PER_SQRT_WATT):
    return (np.asarray(rabi_hz) / kappa) ** 2


def fit_rise_decay(x, y):
    """Fit ``a (1 - exp(-x/t1)) exp(-x/t2)``; returns (a, t1, t2). Plot guide only."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    k = int(np.argmax(y))
    p0 = (float(y[k]) * 2, max(x[k] / 2, 1e-12), max(x[-1], 1e-12))

    def model(x, a, t1, t2):
        return a * (1 - np.exp(-x / t1)) * np.exp(-x / t2)

    popt, _ = curve_fit(model, x, y, p0=p0, bounds=([0, 0, 0], [np.inf, np.inf, np.inf]), maxfev=20000)
    return tuple(float(v) for v in popt)


# --- multi-tone ---------------------------------------------------------------

def resonance_centres(model: LindbladModel, target: int = -1) -> list[float]:
    """Electron resonance frequency of each invariant block (one per 14N sector)."""
    spec = model.spec
    h = np.diag(build_hamiltonian(spec)).real
    p0 = np.diag(electron_projector(spec, 0)).real > 0.5
    pt = np.diag(electron_projector(spec, target)).real > 0.5
    probe = model.with_tones([DriveTone(1.0, 1.0, 0.0, (0, target))])
    centres = []
    for b in as_generator(probe).blocks():
        mask = np.zeros(len(h), bool)
        mask[b] = True
        if np.any(mask & p0) and np.any(mask & pt):
            centres.append(float(h[mask & pt].mean() - h[mask & p0].mean()))
    return sorted(centres)


def lobe_tones(template: LindbladModel, sign: int = 1, window: float = 0.6e6,
               shared: bool = True) -> list[DriveTone]:
    """One tone per hyperfine component, each on its lobe of the given sign.

    The lobe is searched within ``window`` below (positive) or above
    (negative) the component centre for the ``m_s = -1`` transition. With
    ``shared`` the offset found on the middle component is reused for all,
    which keeps tone offsets commensurate when the components are copies.
    """
    tone = _single_tone(template)
    centres = resonance_centres(template, tone.target)

    def best(c):
        lo, hi = (c - window, c) if sign > 0 else (c, c + window)

        def neg(f):
            m = template.with_tones([replace(tone, frequency=f)])
            return -sign * point_polarization(m)

        return float(minimize_scalar(neg, bounds=(lo, hi), method="bounded", options={"xatol": 100.0}).x)

    if shared:
        mid = centres[len(centres) // 2]
        offset = best(mid) - mid
        return [replace(tone, frequency=c + offset) for c in centres]
    return [replace(tone, frequency=best(c)) for c in centres]


def multi_tone_comparison(plan: MultiTonePlan, method: str = "floquet") -> list[MultiToneEntry]:
    """Steady 13C polarization for each tone subset and its ratio to the first.

    ``method='floquet'`` solves the periodic rotating-frame dynamics exactly;
    ``method='secular'`` is the per-block zero-order fast path.
    """
    base = plan.baseline
    rho0 = initial_state(base)
    op = carbon_polarization_operator(base.spec)
    tone_sign = {}
    for subset in plan.subsets:
        for t in subset:
            if t not in tone_sign:
                tone_sign[t] = np.sign(point_polarization(base.with_tones([t])))
    values = []
    for subset in plan.subsets:
        model = base.with_tones(subset)
        if method == "secular":
            rho = secular_steady_state(model, rho0)
        else:
            rho = steady_state(model, rho0, method=method)
        values.append(observable(rho, op))
    ref = values[0]
    out = []
    for label, subset, v in zip(plan.labels, plan.subsets, values):
        signs = {tone_sign[t] for t in subset} - {0.0}
        warning = None
        if len(signs) > 1:
            warning = "mixed-sign lobes selected: contributions partially cancel"
        out.append(MultiToneEntry(label, v, v / ref if ref != 0 else math.nan, warning))
    return out


# --- laser model --------------------------------------------------------------

def laser_composite_curve(params: LaserModelParams, densities: Sequence[float]) -> list[LaserPoint]:
    """NV polarization, thermal 13C polarization and their product vs laser density.

    ``P_NV = beta sigma``, ``P_thermal = c / (T0 + alpha sigma)`` with
    ``T0 = 300 K``, and ``P_hyper = P_NV * P_thermal``.
    """
    out = []
    for s in densities:
        s = float(s)
        if s < 0:
            raise ValueError("laser densities must be non-negative")
        p_nv = params.beta * s
        p_th = params.c / (params.base_temperature + params.alpha * s)
        out.append(LaserPoint(s, p_nv, p_th, p_nv * p_th))
    return out


def laser_composite_slope(params: LaserModelParams, sigma: float) -> float:
    """Analytic d(P_hyper)/d(sigma) = T0 beta c / (T0 + alpha sigma)^2."""
    t0 = params.base_temperature
    return t0 * params.beta * params.c / (t0 + params.alpha * sigma) ** 2


def heating_slope(temperature_rise: float, density: float) -> float:
    """alpha from a measured temperature rise at a given laser density."""
    return temperature_rise / density
