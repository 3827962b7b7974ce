"""Measurement arithmetic: FID synthesis and Fourier processing, integral-based
polarization and enhancement estimates, and ODMR thermometry.

Fourier convention: ``X(f_k) = dt * sum_n x[n] exp(-2 pi i f_k t_n)`` on the
fftshifted grid. This approximates the continuous transform, so
``sum |x|^2 dt == sum |X|^2 df`` (Parseval) and the sum of ``X df`` over the
full axis equals ``x[0]``.

The thermal polarization is ``h f_n / (2 k T)`` with ``f_n = gamma_n B`` the
Larmor frequency in Hz, which is the same number as ``hbar gamma B / 2kT``
written with an angular gyromagnetic ratio.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import least_squares
from scipy.signal import argrelmin

from . import constants as C
from .errors import ConvergenceError


@dataclass(frozen=True)
class FidRecord:
    sample_interval: float
    samples: np.ndarray
    frequency_offset: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, complex)
        object.__setattr__(self, "samples", samples)
        if not self.sample_interval > 0:
            raise ValueError("sample_interval must be positive")
        if samples.ndim != 1 or len(samples) < 2:
            raise ValueError("FID needs at least two samples")

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.samples)) * self.sample_interval


@dataclass(frozen=True)
class FreqSpectrum:
    frequencies: np.ndarray
    amplitudes: np.ndarray
    normalization: str = "dt-scaled"

    def __post_init__(self):
        f = np.asarray(self.frequencies, float)
        a = np.asarray(self.amplitudes, complex)
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "amplitudes", a)
        if f.shape != a.shape:
            raise ValueError("frequencies and amplitudes differ in length")
        if np.any(np.diff(f) <= 0):
            raise ValueError("frequencies must be strictly increasing")


@dataclass(frozen=True)
class EnhancementInputs:
    """Scalars of the signal-ratio estimators.

    Fields: integrals ``s_hyper`` and ``s_thermal`` (same units), NMR field
    ``b_sm`` and DNP field ``b_em`` (T), laser-heated sample temperature
    ``t_l`` and room temperature ``t_r`` (K), and ``gamma_n`` (Hz/T).
    """

    s_hyper: float
    s_thermal: float
    b_sm: float = C.FIELD_NMR
    b_em: float = C.FIELD_DNP
    t_l: float = C.ROOM_TEMPERATURE
    t_r: float = C.ROOM_TEMPERATURE
    gamma_n: float = C.GAMMA_13C

    def __post_init__(self):
        if self.s_thermal == 0:
            raise ValueError("s_thermal must be nonzero")
        for name in ("b_sm", "b_em", "t_l", "t_r", "gamma_n"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def signal_ratio(self) -> float:
        return self.s_hyper / self.s_thermal


# --- FID / Fourier ------------------------------------------------------------

def synthesize_fid(polarization: float, larmor_offset: float, t2_star: float, n_points: int = 4096,
                   sample_interval: float = 1e-6, amplitude: float = 1.0, phase: float = 0.0,
                   frequency_offset: float = 0.0, noise: float = 0.0,
                   rng: np.random.Generator | None = None) -> FidRecord:
    """Decaying complex exponential with amplitude proportional to polarization.

    ``noise`` adds complex white noise of that standard deviation per quadrature.
    """
    if not t2_star > 0:
        raise ValueError("t2_star must be positive")
    t = np.arange(n_points) * sample_interval
    x = amplitude * polarization * np.exp(1j * (2 * np.pi * larmor_offset * t + phase) - t / t2_star)
    if noise:
        rng = np.random.default_rng() if rng is None else rng
        x = x + noise * (rng.standard_normal(n_points) + 1j * rng.standard_normal(n_points))
    return FidRecord(sample_interval, x, frequency_offset)


def transform(fid: FidRecord) -> FreqSpectrum:
    n = len(fid.samples)
    dt = fid.sample_interval
    amps = np.fft.fftshift(np.fft.fft(fid.samples)) * dt
    freqs = np.fft.fftshift(np.fft.fftfreq(n, dt)) + fid.frequency_offset
    return FreqSpectrum(freqs, amps)


def inverse_transform(spec: FreqSpectrum, frequency_offset: float | None = None) -> FidRecord:
    """Inverse of :func:`transform` for spectra on an fftshifted grid."""
    f = spec.frequencies
    n = len(f)
    df = f[1] - f[0]
    dt = 1.0 / (n * df)
    samples = np.fft.ifft(np.fft.ifftshift(spec.amplitudes)) / dt
    if frequency_offset is None:
        frequency_offset = f[n // 2]
    return FidRecord(dt, samples, frequency_offset)


def band_integral(spec: FreqSpectrum, band: tuple[float, float] | None = None, part: str = "real") -> float:
    """Trapezoidal integral of the real part (or magnitude) over ``band`` (Hz)."""
    if part == "real":
        y = spec.amplitudes.real
    elif part == "magnitude":
        y = np.abs(spec.amplitudes)
    else:
        raise ValueError(f"part must be 'real' or 'magnitude', got {part!r}")
    f = spec.frequencies
    if band is None:
        band = default_band(spec)
    lo, hi = sorted(band)
    sel = (f >= lo) & (f <= hi)
    if np.count_nonzero(sel) < 2:
        raise ValueError(f"band {band} does not overlap the frequency axis")
    return float(trapezoid(y[sel], f[sel]))


def linewidth(spec: FreqSpectrum, part: str = "magnitude") -> tuple[float, float]:
    """Carrier frequency and full width at half maximum of the dominant line."""
    y = np.abs(spec.amplitudes) if part == "magnitude" else spec.amplitudes.real
    f = spec.frequencies
    k = int(np.argmax(y))
    half = y[k] / 2
    i = k
    while i > 0 and y[i] > half:
        i -= 1
    j = k
    while j < len(y) - 1 and y[j] > half:
        j += 1
    left = f[i] + (half - y[i]) * (f[i + 1] - f[i]) / (y[i + 1] - y[i]) if y[i] <= half else f[i]
    right = f[j - 1] + (y[j - 1] - half) * (f[j] - f[j - 1]) / (y[j - 1] - y[j]) if y[j] <= half else f[j]
    return float(f[k]), float(right - left)


def default_band(spec: FreqSpectrum, widths: float = 3.0) -> tuple[float, float]:
    """Carrier +- ``widths`` linewidths (FWHM of the magnitude spectrum)."""
    centre, fwhm = linewidth(spec)
    return centre - widths * fwhm, centre + widths * fwhm


# --- estimators ---------------------------------------------------------------

def thermal_polarization(gamma_n: float, field: float, temperature: float) -> float:
    """High-temperature thermal polarization ``h gamma B / (2 k T)``."""
    return C.PLANCK * gamma_n * field / (2 * C.BOLTZMANN * temperature)


def estimate_polarization(inputs: EnhancementInputs) -> float:
    """Hyperpolarization from the signal ratio against the thermal reference at ``b_sm``, ``t_r``."""
    return inputs.signal_ratio * thermal_polarization(inputs.gamma_n, inputs.b_sm, inputs.t_r)


def enhancement_factor(inputs: EnhancementInputs) -> float:
    """Enhancement over thermal equilibrium at the DNP field and laser-heated temperature."""
    return inputs.signal_ratio * (inputs.b_sm / inputs.b_em) * (inputs.t_l / inputs.t_r)


# --- thermometry --------------------------------------------------------------

def zero_field_splitting(f_minus: float, f_plus: float) -> float:
    if not f_plus > f_minus > 0:
        raise ValueError("need f_plus > f_minus > 0")
    return 0.5 * (f_minus + f_plus)


def temperature_from_zfs(f_minus: float, f_plus: float, d_ref: float = C.ZFS_ROOM,
                         t_ref: float = C.ZFS_ROOM_TEMPERATURE, slope: float = C.DZFS_DT) -> float:
    """Sample temperature from the ODMR doublet, linear in ``D - d_ref``."""
    d = zero_field_splitting(f_minus, f_plus)
    return t_ref + (d - d_ref) / slope


class DoubletFit(NamedTuple):
    f_minus: float
    f_plus: float
    linewidths: tuple[float, float]
    depths: tuple[float, float]
    baseline: float
    covariance: np.ndarray
    residual_norm: float
    iterations: int

    @property
    def centre_errors(self) -> tuple[float, float]:
        return float(np.sqrt(self.covariance[2, 2])), float(np.sqrt(self.covariance[5, 5]))


def _lorentz(f, c, w):
    # unit-height Lorentzian, FWHM w
    u = 2 * (f - c) / w
    return 1 / (1 + u * u)


def doublet_model(f, baseline, d1, c1, w1, d2, c2, w2):
    return baseline - d1 * _lorentz(f, c1, w1) - d2 * _lorentz(f, c2, w2)


def _doublet_jac(f, p):
    baseline, d1, c1, w1, d2, c2, w2 = p
    cols = [np.ones_like(f)]
    for d, c, w in ((d1, c1, w1), (d2, c2, w2)):
        u = 2 * (f - c) / w
        g = 1 / (1 + u * u)
        # d(-d g)/dd, d/dc, d/dw with g = 1/(1+u^2), u = 2(f-c)/w
        cols.append(-g)
        cols.append(-d * g * g * 2 * u * (2 / w))
        cols.append(-d * g * g * 2 * u * u / w)
    return np.column_stack(cols)


def odmr_doublet_fit(frequencies, signal, max_nfev: int = 2000) -> DoubletFit:
    """Two-Lorentzian dip fit by damped least squares (Levenberg-Marquardt).

    Starts from the two deepest local minima. A single dip or a collapsed fit
    raises :class:`ConvergenceError`.
    """
    f = np.asarray(frequencies, float)
    y = np.asarray(signal, float)
    if len(f) < 8:
        raise ValueError("need at least 8 samples")
    order = np.argsort(f)
    f, y = f[order], y[order]
    f0 = f.mean()
    scale = (f[-1] - f[0]) / 2
    x = (f - f0) / scale
    base = float(np.median(y))
    span = float(base - y.min())
    if span <= 0:
        raise ConvergenceError("no dip in the ODMR signal")
    mins = argrelmin(y, order=max(1, len(y) // 50))[0]
    mins = [i for i in mins if base - y[i] > 0.2 * span]
    if len(mins) < 2:
        raise ConvergenceError(f"degenerate doublet: found {len(mins)} significant dip(s)")
    i1, i2 = sorted(sorted(mins, key=lambda i: y[i])[:2])
    widths = []
    for i in (i1, i2):
        half = base - (base - y[i]) / 2
        j = i
        while j < len(y) - 1 and y[j] < half:
            j += 1
        widths.append(max(2 * (x[j] - x[i]), 2 * (x[1] - x[0])))
    p0 = np.array([base, base - y[i1], x[i1], widths[0], base - y[i2], x[i2], widths[1]])
    trace = []

    def resid(p):
        r = doublet_model(x, *p) - y
        trace.append(float(np.linalg.norm(r)))
        return r

    res = least_squares(resid, p0, jac=lambda p: _doublet_jac(x, p), method="lm",
                        max_nfev=max_nfev, xtol=1e-15, ftol=1e-15, gtol=1e-15)
    if res.status <= 0:
        raise ConvergenceError(f"fit did not converge: {res.message}", trace)
    p = res.x
    c1, c2 = p[2], p[5]
    if abs(c1 - c2) < 0.5 * (abs(p[3]) + abs(p[6])) / 2 or min(p[1], p[4]) <= 0:
        raise ConvergenceError("degenerate doublet: dips merged or vanished", trace)
    dof = max(1, len(x) - len(p))
    s2 = float(res.fun @ res.fun) / dof
    try:
        cov = np.linalg.inv(res.jac.T @ res.jac) * s2
    except np.linalg.LinAlgError:
        cov = np.full((7, 7), np.inf)
    # back to Hz
    unit = np.array([1, 1, scale, scale, 1, scale, scale])
    cov = cov * np.outer(unit, unit)
    (d1, cc1, w1), (d2, cc2, w2) = sorted(((p[1], p[2], p[3]), (p[4], p[5], p[6])), key=lambda t: t[1])
    if cc1 != p[2]:
        perm = [0, 4, 5, 6, 1, 2, 3]
        cov = cov[np.ix_(perm, perm)]
    return DoubletFit(
        f_minus=float(f0 + cc1 * scale),
        f_plus=float(f0 + cc2 * scale),
        linewidths=(float(abs(w1) * scale), float(abs(w2) * scale)),
        depths=(float(d1), float(d2)),
        baseline=float(p[0]),
        covariance=cov,
        residual_norm=float(np.linalg.norm(res.fun)),
        iterations=int(res.nfev),
    )


def synthesize_odmr(frequencies, f_minus: float, f_plus: float, linewidth: float = 10e6,
                    contrast: float = 0.03, baseline: float = 1.0, noise: float = 0.0,
                    rng: np.random.Generator | None = None) -> np.ndarray:
    """Normalized fluorescence with two Lorentzian dips."""
    f = np.asarray(frequencies, float)
    y = doublet_model(f, baseline, contrast, f_minus, linewidth, contrast, f_plus, linewidth)
    if noise:
        rng = np.random.default_rng() if rng is None else rng
        y = y + noise * rng.standard_normal(len(f))
    return y


def temperature_from_odmr(frequencies, signal, d_ref: float = C.ZFS_ROOM,
                          t_ref: float = C.ZFS_ROOM_TEMPERATURE) -> tuple[float, DoubletFit]:
    fit = odmr_doublet_fit(frequencies, signal)
    return temperature_from_zfs(fit.f_minus, fit.f_plus, d_ref, t_ref), fit


def pipeline_polarization(fid_hyper: FidRecord, fid_thermal: FidRecord, b_sm: float = C.FIELD_NMR,
                          t_r: float = C.ROOM_TEMPERATURE, gamma_n: float = C.GAMMA_13C,
                          band: tuple[float, float] | None = None) -> float:
    """FIDs -> spectra -> band integrals -> polarization estimate."""
    st = transform(fid_thermal)
    if band is None:
        band = default_band(st)
    s_t = band_integral(st, band)
    s_h = band_integral(transform(fid_hyper), band)
    return estimate_polarization(EnhancementInputs(s_h, s_t, b_sm=b_sm, t_r=t_r, gamma_n=gamma_n))

