"""Open-system dynamics for driven NV / nuclear spin systems.

The master equation is

    drho/dt = -2 pi i [H(t), rho] + sum_k (L_k rho L_k^+ - 1/2 {L_k^+ L_k, rho})

with ``H`` in Hz and collapse operators ``L_k`` carrying sqrt(rate in 1/s).
Superoperators act on column-stacked density matrices (``vec(A X B) =
(B^T kron A) vec(X)``).

Drives are microwave tones on one electron transition ``0 <-> m_t``. In the
rotating frame the reference tone is static, the other tones oscillate at
their offsets from it and counter-rotating terms are dropped. The undriven
``m_s = -m_t`` level is moved to its own rotating frame too, which is exact
because no coherent term touches it.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.sparse.csgraph import connected_components

from . import constants as C
from .errors import (
    AmbiguousSteadyStateError,
    NumericError,
    StepTooCoarseError,
    UnsupportedConfigurationError,
)
from .spin import (
    SpinSystemSpec,
    build_hamiltonian,
    electron_projector,
    electron_transition_operator,
    embed,
    spin_operators,
)

DISSIPATOR_KINDS = ("optical_pump", "electron_t1", "electron_t2", "nuclear_t1")

# RK4 substep bound on ||L|| h; per-substep truncation error ~ x^5 / 120.
RK4_MAX_NORM_STEP = 0.01
# Relative singular-value cut for null spaces of Liouvillians.
NULL_RTOL = 1e-12


@dataclass(frozen=True)
class DriveTone:
    """One microwave tone.

    Args:
        frequency: Lab-frame carrier in Hz.
        rabi_amplitude: Rabi frequency in Hz it produces on its transition.
        phase: Carrier phase in radians.
        transition: Electron levels ``(0, m_t)`` with ``m_t`` in {-1, +1}.
    """

    frequency: float
    rabi_amplitude: float
    phase: float = 0.0
    transition: tuple[int, int] = (0, -1)

    def __post_init__(self):
        object.__setattr__(self, "transition", tuple(int(m) for m in self.transition))
        if not self.frequency > 0:
            raise ValueError("tone frequency must be positive")
        if not self.rabi_amplitude >= 0:
            raise ValueError("rabi_amplitude must be non-negative")
        if self.transition not in ((0, -1), (0, 1)):
            raise ValueError(f"transition must be (0, -1) or (0, 1), got {self.transition}")

    @property
    def target(self) -> int:
        return self.transition[1]


@dataclass(frozen=True)
class Dissipator:
    """Incoherent process with a rate in 1/s.

    ``target`` restricts ``nuclear_t1`` to one spin index; ``None`` relaxes
    every nucleus.
    """

    kind: str
    rate: float
    target: int | None = None

    def __post_init__(self):
        if self.kind not in DISSIPATOR_KINDS:
            raise ValueError(f"unknown dissipator kind {self.kind!r}")
        if not self.rate >= 0:
            raise ValueError("dissipator rate must be non-negative")
        if self.target is not None and self.kind != "nuclear_t1":
            raise ValueError("only nuclear_t1 takes a target spin")


@dataclass(frozen=True)
class LindbladModel:
    spec: SpinSystemSpec
    tones: tuple[DriveTone, ...] = ()
    dissipators: tuple[Dissipator, ...] = ()
    frame: str = "rotating"
    reference: int = 0
    temperature: float = C.ROOM_TEMPERATURE

    def __post_init__(self):
        object.__setattr__(self, "tones", tuple(self.tones))
        object.__setattr__(self, "dissipators", tuple(self.dissipators))
        if self.frame not in ("rotating", "lab"):
            raise ValueError(f"frame must be 'rotating' or 'lab', got {self.frame!r}")
        if self.tones and not 0 <= self.reference < len(self.tones):
            raise ValueError("reference tone index out of range")
        if self.frame == "rotating" and len({t.transition for t in self.tones}) > 1:
            raise UnsupportedConfigurationError(
                "all tones must drive the same electron transition in the rotating frame"
            )
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        for d in self.dissipators:
            if d.target is not None and d.target not in self.spec.nuclear_indices:
                raise ValueError(f"nuclear_t1 target {d.target} is not a nuclear spin")

    def with_tones(self, tones: Sequence[DriveTone], reference: int = 0) -> "LindbladModel":
        return replace(self, tones=tuple(tones), reference=reference)

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "tones": [[t.frequency, t.rabi_amplitude, t.phase, list(t.transition)] for t in self.tones],
            "dissipators": [[d.kind, d.rate, d.target] for d in self.dissipators],
            "frame": self.frame,
            "reference": self.reference,
            "temperature": self.temperature,
        }

    def fingerprint(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def default_dissipators(
    spec: SpinSystemSpec,
    pump: float = C.PUMP_RATE,
    electron_t2: float = C.ELECTRON_T2_RATE,
    electron_t1: float = C.ELECTRON_T1_RATE,
    nuclear_t1: float = C.NUCLEAR_T1_RATE,
) -> tuple[Dissipator, ...]:
    """Pump, electron T1/T2 and T1 on every spin-1/2 nucleus.

    Quadrupolar nuclei (the 14N) get no relaxation, so they stay spectators.
    """
    out = [
        Dissipator("optical_pump", pump),
        Dissipator("electron_t2", electron_t2),
        Dissipator("electron_t1", electron_t1),
    ]
    for n in spec.nuclear_indices:
        if spec.spins[n].spin == 0.5:
            out.append(Dissipator("nuclear_t1", nuclear_t1, target=n))
    return tuple(out)


def default_model(spec: SpinSystemSpec, tones: Sequence[DriveTone] = (), **rates) -> LindbladModel:
    return LindbladModel(spec, tuple(tones), default_dissipators(spec, **rates))


def thermal_polarization(gamma: float, field: float, temperature: float) -> float:
    """Equilibrium <2Iz> of a spin-1/2 with Zeeman term -gamma B Iz."""
    return math.tanh(C.PLANCK * gamma * field / (2 * C.BOLTZMANN * temperature))


# --- collapse operators -------------------------------------------------------

def pump_dissipators(rate: float, spec: SpinSystemSpec) -> list[np.ndarray]:
    """Optical repolarization ``m_s = +-1 -> 0``, identity on all nuclei."""
    if rate < 0:
        raise ValueError("pump rate must be non-negative")
    s = math.sqrt(rate)
    return [s * electron_transition_operator(spec, 0, m) for m in (-1, 1)]


def _electron_t1(rate, spec):
    s = math.sqrt(rate)
    ops = []
    for m in (-1, 1):
        ops.append(s * electron_transition_operator(spec, 0, m))
        ops.append(s * electron_transition_operator(spec, m, 0))
    return ops


def _electron_t2(rate, spec):
    _, _, sz = spin_operators(1)
    # dephases 0 <-> +-1 coherences at `rate`
    return [math.sqrt(2 * rate) * embed(sz, spec.electron_index, spec)]


def _nuclear_t1(rate, spec, targets, temperature):
    ops = []
    for n in targets:
        sp = spin_operators(spec.spins[n].spin)
        raise_ = sp[0] + 1j * sp[1]
        p = thermal_polarization(spec.spins[n].gyromagnetic_ratio, spec.static_field, temperature)
        ops.append(math.sqrt(rate * (1 + p) / 2) * embed(raise_, n, spec))
        ops.append(math.sqrt(rate * (1 - p) / 2) * embed(raise_.conj().T, n, spec))
    return ops


def collapse_operators(model: LindbladModel) -> list[np.ndarray]:
    spec = model.spec
    ops: list[np.ndarray] = []
    for d in model.dissipators:
        if d.rate == 0:
            continue
        if d.kind == "optical_pump":
            ops += pump_dissipators(d.rate, spec)
        elif d.kind == "electron_t1":
            ops += _electron_t1(d.rate, spec)
        elif d.kind == "electron_t2":
            ops += _electron_t2(d.rate, spec)
        else:
            targets = spec.nuclear_indices if d.target is None else (d.target,)
            ops += _nuclear_t1(d.rate, spec, targets, model.temperature)
    return ops


# --- generators ---------------------------------------------------------------

@dataclass(frozen=True)
class Generator:
    """Time-dependent Lindblad generator.

    ``H(t) = static + sum_k (exp(-2 pi i f_k t) A_k + h.c.)`` in Hz, plus
    collapse operators.
    """

    static: np.ndarray
    harmonics: tuple[tuple[float, np.ndarray], ...] = ()
    collapse: tuple[np.ndarray, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "harmonics", tuple((float(f), np.asarray(a, complex)) for f, a in self.harmonics))
        object.__setattr__(self, "collapse", tuple(np.asarray(c, complex) for c in self.collapse))
        object.__setattr__(self, "static", np.asarray(self.static, complex))

    @property
    def dimension(self) -> int:
        return self.static.shape[0]

    @property
    def is_static(self) -> bool:
        return not self.harmonics

    def hamiltonian(self, t: float) -> np.ndarray:
        h = self.static.copy()
        for f, a in self.harmonics:
            z = np.exp(-2j * np.pi * f * t)
            h += z * a + np.conj(z) * a.conj().T
        return h

    def max_frequency(self) -> float:
        """Fastest coherent frequency retained: level spread + offsets + drive."""
        ev = np.linalg.eigvalsh((self.static + self.static.conj().T) / 2)
        f = float(ev[-1] - ev[0]) if len(ev) else 0.0
        if self.harmonics:
            f += max(abs(fk) for fk, _ in self.harmonics)
            f += sum(2 * np.linalg.norm(a, 2) for _, a in self.harmonics)
        return f

    def period(self) -> float | None:
        """Common period of the harmonics, ``None`` when static."""
        return beat_period([f for f, _ in self.harmonics])

    def restrict(self, idx: np.ndarray) -> "Generator":
        sub = np.ix_(idx, idx)
        return Generator(
            self.static[sub],
            tuple((f, a[sub]) for f, a in self.harmonics),
            tuple(c[sub] for c in self.collapse if np.any(c[sub])),
        )

    def blocks(self) -> list[np.ndarray]:
        """Invariant subspaces: connected components of the coupling graph."""
        pattern = np.abs(self.static) > 0
        for _, a in self.harmonics:
            pattern |= np.abs(a) > 0
        for c in self.collapse:
            pattern |= np.abs(c) > 0
        pattern = pattern | pattern.T
        n, labels = connected_components(pattern, directed=False)
        return [np.flatnonzero(labels == k) for k in range(n)]


def beat_period(offsets: Sequence[float], max_denominator: int = 1000, rtol: float = 1e-9) -> float | None:
    """Period of a set of commensurate frequencies; ``None`` if all vanish."""
    fs = [abs(f) for f in offsets if abs(f) > 0]
    if not fs:
        return None
    f1 = fs[0]
    ratios = []
    for f in fs:
        r = Fraction(f / f1).limit_denominator(max_denominator)
        if abs(float(r) - f / f1) > rtol * max(1.0, f / f1):
            raise UnsupportedConfigurationError(
                f"tone offsets {fs} are not commensurate; no common period"
            )
        ratios.append(r)
    lcm_den = math.lcm(*(r.denominator for r in ratios))
    g = math.gcd(*(int(r * lcm_den) for r in ratios))
    base = f1 * g / lcm_den
    return 1.0 / base


def _level_mean(h_diag, proj_diag):
    sel = proj_diag > 0.5
    return float(np.mean(h_diag[sel].real))


def to_rotating_frame(model: LindbladModel) -> Generator:
    """Rotating-wave generator in the frame of the reference tone."""
    if model.frame != "rotating":
        raise UnsupportedConfigurationError("model frame is not 'rotating'")
    spec = model.spec
    if len({t.transition for t in model.tones}) > 1:
        raise UnsupportedConfigurationError(
            "tones target different electron transitions; use the lab frame"
        )
    h = build_hamiltonian(spec)
    target = model.tones[0].target if model.tones else -1
    other = -target
    d = np.diag(h)
    p0 = np.diag(electron_projector(spec, 0)).real
    pt = np.diag(electron_projector(spec, target)).real
    po = np.diag(electron_projector(spec, other)).real
    e0, et, eo = _level_mean(d, p0), _level_mean(d, pt), _level_mean(d, po)
    if et <= e0:
        raise UnsupportedConfigurationError(
            f"m_s={target} lies below m_s=0; rotating frame assumes the target level is above"
        )
    f_ref = model.tones[model.reference].frequency if model.tones else et - e0
    static = h - np.diag(e0 * np.ones(len(d)) + f_ref * pt + (eo - e0) * po)
    x = electron_transition_operator(spec, target, 0)
    harmonics = []
    for tone in model.tones:
        a = 0.5 * tone.rabi_amplitude * np.exp(-1j * tone.phase) * x
        offset = tone.frequency - f_ref
        if abs(offset) <= 1e-12 * tone.frequency:
            static = static + a + a.conj().T
        elif tone.rabi_amplitude > 0:
            harmonics.append((offset, a))
    return Generator(static, tuple(harmonics), tuple(collapse_operators(model)))


def lab_generator(model: LindbladModel) -> Generator:
    """Lab-frame generator, drive ``Omega cos(2 pi f t + phi) (X + X^+)``."""
    spec = model.spec
    h = build_hamiltonian(spec)
    harmonics = []
    for tone in model.tones:
        x = electron_transition_operator(spec, tone.target, 0)
        harmonics.append((tone.frequency, 0.5 * tone.rabi_amplitude * np.exp(-1j * tone.phase) * (x + x.conj().T)))
    return Generator(h, tuple(harmonics), tuple(collapse_operators(model)))


def as_generator(model: LindbladModel | Generator) -> Generator:
    if isinstance(model, Generator):
        return model
    return to_rotating_frame(model) if model.frame == "rotating" else lab_generator(model)


# --- superoperators -----------------------------------------------------------

def commutator_superop(h: np.ndarray) -> np.ndarray:
    """Superoperator of ``X -> -2 pi i [h, X]``."""
    eye = np.eye(h.shape[0])
    return -2j * np.pi * (np.kron(eye, h) - np.kron(h.T, eye))


def dissipator_superop(collapse: Sequence[np.ndarray], dim: int) -> np.ndarray:
    eye = np.eye(dim)
    out = np.zeros((dim * dim, dim * dim), complex)
    for c in collapse:
        cdc = c.conj().T @ c
        out += np.kron(c.conj(), c) - 0.5 * np.kron(eye, cdc) - 0.5 * np.kron(cdc.T, eye)
    return out


def liouvillian(h: np.ndarray, collapse: Sequence[np.ndarray] = ()) -> np.ndarray:
    return commutator_superop(h) + dissipator_superop(collapse, h.shape[0])


def _vec(rho):
    return np.asarray(rho, complex).reshape(-1, order="F")


def _unvec(v, d):
    return v.reshape(d, d, order="F")


class _Superops:
    """Static part and harmonic pieces of L(t) in Liouville space."""

    def __init__(self, gen: Generator):
        self.l0 = liouvillian(gen.static, gen.collapse)
        self.parts = [(f, commutator_superop(a), commutator_superop(a.conj().T)) for f, a in gen.harmonics]
        bound = np.sqrt(np.linalg.norm(self.l0, 1) * np.linalg.norm(self.l0, np.inf))
        for _, k, kd in self.parts:
            bound += np.linalg.norm(k, 1) + np.linalg.norm(kd, 1)
        self.norm = bound

    def at(self, t):
        out = self.l0.copy()
        for f, k, kd in self.parts:
            z = np.exp(-2j * np.pi * f * t)
            out += z * k + np.conj(z) * kd
        return out


def _taylor4(m):
    eye = np.eye(m.shape[0])
    m2 = m @ m
    return eye + m + m2 / 2 + m2 @ m / 6 + m2 @ m2 / 24


def _substeps(norm, h, max_norm_step):
    return max(1, math.ceil(norm * h / max_norm_step))


def _rk4_liouville(ops: _Superops, y, t0, h, n):
    """n RK4 steps of size h on vector or matrix y, time-dependent L."""
    t = t0
    for _ in range(n):
        k1 = ops.at(t) @ y
        lm = ops.at(t + h / 2)
        k2 = lm @ (y + h / 2 * k1)
        k3 = lm @ (y + h / 2 * k2)
        k4 = ops.at(t + h) @ (y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return y


def _hilbert_rhs(gen: Generator, t, rho):
    h = gen.hamiltonian(t)
    out = -2j * np.pi * (h @ rho - rho @ h)
    for c in gen.collapse:
        cd = c.conj().T
        out += c @ rho @ cd - 0.5 * (cd @ c @ rho + rho @ cd @ c)
    return out


def _rk4_hilbert(gen, rho, t0, h, n):
    t = t0
    for _ in range(n):
        k1 = _hilbert_rhs(gen, t, rho)
        k2 = _hilbert_rhs(gen, t + h / 2, rho + h / 2 * k1)
        k3 = _hilbert_rhs(gen, t + h / 2, rho + h / 2 * k2)
        k4 = _hilbert_rhs(gen, t + h, rho + h * k3)
        rho = rho + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return rho


# --- density matrices ---------------------------------------------------------

def validate_density_matrix(rho: np.ndarray, hermitian_tol=1e-10, trace_tol=1e-9, min_eig=-1e-8) -> None:
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("density matrix must be square")
    if np.max(np.abs(rho - rho.conj().T)) > hermitian_tol:
        raise ValueError("density matrix is not Hermitian")
    tr = np.trace(rho)
    if abs(tr - 1) > trace_tol:
        raise ValueError(f"density matrix trace {tr.real:.12g} differs from 1")
    ev = np.linalg.eigvalsh((rho + rho.conj().T) / 2)
    if ev[0] < min_eig:
        raise ValueError(f"density matrix has negative eigenvalue {ev[0]:.3e}")


def thermal_state(spec: SpinSystemSpec, temperature: float, electron: str = "mixed") -> np.ndarray:
    """Product state: electron maximally mixed (or ``m_s = 0``), nuclei thermal."""
    factors = []
    for i, s in enumerate(spec.spins):
        if i == spec.electron_index:
            if electron == "mixed":
                factors.append(np.eye(3) / 3)
            elif electron == "zero":
                factors.append(np.diag([0.0, 1.0, 0.0]))
            else:
                raise ValueError(f"unknown electron state {electron!r}")
            continue
        m = s.spin - np.arange(s.multiplicity)
        x = C.PLANCK * s.gyromagnetic_ratio * spec.static_field / (C.BOLTZMANN * temperature)
        w = np.exp(x * (m - m.max()))
        factors.append(np.diag(w / w.sum()))
    out = factors[0]
    for f in factors[1:]:
        out = np.kron(f, out)
    return out.astype(complex)


def initial_state(model: LindbladModel) -> np.ndarray:
    """Electron maximally mixed, nuclei thermal at the model temperature."""
    return thermal_state(model.spec, model.temperature)


def observable(rho: np.ndarray, op: np.ndarray, return_residue: bool = False):
    """Real part of ``trace(rho op)``; optionally also the imaginary residue."""
    rho = np.asarray(rho)
    op = np.asarray(op)
    if rho.shape != op.shape:
        raise ValueError(f"shape mismatch {rho.shape} vs {op.shape}")
    scale = max(1.0, float(np.max(np.abs(op))))
    if np.max(np.abs(op - op.conj().T)) > 1e-12 * scale:
        raise ValueError("observable operator is not Hermitian")
    value = np.trace(rho @ op)
    if return_residue:
        return float(value.real), float(abs(value.imag))
    return float(value.real)


def nuclear_polarization_operator(spec: SpinSystemSpec, index: int) -> np.ndarray:
    """``2 Iz`` of spin ``index`` in the full space."""
    _, _, iz = spin_operators(spec.spins[index].spin)
    return 2 * embed(iz, index, spec)


# --- evolution ----------------------------------------------------------------

class Trajectory(NamedTuple):
    times: np.ndarray
    states: np.ndarray

    def expect(self, op: np.ndarray) -> np.ndarray:
        return np.einsum("tij,ji->t", self.states, op).real


def evolve(
    model: LindbladModel | Generator,
    rho0: np.ndarray,
    duration: float,
    step: float,
    stride: int = 1,
    method: str = "auto",
    max_norm_step: float = RK4_MAX_NORM_STEP,
) -> Trajectory:
    """Fixed-step RK4 propagation.

    Snapshots are spaced ``duration / ceil(duration / step)`` apart and every
    ``stride``-th one is kept (the first and last always are). Each step is
    split into RK4 substeps with ``||L|| h <= max_norm_step``.

    Raises:
        StepTooCoarseError: ``step > 1 / (20 f_max)``.
    """
    gen = as_generator(model)
    rho0 = np.asarray(rho0, complex)
    validate_density_matrix(rho0)
    if rho0.shape[0] != gen.dimension:
        raise ValueError("rho0 dimension does not match the model")
    if duration < 0 or step <= 0:
        raise ValueError("duration must be >= 0 and step > 0")
    f_max = gen.max_frequency()
    if f_max > 0 and step > 1 / (20 * f_max) * (1 + 1e-12):
        raise StepTooCoarseError(
            f"step {step:.3e} s does not resolve f_max = {f_max:.4e} Hz; "
            f"need step <= {1 / (20 * f_max):.3e} s"
        )
    n = max(1, math.ceil(duration / step - 1e-9)) if duration > 0 else 0
    h = duration / n if n else 0.0
    d = gen.dimension
    if method == "auto":
        method = "liouville" if gen.is_static and d <= 32 else "hilbert"
    keep = sorted(set(range(0, n + 1, stride)) | {n})
    times, states = [0.0], [rho0]
    if n == 0:
        return Trajectory(np.array(times), np.array(states))
    ops = _Superops(gen) if method == "liouville" else None
    if ops is not None:
        norm = ops.norm
    else:
        norm = 2 * np.pi * np.linalg.norm(gen.static, 2) * 2 + sum(np.linalg.norm(c, 2) ** 2 for c in gen.collapse)
        norm += sum(8 * np.pi * np.linalg.norm(a, 2) for _, a in gen.harmonics)
    m = _substeps(norm, h, max_norm_step)
    hs = h / m
    if method == "liouville" and gen.is_static:
        step_matrix = np.linalg.matrix_power(_taylor4(ops.l0 * hs), m)
        y = _vec(rho0)
        prev = 0
        for k in keep[1:]:
            y = np.linalg.matrix_power(step_matrix, k - prev) @ y
            prev = k
            times.append(k * h)
            states.append(_unvec(y, d))
    elif method == "liouville":
        y = _vec(rho0)
        prev = 0
        for k in keep[1:]:
            y = _rk4_liouville(ops, y, prev * h, hs, (k - prev) * m)
            prev = k
            times.append(k * h)
            states.append(_unvec(y, d))
    elif method == "hilbert":
        rho = rho0
        prev = 0
        for k in keep[1:]:
            rho = _rk4_hilbert(gen, rho, prev * h, hs, (k - prev) * m)
            prev = k
            times.append(k * h)
            states.append(rho)
    else:
        raise ValueError(f"unknown method {method!r}")
    return Trajectory(np.array(times), np.array(states))


# --- steady states ------------------------------------------------------------

def _null_projection(a: np.ndarray, v: np.ndarray | None, rtol: float = NULL_RTOL):
    """Null space of ``a`` and, given ``v``, the spectral projection of ``v`` onto it.

    Returns (vector or None, null dimension).
    """
    try:
        right = sla.null_space(a, rcond=rtol)
        left = sla.null_space(a.conj().T, rcond=rtol)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericError(f"null space computation failed: {exc}") from exc
    k = right.shape[1]
    if k == 0:
        raise NumericError("generator has no stationary state (empty null space)")
    if left.shape[1] != k:
        raise NumericError("left and right null spaces differ in dimension")
    if k == 1:
        x = _refine_null_vector(a, left[:, 0], right[:, 0])
        if v is None:
            return x, 1
        return x * ((left[:, 0].conj() @ v) / (left[:, 0].conj() @ x)), 1
    if v is None:
        return None, k
    coeffs = np.linalg.solve(left.conj().T @ right, left.conj().T @ v)
    return right @ coeffs, k


def _refine_null_vector(a, left, right):
    """Re-solve a simple null vector with one equation swapped for ``left^H x``.

    The SVD vector loses digits when rates span many decades; the bordered
    linear solve keeps small components (e.g. thermal nuclear polarization).
    """
    i = int(np.argmax(np.abs(left)))
    b = a.copy()
    b[i, :] = left.conj()
    rhs = np.zeros(a.shape[0], complex)
    rhs[i] = left.conj() @ right
    try:
        x = np.linalg.solve(b, rhs)
    except np.linalg.LinAlgError:
        return right
    return x if np.all(np.isfinite(x)) else right


def _normalize(rho):
    # divide first: null vectors carry an arbitrary complex phase
    rho = rho / np.trace(rho)
    return (rho + rho.conj().T) / 2


def _has_cross_block_terms(rho0, blocks):
    mask = np.zeros(rho0.shape, bool)
    for b in blocks:
        mask[np.ix_(b, b)] = True
    return np.any(np.abs(rho0[~mask]) > 1e-14)


def _solve_blocks(gen: Generator, rho0, use_blocks: bool, solve_block):
    d = gen.dimension
    blocks = gen.blocks() if use_blocks else [np.arange(d)]
    if rho0 is not None and len(blocks) > 1 and _has_cross_block_terms(rho0, blocks):
        blocks = [np.arange(d)]
    if rho0 is None and len(blocks) > 1:
        raise AmbiguousSteadyStateError(len(blocks))
    out = np.zeros((d, d), complex)
    for b in blocks:
        sub_gen = gen.restrict(b) if len(blocks) > 1 else gen
        if rho0 is None:
            x, k = solve_block(sub_gen, None)
            if x is None:
                raise AmbiguousSteadyStateError(k)
            out[np.ix_(b, b)] = _normalize(_unvec(x, len(b)))
            continue
        r0 = rho0[np.ix_(b, b)]
        weight = np.trace(r0).real
        if weight <= 1e-300:
            continue
        x, _ = solve_block(sub_gen, _vec(r0))
        out[np.ix_(b, b)] = weight * _normalize(_unvec(x, len(b)))
    return out


def _static_block(gen: Generator, v):
    return _null_projection(liouvillian(gen.static, gen.collapse), v)


def steady_state(
    model: LindbladModel | Generator,
    rho0: np.ndarray | None = None,
    method: str = "auto",
    use_blocks: bool = True,
) -> np.ndarray:
    """Stationary state of the rotating-frame dynamics.

    Static generators use the Liouvillian null space. Periodic (multi-tone)
    generators use ``method='floquet'`` (fixed point of the one-period
    propagator, then period-averaged) or ``method='average'`` (drop every
    oscillating term, zero-order averaging).

    When the stationary state is not unique (e.g. conserved 14N populations)
    ``rho0`` selects the state reached from it; without ``rho0`` an
    :class:`AmbiguousSteadyStateError` reports the null dimension.
    """
    gen = as_generator(model)
    if rho0 is not None:
        rho0 = np.asarray(rho0, complex)
        validate_density_matrix(rho0)
    if method == "auto":
        method = "static" if gen.is_static else "floquet"
    if method == "average" or (method == "static" and gen.is_static):
        base = Generator(gen.static, (), gen.collapse)
        return _solve_blocks(base, rho0, use_blocks, _static_block)
    if method == "static":
        raise UnsupportedConfigurationError("generator is time-dependent; use 'floquet' or 'average'")
    if method == "floquet":
        if gen.is_static:
            return _solve_blocks(gen, rho0, use_blocks, _static_block)
        return _solve_blocks(gen, rho0, use_blocks, _floquet_block)
    raise ValueError(f"unknown steady-state method {method!r}")


def _floquet_block(gen: Generator, v, max_norm_step: float = RK4_MAX_NORM_STEP / 2, samples: int = 64):
    period = gen.period()
    ops = _Superops(gen)
    n2 = gen.dimension ** 2
    m = _substeps(ops.norm, period, max_norm_step)
    m = samples * math.ceil(m / samples)
    hs = period / m
    phi = _rk4_liouville(ops, np.eye(n2, dtype=complex), 0.0, hs, m)
    x, k = _null_projection(phi - np.eye(n2), v, rtol=1e-11)
    if x is None:
        return None, k
    # period average by the trapezoid rule (exact for band-limited periodic data)
    acc = np.zeros_like(x)
    y = x
    per = m // samples
    for j in range(samples):
        acc += y
        y = _rk4_liouville(ops, y, j * per * hs, hs, per)
    return acc / samples, k


def floquet_propagator(gen: Generator, max_norm_step: float = RK4_MAX_NORM_STEP / 2) -> np.ndarray:
    """One-period Liouville-space propagator of a periodic generator."""
    period = gen.period()
    if period is None:
        raise UnsupportedConfigurationError("generator is static; no period")
    ops = _Superops(gen)
    m = _substeps(ops.norm, period, max_norm_step)
    n2 = gen.dimension ** 2
    return _rk4_liouville(ops, np.eye(n2, dtype=complex), 0.0, period / m, m)


def secular_steady_state(model: LindbladModel, rho0: np.ndarray) -> np.ndarray:
    """Zero-order multi-tone fast path.

    Splits the system into invariant blocks (e.g. 14N sectors). In each block
    the tone closest to that block's electron resonance becomes the reference,
    the other tones are averaged away, and the block's static steady state is
    solved. Exact when every other tone is far off resonance in that block.
    """
    rho0 = np.asarray(rho0, complex)
    validate_density_matrix(rho0)
    if not model.tones:
        return steady_state(model, rho0)
    full = to_rotating_frame(model)
    blocks = full.blocks()
    spec = model.spec
    h = build_hamiltonian(spec)
    target = model.tones[0].target
    p0 = np.diag(electron_projector(spec, 0)).real > 0.5
    pt = np.diag(electron_projector(spec, target)).real > 0.5
    d = np.diag(h).real
    out = np.zeros_like(rho0)
    for b in blocks:
        r0 = rho0[np.ix_(b, b)]
        weight = np.trace(r0).real
        if weight <= 1e-300:
            continue
        in_b = np.zeros(len(d), bool)
        in_b[b] = True
        if np.any(in_b & p0) and np.any(in_b & pt):
            centre = d[in_b & pt].mean() - d[in_b & p0].mean()
            ref = int(np.argmin([abs(t.frequency - centre) for t in model.tones]))
        else:
            ref = model.reference
        single = model.with_tones([model.tones[ref]], 0)
        gen = to_rotating_frame(single).restrict(b)
        x, _ = _static_block(gen, _vec(r0))
        out[np.ix_(b, b)] = weight * _normalize(_unvec(x, len(b)))
    return out
