"""Spin operators and Hamiltonian assembly for small NV / nuclear spin systems.

Conventions
-----------
* Hamiltonian entries are ordinary frequencies in Hz. The 2*pi enters only in
  the propagators.
* Electron Zeeman is ``+gamma_e * B * Sz``; nuclear Zeeman is
  ``-gamma_n * B * Iz`` so a positive gyromagnetic ratio gives a lower-energy
  ``m = +I`` state.
* Single-spin bases are ordered ``m = s, s-1, ..., -s``.
* Tensor factors follow declaration order with the *leftmost spin varying
  fastest*: the full operator is ``kron(op[n-1], ..., op[1], op[0])``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from typing import NamedTuple

import numpy as np

from . import constants as C
from .errors import CapacityError, NumericError


@dataclass(frozen=True)
class SpinSpecies:
    label: str
    spin: float
    gyromagnetic_ratio: float  # Hz/T, signed

    def __post_init__(self):
        twice = Fraction(self.spin).limit_denominator(4) * 2
        if twice.denominator != 1 or twice < 1 or abs(float(twice) / 2 - self.spin) > 1e-12:
            raise ValueError(f"spin quantum number must be a half-integer >= 1/2, got {self.spin}")
        if not np.isfinite(self.gyromagnetic_ratio):
            raise ValueError(f"gyromagnetic ratio of {self.label} is not finite")

    @property
    def multiplicity(self) -> int:
        return int(round(2 * self.spin)) + 1


NV_ELECTRON = SpinSpecies("NV", 1.0, C.GAMMA_E)
CARBON_13 = SpinSpecies("13C", 0.5, C.GAMMA_13C)
NITROGEN_14 = SpinSpecies("14N", 1.0, C.GAMMA_14N)


@dataclass(frozen=True)
class HyperfineCoupling:
    electron_index: int
    nuclear_index: int
    a_zz: float
    a_zx: float = 0.0

    def __post_init__(self):
        if self.electron_index == self.nuclear_index:
            raise ValueError("hyperfine coupling needs two distinct spins")
        if not (np.isfinite(self.a_zz) and np.isfinite(self.a_zx)):
            raise ValueError("hyperfine constants must be finite")


@dataclass(frozen=True)
class SpinSystemSpec:
    """Declarative NV + nuclei system in a static field along z.

    Args:
        spins: Spin species in basis order.
        zero_field_splitting: D in Hz, applied to the electron spin.
        couplings: Hyperfine couplings electron-nucleus.
        static_field: B in tesla along the NV axis.
        electron_index: Which entry of ``spins`` is the S=1 electron.
        max_dimension: Capacity cap on the Hilbert dimension.
    """

    spins: tuple[SpinSpecies, ...]
    zero_field_splitting: float
    couplings: tuple[HyperfineCoupling, ...] = ()
    static_field: float = 0.0
    electron_index: int = 0
    max_dimension: int = C.MAX_DIMENSION

    def __post_init__(self):
        object.__setattr__(self, "spins", tuple(self.spins))
        object.__setattr__(self, "couplings", tuple(self.couplings))
        n = len(self.spins)
        if not 0 <= self.electron_index < n:
            raise ValueError("electron_index out of range")
        if self.spins[self.electron_index].spin != 1:
            raise ValueError("the electron spin must have S = 1")
        for c in self.couplings:
            if c.electron_index != self.electron_index:
                raise ValueError("couplings must target the S = 1 electron")
            if not 0 <= c.nuclear_index < n:
                raise ValueError(f"coupling nuclear_index {c.nuclear_index} out of range")
        if self.dimension < 2:
            raise ValueError("Hilbert dimension must be at least 2")

    @property
    def dimensions(self) -> tuple[int, ...]:
        return tuple(s.multiplicity for s in self.spins)

    @property
    def dimension(self) -> int:
        return int(np.prod(self.dimensions))

    @property
    def nuclear_indices(self) -> tuple[int, ...]:
        return tuple(i for i in range(len(self.spins)) if i != self.electron_index)

    def index_of(self, label: str) -> int:
        for i, s in enumerate(self.spins):
            if s.label == label:
                return i
        raise KeyError(label)

    def to_dict(self) -> dict:
        return {
            "spins": [[s.label, s.spin, s.gyromagnetic_ratio] for s in self.spins],
            "zero_field_splitting": self.zero_field_splitting,
            "couplings": [[c.electron_index, c.nuclear_index, c.a_zz, c.a_zx] for c in self.couplings],
            "static_field": self.static_field,
            "electron_index": self.electron_index,
        }


def nv_system(
    nitrogen: bool = True,
    carbon: bool = True,
    field: float = C.FIELD_DNP,
    zfs: float = C.ZFS_DNP,
    a_n: float = C.A_ZZ_14N,
    a_zz_c: float = C.A_ZZ_13C,
    a_zx_c: float = C.A_ZX_13C,
    max_dimension: int = C.MAX_DIMENSION,
) -> SpinSystemSpec:
    """Default NV system: electron, then optional 14N, then optional 13C."""
    spins = [NV_ELECTRON]
    couplings = []
    if nitrogen:
        spins.append(NITROGEN_14)
        couplings.append(HyperfineCoupling(0, len(spins) - 1, a_n, 0.0))
    if carbon:
        spins.append(CARBON_13)
        couplings.append(HyperfineCoupling(0, len(spins) - 1, a_zz_c, a_zx_c))
    return SpinSystemSpec(tuple(spins), zfs, tuple(couplings), field, 0, max_dimension)


def spin_operators(s: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (Sx, Sy, Sz) for spin ``s`` in the ``m = s..-s`` basis."""
    twice = 2 * s
    if twice < 1 or abs(twice - round(twice)) > 1e-12:
        raise ValueError(f"spin must be a positive half-integer, got {s}")
    m = s - np.arange(int(round(twice)) + 1)
    # <m+1|S+|m> = sqrt(s(s+1) - m(m+1)) on the superdiagonal
    raise_ = np.diag(np.sqrt(s * (s + 1) - m[1:] * (m[1:] + 1)), k=1).astype(complex)
    sx = (raise_ + raise_.conj().T) / 2
    sy = (raise_ - raise_.conj().T) / 2j
    sz = np.diag(m).astype(complex)
    return sx, sy, sz


def _check_capacity(spec: SpinSystemSpec):
    if spec.dimension > spec.max_dimension:
        raise CapacityError(
            f"Hilbert dimension {spec.dimension} exceeds the cap {spec.max_dimension}"
        )


def embed(op: np.ndarray, index: int, spec: SpinSystemSpec) -> np.ndarray:
    """Embed a single-spin operator into the full space (identity elsewhere)."""
    op = np.asarray(op)
    dims = spec.dimensions
    if not 0 <= index < len(dims):
        raise ValueError(f"spin index {index} out of range")
    if op.shape != (dims[index], dims[index]):
        raise ValueError(
            f"operator shape {op.shape} does not match multiplicity {dims[index]} of spin {index}"
        )
    factors = [op if i == index else np.eye(d) for i, d in enumerate(dims)]
    return reduce(np.kron, reversed(factors))


def electron_projector(spec: SpinSystemSpec, m_s: int) -> np.ndarray:
    """Projector onto electron level ``m_s`` (identity on nuclei)."""
    p = np.zeros((3, 3), complex)
    p[1 - m_s, 1 - m_s] = 1.0
    return embed(p, spec.electron_index, spec)


def electron_transition_operator(spec: SpinSystemSpec, upper: int, lower: int = 0) -> np.ndarray:
    """``|upper><lower|`` on the electron, identity on nuclei."""
    p = np.zeros((3, 3), complex)
    p[1 - upper, 1 - lower] = 1.0
    return embed(p, spec.electron_index, spec)


def build_hamiltonian(spec: SpinSystemSpec) -> np.ndarray:
    """Static lab-frame Hamiltonian in Hz.

    ``D Sz^2 + gamma_e B Sz - sum_n gamma_n B Iz_n + sum (a_zz Sz Iz + a_zx Sz Ix)``
    """
    _check_capacity(spec)
    e = spec.electron_index
    _, _, sz = spin_operators(1)
    b = spec.static_field
    h = spec.zero_field_splitting * embed(sz @ sz, e, spec)
    h = h + spec.spins[e].gyromagnetic_ratio * b * embed(sz, e, spec)
    for n in spec.nuclear_indices:
        _, _, iz = spin_operators(spec.spins[n].spin)
        h = h - spec.spins[n].gyromagnetic_ratio * b * embed(iz, n, spec)
    sz_full = embed(sz, e, spec)
    for c in spec.couplings:
        ix, _, iz = spin_operators(spec.spins[c.nuclear_index].spin)
        h = h + sz_full @ (c.a_zz * embed(iz, c.nuclear_index, spec) + c.a_zx * embed(ix, c.nuclear_index, spec))
    return (h + h.conj().T) / 2


class Transition(NamedTuple):
    frequency: float
    amplitude: float
    lower: int
    upper: int


def transition_table(
    h: np.ndarray, drive_op: np.ndarray, threshold: float = 1e-8
) -> list[Transition]:
    """Allowed transitions of ``h`` under ``drive_op``.

    Lists every eigenpair (i, j) with ``E_j > E_i`` and
    ``|<i|drive|j>| > threshold * max(1, max|drive|)``, sorted by frequency.
    """
    try:
        energies, vecs = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigensolver failed: {exc}") from exc
    elements = np.abs(vecs.conj().T @ drive_op @ vecs)
    cut = threshold * max(1.0, float(np.max(np.abs(drive_op))))
    scale = max(1.0, float(np.max(np.abs(energies))))
    out = []
    for i in range(len(energies)):
        for j in range(len(energies)):
            df = energies[j] - energies[i]
            if df > 1e-12 * scale and elements[i, j] > cut:
                out.append(Transition(float(df), float(elements[i, j]), i, j))
    out.sort(key=lambda t: t.frequency)
    return out


def operator_to_json(op: np.ndarray) -> str:
    """Row-major ``[re, im]`` pairs, for golden files."""
    op = np.asarray(op, complex)
    return json.dumps({"dimension": op.shape[0],
                       "entries": [[[z.real, z.imag] for z in row] for row in op]})


def operator_from_json(text: str) -> np.ndarray:
    data = json.loads(text)
    arr = np.array(data["entries"], float)
    op = arr[..., 0] + 1j * arr[..., 1]
    if op.shape != (data["dimension"], data["dimension"]):
        raise ValueError("dimension does not match entries")
    return op
