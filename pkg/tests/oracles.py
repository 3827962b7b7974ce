"""Reference implementations that share no code with the package solvers."""

import numpy as np
from scipy.linalg import expm


def master_rhs(h, collapse, rho):
    """drho/dt for H in Hz and collapse operators with sqrt(rate)."""
    out = -2j * np.pi * (h @ rho - rho @ h)
    for c in collapse:
        cd = c.conj().T
        out = out + c @ rho @ cd - 0.5 * (cd @ c @ rho + rho @ cd @ c)
    return out


def dense_liouvillian(h, collapse):
    """Column j is the RHS applied to the j-th column-stacked basis matrix."""
    d = h.shape[0]
    cols = []
    for j in range(d * d):
        e = np.zeros(d * d, complex)
        e[j] = 1.0
        cols.append(master_rhs(h, collapse, e.reshape(d, d, order="F")).reshape(-1, order="F"))
    return np.column_stack(cols)


def expm_propagate(h, collapse, rho0, t):
    d = h.shape[0]
    v = expm(dense_liouvillian(h, collapse) * t) @ np.asarray(rho0, complex).reshape(-1, order="F")
    return v.reshape(d, d, order="F")


def random_density_matrix(rng, d, rank=None):
    rank = rank or d
    a = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real
