"""Physical constants and default model parameters.

All frequencies are ordinary frequencies in Hz (not rad/s); rates are in 1/s.
"""

PLANCK = 6.62607015e-34  # J s
BOLTZMANN = 1.380649e-23  # J / K

GAMMA_E = 28.0249e9  # NV electron, Hz/T
GAMMA_13C = 10.7084e6  # Hz/T
GAMMA_14N = 3.077e6  # Hz/T

# Zero-field splitting at room temperature, used as the thermometry reference.
ZFS_ROOM = 2.870e9
ZFS_ROOM_TEMPERATURE = 297.0
DZFS_DT = -74e3  # Hz / K

# Operating point of the DNP runs: 17.6 mT, and D taken as the mean of the
# m_s=-1 / m_s=+1 resonances observed there (2.3703 and 3.3567 GHz).
FIELD_DNP = 0.0176
ZFS_DNP = 2.8635e9
FIELD_NMR = 6.0
ROOM_TEMPERATURE = 297.0

# 14N hyperfine (secular only); sign configurable.
A_ZZ_14N = -2.16e6
# Model 13C tensor: weak compared with the 13C Larmor frequency at 17.6 mT
# (0.188 MHz) so the solid-effect satellites sit near +/- gamma_c B.
A_ZZ_13C = -0.05e6
A_ZX_13C = 0.10e6

PUMP_RATE = 1e5
ELECTRON_T2_RATE = 1e6
ELECTRON_T1_RATE = 1e3
NUCLEAR_T1_RATE = 1.0

# Weak drive used for spectra: below 0.3 * gamma_c * B (= 56 kHz at 17.6 mT).
SPECTRUM_RABI = 10e3

# Rabi = kappa * sqrt(P); kappa puts 10 W near the simulated optimum.
RABI_PER_SQRT_WATT = 35e3 / 10 ** 0.5

MAX_DIMENSION = 64
