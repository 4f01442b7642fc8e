"""Physical constants and unit conventions.

Internal units throughout the package: frequency in MHz, magnetic field in
mT, time in us (g2 correlation delays in ns). Conversions to SI happen only
at interface boundaries (e.g. the sensitivity formulas).
"""

import numpy as np

# NV ground-state zero-field splitting (MHz)
D_ZFS_MHZ = 2870.0

# electron gyromagnetic ratio, 28.0249514 GHz/T expressed in MHz/mT
GAMMA_E_MHZ_PER_MT = 28.0249514

# 13C nuclear gyromagnetic ratio, 10.7084 MHz/T -> MHz/mT
GAMMA_C13_MHZ_PER_MT = 10.7084e-3

# 14N hyperfine defaults (MHz); the transverse value barely affects
# secular spectra and is a documented default
A_PARALLEL_N14_MHZ = -2.16
A_PERP_N14_MHZ = -2.7

# effective axial coupling for a strongly coupled 13C (MHz)
A_PARALLEL_C13_STRONG_MHZ = 6.43

# SI constants for sensitivity estimates
HBAR_J_S = 1.054571817e-34
MU_B_J_PER_T = 9.2740100783e-24
G_LANDE = 2.0

# carbon number density of diamond (cm^-3), used for ppb conversion
CARBON_DENSITY_PER_CM3 = 1.76e23

# the four <111> NV axes of the diamond lattice, unit vectors,
# pairwise at arccos(-1/3)
NV_AXES = (
    np.array([1.0, 1.0, 1.0]) / np.sqrt(3.0),
    np.array([1.0, -1.0, -1.0]) / np.sqrt(3.0),
    np.array([-1.0, 1.0, -1.0]) / np.sqrt(3.0),
    np.array([-1.0, -1.0, 1.0]) / np.sqrt(3.0),
)
