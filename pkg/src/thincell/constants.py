"""Physical constants (CODATA 2018), SI units."""

K_B = 1.380649e-23  # J/K, exact
HBAR = 1.054571817e-34  # J s
H_PLANCK = 6.62607015e-34  # J s, exact
MU_B = 9.2740100783e-24  # J/T
C_LIGHT = 299792458.0  # m/s, exact
AMU = 1.66053906660e-27  # kg

RB87_MASS_AMU = 86.909180531
