"""Physical constants (CODATA 2018) and ion species table, SI units."""

import math

E_CHARGE = 1.602176634e-19      # C (exact)
EPS0 = 8.854187813e-12          # F/m
HBAR = 1.054571817e-34          # J s (exact by definition of h)
AMU = 1.660539067e-27           # kg
M_ELECTRON_U = 5.485799091e-4   # electron mass in u

# e0^2 = e^2 / (4 pi eps0), in J m
E0_SQ = E_CHARGE**2 / (4.0 * math.pi * EPS0)

TWO_PI = 2.0 * math.pi


def ion_mass(atomic_mass_u):
    """Singly charged ion mass in kg from the neutral atomic mass in u."""
    return (atomic_mass_u - M_ELECTRON_U) * AMU


# neutral atomic masses (u), natural linewidths of the cooling line (Hz),
# and wavelengths of the cooling line (m)
SPECIES = {
    "Mg24": {"mass_u": 23.98504170, "linewidth_hz": 41.4e6, "wavelength": 280.353e-9},
    "Mg25": {"mass_u": 24.98583696, "linewidth_hz": 41.4e6, "wavelength": 280.353e-9},
    "Be9": {"mass_u": 9.012183065, "linewidth_hz": 19.4e6, "wavelength": 313.132e-9},
}
