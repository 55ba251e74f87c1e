"""Physical constants and unit conversions used throughout the package.

Internal unit convention is SI (rad/s, kg, C, m, V). Display units at the
I/O boundary are MHz (frequency / 2pi), degrees, micrometers, microvolts,
microseconds, and uV/um^2 for curvatures.
"""

import math

# CODATA 2018
HBAR = 1.054571817e-34        # reduced Planck constant [J s]
E_CHARGE = 1.602176634e-19    # elementary charge [C]
ATOMIC_MASS = 1.66053906660e-27  # atomic mass unit [kg]

MG25_MASS_AMU = 24.985837     # Mg-25 atomic mass [u]

TWO_PI = 2.0 * math.pi

# curvature: 1 V/m^2 = 1e-6 uV/um^2
V_PER_M2_TO_UV_PER_UM2 = 1e-6

UM = 1e-6   # micrometer [m]
US = 1e-6   # microsecond [s]
UV = 1e-6   # microvolt [V]
NM = 1e-9   # nanometer [m]


def mhz_to_angular(f_mhz: float) -> float:
    """Frequency in MHz (omega/2pi) to angular frequency [rad/s]."""
    return TWO_PI * f_mhz * 1e6


def angular_to_mhz(omega: float) -> float:
    """Angular frequency [rad/s] to omega/2pi in MHz."""
    return omega / (TWO_PI * 1e6)


def khz_to_angular(f_khz: float) -> float:
    return TWO_PI * f_khz * 1e3


def angular_to_khz(omega: float) -> float:
    return omega / (TWO_PI * 1e3)
