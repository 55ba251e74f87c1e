"""Normal-mode geometry of a harmonically trapped ion.

A single ion bound in three dimensions oscillates along three orthonormal
mode vectors u_1, u_2, u_3 with angular frequencies omega_1..3. The mode
basis is parametrized by three rotations about the fixed laboratory axes,
composed extrinsically as

    R = R_z(phi_z) @ R_y(phi_y) @ R_x(phi_x)

i.e. the x-rotation is applied first. The composition order is a
convention of this package (used consistently by both analysis methods);
fitted angle values are only meaningful together with it.

The quasi-static curvature of the trapping potential follows from the
mode configuration by a similarity transform,

    H = (m/Q) R diag(omega_a^2, omega_b^2, omega_c^2) R^T

where (a, b, c) is an explicit mode-to-axis assignment: the assignment is
never guessed, because any permutation of the diagonal produces a valid
curvature tensor with the same spectrum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constants import (
    ATOMIC_MASS,
    E_CHARGE,
    MG25_MASS_AMU,
    V_PER_M2_TO_UV_PER_UM2,
    angular_to_mhz,
    mhz_to_angular,
)
from .errors import DomainError

IDENTITY_ASSIGNMENT = (1, 2, 3)


def normalize_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi], ties at pi resolved to +pi."""
    if not math.isfinite(angle):
        raise DomainError(f"angle must be finite, got {angle!r}")
    a = math.remainder(angle, 2.0 * math.pi)
    if a <= -math.pi:
        a = math.pi
    return a


@dataclass(frozen=True)
class IonSpecies:
    """Ion species: mass [kg] and charge [C]."""

    mass: float
    charge: float

    def __post_init__(self):
        if not (self.mass > 0.0):
            raise DomainError(f"ion mass must be positive, got {self.mass}")
        if self.charge == 0.0:
            raise DomainError("ion charge must be nonzero")

    @classmethod
    def mg25(cls) -> "IonSpecies":
        """Singly charged Mg-25."""
        return cls(mass=MG25_MASS_AMU * ATOMIC_MASS, charge=E_CHARGE)

    @classmethod
    def from_amu(cls, mass_amu: float, charge_e: float = 1.0) -> "IonSpecies":
        return cls(mass=mass_amu * ATOMIC_MASS, charge=charge_e * E_CHARGE)


@dataclass(frozen=True)
class ModeConfiguration:
    """Three mode angles [rad] and three angular frequencies [rad/s].

    Angles are normalized to (-pi, pi] at construction; all frequencies
    must be strictly positive.
    """

    phi_x: float
    phi_y: float
    phi_z: float
    omega: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "phi_x", normalize_angle(self.phi_x))
        object.__setattr__(self, "phi_y", normalize_angle(self.phi_y))
        object.__setattr__(self, "phi_z", normalize_angle(self.phi_z))
        omega = tuple(float(w) for w in self.omega)
        if len(omega) != 3:
            raise DomainError("omega must hold exactly three frequencies")
        if not all(math.isfinite(w) and w > 0.0 for w in omega):
            raise DomainError(f"mode frequencies must be positive, got {omega}")
        object.__setattr__(self, "omega", omega)

    @classmethod
    def from_display(cls, angles_deg, freqs_mhz) -> "ModeConfiguration":
        """Build from display units: angles in degrees, omega/2pi in MHz."""
        ax, ay, az = (math.radians(a) for a in angles_deg)
        return cls(ax, ay, az, tuple(mhz_to_angular(f) for f in freqs_mhz))

    @property
    def angles(self) -> tuple[float, float, float]:
        return (self.phi_x, self.phi_y, self.phi_z)

    @property
    def angles_deg(self) -> tuple[float, float, float]:
        return tuple(math.degrees(a) for a in self.angles)

    @property
    def freqs_mhz(self) -> tuple[float, float, float]:
        return tuple(angular_to_mhz(w) for w in self.omega)


@dataclass(frozen=True)
class CurvatureTensor:
    """Symmetric curvature tensor [uV/um^2] with optional systematic half-widths."""

    matrix: np.ndarray
    systematics: np.ndarray | None = field(default=None)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (3, 3):
            raise DomainError(f"curvature matrix must be 3x3, got {m.shape}")
        scale = max(np.abs(m).max(), 1.0)
        if np.abs(m - m.T).max() > 1e-9 * scale:
            raise DomainError("curvature matrix must be symmetric")
        object.__setattr__(self, "matrix", m)
        if self.systematics is not None:
            s = np.asarray(self.systematics, dtype=float)
            if s.shape != (3, 3):
                raise DomainError("systematics matrix must be 3x3")
            object.__setattr__(self, "systematics", s)


def _rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_matrix(phi_x: float, phi_y: float, phi_z: float) -> np.ndarray:
    """Composite rotation about the fixed lab axes, x first: Rz @ Ry @ Rx."""
    for name, a in (("phi_x", phi_x), ("phi_y", phi_y), ("phi_z", phi_z)):
        if not math.isfinite(a):
            raise DomainError(f"{name} must be finite, got {a!r}")
    return _rot_z(phi_z) @ _rot_y(phi_y) @ _rot_x(phi_x)


def mode_vectors(config: ModeConfiguration) -> np.ndarray:
    """Orthonormal mode vectors as columns: u_i = result[:, i-1]."""
    return rotation_matrix(config.phi_x, config.phi_y, config.phi_z)


def _check_assignment(assignment) -> tuple[int, int, int]:
    a = tuple(int(i) for i in assignment)
    if sorted(a) != [1, 2, 3]:
        raise DomainError(
            f"assignment must be a permutation of (1, 2, 3), got {assignment!r}"
        )
    return a


def curvature_hessian(
    config: ModeConfiguration,
    ion: IonSpecies,
    assignment=IDENTITY_ASSIGNMENT,
) -> CurvatureTensor:
    """Curvature tensor of the trapping potential, in uV/um^2.

    ``assignment[j]`` is the 1-based mode index whose squared frequency
    sits on lab-axis slot j (x, y, z) of the pre-rotation diagonal.
    The default is the identity assignment; callers reproducing a measured
    tensor should select the assignment explicitly (all six choices share
    the same eigenvalues, so nothing in the spectrum can disambiguate).
    """
    a = _check_assignment(assignment)
    R = mode_vectors(config)
    diag = np.diag([config.omega[a[0] - 1] ** 2,
                    config.omega[a[1] - 1] ** 2,
                    config.omega[a[2] - 1] ** 2])
    h_si = (ion.mass / ion.charge) * R @ diag @ R.T  # V/m^2
    h = h_si * V_PER_M2_TO_UV_PER_UM2
    h = 0.5 * (h + h.T)  # scrub rounding asymmetry
    return CurvatureTensor(matrix=h)


def curvature_systematics(
    config: ModeConfiguration,
    ion: IonSpecies,
    angle_half_widths,
    assignment=IDENTITY_ASSIGNMENT,
) -> CurvatureTensor:
    """Curvature with per-entry systematic half-widths from the angle box.

    Evaluates the tensor at all 2^3 sign corners of the angle-uncertainty
    box (half-widths in radians, one per angle) and reports half the
    max-min spread per entry.
    """
    hw = tuple(float(w) for w in angle_half_widths)
    if len(hw) != 3 or any(w < 0.0 or not math.isfinite(w) for w in hw):
        raise DomainError(f"angle half-widths must be three values >= 0, got {hw}")
    center = curvature_hessian(config, ion, assignment)
    corners = []
    for sx in (-1.0, 1.0):
        for sy in (-1.0, 1.0):
            for sz in (-1.0, 1.0):
                shifted = ModeConfiguration(
                    config.phi_x + sx * hw[0],
                    config.phi_y + sy * hw[1],
                    config.phi_z + sz * hw[2],
                    config.omega,
                )
                corners.append(curvature_hessian(shifted, ion, assignment).matrix)
    stack = np.array(corners)
    half = 0.5 * (stack.max(axis=0) - stack.min(axis=0))
    return CurvatureTensor(matrix=center.matrix, systematics=half)
