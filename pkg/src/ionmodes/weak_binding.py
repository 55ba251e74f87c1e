"""Forward model for mode analysis in the weak-binding limit.

A near-resonant voltage pulse on one control electrode drives the ion to
a classical coherent amplitude along each mode,

    A_i = (Q/m) U |<u_i, E_l>| * t / (w_exc + w_i) * sinc[(t/2)(w_exc - w_i)]

(the sinc form is algebraically identical to the textbook driven-oscillator
result away from resonance and removes the 0/0 at w_exc = w_i; the ion is
assumed to start at the trap center at rest). The oscillating ion sees the
probe laser frequency-modulated with index beta_i = |<u_i, k_w>| A_i, which
redistributes the absorbed power into sidebands weighted by J_v(beta_i)^2
at detunings Delta + v w_i of the Lorentzian line. The normalized
fluorescence is the product of per-mode sideband sums, each divided by its
beta = 0 value so that F = 1 exactly with no excitation.

Scanning the drive frequency across the mode spectrum produces a dip at
each mode frequency whose depth encodes |<u_i, E_l>| * |<u_i, k_w>|.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import HBAR, NM, TWO_PI, mhz_to_angular
from .errors import DomainError
from .geometry import IonSpecies, ModeConfiguration, mode_vectors
from .specfun import bessel_j_table

DEFAULT_WAVELENGTH = 280.0 * NM
DEFAULT_V_MAX = 15


@dataclass(frozen=True)
class ProbeLaser:
    """Detection beam: wave vector [rad/m], detuning and linewidth [rad/s]."""

    k: tuple[float, float, float]
    detuning: float
    linewidth: float

    def __post_init__(self):
        k = tuple(float(c) for c in self.k)
        if len(k) != 3 or not all(math.isfinite(c) for c in k):
            raise DomainError("probe wave vector must be a finite 3-vector")
        if not np.linalg.norm(k) > 0.0:
            raise DomainError("probe wave vector must be nonzero")
        if not self.linewidth > 0.0:
            raise DomainError("probe linewidth must be positive")
        object.__setattr__(self, "k", k)

    @classmethod
    def from_display(cls, direction=(1.0, 0.0, 0.0), wavelength_nm: float = 280.0,
                     detuning_mhz: float = -5.0, linewidth_mhz: float = 42.0):
        d = np.asarray(direction, dtype=float)
        norm = np.linalg.norm(d)
        if norm == 0.0:
            raise DomainError("probe direction must be nonzero")
        k = (TWO_PI / (wavelength_nm * NM)) * d / norm
        return cls(tuple(k), mhz_to_angular(detuning_mhz), mhz_to_angular(linewidth_mhz))


@dataclass(frozen=True)
class ExcitationPulse:
    """Tickle pulse: electrode id, peak voltage [V], drive freq [rad/s], duration [s]."""

    electrode_id: int
    voltage: float
    frequency: float
    duration: float

    def __post_init__(self):
        if not self.voltage > 0.0:
            raise DomainError(f"pulse voltage must be positive, got {self.voltage}")
        if not self.frequency > 0.0:
            raise DomainError(f"drive frequency must be positive, got {self.frequency}")
        if not self.duration > 0.0:
            raise DomainError(f"pulse duration must be positive, got {self.duration}")

    def at_frequency(self, frequency: float) -> "ExcitationPulse":
        return ExcitationPulse(self.electrode_id, self.voltage, frequency, self.duration)


@dataclass(frozen=True)
class Spectrum:
    """Fluorescence vs drive frequency for one electrode.

    sigma is None for noiseless model curves; measured/synthetic spectra
    must carry per-point statistical standard errors > 0.
    """

    electrode_id: int
    omega: np.ndarray       # drive frequency [rad/s], strictly increasing
    fluorescence: np.ndarray
    sigma: np.ndarray | None = None

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        fl = np.asarray(self.fluorescence, dtype=float)
        if omega.ndim != 1 or fl.shape != omega.shape:
            raise DomainError("omega and fluorescence must be matching 1-D arrays")
        if np.any(np.diff(omega) <= 0.0):
            raise DomainError("omega grid must be strictly increasing")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "fluorescence", fl)
        if self.sigma is not None:
            s = np.asarray(self.sigma, dtype=float)
            if s.shape != omega.shape:
                raise DomainError("sigma must match the grid shape")
            if np.any(s <= 0.0):
                raise DomainError("sigma values must be positive")
            object.__setattr__(self, "sigma", s)

    def __len__(self):
        return self.omega.size


def _sinc(x: np.ndarray) -> np.ndarray:
    # sin(x)/x with the removable singularity filled in
    out = np.ones_like(x)
    nz = x != 0.0
    out[nz] = np.sin(x[nz]) / x[nz]
    return out


def excitation_amplitudes(config: ModeConfiguration, ion: IonSpecies,
                          field, pulse: ExcitationPulse, omega_grid=None) -> np.ndarray:
    """Driven amplitudes |A_i| [m] for all three modes.

    ``field`` is the electrode field E_l at the site in (V/m)/V. With an
    omega_grid [rad/s] the result has shape (3, len(grid)); otherwise the
    pulse's own drive frequency is used and the shape is (3,).
    """
    u = mode_vectors(config)
    proj = np.abs(u.T @ np.asarray(field, dtype=float))  # |<u_i, E_l>|
    w_exc = np.atleast_1d(
        np.asarray(pulse.frequency if omega_grid is None else omega_grid, dtype=float)
    )
    if np.any(w_exc <= 0.0):
        raise DomainError("drive frequencies must be positive")
    omega = np.asarray(config.omega)
    t = pulse.duration
    kick = (ion.charge / ion.mass) * pulse.voltage * proj  # [m/s^2]
    envelope = t / (w_exc[None, :] + omega[:, None]) * _sinc(
        0.5 * t * (w_exc[None, :] - omega[:, None])
    )
    amps = kick[:, None] * np.abs(envelope)
    return amps[:, 0] if omega_grid is None else amps


def excitation_amplitude(mode: int, config: ModeConfiguration, ion: IonSpecies,
                         field, pulse: ExcitationPulse) -> float:
    """Driven amplitude |A_i| [m] of one mode (1-based index)."""
    if mode not in (1, 2, 3):
        raise DomainError(f"mode index must be 1, 2 or 3, got {mode}")
    return float(excitation_amplitudes(config, ion, field, pulse)[mode - 1])


def coherent_occupation(amplitude: float, omega: float, ion: IonSpecies) -> float:
    """Mean phonon number of a coherent state of the given amplitude [m]."""
    if amplitude < 0.0:
        raise DomainError(f"amplitude must be >= 0, got {amplitude}")
    if not omega > 0.0:
        raise DomainError(f"omega must be positive, got {omega}")
    return ion.mass * omega * amplitude**2 / (2.0 * HBAR)


def _lorentzian(x: np.ndarray, linewidth: float) -> np.ndarray:
    half = 0.5 * linewidth
    return half**2 / (x**2 + half**2)


def fluorescence(beta, omega, probe: ProbeLaser, v_max: int = DEFAULT_V_MAX):
    """Normalized fluorescence for modulation indices beta_i >= 0.

    ``beta`` has shape (3,) or (3, N) for a batch of grid points; omega
    holds the three mode frequencies [rad/s]. The sideband sum for each
    mode is truncated at |v| = v_max and divided by its beta = 0 value,
    so the return value is exactly 1 at zero modulation.
    """
    if v_max < 1:
        raise DomainError(f"v_max must be >= 1, got {v_max}")
    b = np.asarray(beta, dtype=float)
    scalar_in = b.ndim == 1
    b = b.reshape(3, -1)
    if np.any(b < 0.0):
        raise DomainError("modulation indices must be >= 0")
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (3,):
        raise DomainError("omega must hold the three mode frequencies")

    jsq = bessel_j_table(v_max, b) ** 2           # (v_max+1, 3, N)
    baseline = _lorentzian(np.asarray(probe.detuning), probe.linewidth)
    result = np.ones(b.shape[1])
    for i in range(3):
        s = jsq[0, i] * baseline
        for v in range(1, v_max + 1):
            pair = (_lorentzian(probe.detuning + v * omega[i], probe.linewidth)
                    + _lorentzian(probe.detuning - v * omega[i], probe.linewidth))
            s += jsq[v, i] * pair
        result *= s / baseline
    return float(result[0]) if scalar_in else result


def modulation_indices(config: ModeConfiguration, ion: IonSpecies, field,
                       pulse: ExcitationPulse, probe: ProbeLaser,
                       omega_grid) -> np.ndarray:
    """beta_i = |<u_i, k_w>| A_i over a drive-frequency grid, shape (3, N)."""
    u = mode_vectors(config)
    doppler = np.abs(u.T @ np.asarray(probe.k, dtype=float))  # |<u_i, k_w>|
    amps = excitation_amplitudes(config, ion, field, pulse, omega_grid=omega_grid)
    return doppler[:, None] * amps


def weak_spectrum(config: ModeConfiguration, ion: IonSpecies, field,
                  probe: ProbeLaser, pulse: ExcitationPulse, omega_grid,
                  v_max: int = DEFAULT_V_MAX) -> Spectrum:
    """Noiseless model spectrum over a drive-frequency grid [rad/s]."""
    grid = np.asarray(omega_grid, dtype=float)
    beta = modulation_indices(config, ion, field, pulse, probe, grid)
    f_model = fluorescence(beta, np.asarray(config.omega), probe, v_max=v_max)
    return Spectrum(electrode_id=pulse.electrode_id, omega=grid, fluorescence=f_model)
