"""Forward model for mode analysis in the strong-binding limit.

Two-photon Raman coupling with effective wave vector dk drives carrier or
sideband transitions of a ground-state-cooled ion. The coupling strength
of mode i enters through the Lamb-Dicke parameter

    eta_i = |<dk, u_i>| * sqrt(hbar / (2 m w_i)),

and the Rabi rate for a motional transition n -> n + dn factorizes over
modes,

    W(n, dn) = W0 * prod_i exp(-eta_i^2/2) eta_i^|dn_i|
               sqrt(n_<! / n_>!) L_{n_<}^{|dn_i|}(eta_i^2),

with n_< (n_>) the lesser (greater) of n_i and n_i + dn_i. The survival
probability after a pulse of duration t is the thermal average

    P_g(t) = sum_n [prod_i P_i(n_i)] * (1 + cos(W t) exp(-G t)) / 2,

where P_i is a Bose-Einstein distribution truncated at n_max and
renormalized so P_g(0) = 1 exactly, and G is a phenomenological
decoherence rate multiplying the coherence term (at G = 0 this is the
plain cos^2(W t / 2) thermal sum).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import HBAR, NM, TWO_PI
from .errors import DomainError
from .geometry import IonSpecies, ModeConfiguration, mode_vectors
from .specfun import laguerre, laguerre_table, sqrt_factorial_ratio

DEFAULT_N_MAX = 11
DEFAULT_RAMAN_DIRECTION = (-1.0 / math.sqrt(2.0), 1.0 / math.sqrt(2.0), 0.0)

SELECTORS = ("carrier", "bsb1", "bsb2", "bsb3")
_SELECTOR_DN = {
    "carrier": (0, 0, 0),
    "bsb1": (1, 0, 0),
    "bsb2": (0, 1, 0),
    "bsb3": (0, 0, 1),
}


@dataclass(frozen=True)
class RamanGeometry:
    """Effective Raman wave vector and coupling rates.

    delta_k in rad/m; direction_uncertainty is the half-angle [rad] of the
    wave-vector orientation systematic; rabi_rate is the motional-independent
    Rabi rate W0 [rad/s]; decoherence [rad/s] damps the coherence term.
    """

    delta_k: tuple[float, float, float]
    rabi_rate: float
    decoherence: float = 0.0
    direction_uncertainty: float = math.radians(5.0)

    def __post_init__(self):
        dk = tuple(float(c) for c in self.delta_k)
        if len(dk) != 3 or not all(math.isfinite(c) for c in dk):
            raise DomainError("delta_k must be a finite 3-vector")
        if not np.linalg.norm(dk) > 0.0:
            raise DomainError("delta_k must be nonzero")
        if self.rabi_rate < 0.0:
            raise DomainError(f"rabi_rate must be >= 0, got {self.rabi_rate}")
        if self.decoherence < 0.0:
            raise DomainError(f"decoherence must be >= 0, got {self.decoherence}")
        object.__setattr__(self, "delta_k", dk)

    @classmethod
    def from_display(cls, direction=DEFAULT_RAMAN_DIRECTION,
                     wavelength_nm: float = 280.0, crossing_angle_deg: float = 90.0,
                     rabi_khz: float = 0.0, decoherence_khz: float = 0.0,
                     direction_uncertainty_deg: float = 5.0) -> "RamanGeometry":
        """Two beams of the given wavelength crossing at the given angle.

        |dk| = 2 sin(angle/2) * 2pi/lambda; the default 90 degree crossing
        gives sqrt(2) times the single-beam wave number.
        """
        d = np.asarray(direction, dtype=float)
        norm = np.linalg.norm(d)
        if norm == 0.0:
            raise DomainError("Raman direction must be nonzero")
        magnitude = 2.0 * math.sin(math.radians(crossing_angle_deg) / 2.0) \
            * TWO_PI / (wavelength_nm * NM)
        return cls(
            delta_k=tuple(magnitude * d / norm),
            rabi_rate=TWO_PI * rabi_khz * 1e3,
            decoherence=TWO_PI * decoherence_khz * 1e3,
            direction_uncertainty=math.radians(direction_uncertainty_deg),
        )

    def tilted(self, in_plane: float = 0.0, out_of_plane: float = 0.0) -> "RamanGeometry":
        """Rotate delta_k by the given angles [rad]: about z, then about
        the in-plane axis perpendicular to it (surface-plane tilt first)."""
        dk = np.asarray(self.delta_k)
        cz, sz = math.cos(in_plane), math.sin(in_plane)
        rz = np.array([[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]])
        dk = rz @ dk
        # out-of-plane: rotate about the horizontal axis orthogonal to dk
        horiz = np.array([dk[1], -dk[0], 0.0])
        norm = np.linalg.norm(horiz)
        if norm > 0.0 and out_of_plane != 0.0:
            axis = horiz / norm
            c, s = math.cos(out_of_plane), math.sin(out_of_plane)
            cross = np.array([
                [0.0, -axis[2], axis[1]],
                [axis[2], 0.0, -axis[0]],
                [-axis[1], axis[0], 0.0],
            ])
            rot = c * np.eye(3) + s * cross + (1.0 - c) * np.outer(axis, axis)
            dk = rot @ dk
        return RamanGeometry(tuple(dk), self.rabi_rate, self.decoherence,
                             self.direction_uncertainty)


@dataclass(frozen=True)
class ThermalState:
    """Per-mode mean occupations and the Fock-space truncation."""

    nbar: tuple[float, float, float]
    n_max: int = DEFAULT_N_MAX

    def __post_init__(self):
        nbar = tuple(float(n) for n in self.nbar)
        if len(nbar) != 3 or any(n < 0.0 or not math.isfinite(n) for n in nbar):
            raise DomainError(f"nbar must be three values >= 0, got {nbar}")
        if self.n_max < 0:
            raise DomainError(f"n_max must be >= 0, got {self.n_max}")
        object.__setattr__(self, "nbar", nbar)

    def truncated_weights(self, mode: int) -> np.ndarray:
        """P(n) for n = 0..n_max of one mode (1-based), renormalized to 1."""
        ns = np.arange(self.n_max + 1)
        p = np.array([thermal_pn(self.nbar[mode - 1], int(n)) for n in ns])
        return p / p.sum()


@dataclass(frozen=True)
class FloppingCurve:
    """Ground-state survival vs pulse duration for one coupling.

    sigma is None for noiseless model curves; measured/synthetic curves
    carry per-point standard errors > 0.
    """

    selector: str
    t: np.ndarray           # pulse duration [s]
    p_ground: np.ndarray
    sigma: np.ndarray | None = None

    def __post_init__(self):
        if self.selector not in SELECTORS:
            raise DomainError(f"selector must be one of {SELECTORS}, got {self.selector!r}")
        t = np.asarray(self.t, dtype=float)
        p = np.asarray(self.p_ground, dtype=float)
        if t.ndim != 1 or p.shape != t.shape:
            raise DomainError("t and p_ground must be matching 1-D arrays")
        if np.any(t < 0.0):
            raise DomainError("pulse durations must be >= 0")
        if np.any((p < 0.0) | (p > 1.0)):
            raise DomainError("p_ground values must lie in [0, 1]")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "p_ground", p)
        if self.sigma is not None:
            s = np.asarray(self.sigma, dtype=float)
            if s.shape != t.shape or np.any(s <= 0.0):
                raise DomainError("sigma must match the grid and be positive")
            object.__setattr__(self, "sigma", s)

    def __len__(self):
        return self.t.size

    @property
    def delta_n(self) -> tuple[int, int, int]:
        return _SELECTOR_DN[self.selector]


def lamb_dicke_all(config: ModeConfiguration, ion: IonSpecies,
                   raman: RamanGeometry) -> np.ndarray:
    """Lamb-Dicke parameters eta_i for all three modes."""
    u = mode_vectors(config)
    proj = np.abs(u.T @ np.asarray(raman.delta_k))
    ground_extent = np.sqrt(HBAR / (2.0 * ion.mass * np.asarray(config.omega)))
    return proj * ground_extent


def lamb_dicke(mode: int, config: ModeConfiguration, ion: IonSpecies,
               raman: RamanGeometry) -> float:
    """eta_i of one mode (1-based index)."""
    if mode not in (1, 2, 3):
        raise DomainError(f"mode index must be 1, 2 or 3, got {mode}")
    return float(lamb_dicke_all(config, ion, raman)[mode - 1])


def thermal_pn(nbar: float, n: int) -> float:
    """Bose-Einstein occupation probability P(n) = nbar^n / (nbar+1)^(n+1)."""
    if nbar < 0.0:
        raise DomainError(f"nbar must be >= 0, got {nbar}")
    if n < 0 or n != int(n):
        raise DomainError(f"n must be a nonnegative integer, got {n!r}")
    if nbar == 0.0:
        return 1.0 if n == 0 else 0.0
    # log-space keeps large n well-behaved
    return math.exp(n * math.log(nbar) - (n + 1) * math.log(nbar + 1.0))


def rabi_rate(omega_0: float, eta, n, delta_n) -> float:
    """Motional-sensitive Rabi rate magnitude for Fock state n and change dn."""
    eta = tuple(float(e) for e in eta)
    n = tuple(int(v) for v in n)
    dn = tuple(int(v) for v in delta_n)
    if len(eta) != 3 or len(n) != 3 or len(dn) != 3:
        raise DomainError("eta, n and delta_n must all have three entries")
    if any(e < 0.0 for e in eta):
        raise DomainError("Lamb-Dicke parameters must be >= 0")
    if any(v < 0 for v in n):
        raise DomainError("phonon numbers must be >= 0")
    if omega_0 < 0.0:
        raise DomainError(f"omega_0 must be >= 0, got {omega_0}")
    rate = omega_0
    for i in range(3):
        n_final = n[i] + dn[i]
        if n_final < 0:
            raise DomainError(
                f"mode {i + 1}: transition to n = {n_final} below the ground state"
            )
        n_less, n_greater = min(n[i], n_final), max(n[i], n_final)
        x = eta[i] ** 2
        rate *= (math.exp(-0.5 * x) * eta[i] ** abs(dn[i])
                 * sqrt_factorial_ratio(n_less, n_greater)
                 * laguerre(n_less, abs(dn[i]), x))
    return abs(rate)


def _mode_factor_table(eta_i: float, dn_i: int, n_max: int) -> np.ndarray:
    """Per-mode Rabi factor for n = 0..n_max at fixed dn (vectorized in n).

    Entries where n + dn would fall below the ground state are zero
    (no such transition exists).
    """
    x = eta_i**2
    pref = math.exp(-0.5 * x) * eta_i ** abs(dn_i)
    ns = np.arange(n_max + 1)
    n_less = np.minimum(ns, ns + dn_i)
    valid = n_less >= 0
    lag = laguerre_table(n_max, abs(dn_i), x)
    out = np.zeros(n_max + 1)
    out[valid] = pref * lag[n_less[valid]]
    # sqrt(n_<! / n_>!) = 1 / sqrt(prod of the |dn| levels above n_<)
    for step in range(1, abs(dn_i) + 1):
        out[valid] /= np.sqrt(n_less[valid] + step)
    return out


def _rabi_grid(omega_0: float, eta: np.ndarray, delta_n, n_max: int) -> np.ndarray:
    """|W(n, dn)| over the full (n_max+1)^3 Fock grid, flattened."""
    f1, f2, f3 = (
        _mode_factor_table(float(eta[i]), int(delta_n[i]), n_max) for i in range(3)
    )
    grid = omega_0 * f1[:, None, None] * f2[None, :, None] * f3[None, None, :]
    return np.abs(grid).ravel()


def _thermal_weight_grid(thermal: ThermalState) -> np.ndarray:
    w1, w2, w3 = (thermal.truncated_weights(i) for i in (1, 2, 3))
    return (w1[:, None, None] * w2[None, :, None] * w3[None, None, :]).ravel()


def survival_curve(selector: str, t, config: ModeConfiguration, ion: IonSpecies,
                   raman: RamanGeometry, thermal: ThermalState) -> np.ndarray:
    """P_g over an array of pulse durations [s] for one coupling selector."""
    if selector not in SELECTORS:
        raise DomainError(f"selector must be one of {SELECTORS}, got {selector!r}")
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 0.0):
        raise DomainError("pulse durations must be >= 0")
    eta = lamb_dicke_all(config, ion, raman)
    rates = _rabi_grid(raman.rabi_rate, eta, _SELECTOR_DN[selector], thermal.n_max)
    weights = _thermal_weight_grid(thermal)
    contrast = weights @ np.cos(np.outer(rates, t))
    return 0.5 * (1.0 + np.exp(-raman.decoherence * t) * contrast)


def survival_probability(t: float, selector: str, config: ModeConfiguration,
                         ion: IonSpecies, raman: RamanGeometry,
                         thermal: ThermalState) -> float:
    """Thermally averaged ground-state survival after a pulse of duration t [s]."""
    if t < 0.0:
        raise DomainError(f"pulse duration must be >= 0, got {t}")
    return float(survival_curve(selector, [t], config, ion, raman, thermal)[0])


class SurvivalEvaluator:
    """Repeated survival-curve evaluation over fixed time grids.

    Produces values identical to survival_curve but caches the cosine
    matrices cos(W_n * t), which depend only on the mode angles and the
    base Rabi rate. Re-evaluations that vary just the occupations or the
    decoherence rate (the bulk of a finite-difference Jacobian) then
    reduce to a cheap weight contraction. One cache slot suffices for the
    fitter's access pattern.

    The cache makes instances stateful: share one evaluator per thread.
    Everything else in this module is pure and reentrant.
    """

    def __init__(self, grids: dict[str, np.ndarray], ion: IonSpecies,
                 delta_k, omega, n_max: int = DEFAULT_N_MAX):
        self.grids = {sel: np.asarray(t, dtype=float) for sel, t in grids.items()}
        for sel in self.grids:
            if sel not in SELECTORS:
                raise DomainError(f"unknown selector {sel!r}")
        self.ion = ion
        self.delta_k = tuple(float(c) for c in delta_k)
        self.omega = tuple(float(w) for w in omega)
        self.n_max = n_max
        self._key = None
        self._cos = None

    def _cos_matrices(self, angles: tuple, omega_0: float) -> dict[str, np.ndarray]:
        key = (angles, omega_0)
        if key != self._key:
            config = ModeConfiguration(angles[0], angles[1], angles[2], self.omega)
            raman = RamanGeometry(self.delta_k, rabi_rate=max(omega_0, 0.0))
            eta = lamb_dicke_all(config, self.ion, raman)
            self._cos = {
                sel: np.cos(np.outer(
                    _rabi_grid(omega_0, eta, _SELECTOR_DN[sel], self.n_max), t))
                for sel, t in self.grids.items()
            }
            self._key = key
        return self._cos

    def curves(self, angles, nbar, omega_0: float, gamma: float) -> dict[str, np.ndarray]:
        """P_g over every grid for the given parameter point."""
        if omega_0 < 0.0 or gamma < 0.0:
            raise DomainError("rates must be >= 0")
        cos = self._cos_matrices(tuple(float(a) for a in angles), float(omega_0))
        thermal = ThermalState(tuple(float(n) for n in nbar), n_max=self.n_max)
        weights = _thermal_weight_grid(thermal)
        return {
            sel: 0.5 * (1.0 + np.exp(-gamma * self.grids[sel]) * (weights @ cos[sel]))
            for sel in self.grids
        }


def flopping_curve(selector: str, t_grid, config: ModeConfiguration,
                   ion: IonSpecies, raman: RamanGeometry,
                   thermal: ThermalState) -> FloppingCurve:
    """Noiseless model flopping curve over a pulse-duration grid [s]."""
    t = np.asarray(t_grid, dtype=float)
    p = survival_curve(selector, t, config, ion, raman, thermal)
    # clip float noise at the boundary so the container invariant holds
    p = np.clip(p, 0.0, 1.0)
    return FloppingCurve(selector=selector, t=t, p_ground=p)
