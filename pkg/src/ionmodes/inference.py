"""Nonlinear least-squares estimation of mode configurations.

Both methods reduce to weighted least squares on their forward models:
the weak method fits all tickle spectra jointly with seven free
parameters (three angles, three frequencies, drive voltage); the strong
method fits carrier plus sideband flopping curves with two free angles
(the third held at a reference value, optionally iterating over which),
three occupations, the base Rabi rate and a decoherence rate.

The optimizer is a damped Gauss-Newton iteration (Levenberg-Marquardt
style multiplicative damping of the normal-matrix diagonal) with central
finite-difference Jacobians. Statistical errors come from the inverse
normal matrix at the solution scaled by the reduced chi-squared;
systematic half-widths come from corner scans that refit under perturbed
fixed assumptions (ion position for the weak method, Raman wave-vector
orientation for the strong method).

Parameter degeneracies are detected on the normalized normal matrix and
reported as errors naming the flat direction, rather than silently
returning one point of a solution manifold.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .constants import TWO_PI, mhz_to_angular
from .errors import DomainError, DegeneracyError
from .fields import FieldTable, TrapLayout, TrapSite
from .geometry import IonSpecies, ModeConfiguration, rotation_matrix
from .strong_binding import (
    FloppingCurve,
    RamanGeometry,
    SurvivalEvaluator,
)
from .weak_binding import (
    ExcitationPulse,
    ProbeLaser,
    Spectrum,
    weak_spectrum,
)

MAX_ITERATIONS = 200
STEP_TOLERANCE = 1e-8
JACOBIAN_REL_STEP = 1e-6
DEGENERACY_EPS = 1e-10

ANGLE_LO = -0.5 * math.pi + 1e-9
ANGLE_HI = 0.5 * math.pi


@dataclass
class FreeParameter:
    """One optimizer degree of freedom (internal SI units)."""

    name: str
    value: float
    scale: float
    lower: float = -math.inf
    upper: float = math.inf

    def __post_init__(self):
        if not (self.scale > 0.0 and math.isfinite(self.scale)):
            raise DomainError(f"{self.name}: scale must be positive")
        if not self.lower <= self.value <= self.upper:
            raise DomainError(
                f"{self.name}: initial value {self.value} outside bounds "
                f"[{self.lower}, {self.upper}]"
            )


@dataclass
class FitParameter:
    """One reported parameter in display units."""

    name: str
    value: float
    stat_err: float
    sys_err: float = 0.0


@dataclass
class FitReport:
    """Best-fit parameters (display units) with errors, fit quality, diagnostics."""

    parameters: list[FitParameter]
    chi2: float
    dof: int
    residuals: dict
    diagnostics: dict

    def __getitem__(self, name: str) -> FitParameter:
        for p in self.parameters:
            if p.name == name:
                return p
        raise KeyError(name)

    def value(self, name: str) -> float:
        return self[name].value

    def stat(self, name: str) -> float:
        return self[name].stat_err

    def to_json_dict(self) -> dict:
        return {
            "parameters": [
                {"name": p.name, "value": p.value, "stat_err": p.stat_err,
                 "sys_err": p.sys_err}
                for p in self.parameters
            ],
            "chi2": self.chi2,
            "dof": self.dof,
            "residuals": {k: {kk: list(map(float, vv)) for kk, vv in v.items()}
                          for k, v in self.residuals.items()},
            "diagnostics": self.diagnostics,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)


@dataclass
class OptimResult:
    values: np.ndarray
    covariance: np.ndarray
    chi2: float
    dof: int
    iterations: int
    converged: bool
    final_step_norm: float
    jacobian: np.ndarray
    residuals: np.ndarray


def _finite_cost(residuals: np.ndarray) -> float:
    if not np.all(np.isfinite(residuals)):
        return math.inf
    return float(residuals @ residuals)


def _check_degeneracy(normal: np.ndarray, names: list[str]) -> None:
    diag = np.sqrt(np.diag(normal))
    dead = [names[i] for i in range(len(names)) if diag[i] == 0.0
            or not math.isfinite(diag[i])]
    if dead:
        raise DegeneracyError(
            "degenerate fit: data carry no information on " + ", ".join(dead),
            direction={n: 1.0 for n in dead},
        )
    corr = normal / np.outer(diag, diag)
    eigval, eigvec = np.linalg.eigh(corr)
    if eigval[0] < DEGENERACY_EPS * eigval[-1]:
        vec = eigvec[:, 0]
        order = np.argsort(-np.abs(vec))
        terms = [f"{names[i]} ({vec[i]:+.2f})" for i in order if abs(vec[i]) > 0.15]
        raise DegeneracyError(
            "degenerate fit: unconstrained direction spanned by "
            + ", ".join(terms),
            direction={names[i]: float(vec[i]) for i in range(len(names))},
        )


def levenberg_marquardt(residual_fn, free: list[FreeParameter],
                        max_iter: int = MAX_ITERATIONS,
                        step_tol: float = STEP_TOLERANCE) -> OptimResult:
    """Damped Gauss-Newton minimization of sum(residual_fn(theta)^2).

    The Jacobian is built by central differences with per-parameter steps
    of JACOBIAN_REL_STEP times the parameter scale. Proposed steps are
    clipped to the box bounds. A DomainError raised by residual_fn during
    a trial step rejects that step instead of aborting the fit.
    """
    names = [p.name for p in free]
    theta = np.array([p.value for p in free], dtype=float)
    scales = np.array([p.scale for p in free], dtype=float)
    lower = np.array([p.lower for p in free], dtype=float)
    upper = np.array([p.upper for p in free], dtype=float)
    n_free = theta.size

    r = np.asarray(residual_fn(theta), dtype=float)
    cost = _finite_cost(r)
    if not math.isfinite(cost):
        raise DomainError("residuals are not finite at the initial guess")
    n_data = r.size
    dof = n_data - n_free
    if dof <= 0:
        raise DomainError(f"underdetermined fit: {n_data} points, {n_free} parameters")

    def jacobian(th: np.ndarray, r_center: np.ndarray) -> np.ndarray:
        J = np.empty((n_data, n_free))
        for i in range(n_free):
            h = JACOBIAN_REL_STEP * scales[i]
            lo = np.array(th)
            hi = np.array(th)
            hi[i] += h
            lo[i] -= h
            try:
                r_hi = np.asarray(residual_fn(hi), dtype=float)
                r_lo = np.asarray(residual_fn(lo), dtype=float)
                J[:, i] = (r_hi - r_lo) / (2.0 * h)
            except DomainError:
                # fall back to a one-sided difference inside the domain
                r_hi = np.asarray(residual_fn(np.clip(hi, lower, upper)), dtype=float)
                J[:, i] = (r_hi - r_center) / h
        return J

    lam = 1e-3
    converged = False
    step_norm = math.inf
    iteration = 0
    J = jacobian(theta, r)
    j_fresh = True
    while iteration < max_iter:
        iteration += 1
        if not j_fresh:
            J = jacobian(theta, r)
            j_fresh = True
        normal = J.T @ J
        if iteration == 1:
            _check_degeneracy(normal, names)
        gradient = J.T @ r
        accepted = False
        for _ in range(30):
            damped = normal + lam * np.diag(np.diag(normal))
            try:
                delta = np.linalg.solve(damped, -gradient)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = np.clip(theta + delta, lower, upper)
            step = trial - theta
            try:
                r_trial = np.asarray(residual_fn(trial), dtype=float)
                trial_cost = _finite_cost(r_trial)
            except DomainError:
                trial_cost = math.inf
            if trial_cost < cost:
                theta, r, cost = trial, r_trial, trial_cost
                lam = max(lam / 3.0, 1e-12)
                accepted = True
                j_fresh = False
                step_norm = float(np.sqrt(np.sum((step / scales) ** 2)))
                break
            lam *= 10.0
        if not accepted:
            # damping exhausted: local minimum to machine precision
            converged = True
            step_norm = 0.0
            break
        if step_norm < step_tol:
            converged = True
            break

    if not j_fresh:
        J = jacobian(theta, r)
    normal = J.T @ J
    _check_degeneracy(normal, names)
    red_chi2 = cost / dof if dof > 0 else 1.0
    covariance = np.linalg.inv(normal) * red_chi2
    return OptimResult(values=theta, covariance=covariance, chi2=cost, dof=dof,
                       iterations=iteration, converged=converged,
                       final_step_norm=step_norm, jacobian=J, residuals=r)


# ---------------------------------------------------------------------------
# weak-binding fit


@dataclass(frozen=True)
class WeakFitContext:
    """Everything the weak model needs besides the fitted parameters.

    Fields are resolved per electrode from the layout at the trap site,
    or straight from a field table (in which case position systematics
    cannot be scanned, and the absolute field scale is whatever the table
    says: only the product U_exc * |E_l| is physical).
    """

    ion: IonSpecies
    probe: ProbeLaser
    site: TrapSite
    duration: float
    layout: TrapLayout | None = None
    table: FieldTable | None = None
    v_max: int = 15

    def __post_init__(self):
        if (self.layout is None) == (self.table is None):
            raise DomainError("provide exactly one of layout or field table")
        if not self.duration > 0.0:
            raise DomainError("pulse duration must be positive")

    def field(self, electrode_id: int) -> np.ndarray:
        if self.layout is not None:
            return self.layout.field_at(electrode_id, self.site.position)
        if electrode_id not in self.table.fields:
            raise DomainError(f"electrode id {electrode_id} not in field table")
        return np.array(self.table.fields[electrode_id])

    def with_site(self, site: TrapSite) -> "WeakFitContext":
        if self.layout is None:
            raise DomainError("position scan requires an electrode layout")
        return replace(self, site=site)


WEAK_PARAM_NAMES = ("phi_x", "phi_y", "phi_z", "omega_1", "omega_2", "omega_3",
                    "U_exc")

# display-unit conversion: (report name, factor from SI)
_WEAK_DISPLAY = (
    ("phi_x_deg", math.degrees(1.0)),
    ("phi_y_deg", math.degrees(1.0)),
    ("phi_z_deg", math.degrees(1.0)),
    ("omega_1_MHz", 1.0 / (TWO_PI * 1e6)),
    ("omega_2_MHz", 1.0 / (TWO_PI * 1e6)),
    ("omega_3_MHz", 1.0 / (TWO_PI * 1e6)),
    ("U_exc_uV", 1e6),
)


def weak_internal_values(report: FitReport) -> dict:
    """Best-fit values of a weak fit in SI units, keyed by internal names."""
    return {raw: report.value(disp) / factor
            for raw, (disp, factor) in zip(WEAK_PARAM_NAMES, _WEAK_DISPLAY)}


def _weak_residual_builder(spectra: list[Spectrum], context: WeakFitContext):
    fields = {s.electrode_id: context.field(s.electrode_id) for s in spectra}

    def model_curves(theta: np.ndarray) -> dict[int, np.ndarray]:
        config = ModeConfiguration(theta[0], theta[1], theta[2],
                                   (theta[3], theta[4], theta[5]))
        out = {}
        for s in spectra:
            pulse = ExcitationPulse(s.electrode_id, theta[6], float(s.omega[0]),
                                    context.duration)
            model = weak_spectrum(config, context.ion, fields[s.electrode_id],
                                  context.probe, pulse, s.omega,
                                  v_max=context.v_max)
            out[s.electrode_id] = model.fluorescence
        return out

    def residual(theta: np.ndarray) -> np.ndarray:
        curves = model_curves(theta)
        parts = [(s.fluorescence - curves[s.electrode_id]) / s.sigma for s in spectra]
        return np.concatenate(parts)

    return residual, model_curves


def _weak_free_parameters(initial: dict) -> list[FreeParameter]:
    omega_lo = TWO_PI * 1e4  # 10 kHz floor keeps frequencies positive
    return [
        FreeParameter("phi_x", initial["phi_x"], 0.5, ANGLE_LO, ANGLE_HI),
        FreeParameter("phi_y", initial["phi_y"], 0.5, ANGLE_LO, ANGLE_HI),
        FreeParameter("phi_z", initial["phi_z"], 0.5, ANGLE_LO, ANGLE_HI),
        FreeParameter("omega_1", initial["omega_1"], TWO_PI * 1e6, omega_lo),
        FreeParameter("omega_2", initial["omega_2"], TWO_PI * 1e6, omega_lo),
        FreeParameter("omega_3", initial["omega_3"], TWO_PI * 1e6, omega_lo),
        FreeParameter("U_exc", initial["U_exc"], max(abs(initial["U_exc"]), 1e-5),
                      1e-9),
    ]


def seed_weak_guess(spectra: list[Spectrum], context: WeakFitContext,
                    angle_step_deg: float = 10.0) -> dict:
    """Heuristic starting point when no initial guess is supplied.

    Frequencies: the three deepest separated local minima of a smoothed
    composite (electrode-averaged) spectrum. Angles: coarse grid search
    matching predicted geometric couplings against the observed dip-depth
    pattern across all electrodes; the handful of best-scoring candidates
    (mutually separated) are then ranked by an actual chi-squared
    evaluation after a 1-D voltage scan. A single electrode's pattern is
    blind to some angle reflections, which is why every electrode enters
    the score and the final ranking uses the full data.
    """
    grid = spectra[0].omega
    composite = np.zeros_like(grid)
    for s in spectra:
        composite += np.interp(grid, s.omega, s.fluorescence)
    composite /= len(spectra)
    kernel = np.ones(5) / 5.0
    smooth = np.convolve(composite, kernel, mode="same")

    minima = [j for j in range(1, len(grid) - 1)
              if smooth[j] <= smooth[j - 1] and smooth[j] <= smooth[j + 1]]
    minima.sort(key=lambda j: smooth[j])
    spacing = mhz_to_angular(0.2)
    seeds = []
    for j in minima:
        if all(abs(grid[j] - grid[k]) > spacing for k in seeds):
            seeds.append(j)
        if len(seeds) == 3:
            break
    if len(seeds) < 3:
        raise DomainError("could not locate three resonance dips for seeding")
    omega_seed = np.sort(grid[seeds])

    # observed dip depth per (electrode, mode window)
    half_window = mhz_to_angular(0.1)
    depth_obs = np.empty((len(spectra), 3))
    e_matrix = np.empty((len(spectra), 3))
    for row, s in enumerate(spectra):
        e_matrix[row] = context.field(s.electrode_id)
        for i, w in enumerate(omega_seed):
            sel = np.abs(s.omega - w) <= half_window
            depth_obs[row, i] = 1.0 - (float(s.fluorescence[sel].min()) if np.any(sel)
                                       else float(np.interp(w, s.omega, s.fluorescence)))
    obs = depth_obs.ravel()
    obs_norm = np.linalg.norm(obs)
    if obs_norm == 0.0:
        raise DomainError("spectra show no dips to seed from")
    obs = obs / obs_norm

    k_w = np.asarray(context.probe.k)
    # resonant amplitude scale per mode, up to the common (Q/m) U prefactor
    env = context.duration / (2.0 * omega_seed)

    steps = np.deg2rad(np.arange(-80.0, 81.0, angle_step_deg))
    candidates = []  # (score, angles)
    for ax in steps:
        for ay in steps:
            for az in steps:
                u = rotation_matrix(ax, ay, az)
                proj_e = np.abs(e_matrix @ u)            # (electrodes, modes)
                proj_k = np.abs(u.T @ k_w)               # (modes,)
                beta = proj_e * (proj_k * env)[None, :]
                # compress the dynamic range: dip depth saturates in beta
                pattern = np.sqrt(beta).ravel()
                norm = np.linalg.norm(pattern)
                if norm == 0.0:
                    continue
                candidates.append((float(pattern / norm @ obs), (ax, ay, az)))
    candidates.sort(key=lambda c: -c[0])

    # keep the best few mutually distinct candidates
    separation = math.radians(25.0)
    shortlist = []
    for score, angles in candidates:
        if all(max(abs(a - b) for a, b in zip(angles, kept)) > separation
               for kept in shortlist):
            shortlist.append(angles)
        if len(shortlist) == 5:
            break

    residual, _ = _weak_residual_builder(spectra, context)
    best_cost, best_guess = math.inf, None
    for angles in shortlist:
        theta = np.array([*angles, *omega_seed, 1e-4])
        for u_volt in np.geomspace(1e-6, 5e-3, 25):
            theta[6] = u_volt
            try:
                cost = _finite_cost(residual(theta))
            except DomainError:
                continue
            if cost < best_cost:
                best_cost = cost
                best_guess = dict(zip(WEAK_PARAM_NAMES, theta))
    if best_guess is None:
        raise DomainError("weak-fit seeding failed: no evaluable candidate")
    return best_guess


def fit_weak(spectra: list[Spectrum], context: WeakFitContext,
             initial: dict | None = None) -> FitReport:
    """Combined weighted fit of all spectra; seven free parameters.

    ``initial`` maps the internal parameter names (phi_x, phi_y, phi_z,
    omega_1..3, U_exc) to SI starting values; if omitted, a heuristic
    seed is derived from the data.
    """
    if len(spectra) < 1:
        raise DomainError("at least one spectrum required")
    for s in spectra:
        if s.sigma is None:
            raise DomainError(f"spectrum for electrode {s.electrode_id} has no errors")
    if initial is None:
        initial = seed_weak_guess(spectra, context)
    missing = [n for n in WEAK_PARAM_NAMES if n not in initial]
    if missing:
        raise DomainError(f"initial guess missing parameters: {missing}")

    residual, model_curves = _weak_residual_builder(spectra, context)
    free = _weak_free_parameters(initial)
    result = levenberg_marquardt(residual, free)

    curves = model_curves(result.values)
    residuals = {}
    for s in spectra:
        model = curves[s.electrode_id]
        residuals[f"electrode_{s.electrode_id}"] = {
            "x": s.omega / (TWO_PI * 1e6),
            "data": s.fluorescence,
            "model": model,
            "sigma": s.sigma,
            "residual": (s.fluorescence - model) / s.sigma,
        }

    stat = np.sqrt(np.diag(result.covariance))
    parameters = [
        FitParameter(name, float(result.values[i] * factor),
                     float(stat[i] * factor))
        for i, (name, factor) in enumerate(_WEAK_DISPLAY)
    ]
    diagnostics = {
        "converged": result.converged,
        "iterations": result.iterations,
        "final_step_norm": result.final_step_norm,
        "method": "weak",
    }
    return FitReport(parameters=parameters, chi2=result.chi2, dof=result.dof,
                     residuals=residuals, diagnostics=diagnostics)


# ---------------------------------------------------------------------------
# strong-binding fit


@dataclass(frozen=True)
class StrongFitContext:
    """Fixed inputs of the strong-binding fit.

    Mode frequencies come from calibration measurements and stay fixed;
    the Raman geometry supplies the wave-vector direction and magnitude
    (its rabi_rate/decoherence entries are ignored: those are fitted).
    """

    ion: IonSpecies
    raman: RamanGeometry
    omega: tuple[float, float, float]
    n_max: int = 11

    def __post_init__(self):
        if any(w <= 0.0 for w in self.omega):
            raise DomainError("mode frequencies must be positive")

    def with_raman(self, raman: RamanGeometry) -> "StrongFitContext":
        return replace(self, raman=raman)


STRONG_ANGLE_NAMES = ("phi_x", "phi_y", "phi_z")
STRONG_PARAM_NAMES = ("phi_x", "phi_y", "phi_z", "nbar_1", "nbar_2", "nbar_3",
                      "Omega_0", "Gamma_dec")

_STRONG_DISPLAY = (
    ("phi_x_deg", math.degrees(1.0)),
    ("phi_y_deg", math.degrees(1.0)),
    ("phi_z_deg", math.degrees(1.0)),
    ("nbar_1", 1.0),
    ("nbar_2", 1.0),
    ("nbar_3", 1.0),
    ("Omega_0_kHz", 1.0 / (TWO_PI * 1e3)),
    ("Gamma_dec_kHz", 1.0 / (TWO_PI * 1e3)),
)


def strong_internal_values(report: FitReport) -> dict:
    """Best-fit values of a strong fit in SI units, keyed by internal names."""
    return {raw: report.value(disp) / factor
            for raw, (disp, factor) in zip(STRONG_PARAM_NAMES, _STRONG_DISPLAY)}


def _strong_residual_builder(curves: list[FloppingCurve], context: StrongFitContext,
                             free_names: list[str], fixed: dict):
    selectors = [c.selector for c in curves]
    if len(set(selectors)) != len(selectors):
        raise DomainError("one flopping curve per selector is supported")
    evaluator = SurvivalEvaluator({c.selector: c.t for c in curves}, context.ion,
                                  context.raman.delta_k, context.omega,
                                  n_max=context.n_max)

    def unpack(theta: np.ndarray) -> dict:
        params = dict(fixed)
        params.update({n: float(v) for n, v in zip(free_names, theta)})
        return params

    def model_curves(theta: np.ndarray) -> dict[str, np.ndarray]:
        p = unpack(theta)
        return evaluator.curves((p["phi_x"], p["phi_y"], p["phi_z"]),
                                (p["nbar_1"], p["nbar_2"], p["nbar_3"]),
                                p["Omega_0"], p["Gamma_dec"])

    def residual(theta: np.ndarray) -> np.ndarray:
        model = model_curves(theta)
        return np.concatenate(
            [(c.p_ground - model[c.selector]) / c.sigma for c in curves]
        )

    return residual, model_curves


def seed_strong_guess(curves: list[FloppingCurve], reference_angles) -> dict:
    """Reference angles, nbar = 0.5, Rabi rate from the first carrier minimum."""
    carrier = next((c for c in curves if c.selector == "carrier"), None)
    omega_0 = TWO_PI * 300e3
    if carrier is not None and len(carrier) >= 3:
        j = int(np.argmin(carrier.p_ground))
        if carrier.t[j] > 0.0:
            omega_0 = math.pi / float(carrier.t[j])
    return {
        "phi_x": float(reference_angles[0]),
        "phi_y": float(reference_angles[1]),
        "phi_z": float(reference_angles[2]),
        "nbar_1": 0.5, "nbar_2": 0.5, "nbar_3": 0.5,
        "Omega_0": omega_0,
        "Gamma_dec": 0.01 * omega_0,
    }


def _strong_free_parameters(free_names: list[str], initial: dict) -> list[FreeParameter]:
    out = []
    for name in free_names:
        v = initial[name]
        if name.startswith("phi"):
            out.append(FreeParameter(name, v, 0.5, ANGLE_LO, ANGLE_HI))
        elif name.startswith("nbar"):
            out.append(FreeParameter(name, v, 0.5, 0.0, 10.0))
        elif name == "Omega_0":
            out.append(FreeParameter(name, v, max(abs(v), TWO_PI * 1e4), 0.0))
        elif name == "Gamma_dec":
            out.append(FreeParameter(name, v, TWO_PI * 1e3, 0.0))
        else:
            raise DomainError(f"unknown strong-fit parameter {name!r}")
    return out


def _fit_strong_single(curves: list[FloppingCurve], context: StrongFitContext,
                       fix_angle: str, reference_angles, initial: dict) -> FitReport:
    if fix_angle not in ("x", "y", "z", "none"):
        raise DomainError(f"fix_angle must be x, y, z or none, got {fix_angle!r}")
    fixed = {}
    angle_names = []
    for axis, name in zip(("x", "y", "z"), STRONG_ANGLE_NAMES):
        if axis == fix_angle:
            fixed[name] = float(reference_angles[("x", "y", "z").index(axis)])
        else:
            angle_names.append(name)
    # weight-only parameters first: their finite differences reuse the
    # evaluator's cached trig state from the preceding model evaluation
    free_names = ["nbar_1", "nbar_2", "nbar_3", "Gamma_dec"] + angle_names \
        + ["Omega_0"]

    residual, model_curves = _strong_residual_builder(curves, context,
                                                      free_names, fixed)
    free = _strong_free_parameters(free_names, initial)
    result = levenberg_marquardt(residual, free)

    values = dict(fixed)
    stat = {name: 0.0 for name in fixed}
    errs = np.sqrt(np.diag(result.covariance))
    for i, name in enumerate(free_names):
        values[name] = float(result.values[i])
        stat[name] = float(errs[i])

    model = model_curves(result.values)
    residuals = {}
    for c in curves:
        residuals[c.selector] = {
            "x": c.t * 1e6,
            "data": c.p_ground,
            "model": model[c.selector],
            "sigma": c.sigma,
            "residual": (c.p_ground - model[c.selector]) / c.sigma,
        }

    parameters = [
        FitParameter(disp, values[raw] * factor, stat[raw] * factor)
        for raw, (disp, factor) in zip(STRONG_PARAM_NAMES, _STRONG_DISPLAY)
    ]
    diagnostics = {
        "converged": result.converged,
        "iterations": result.iterations,
        "final_step_norm": result.final_step_norm,
        "method": "strong",
        "fixed_angle": fix_angle,
    }
    return FitReport(parameters=parameters, chi2=result.chi2, dof=result.dof,
                     residuals=residuals, diagnostics=diagnostics)


def fit_strong(curves: list[FloppingCurve], context: StrongFitContext,
               reference_angles, fix_angle: str = "iterate",
               initial: dict | None = None) -> FitReport:
    """Combined fit of carrier and sideband flopping curves.

    With fix_angle in {"x", "y", "z"} the named angle is pinned to its
    reference value and the other two are fitted. With "iterate", all
    three choices are fitted and averaged; the per-parameter spread goes
    into the systematic column and a disagreement beyond three standard
    errors is flagged in the diagnostics. With "none" all three angles
    float, which for data probed along a single wave vector is degenerate
    and raises DegeneracyError.
    """
    if len(curves) < 1:
        raise DomainError("at least one flopping curve required")
    for c in curves:
        if c.sigma is None:
            raise DomainError(f"curve {c.selector!r} has no errors")
    if initial is None:
        initial = seed_strong_guess(curves, reference_angles)

    if fix_angle == "none":
        free_names = ["nbar_1", "nbar_2", "nbar_3", "Gamma_dec",
                      *STRONG_ANGLE_NAMES, "Omega_0"]
        residual, _ = _strong_residual_builder(curves, context, free_names, {})
        free = _strong_free_parameters(free_names, initial)
        levenberg_marquardt(residual, free)  # expected to raise DegeneracyError
        raise DegeneracyError(
            "all three angles free with a single probe direction should be "
            "degenerate; data unexpectedly constrained them"
        )
    if fix_angle != "iterate":
        return _fit_strong_single(curves, context, fix_angle, reference_angles,
                                  initial)

    choices = ("x", "y", "z")
    reports = []
    seed = dict(initial)
    for ch in choices:
        report = _fit_strong_single(curves, context, ch, reference_angles, seed)
        reports.append(report)
        # the solutions coincide up to the angle gauge, so warm-start the
        # remaining choices from this one
        seed = strong_internal_values(report)
    names = [p.name for p in reports[0].parameters]
    values = np.array([[r.value(n) for n in names] for r in reports])
    stats = np.array([[r.stat(n) for n in names] for r in reports])

    mean = values.mean(axis=0)
    spread = 0.5 * (values.max(axis=0) - values.min(axis=0))
    # fixed angles carry zero stat error in their own run; average the rest
    stat_mean = np.array([
        stats[:, j][stats[:, j] > 0.0].mean() if np.any(stats[:, j] > 0.0) else 0.0
        for j in range(len(names))
    ])

    disagreement = []
    for j, name in enumerate(names):
        if stat_mean[j] > 0.0 and spread[j] > 3.0 * stat_mean[j]:
            disagreement.append(name)

    parameters = [
        FitParameter(names[j], float(mean[j]), float(stat_mean[j]),
                     sys_err=float(spread[j]))
        for j in range(len(names))
    ]
    chi2 = float(np.mean([r.chi2 for r in reports]))
    diagnostics = {
        "converged": all(r.diagnostics["converged"] for r in reports),
        "method": "strong",
        "fixed_angle": "iterate",
        "per_choice": {
            ch: {n: r.value(n) for n in names}
            for ch, r in zip(choices, reports)
        },
        "iterations": [r.diagnostics["iterations"] for r in reports],
        "disagreement_flags": disagreement,
    }
    return FitReport(parameters=parameters, chi2=chi2, dof=reports[0].dof,
                     residuals=reports[0].residuals, diagnostics=diagnostics)


# ---------------------------------------------------------------------------
# chi-squared and systematic scans


def chi_squared(residual_fn, theta, n_free: int) -> tuple[float, int]:
    """Weighted chi^2 and degrees of freedom for the given parameter point."""
    r = np.asarray(residual_fn(np.asarray(theta, dtype=float)), dtype=float)
    dof = r.size - n_free
    if dof <= 0:
        raise DomainError(f"non-positive degrees of freedom: {r.size} - {n_free}")
    return float(r @ r), dof


def weak_chi_squared(spectra: list[Spectrum], context: WeakFitContext,
                     params: dict) -> tuple[float, int]:
    residual, _ = _weak_residual_builder(spectra, context)
    theta = np.array([params[n] for n in WEAK_PARAM_NAMES])
    return chi_squared(residual, theta, len(WEAK_PARAM_NAMES))


def systematic_scan(refit, axes: list[tuple[str, float]], apply_perturbation,
                    parameter_names: list[str]) -> tuple[dict, list]:
    """Corner-scan systematics: refit under every sign combination.

    refit() is called with the perturbed context produced by
    apply_perturbation(signs) for each of the 2^d corners (signs is a
    tuple of +-1 per axis); each call returns a FitReport. Corners whose
    fit fails to converge are excluded and recorded in the returned
    warning list. The result maps each parameter to half the max-min
    spread of its best-fit value over the surviving corners.
    """
    d = len(axes)
    if d == 0:
        return {name: 0.0 for name in parameter_names}, []
    corner_values = []
    warnings = []
    for idx in range(2**d):
        signs = tuple(1 if idx & (1 << b) else -1 for b in range(d))
        try:
            report = refit(apply_perturbation(signs))
        except (DomainError, DegeneracyError) as exc:
            warnings.append(f"corner {signs}: fit failed ({exc})")
            continue
        if not report.diagnostics.get("converged", False):
            warnings.append(f"corner {signs}: fit did not converge, excluded")
            continue
        corner_values.append([report.value(n) for n in parameter_names])
    if not corner_values:
        raise DomainError("no systematic-scan corner converged")
    arr = np.array(corner_values)
    half = 0.5 * (arr.max(axis=0) - arr.min(axis=0))
    return {n: float(half[j]) for j, n in enumerate(parameter_names)}, warnings


def weak_position_scan(spectra: list[Spectrum], context: WeakFitContext,
                       initial: dict) -> tuple[dict, list]:
    """Weak-fit systematics from the ion-position uncertainty box."""
    unc = context.site.uncertainty
    axes = [(n, u) for n, u in zip(("x", "y", "z"), unc) if u > 0.0]
    live = [i for i, u in enumerate(unc) if u > 0.0]

    def apply(signs):
        pos = list(context.site.position)
        for sign, i in zip(signs, live):
            pos[i] += sign * unc[i]
        return context.with_site(TrapSite(tuple(pos), context.site.uncertainty))

    def refit(ctx):
        return fit_weak(spectra, ctx, initial=dict(initial))

    names = [n for n, _ in _WEAK_DISPLAY]
    return systematic_scan(refit, axes, apply, names)


def strong_tilt_scan(curves: list[FloppingCurve], context: StrongFitContext,
                     reference_angles, fix_angle: str, initial: dict,
                     tilt_axes=("in_plane", "out_of_plane")) -> tuple[dict, list]:
    """Strong-fit systematics from the Raman wave-vector orientation box."""
    half = context.raman.direction_uncertainty
    axes = [(name, half) for name in tilt_axes]

    def apply(signs):
        kwargs = {}
        for sign, (name, width) in zip(signs, axes):
            kwargs["in_plane" if name == "in_plane" else "out_of_plane"] = sign * width
        return context.with_raman(context.raman.tilted(**kwargs))

    def refit(ctx):
        return fit_strong(curves, ctx, reference_angles, fix_angle=fix_angle,
                          initial=dict(initial))

    names = [n for n, _ in _STRONG_DISPLAY]
    return systematic_scan(refit, axes, apply, names)
