"""Synthetic measurement generation and dataset file I/O.

Noise models follow the acquisition procedure of each method: the weak
method accumulates photon counts over repeated sequences (Poisson counts
with a stray-light background that is subtracted afterwards), the strong
method performs binary state readout (binomial trials). All randomness
derives from a counter-based generator keyed by the seed and the point's
identity, so regenerating any subset of points, in any order or in
parallel, yields identical data.

File formats: one CSV per dataset with a comment header carrying the
metadata, plus a manifest JSON tying the files of a run to the truth
parameters that generated them.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .constants import angular_to_mhz, mhz_to_angular
from .errors import DomainError
from .geometry import IonSpecies, ModeConfiguration
from .strong_binding import (
    FloppingCurve,
    RamanGeometry,
    ThermalState,
    survival_curve,
)
from .weak_binding import ExcitationPulse, ProbeLaser, Spectrum, weak_spectrum

_KIND_WEAK = 1
_KIND_STRONG = 2


@dataclass(frozen=True)
class NoiseModel:
    """Synthesis noise settings; defaults mirror the demonstrated acquisition.

    signal_counts is the mean signal photon count per repetition at F = 1,
    stray_counts the mean stray-light count per repetition (subtracted
    after accumulation). Both are synthesis knobs without a measured
    anchor. trials is the number of binary readouts per strong point.
    """

    seed: int
    repetitions: int = 200
    signal_counts: float = 30.0
    stray_counts: float = 3.0
    trials: int = 200

    def __post_init__(self):
        if self.repetitions < 1:
            raise DomainError(f"repetitions must be >= 1, got {self.repetitions}")
        if self.trials < 1:
            raise DomainError(f"trials must be >= 1, got {self.trials}")
        if self.signal_counts <= 0.0:
            raise DomainError("signal_counts must be positive")
        if self.stray_counts < 0.0:
            raise DomainError("stray_counts must be >= 0")


def _point_rng(seed: int, kind: int, dataset_tag: int, point_index: int) -> np.random.Generator:
    # Philox is counter-based: the (kind, dataset, point) triple addresses
    # an independent stream regardless of evaluation order
    bits = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
    key = np.array([bits, np.uint64(0x9E3779B97F4A7C15)], dtype=np.uint64)
    counter = np.array([point_index, dataset_tag, kind, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


def simulate_weak(config: ModeConfiguration, ion: IonSpecies, electrode_fields: dict,
                  probe: ProbeLaser, voltage: float, duration: float,
                  omega_grid, noise: NoiseModel, v_max: int = 15) -> list[Spectrum]:
    """Synthetic tickle spectra for the given electrodes.

    electrode_fields maps electrode id -> field vector at the site in
    (V/m)/V. Per point, total photon counts are drawn as
    Poisson(reps * (signal * F_model + stray)); the stray contribution is
    subtracted and the remainder normalized by the unmodulated signal.
    """
    grid = np.asarray(omega_grid, dtype=float)
    out = []
    for lid in sorted(electrode_fields):
        pulse = ExcitationPulse(lid, voltage, float(grid[0]), duration)
        model = weak_spectrum(config, ion, electrode_fields[lid], probe, pulse,
                              grid, v_max=v_max)
        scale = noise.repetitions * noise.signal_counts
        f_data = np.empty_like(grid)
        sigma = np.empty_like(grid)
        for j, f_model in enumerate(model.fluorescence):
            rng = _point_rng(noise.seed, _KIND_WEAK, lid, j)
            lam = noise.repetitions * (noise.signal_counts * max(f_model, 0.0)
                                       + noise.stray_counts)
            total = rng.poisson(lam)
            f_data[j] = (total - noise.repetitions * noise.stray_counts) / scale
            # sqrt(total counts); floored at one count to keep weights finite
            sigma[j] = max(math.sqrt(total), 1.0) / scale
        out.append(Spectrum(electrode_id=lid, omega=grid, fluorescence=f_data,
                            sigma=sigma))
    return out


def simulate_strong(config: ModeConfiguration, ion: IonSpecies,
                    raman: RamanGeometry, thermal: ThermalState,
                    selectors, t_grid, noise: NoiseModel) -> list[FloppingCurve]:
    """Synthetic flopping curves: binomial readout at each pulse duration."""
    t = np.asarray(t_grid, dtype=float)
    out = []
    for sel_idx, selector in enumerate(selectors):
        p_model = survival_curve(selector, t, config, ion, raman, thermal)
        p_model = np.clip(p_model, 0.0, 1.0)
        p_data = np.empty_like(t)
        sigma = np.empty_like(t)
        floor = 1.0 / (2.0 * noise.trials)
        for j, p in enumerate(p_model):
            rng = _point_rng(noise.seed, _KIND_STRONG, sel_idx, j)
            successes = rng.binomial(noise.trials, p)
            p_hat = successes / noise.trials
            p_data[j] = p_hat
            sigma[j] = max(math.sqrt(p_hat * (1.0 - p_hat) / noise.trials), floor)
        out.append(FloppingCurve(selector=selector, t=t, p_ground=p_data, sigma=sigma))
    return out


# ---------------------------------------------------------------------------
# file I/O


def atomic_write_text(path, text: str) -> None:
    """Write via a temp file in the same directory, then rename."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_text(text)
    os.replace(tmp, path)


def spectrum_to_csv(spectrum: Spectrum) -> str:
    lines = [f"# electrode: {spectrum.electrode_id}", "omega_exc_MHz,F,sigma_F"]
    sigma = spectrum.sigma
    for j in range(len(spectrum)):
        s = f"{sigma[j]:.9g}" if sigma is not None else ""
        lines.append(f"{angular_to_mhz(spectrum.omega[j]):.9f},"
                     f"{spectrum.fluorescence[j]:.9g},{s}")
    return "\n".join(lines) + "\n"


def spectrum_from_csv(text: str, path: str = "<string>") -> Spectrum:
    electrode_id = None
    rows = []
    header_seen = False
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            kv = line[1:].split(":", 1)
            if len(kv) == 2 and kv[0].strip() == "electrode":
                electrode_id = int(kv[1])
            continue
        if not header_seen:
            header_seen = True  # column header
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise DomainError(f"{path}:{ln}: expected 3 columns, got {len(parts)}")
        try:
            rows.append(tuple(float(p) for p in parts))
        except ValueError:
            bad = next(i for i, p in enumerate(parts) if not _is_float(p))
            raise DomainError(f"{path}:{ln}: column {bad + 1} is not numeric: {parts[bad]!r}")
    if electrode_id is None:
        raise DomainError(f"{path}: missing '# electrode:' metadata line")
    if not rows:
        raise DomainError(f"{path}: no data rows")
    arr = np.array(rows)
    return Spectrum(electrode_id=electrode_id, omega=mhz_to_angular(1.0) * arr[:, 0],
                    fluorescence=arr[:, 1], sigma=arr[:, 2])


def flopping_to_csv(curve: FloppingCurve, omega_r_offset_mhz: float = 0.0) -> str:
    lines = [f"# selector: {curve.selector}",
             f"# omega_R_offset_MHz: {omega_r_offset_mhz:.9f}",
             "t_pulse_us,P_g,sigma_P"]
    sigma = curve.sigma
    for j in range(len(curve)):
        s = f"{sigma[j]:.9g}" if sigma is not None else ""
        lines.append(f"{curve.t[j] * 1e6:.9f},{curve.p_ground[j]:.9g},{s}")
    return "\n".join(lines) + "\n"


def flopping_from_csv(text: str, path: str = "<string>") -> FloppingCurve:
    selector = None
    rows = []
    header_seen = False
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            kv = line[1:].split(":", 1)
            if len(kv) == 2 and kv[0].strip() == "selector":
                selector = kv[1].strip()
            continue
        if not header_seen:
            header_seen = True
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise DomainError(f"{path}:{ln}: expected 3 columns, got {len(parts)}")
        try:
            rows.append(tuple(float(p) for p in parts))
        except ValueError:
            bad = next(i for i, p in enumerate(parts) if not _is_float(p))
            raise DomainError(f"{path}:{ln}: column {bad + 1} is not numeric: {parts[bad]!r}")
    if selector is None:
        raise DomainError(f"{path}: missing '# selector:' metadata line")
    if not rows:
        raise DomainError(f"{path}: no data rows")
    arr = np.array(rows)
    return FloppingCurve(selector=selector, t=arr[:, 0] * 1e-6,
                         p_ground=arr[:, 1], sigma=arr[:, 2])


def _is_float(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def write_manifest(path, kind: str, truth: dict, noise: NoiseModel,
                   files: list[str]) -> None:
    doc = {"kind": kind, "truth": truth, "noise": asdict(noise), "files": files}
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")
