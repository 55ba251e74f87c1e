"""Command-line interface: simulation, fitting and curvature reporting.

All I/O uses display units (MHz, degrees, micrometers, microvolts,
microseconds, uV/um^2). Exit codes: 0 success, 2 configuration or data
parse error, 3 physics-domain error, 4 fit did not converge (the report
is still written), 5 degenerate fit problem.
"""

from __future__ import annotations

import argparse
import glob as globmod
import json
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import datasets
from .constants import khz_to_angular, mhz_to_angular
from .errors import DegeneracyError, DomainError
from .fields import (
    TrapLayout,
    TrapSite,
    field_table_from_json,
    layout_from_json,
)
from .geometry import (
    IonSpecies,
    ModeConfiguration,
    curvature_systematics,
)
from .inference import (
    StrongFitContext,
    WeakFitContext,
    fit_strong,
    fit_weak,
    seed_strong_guess,
    strong_tilt_scan,
    weak_internal_values,
    weak_position_scan,
)
from .strong_binding import SELECTORS, RamanGeometry, ThermalState
from .weak_binding import ProbeLaser

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PHYSICS = 3
EXIT_NO_CONVERGENCE = 4
EXIT_DEGENERATE = 5


class ConfigError(Exception):
    """Configuration document is malformed; message names the field."""


class _Section:
    """Dict wrapper that reports full field paths in error messages."""

    def __init__(self, data: dict, path: str):
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected an object")
        self._data = data
        self._path = path

    def child(self, key: str) -> "_Section":
        return _Section(self._require(key), f"{self._path}.{key}")

    def has(self, key: str) -> bool:
        return key in self._data

    def _require(self, key):
        if key not in self._data:
            raise ConfigError(f"{self._path}.{key}: missing required field")
        return self._data[key]

    def number(self, key: str, default=None) -> float:
        if key not in self._data and default is not None:
            return default
        value = self._require(key)
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"{self._path}.{key}: expected a number, got {value!r}")
        return float(value)

    def integer(self, key: str, default=None) -> int:
        if key not in self._data and default is not None:
            return default
        value = self._require(key)
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"{self._path}.{key}: expected an integer, got {value!r}")
        return value

    def string(self, key: str, default=None) -> str:
        if key not in self._data and default is not None:
            return default
        value = self._require(key)
        if not isinstance(value, str):
            raise ConfigError(f"{self._path}.{key}: expected a string, got {value!r}")
        return value

    def vector(self, key: str, length: int = 3) -> tuple:
        value = self._require(key)
        if (not isinstance(value, list) or len(value) != length
                or any(not isinstance(v, (int, float)) or isinstance(v, bool)
                       for v in value)):
            raise ConfigError(
                f"{self._path}.{key}: expected a list of {length} numbers"
            )
        return tuple(float(v) for v in value)

    def int_list(self, key: str) -> list[int]:
        value = self._require(key)
        if not isinstance(value, list) or not value or any(
                not isinstance(v, int) or isinstance(v, bool) for v in value):
            raise ConfigError(f"{self._path}.{key}: expected a list of integers")
        return list(value)


def _packaged(name: str) -> str:
    return resources.files("ionmodes").joinpath("data", name).read_text()


def load_config(path: str) -> _Section:
    if path == "demo":
        text = _packaged("demo_config.json")
        src = "demo config"
    else:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config: file not found: {path}")
        text = p.read_text()
        src = path
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{src}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}")
    return _Section(doc, "config")


def _build_ion(cfg: _Section) -> IonSpecies:
    ion = cfg.child("ion")
    try:
        return IonSpecies.from_amu(ion.number("mass_amu"), ion.number("charge_e", 1.0))
    except DomainError as exc:
        raise ConfigError(f"config.ion: {exc}")


def _build_site(cfg: _Section) -> TrapSite:
    trap = cfg.child("trap")
    try:
        return TrapSite(trap.vector("site_um"),
                        trap.vector("site_uncertainty_um")
                        if trap.has("site_uncertainty_um") else (0.0, 0.0, 0.0))
    except DomainError as exc:
        raise ConfigError(f"config.trap: {exc}")


def _build_field_source(cfg: _Section, config_path: str):
    """Returns (layout, table); exactly one is not None."""
    trap = cfg.child("trap")
    if trap.has("geometry_path"):
        name = trap.string("geometry_path")
        if name == "demo":
            text = _packaged("demo_geometry.json")
        else:
            p = _resolve(name, config_path)
            if not p.exists():
                raise ConfigError(f"config.trap.geometry_path: file not found: {name}")
            text = p.read_text()
        try:
            return layout_from_json(text), None
        except DomainError as exc:
            raise ConfigError(f"config.trap.geometry_path: {exc}")
    if trap.has("field_table_path"):
        name = trap.string("field_table_path")
        p = _resolve(name, config_path)
        if not p.exists():
            raise ConfigError(f"config.trap.field_table_path: file not found: {name}")
        try:
            return None, field_table_from_json(p.read_text())
        except DomainError as exc:
            raise ConfigError(f"config.trap.field_table_path: {exc}")
    raise ConfigError(
        "config.trap: one of geometry_path or field_table_path is required"
    )


def _resolve(name: str, config_path: str) -> Path:
    p = Path(name)
    if not p.is_absolute() and config_path not in ("demo",):
        base = Path(config_path).parent
        if (base / p).exists():
            return base / p
    return p


def _build_probe(cfg: _Section) -> ProbeLaser:
    probe = cfg.child("probe")
    try:
        return ProbeLaser.from_display(
            direction=probe.vector("direction"),
            wavelength_nm=probe.number("wavelength_nm", 280.0),
            detuning_mhz=probe.number("detuning_MHz", -5.0),
            linewidth_mhz=probe.number("linewidth_MHz", 42.0),
        )
    except DomainError as exc:
        raise ConfigError(f"config.probe: {exc}")


def _build_raman(cfg: _Section, rabi_khz: float = 0.0,
                 decoherence_khz: float = 0.0) -> RamanGeometry:
    raman = cfg.child("raman")
    try:
        return RamanGeometry.from_display(
            direction=raman.vector("direction"),
            wavelength_nm=raman.number("wavelength_nm", 280.0),
            crossing_angle_deg=raman.number("crossing_angle_deg", 90.0),
            rabi_khz=rabi_khz,
            decoherence_khz=decoherence_khz,
            direction_uncertainty_deg=raman.number("direction_uncertainty_deg", 5.0),
        )
    except DomainError as exc:
        raise ConfigError(f"config.raman: {exc}")


def _build_modes(section: _Section) -> ModeConfiguration:
    try:
        return ModeConfiguration.from_display(
            section.vector("angles_deg"), section.vector("frequencies_MHz")
        )
    except DomainError as exc:
        raise ConfigError(f"{section._path}: {exc}")


def _build_noise(cfg: _Section, seed_override) -> datasets.NoiseModel:
    noise = cfg.child("noise") if cfg.has("noise") else _Section({}, "config.noise")
    seed = noise.integer("seed", 1) if seed_override is None else seed_override
    try:
        return datasets.NoiseModel(
            seed=seed,
            repetitions=noise.integer("repetitions", 200),
            signal_counts=noise.number("signal_counts", 30.0),
            stray_counts=noise.number("stray_counts", 3.0),
            trials=noise.integer("trials", 200),
        )
    except DomainError as exc:
        raise ConfigError(f"config.noise: {exc}")


def _weak_grid(cfg: _Section, modes: ModeConfiguration) -> np.ndarray:
    weak = cfg.child("weak")
    window = weak.number("window_MHz", 0.3)
    points = weak.integer("points_per_window", 25)
    if points < 2 or window <= 0.0:
        raise ConfigError("config.weak: window_MHz > 0 and points_per_window >= 2 required")
    segments = [
        np.linspace(f - window, f + window, points) for f in modes.freqs_mhz
    ]
    grid = np.unique(np.concatenate(segments))
    return mhz_to_angular(1.0) * grid


def _strong_grids(cfg: _Section) -> dict[str, np.ndarray]:
    strong = cfg.child("strong")
    defaults = {
        "carrier": (0.05, 12.0, 300),
        "bsb1": (0.1, 28.0, 400),
        "bsb2": (4.0, 28.0, 1400),
        "bsb3": (0.1, 28.0, 400),
    }
    grids = {}
    spec = strong.child("grids") if strong.has("grids") else None
    for sel in SELECTORS:
        t0, t1, n = defaults[sel]
        if spec is not None and spec.has(sel):
            g = spec.child(sel)
            t0 = g.number("t_min_us", t0)
            t1 = g.number("t_max_us", t1)
            n = g.integer("points", n)
        if not (0.0 <= t0 < t1) or n < 2:
            raise ConfigError(f"config.strong.grids.{sel}: invalid window or points")
        grids[sel] = np.linspace(t0, t1, n) * 1e-6
    return grids


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate_weak(args) -> int:
    cfg = load_config(args.config)
    ion = _build_ion(cfg)
    site = _build_site(cfg)
    layout, table = _build_field_source(cfg, args.config)
    probe = _build_probe(cfg)
    modes = _build_modes(cfg.child("modes"))
    weak = cfg.child("weak")
    electrodes = weak.int_list("electrodes")
    voltage = weak.number("U_exc_uV") * 1e-6
    duration = weak.number("t_exc_us") * 1e-6
    v_max = weak.integer("v_max", 15)
    noise = _build_noise(cfg, args.seed)
    grid = _weak_grid(cfg, modes)

    fields = {}
    for lid in electrodes:
        if layout is not None:
            if lid not in layout.electrodes:
                raise ConfigError(f"config.weak.electrodes: id {lid} not in geometry")
            fields[lid] = layout.field_at(lid, site.position)
        else:
            if lid not in table.fields:
                raise ConfigError(f"config.weak.electrodes: id {lid} not in field table")
            fields[lid] = np.array(table.fields[lid])

    spectra = datasets.simulate_weak(modes, ion, fields, probe, voltage, duration,
                                     grid, noise, v_max=v_max)
    out = _out_dir(args)
    files = []
    for s in spectra:
        name = f"weak_l{s.electrode_id}.csv"
        datasets.atomic_write_text(out / name, datasets.spectrum_to_csv(s))
        files.append(name)
    truth = {
        "angles_deg": list(modes.angles_deg),
        "frequencies_MHz": list(modes.freqs_mhz),
        "U_exc_uV": voltage * 1e6,
        "t_exc_us": duration * 1e6,
        "electrodes": electrodes,
    }
    datasets.write_manifest(out / "manifest_weak.json", "weak", truth, noise, files)
    print(f"wrote {len(files)} spectra + manifest_weak.json to {out}")
    return EXIT_OK


def cmd_simulate_strong(args) -> int:
    cfg = load_config(args.config)
    ion = _build_ion(cfg)
    strong = cfg.child("strong")
    modes = _build_modes(strong)
    raman = _build_raman(cfg, rabi_khz=strong.number("Omega_0_kHz"),
                         decoherence_khz=strong.number("Gamma_dec_kHz", 0.0))
    thermal = ThermalState(strong.vector("nbar"), n_max=strong.integer("n_max", 11))
    noise = _build_noise(cfg, args.seed)
    grids = _strong_grids(cfg)

    out = _out_dir(args)
    files = []
    for sel in SELECTORS:
        curve = datasets.simulate_strong(modes, ion, raman, thermal, [sel],
                                         grids[sel], noise)[0]
        offset = 0.0 if sel == "carrier" else modes.freqs_mhz[int(sel[-1]) - 1]
        name = f"strong_{sel}.csv"
        datasets.atomic_write_text(out / name,
                                   datasets.flopping_to_csv(curve, offset))
        files.append(name)
    truth = {
        "angles_deg": list(modes.angles_deg),
        "frequencies_MHz": list(modes.freqs_mhz),
        "nbar": list(thermal.nbar),
        "Omega_0_kHz": strong.number("Omega_0_kHz"),
        "Gamma_dec_kHz": strong.number("Gamma_dec_kHz", 0.0),
        "n_max": thermal.n_max,
    }
    datasets.write_manifest(out / "manifest_strong.json", "strong", truth, noise, files)
    print(f"wrote {len(files)} curves + manifest_strong.json to {out}")
    return EXIT_OK


def _load_glob(pattern: str, reader):
    paths = sorted(globmod.glob(pattern))
    if not paths:
        raise ConfigError(f"data: no files match {pattern!r}")
    out = []
    for p in paths:
        try:
            out.append(reader(Path(p).read_text(), path=p))
        except DomainError as exc:
            raise ConfigError(str(exc))
    return out


def _write_residual_tables(out: Path, prefix: str, report) -> list[str]:
    files = []
    for label, series in report.residuals.items():
        name = f"residuals_{prefix}_{label}.csv"
        lines = ["x,data,model,residual"]
        for j in range(len(series["x"])):
            lines.append(f"{series['x'][j]:.9f},{series['data'][j]:.9g},"
                         f"{series['model'][j]:.9g},{series['residual'][j]:.9g}")
        datasets.atomic_write_text(out / name, "\n".join(lines) + "\n")
        files.append(name)
    return files


def cmd_fit_weak(args) -> int:
    cfg = load_config(args.config)
    ion = _build_ion(cfg)
    site = _build_site(cfg)
    layout, table = _build_field_source(cfg, args.config)
    probe = _build_probe(cfg)
    weak = cfg.child("weak")
    duration = weak.number("t_exc_us") * 1e-6
    v_max = weak.integer("v_max", 15)

    spectra = _load_glob(args.data, datasets.spectrum_from_csv)
    context = WeakFitContext(ion=ion, probe=probe, site=site, duration=duration,
                             layout=layout, table=table, v_max=v_max)
    known = layout.electrodes if layout is not None else table.fields
    for s in spectra:
        if s.electrode_id not in known:
            raise ConfigError(
                f"data: electrode id {s.electrode_id} not in the field source"
            )

    initial = None
    if cfg.has("fit") and cfg.child("fit").has("weak_initial"):
        init = cfg.child("fit").child("weak_initial")
        angles = init.vector("angles_deg")
        freqs = init.vector("frequencies_MHz")
        initial = {
            "phi_x": math.radians(angles[0]),
            "phi_y": math.radians(angles[1]),
            "phi_z": math.radians(angles[2]),
            "omega_1": mhz_to_angular(freqs[0]),
            "omega_2": mhz_to_angular(freqs[1]),
            "omega_3": mhz_to_angular(freqs[2]),
            "U_exc": init.number("U_exc_uV") * 1e-6,
        }

    report = fit_weak(spectra, context, initial=initial)

    if args.systematics:
        if layout is None:
            raise ConfigError(
                "config.trap: position systematics require geometry_path"
            )
        seed = weak_internal_values(report)
        sys_widths, warnings = weak_position_scan(spectra, context, seed)
        for p in report.parameters:
            p.sys_err = sys_widths.get(p.name, 0.0)
        report.diagnostics["systematics_warnings"] = warnings

    out = _out_dir(args)
    datasets.atomic_write_text(out / "fit_weak_report.json", report.to_json() + "\n")
    _write_residual_tables(out, "weak", report)
    print(report_table(report))
    print(f"report written to {out / 'fit_weak_report.json'}")
    return EXIT_OK if report.diagnostics.get("converged") else EXIT_NO_CONVERGENCE


def cmd_fit_strong(args) -> int:
    cfg = load_config(args.config)
    ion = _build_ion(cfg)
    strong = cfg.child("strong")
    omega = tuple(mhz_to_angular(f) for f in strong.vector("frequencies_MHz"))
    raman = _build_raman(cfg)
    reference = tuple(math.radians(a)
                      for a in strong.vector("reference_angles_deg"))
    n_max = strong.integer("n_max", 11)

    curves = _load_glob(args.data, datasets.flopping_from_csv)
    context = StrongFitContext(ion=ion, raman=raman, omega=omega, n_max=n_max)

    initial = None
    if cfg.has("fit") and cfg.child("fit").has("strong_initial"):
        init = cfg.child("fit").child("strong_initial")
        angles = init.vector("angles_deg")
        nbar = init.vector("nbar")
        initial = {
            "phi_x": math.radians(angles[0]),
            "phi_y": math.radians(angles[1]),
            "phi_z": math.radians(angles[2]),
            "nbar_1": nbar[0], "nbar_2": nbar[1], "nbar_3": nbar[2],
            "Omega_0": khz_to_angular(init.number("Omega_0_kHz")),
            "Gamma_dec": khz_to_angular(init.number("Gamma_dec_kHz", 1.0)),
        }

    report = fit_strong(curves, context, reference, fix_angle=args.fix_angle,
                        initial=initial)

    if args.systematics:
        seed = initial if initial is not None else seed_strong_guess(curves,
                                                                     reference)
        sys_widths, warnings = strong_tilt_scan(curves, context, reference,
                                                args.fix_angle, seed)
        for p in report.parameters:
            p.sys_err = max(p.sys_err, sys_widths.get(p.name, 0.0))
        report.diagnostics["systematics_warnings"] = warnings

    out = _out_dir(args)
    datasets.atomic_write_text(out / "fit_strong_report.json", report.to_json() + "\n")
    _write_residual_tables(out, "strong", report)
    print(report_table(report))
    print(f"report written to {out / 'fit_strong_report.json'}")
    return EXIT_OK if report.diagnostics.get("converged") else EXIT_NO_CONVERGENCE


def cmd_curvature(args) -> int:
    cfg = load_config(args.config)
    ion = _build_ion(cfg)
    curv = cfg.child("curvature") if cfg.has("curvature") else _Section({}, "config.curvature")
    assignment = tuple(int(v) for v in curv.vector("assignment")) \
        if curv.has("assignment") else (1, 2, 3)

    if args.report:
        p = Path(args.report)
        if not p.exists():
            raise ConfigError(f"report: file not found: {args.report}")
        try:
            doc = json.loads(p.read_text())
            params = {e["name"]: e for e in doc["parameters"]}
            angles = [params[f"phi_{a}_deg"]["value"] for a in "xyz"]
            freqs = [params[f"omega_{i}_MHz"]["value"] for i in (1, 2, 3)]
            widths = [math.radians(params[f"phi_{a}_deg"]["sys_err"]
                                   + params[f"phi_{a}_deg"]["stat_err"])
                      for a in "xyz"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ConfigError(f"report: malformed fit report: {exc}")
    else:
        modes = cfg.child("modes")
        angles = list(modes.vector("angles_deg"))
        freqs = list(modes.vector("frequencies_MHz"))
        widths = [math.radians(w) for w in curv.vector("angle_systematics_deg")] \
            if curv.has("angle_systematics_deg") else [0.0, 0.0, 0.0]

    try:
        config = ModeConfiguration.from_display(angles, freqs)
        tensor = curvature_systematics(config, ion, widths, assignment=assignment)
    except DomainError as exc:
        raise ConfigError(f"curvature inputs: {exc}")

    doc = {
        "angles_deg": angles,
        "frequencies_MHz": freqs,
        "assignment": list(assignment),
        "curvature_uV_per_um2": tensor.matrix.tolist(),
        "systematic_half_widths_uV_per_um2": tensor.systematics.tolist(),
    }
    out = _out_dir(args)
    datasets.atomic_write_text(out / "curvature.json",
                               json.dumps(doc, indent=2, sort_keys=True) + "\n")

    lines = ["curvature tensor [uV/um^2] (rows x, y, z):"]
    for i in range(3):
        cells = [f"{tensor.matrix[i, j]:8.1f} ({tensor.systematics[i, j]:5.1f})"
                 for j in range(3)]
        lines.append("  " + "  ".join(cells))
    print("\n".join(lines))
    print(f"written to {out / 'curvature.json'}")
    return EXIT_OK


def cmd_fields(args) -> int:
    cfg = load_config(args.config)
    site = _build_site(cfg)
    layout, table = _build_field_source(cfg, args.config)
    if table is not None:
        entries = {str(k): list(v) for k, v in sorted(table.fields.items())}
    else:
        entries = {str(lid): [float(c) for c in layout.field_at(lid, site.position)]
                   for lid in layout.ids()}
    doc = {"site_um": list(site.position), "fields_V_per_m_per_V": entries}
    out = _out_dir(args)
    datasets.atomic_write_text(out / "fields.json",
                               json.dumps(doc, indent=2, sort_keys=True) + "\n")
    width = max(len(k) for k in entries)
    print(f"E_l at site {site.position} um [(V/m)/V]:")
    for k, v in entries.items():
        print(f"  {k:>{width}}: ({v[0]:10.2f}, {v[1]:10.2f}, {v[2]:10.2f})")
    print(f"written to {out / 'fields.json'}")
    return EXIT_OK


def report_table(report) -> str:
    lines = ["%-14s %12s %12s %12s" % ("parameter", "value", "stat", "sys")]
    for p in report.parameters:
        lines.append("%-14s %12.5f %12.5f %12.5f"
                     % (p.name, p.value, p.stat_err, p.sys_err))
    lines.append("chi2/dof = %.2f / %d" % (report.chi2, report.dof))
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ionmodes",
        description="Simulate and fit trapped-ion motional-mode measurements.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=False, seed=False, fix=False, systematics=False):
        p.add_argument("--config", required=True,
                       help="JSON configuration file ('demo' for the packaged example)")
        p.add_argument("--out", default=".", help="output directory")
        if seed:
            p.add_argument("--seed", type=int, default=None,
                           help="override the noise seed from the config")
        if data:
            p.add_argument("--data", required=True,
                           help="glob pattern for the dataset CSV files")
        if fix:
            p.add_argument("--fix-angle", choices=("x", "y", "z", "iterate", "none"),
                           default="iterate",
                           help="which mode angle to pin at its reference value")
        if systematics:
            p.add_argument("--systematics", action="store_true",
                           help="run the corner-scan systematic error analysis")

    common(sub.add_parser("simulate-weak",
                          help="generate synthetic tickle spectra"), seed=True)
    common(sub.add_parser("simulate-strong",
                          help="generate synthetic flopping curves"), seed=True)
    common(sub.add_parser("fit-weak", help="fit spectra for mode configuration"),
           data=True, systematics=True)
    common(sub.add_parser("fit-strong", help="fit flopping curves"),
           data=True, fix=True, systematics=True)
    p = sub.add_parser("curvature", help="curvature tensor from mode parameters")
    common(p)
    p.add_argument("--report", default=None,
                   help="take angles/frequencies from a fit-weak report JSON")
    common(sub.add_parser("fields", help="dump electrode fields at the trap site"))
    return parser


_COMMANDS = {
    "simulate-weak": cmd_simulate_weak,
    "simulate-strong": cmd_simulate_strong,
    "fit-weak": cmd_fit_weak,
    "fit-strong": cmd_fit_strong,
    "curvature": cmd_curvature,
    "fields": cmd_fields,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DegeneracyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PHYSICS


if __name__ == "__main__":
    sys.exit(main())
