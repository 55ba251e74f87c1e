"""Control-electrode potentials and fields above a surface-electrode plane.

Electrodes are modeled as axis-aligned rectangular patches in the z = 0
plane held at 1 V with the rest of the plane grounded (the gapless-plane
approximation: gaps between electrodes are ignored). The potential of one
patch at a point above the plane is the classic four-corner arctangent
solution,

    phi(r) = (1/2pi) * sum_corners s_c * atan(X_c Y_c / (z R_c)),

with X_c = x - x_c, Y_c = y - y_c, R_c = sqrt(X_c^2 + Y_c^2 + z^2) and
corner signs (+, -, -, +) over (min,min), (min,max), (max,min), (max,max).
Fields E = -grad(phi) use the closed-form gradient of that expression.

Real device geometries can bypass the analytic model entirely through a
FieldTable mapping electrode ids to measured or externally computed field
vectors at the trap site.

Units: patch coordinates and evaluation points in micrometers (the
display unit for trap layouts); returned potentials are in V per volt
applied, fields in (V/m) per volt applied.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .constants import UM
from .errors import DomainError, LookupError_

_CORNER_SIGNS = (1.0, -1.0, -1.0, 1.0)


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle {x0 < x1, y0 < y1} in the z = 0 plane [um]."""

    x0: float
    x1: float
    y0: float
    y1: float

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise DomainError(
                f"rectangle must satisfy x0 < x1 and y0 < y1, got {self}"
            )

    def overlaps(self, other: "Rect") -> bool:
        return (self.x0 < other.x1 and other.x0 < self.x1
                and self.y0 < other.y1 and other.y0 < self.y1)

    @property
    def corners(self):
        # order matches _CORNER_SIGNS
        return ((self.x0, self.y0), (self.x0, self.y1),
                (self.x1, self.y0), (self.x1, self.y1))


@dataclass(frozen=True)
class ElectrodeGeometry:
    """One labeled electrode: a set of non-overlapping rectangular patches."""

    electrode_id: int
    patches: tuple[Rect, ...]

    def __post_init__(self):
        patches = tuple(self.patches)
        if not patches:
            raise DomainError(f"electrode {self.electrode_id} has no patches")
        for i in range(len(patches)):
            for j in range(i + 1, len(patches)):
                if patches[i].overlaps(patches[j]):
                    raise DomainError(
                        f"electrode {self.electrode_id}: patches {i} and {j} overlap"
                    )
        object.__setattr__(self, "patches", patches)


@dataclass(frozen=True)
class TrapSite:
    """Trap site position and uncertainty half-widths, both in um, z > 0."""

    position: tuple[float, float, float]
    uncertainty: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        pos = tuple(float(v) for v in self.position)
        unc = tuple(float(v) for v in self.uncertainty)
        if len(pos) != 3 or len(unc) != 3:
            raise DomainError("position and uncertainty must be 3-vectors")
        if not pos[2] > 0.0:
            raise DomainError(f"trap site must sit above the plane, got z = {pos[2]}")
        if any(u < 0.0 for u in unc):
            raise DomainError("uncertainty half-widths must be >= 0")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "uncertainty", unc)


@dataclass(frozen=True)
class FieldTable:
    """Electrode id -> field vector at the trap site [(V/m)/V]."""

    fields: dict[int, tuple[float, float, float]]

    def __post_init__(self):
        table = {}
        for key, vec in self.fields.items():
            v = tuple(float(c) for c in vec)
            if len(v) != 3 or not all(math.isfinite(c) for c in v):
                raise DomainError(f"field entry {key} must be a finite 3-vector")
            table[int(key)] = v
        object.__setattr__(self, "fields", table)


def patch_potential(geometry: ElectrodeGeometry, r) -> float:
    """Potential of the electrode at point r = (x, y, z) um, per volt applied.

    Sum of the four-corner arctangent solution over the electrode's
    patches; lies in (0, 1) for any point above a finite electrode.
    """
    x, y, z = (float(c) for c in r)
    if not z > 0.0:
        raise DomainError(f"evaluation point must have z > 0, got z = {z}")
    total = 0.0
    for rect in geometry.patches:
        for sgn, (xc, yc) in zip(_CORNER_SIGNS, rect.corners):
            dx = x - xc
            dy = y - yc
            dist = math.sqrt(dx * dx + dy * dy + z * z)
            total += sgn * math.atan2(dx * dy, z * dist)
    return total / (2.0 * math.pi)


def patch_potential_gradient(geometry: ElectrodeGeometry, r) -> np.ndarray:
    """Analytic gradient of patch_potential w.r.t. r, in 1/um (per volt)."""
    x, y, z = (float(c) for c in r)
    if not z > 0.0:
        raise DomainError(f"evaluation point must have z > 0, got z = {z}")
    gx = gy = gz = 0.0
    for rect in geometry.patches:
        for sgn, (xc, yc) in zip(_CORNER_SIGNS, rect.corners):
            dx = x - xc
            dy = y - yc
            dist = math.sqrt(dx * dx + dy * dy + z * z)
            gx += sgn * z * dy / (dist * (dx * dx + z * z))
            gy += sgn * z * dx / (dist * (dy * dy + z * z))
            gz -= sgn * dx * dy * (dist * dist + z * z) / (
                dist * (dx * dx + z * z) * (dy * dy + z * z)
            )
    return np.array([gx, gy, gz]) / (2.0 * math.pi)


def electrode_field(source, r, electrode_id: int | None = None) -> np.ndarray:
    """Field E = -grad(phi) at r, in (V/m) per volt applied.

    ``source`` is either an ElectrodeGeometry (analytic gradient of the
    patch potential) or a FieldTable (passthrough lookup, position
    ignored). For a FieldTable the electrode_id selects the entry.
    """
    if isinstance(source, FieldTable):
        if electrode_id is None:
            raise LookupError_("electrode_id required for FieldTable lookup")
        if electrode_id not in source.fields:
            raise LookupError_(f"electrode id {electrode_id} not in field table")
        return np.array(source.fields[electrode_id])
    grad_per_um = patch_potential_gradient(source, r)
    return -grad_per_um / UM  # 1/um -> 1/m


@dataclass(frozen=True)
class TrapLayout:
    """A full electrode set, indexed by id."""

    electrodes: dict[int, ElectrodeGeometry]

    def __post_init__(self):
        object.__setattr__(
            self, "electrodes", {int(k): v for k, v in self.electrodes.items()}
        )

    def ids(self) -> list[int]:
        return sorted(self.electrodes)

    def field_at(self, electrode_id: int, r) -> np.ndarray:
        if electrode_id not in self.electrodes:
            raise LookupError_(f"electrode id {electrode_id} not in layout")
        return electrode_field(self.electrodes[electrode_id], r)

    def field_table(self, r) -> FieldTable:
        """Freeze the layout into a FieldTable evaluated at r."""
        return FieldTable(
            {lid: tuple(self.field_at(lid, r)) for lid in self.ids()}
        )


def layout_from_json(doc) -> TrapLayout:
    """Parse {"electrodes": [{"id": l, "rects": [{x0,x1,y0,y1}, ...]}]} (um)."""
    if isinstance(doc, (str, bytes)):
        doc = json.loads(doc)
    try:
        entries = doc["electrodes"]
    except (TypeError, KeyError):
        raise DomainError("geometry document must contain an 'electrodes' list")
    electrodes = {}
    for entry in entries:
        try:
            lid = int(entry["id"])
            rects = tuple(
                Rect(float(rc["x0"]), float(rc["x1"]), float(rc["y0"]), float(rc["y1"]))
                for rc in entry["rects"]
            )
        except (TypeError, KeyError, ValueError) as exc:
            raise DomainError(f"malformed electrode entry {entry!r}: {exc}")
        if lid in electrodes:
            raise DomainError(f"duplicate electrode id {lid}")
        electrodes[lid] = ElectrodeGeometry(lid, rects)
    return TrapLayout(electrodes)


def layout_to_json(layout: TrapLayout) -> dict:
    return {
        "electrodes": [
            {
                "id": lid,
                "rects": [
                    {"x0": rc.x0, "x1": rc.x1, "y0": rc.y0, "y1": rc.y1}
                    for rc in layout.electrodes[lid].patches
                ],
            }
            for lid in layout.ids()
        ]
    }


def field_table_from_json(doc) -> FieldTable:
    """Parse {"<id>": [Ex, Ey, Ez], ...} in (V/m)/V."""
    if isinstance(doc, (str, bytes)):
        doc = json.loads(doc)
    if not isinstance(doc, dict):
        raise DomainError("field table document must be a JSON object")
    try:
        return FieldTable({int(k): tuple(v) for k, v in doc.items()})
    except (TypeError, ValueError) as exc:
        raise DomainError(f"malformed field table: {exc}")


def demo_layout() -> TrapLayout:
    """Illustrative 30-electrode layout with 40 um features.

    Three rows of ten 40 x 40 um patches: ids 1-10 at y in [-60, -20],
    ids 11-20 straddling y = 0, ids 21-30 at y in [20, 60], columns
    spanning x in [-200, 200]. Not a real device; field directions at a
    site ~40 um above the center are diverse enough to condition
    mode-orientation fits.
    """
    electrodes = {}
    rows = ((-60.0, -20.0), (-20.0, 20.0), (20.0, 60.0))
    for row_idx, (y0, y1) in enumerate(rows):
        for col in range(10):
            lid = 10 * row_idx + col + 1
            x0 = -200.0 + 40.0 * col
            electrodes[lid] = ElectrodeGeometry(lid, (Rect(x0, x0 + 40.0, y0, y1),))
    return TrapLayout(electrodes)
