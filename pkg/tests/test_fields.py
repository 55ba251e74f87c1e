import json
import math

import numpy as np
import pytest

from ionmodes.errors import DomainError, LookupError_
from ionmodes.fields import (
    ElectrodeGeometry,
    FieldTable,
    Rect,
    TrapSite,
    demo_layout,
    electrode_field,
    field_table_from_json,
    layout_from_json,
    layout_to_json,
    patch_potential,
    patch_potential_gradient,
)


def solid_angle_quadrature(rect: Rect, r, order: int = 160) -> float:
    """Direct surface integral phi = (1/2pi) int z / s^3 dA over the patch."""
    x, y, z = r
    nodes, weights = np.polynomial.legendre.leggauss(order)
    xs = 0.5 * (rect.x1 - rect.x0) * nodes + 0.5 * (rect.x1 + rect.x0)
    ys = 0.5 * (rect.y1 - rect.y0) * nodes + 0.5 * (rect.y1 + rect.y0)
    wx = 0.5 * (rect.x1 - rect.x0) * weights
    wy = 0.5 * (rect.y1 - rect.y0) * weights
    dx = x - xs[:, None]
    dy = y - ys[None, :]
    s3 = (dx**2 + dy**2 + z**2) ** 1.5
    return float(np.einsum("i,j,ij->", wx, wy, z / s3)) / (2.0 * math.pi)


SQUARE = ElectrodeGeometry(1, (Rect(-20.0, 20.0, -20.0, 20.0),))


class TestRect:
    def test_rejects_degenerate(self):
        with pytest.raises(DomainError):
            Rect(1.0, 1.0, 0.0, 2.0)
        with pytest.raises(DomainError):
            Rect(0.0, 1.0, 2.0, 1.0)

    def test_overlap_within_electrode_rejected(self):
        with pytest.raises(DomainError):
            ElectrodeGeometry(1, (Rect(0, 10, 0, 10), Rect(5, 15, 5, 15)))

    def test_touching_patches_allowed(self):
        ElectrodeGeometry(1, (Rect(0, 10, 0, 10), Rect(10, 20, 0, 10)))


class TestPatchPotential:
    def test_far_field_decays(self):
        assert patch_potential(SQUARE, (0.0, 0.0, 1e4)) < 1e-5

    def test_large_patch_approaches_one(self):
        big = ElectrodeGeometry(1, (Rect(-1e5, 1e5, -1e5, 1e5),))
        assert patch_potential(big, (0.0, 0.0, 10.0)) == pytest.approx(1.0, abs=1e-4)

    def test_below_plane_rejected(self):
        with pytest.raises(DomainError):
            patch_potential(SQUARE, (0.0, 0.0, 0.0))
        with pytest.raises(DomainError):
            patch_potential(SQUARE, (0.0, 0.0, -1.0))

    def test_on_axis_vs_quadrature(self):
        # square of side a evaluated at height a/2 on the axis
        a = 40.0
        value = patch_potential(SQUARE, (0.0, 0.0, a / 2))
        oracle = solid_angle_quadrature(SQUARE.patches[0], (0.0, 0.0, a / 2))
        assert abs(value - oracle) < 1e-6

    def test_off_axis_vs_quadrature(self):
        for r in ((7.0, -3.0, 11.0), (25.0, 14.0, 30.0), (-60.0, 2.0, 55.0)):
            value = patch_potential(SQUARE, r)
            oracle = solid_angle_quadrature(SQUARE.patches[0], r)
            assert abs(value - oracle) < 1e-6

    def test_bounded_between_zero_and_one(self):
        rng = np.random.default_rng(21)
        for _ in range(200):
            r = (rng.uniform(-100, 100), rng.uniform(-100, 100), rng.uniform(0.5, 120))
            assert 0.0 < patch_potential(SQUARE, r) < 1.0

    def test_superposition_of_disjoint_patches(self):
        left = ElectrodeGeometry(1, (Rect(-30, -10, -10, 10),))
        right = ElectrodeGeometry(2, (Rect(10, 30, -10, 10),))
        both = ElectrodeGeometry(3, (Rect(-30, -10, -10, 10), Rect(10, 30, -10, 10)))
        r = (3.0, 1.0, 17.0)
        total = patch_potential(left, r) + patch_potential(right, r)
        assert abs(patch_potential(both, r) - total) < 5e-16

    def test_harmonic(self):
        rng = np.random.default_rng(8)
        h = 0.1
        for _ in range(100):
            r = np.array([rng.uniform(-60, 60), rng.uniform(-60, 60),
                          rng.uniform(2.0, 90.0)])
            center = patch_potential(SQUARE, r)
            lap = -6.0 * center
            for axis in range(3):
                for sign in (-1.0, 1.0):
                    shifted = np.array(r)
                    shifted[axis] += sign * h
                    lap += patch_potential(SQUARE, shifted)
            lap /= h * h
            assert abs(lap) < 1e-6 * max(abs(center), 1e-3)


class TestElectrodeField:
    def test_symmetry_axis(self):
        e = electrode_field(SQUARE, (0.0, 0.0, 13.0))
        assert abs(e[0]) < 1e-9 and abs(e[1]) < 1e-9
        assert e[2] > 0.0  # positive patch repels a positive test charge

    def test_field_table_passthrough(self):
        table = FieldTable({22: (100.0, 0.0, -50.0)})
        e = electrode_field(table, (1.0, 2.0, 3.0), electrode_id=22)
        assert np.array_equal(e, [100.0, 0.0, -50.0])

    def test_field_table_missing_id(self):
        table = FieldTable({22: (100.0, 0.0, -50.0)})
        with pytest.raises(LookupError_):
            electrode_field(table, (0, 0, 1), electrode_id=23)

    def test_gradient_vs_central_differences(self):
        rng = np.random.default_rng(17)
        h = 1e-3  # um
        for _ in range(25):
            r = np.array([rng.uniform(-50, 50), rng.uniform(-50, 50),
                          rng.uniform(3.0, 80.0)])
            grad = patch_potential_gradient(SQUARE, r)
            for axis in range(3):
                hi = np.array(r)
                lo = np.array(r)
                hi[axis] += h
                lo[axis] -= h
                numeric = (patch_potential(SQUARE, hi) - patch_potential(SQUARE, lo)) / (2 * h)
                assert abs(grad[axis] - numeric) <= 1e-6 * max(abs(numeric), 1e-6)


class TestTrapSite:
    def test_invariants(self):
        with pytest.raises(DomainError):
            TrapSite((0.0, 0.0, 0.0))
        with pytest.raises(DomainError):
            TrapSite((0.0, 0.0, 10.0), (-1.0, 0.0, 0.0))
        site = TrapSite((24.0, 0.0, 36.0), (1.0, 1.0, 5.0))
        assert site.position[2] == 36.0


class TestLayout:
    def test_demo_layout_shape(self):
        layout = demo_layout()
        assert layout.ids() == list(range(1, 31))
        rects = [p for lid in layout.ids() for p in layout.electrodes[lid].patches]
        for i in range(len(rects)):
            for j in range(i + 1, len(rects)):
                assert not rects[i].overlaps(rects[j])

    def test_packaged_file_matches_builtin_layout(self):
        from importlib import resources
        text = resources.files("ionmodes").joinpath(
            "data", "demo_geometry.json").read_text()
        assert json.loads(text) == layout_to_json(demo_layout())

    def test_json_round_trip(self):
        layout = demo_layout()
        doc = layout_to_json(layout)
        again = layout_from_json(json.dumps(doc))
        assert again.ids() == layout.ids()
        r0 = layout.electrodes[7].patches[0]
        r1 = again.electrodes[7].patches[0]
        assert (r0.x0, r0.x1, r0.y0, r0.y1) == (r1.x0, r1.x1, r1.y0, r1.y1)

    def test_field_table_freeze(self):
        layout = demo_layout()
        site = (24.0, 0.0, 36.0)
        table = layout.field_table(site)
        for lid in (5, 14, 27):
            np.testing.assert_allclose(table.fields[lid], layout.field_at(lid, site))

    def test_malformed_documents(self):
        with pytest.raises(DomainError):
            layout_from_json("{}")
        with pytest.raises(DomainError):
            layout_from_json('{"electrodes": [{"id": 1}]}')
        with pytest.raises(DomainError):
            layout_from_json('{"electrodes": [{"id": 1, "rects": [{"x0": 1, "x1": 0, "y0": 0, "y1": 1}]}]}')
        with pytest.raises(DomainError):
            field_table_from_json('{"1": [0, 1]}')
        with pytest.raises(DomainError):
            field_table_from_json('[1, 2]')

    def test_missing_electrode(self):
        with pytest.raises(LookupError_):
            demo_layout().field_at(31, (0.0, 0.0, 10.0))
