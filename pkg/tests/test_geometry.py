import math

import numpy as np
import pytest

from nlfilm import field as F
from nlfilm import geometry as geo
from nlfilm.nlgrad import Horizon
from nlfilm.errors import DomainError, GeometryError


def make_domain(delta=(0.5, 0.25), grid=None, shape=None):
    g = grid or F.Grid((32, 32, 16), (6.0, 6.0, 3.0))
    cs = shape or geo.Rectangle(2.0, 1.5, center=(3.0, 3.0))
    return geo.SlabDomain(cs, (1.0, 2.0), Horizon(*delta), g)


class TestCrossSections:
    def test_rectangle_distance(self):
        r = geo.Rectangle(2.0, 1.0, center=(0.0, 0.0))
        assert r.signed_distance(0.0, 0.0) == pytest.approx(-0.5)
        assert r.signed_distance(1.5, 0.0) == pytest.approx(0.5)
        # exterior corner point: Euclidean corner distance
        assert r.signed_distance(1.0 + 0.3, 0.5 + 0.4) == pytest.approx(0.5)

    def test_disk_distance(self):
        d = geo.Disk(1.0, center=(2.0, 2.0))
        assert d.signed_distance(2.0 + 1.1, 2.0) == pytest.approx(0.1)
        assert d.signed_distance(2.0, 2.0) == pytest.approx(-1.0)

    def test_invalid(self):
        with pytest.raises(DomainError):
            geo.Rectangle(-1.0, 1.0)
        with pytest.raises(DomainError):
            geo.Disk(0.0)


class TestSlabDomain:
    def test_clearance_violation_names_axis(self):
        g = F.Grid((16, 16, 8), (4.0, 4.0, 1.5))
        with pytest.raises(GeometryError) as exc:
            geo.SlabDomain(geo.Rectangle(2.0, 2.0, center=(2.0, 2.0)),
                           (0.25, 1.25), Horizon(0.5, 0.25), g)
        assert exc.value.axis == "z"
        with pytest.raises(GeometryError) as exc:
            geo.SlabDomain(geo.Rectangle(3.5, 1.0, center=(2.0, 2.0)),
                           (0.5, 1.0), Horizon(0.25, 0.1), g)
        assert exc.value.axis == "x"

    def test_local_masks_equal(self):
        d = make_domain((0.0, 0.0))
        m_omega, m_fat, _ = d.masks()
        assert np.array_equal(m_omega, m_fat)

    def test_monotone_in_horizon(self):
        deltas = [(0.0, 0.0), (0.25, 0.1), (0.5, 0.25), (0.5, 0.5)]
        prev = None
        for delta in deltas:
            _, fat, _ = make_domain(delta).masks()
            if prev is not None:
                assert np.all(prev <= fat)
            prev = fat

    def test_zero_inplane_radius_convention(self):
        d = make_domain((0.0, 0.4))
        m_omega, m_fat, _ = d.masks()
        # in-plane footprint must not grow
        assert np.array_equal(np.any(m_fat, axis=2), np.any(m_omega, axis=2))
        assert m_fat.sum() > m_omega.sum()

    def test_boundary_node_excluded(self):
        # rectangle edge on a cell boundary: node at in-plane distance
        # exactly delta_bar with x3 inside I stays out (open set)
        g = F.Grid((24, 24, 8), (6.0, 6.0, 3.0))
        d = geo.SlabDomain(geo.Rectangle(2.0, 2.0, center=(3.0, 3.0)),
                           (1.0, 2.0), Horizon(0.625, 0.25), g)
        _, fat, _ = d.masks()
        x = g.nodes(0)
        ix = int(np.argmin(np.abs(x - 4.625)))  # distance to edge x=4: 0.625
        iy = int(np.argmin(np.abs(g.nodes(1) - 3.125)))
        iz = int(np.argmin(np.abs(g.nodes(2) - 1.5)))
        assert x[ix] == pytest.approx(4.625)
        assert not fat[ix, iy, iz]
        assert fat[ix - 1, iy, iz]

    def test_jitter_shifts_samples(self):
        d = make_domain((0.5, 0.25))
        a = d.masks()[1]
        b = d.masks(jitter=True)[1]
        assert a.sum() != 0 and b.sum() != 0
        assert not np.array_equal(a, b)

    def test_volume_monte_carlo(self):
        # 1e6-sample Monte-Carlo volume of Omega + T B_1 for a rectangle;
        # nearest-point clamping is exact for boxes
        g = F.Grid((96, 96, 48), (6.0, 6.0, 3.0))
        d = make_domain((0.5, 0.25), grid=g)
        _, fat, _ = d.masks()
        vol_mask = fat.sum() * d.grid.cell_volume
        rng = np.random.default_rng(0)
        lo = np.array([2.0 - 0.5, 2.25 - 0.5, 1.0 - 0.25])
        hi = np.array([4.0 + 0.5, 3.75 + 0.5, 2.0 + 0.25])
        pts = rng.uniform(lo, hi, size=(10**6, 3))
        near = np.clip(pts, [2.0, 2.25, 1.0], [4.0, 3.75, 2.0])
        diff = pts - near
        q = (diff[:, 0] ** 2 + diff[:, 1] ** 2) / 0.5**2 \
            + diff[:, 2] ** 2 / 0.25**2
        vol_mc = np.mean(q < 1.0) * np.prod(hi - lo)
        assert vol_mask == pytest.approx(vol_mc, rel=0.01)


class TestLimitWeight:
    def test_interior_value(self):
        d = make_domain((0.5, 0.25))
        assert d.limit_weight([3.0, 3.0]) == pytest.approx(1.5)

    def test_shoulder_point_closed_form(self):
        # dist = 0.3, delta = (0.5, 0.25): 1 + 0.5 sqrt(1 - 0.36) = 1.4
        d = make_domain((0.5, 0.25))
        assert d.limit_weight([4.0 + 0.3, 3.0]) == pytest.approx(1.4)

    def test_boundary_limit_is_one(self):
        d = make_domain((0.5, 0.25))
        vals = [d.limit_weight([4.0 + t, 3.0]) for t in (0.49, 0.499, 0.4999)]
        assert vals[-1] == pytest.approx(1.0, abs=1e-2)
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_outside_raises(self):
        d = make_domain((0.5, 0.25))
        with pytest.raises(DomainError):
            d.limit_weight([4.6, 3.0])

    def test_zero_inplane_horizon(self):
        d = make_domain((0.0, 0.25))
        assert d.limit_weight([3.0, 3.0]) == pytest.approx(1.5)
        with pytest.raises(DomainError):
            d.limit_weight([4.1, 3.0])

    def test_column_monte_carlo(self):
        # 1-D column-length sampling through the fattened slab at 50 probes
        d = make_domain((0.5, 0.25))
        rng = np.random.default_rng(1)
        for _ in range(50):
            x = rng.uniform(2.0 - 0.45, 4.0 + 0.45)
            y = rng.uniform(2.25 - 0.45, 3.75 + 0.45)
            sd = float(d.inplane_signed_distance(x, y))
            if sd >= 0.5:
                continue
            z = rng.uniform(0.5, 2.5, size=10**5)
            dist3 = d.axial_distance(z)
            q = (max(sd, 0.0) / 0.5) ** 2 + (dist3 / 0.25) ** 2
            length = np.mean(q < 1.0) * 2.0
            assert d.limit_weight([x, y]) == pytest.approx(
                length / d.thickness, abs=1e-2)

    def test_fiber_identity(self):
        # integral of an x3-independent field over the fattened slab equals
        # the weighted in-plane integral within grid-quadrature error
        g = F.Grid((48, 48, 24), (6.0, 6.0, 3.0))
        d = make_domain((0.5, 0.25), grid=g)
        _, fat, plane = d.masks()
        X2, Y2 = d.plane_grid.mesh()
        ubar = 1.0 + 0.5 * np.sin(2 * np.pi * X2 / 6.0) * np.cos(
            2 * np.pi * Y2 / 6.0)
        p = 2
        lhs = np.sum((np.abs(ubar[:, :, None]) ** p) * fat) * g.cell_volume
        w = np.zeros_like(ubar)
        pts = np.stack([X2[plane], Y2[plane]], axis=-1)
        w[plane] = d.limit_weight(pts)
        rhs = np.sum(w * np.abs(ubar) ** p) * d.plane_grid.cell_volume \
            * d.thickness
        h = max(g.spacing)
        assert abs(lhs - rhs) <= 2.0 * h

    def test_mask_weight_consistency(self):
        # column sums of the fattened mask reproduce the fiber length
        g = F.Grid((48, 48, 24), (6.0, 6.0, 3.0))
        d = make_domain((0.5, 0.25), grid=g)
        _, fat, plane = d.masks()
        h3 = g.spacing[2]
        counts = fat.sum(axis=2)
        X2, Y2 = d.plane_grid.mesh()
        for ix, iy in np.argwhere(plane)[::17]:
            expect = d.limit_weight([X2[ix, iy], Y2[ix, iy]]) \
                * d.thickness / h3
            assert abs(counts[ix, iy] - expect) <= 1.0 + 1e-9


class TestDiskDomain:
    def test_masks_and_weight(self):
        g = F.Grid((32, 32, 16), (6.0, 6.0, 3.0))
        d = geo.SlabDomain(geo.Disk(1.0, center=(3.0, 3.0)), (1.0, 2.0),
                           Horizon(0.5, 0.25), g)
        m_omega, m_fat, m_plane = d.masks()
        assert m_omega.sum() > 0
        assert np.all(m_omega <= m_fat)
        assert d.limit_weight([3.0, 3.0]) == pytest.approx(1.5)
        assert geo.inplane_distance(d, [3.0 + 1.2, 3.0]) == pytest.approx(0.2)
