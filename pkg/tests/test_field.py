import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlfilm import field as F
from nlfilm.errors import (DomainError, ShapeError, SupportError,
                           SamplingError)


def grid3(n=8, L=2.0):
    return F.Grid((n, n, n), (L, L, L))


class TestGrid:
    def test_invalid(self):
        with pytest.raises(DomainError):
            F.Grid((3, 4, 4), (1, 1, 1))
        with pytest.raises(DomainError):
            F.Grid((6, 4, 4), (1, 1, -1))
        with pytest.raises(DomainError):
            F.Grid((4,), (1.0,))

    def test_spacing_and_nodes(self):
        g = F.Grid((4, 8), (2.0, 4.0))
        assert g.spacing == (0.5, 0.5)
        assert np.allclose(g.nodes(0), [0.25, 0.75, 1.25, 1.75])

    def test_frequencies(self):
        g = grid3(8, 2.0)
        xi = g.xi(0)
        assert xi[1] == pytest.approx(2 * np.pi / 2.0)
        assert g.xi(2).shape == (5,)


class TestSample:
    def test_constant(self):
        u = F.sample(grid3(), lambda x, y, z: np.ones_like(x))
        assert np.all(u.data == 1.0)

    def test_single_mode_spectrum(self):
        g = grid3(8, 2.0)
        u = F.sample(g, lambda x, y, z: np.sin(2 * np.pi * x / 2.0))
        coeffs = F.forward_transform(u)
        mags = np.abs(coeffs[..., 0])
        nz = {tuple(i) for i in np.argwhere(mags > 1e-10 * mags.max())}
        # the +/- mode pair along a fully stored axis
        assert nz == {(1, 0, 0), (7, 0, 0)}

    def test_nonfinite_rejected(self):
        with pytest.raises(SamplingError):
            F.sample(grid3(), lambda x, y, z: np.where(x > 1, np.inf, 1.0))

    def test_mask_contract(self):
        g = grid3()
        data = np.ones(g.dims + (1,))
        mask = np.zeros(g.dims, dtype=bool)
        mask[:4] = True
        with pytest.raises(SupportError):
            F.Field(g, data, mask)
        u = F.masked(g, data, mask)
        assert np.all(u.data[~mask] == 0.0)
        assert np.all(u.data[mask] == 1.0)


class TestLpNorm:
    def test_constant(self):
        g = grid3(8, 2.0)
        u = F.sample(g, lambda x, y, z: 3.0 * np.ones_like(x))
        for p in (1, 2, 4):
            assert F.lp_norm(u, p) == pytest.approx(3.0 * 8.0 ** (1 / p))

    def test_single_mode_parseval(self):
        g = grid3(16, 2.0)
        a = 0.7
        u = F.sample(g, lambda x, y, z: a * np.sin(2 * np.pi * y / 2.0))
        assert F.lp_norm(u, 2) == pytest.approx(a * np.sqrt(8.0 / 2.0), rel=1e-12)

    def test_half_region(self):
        g = F.Grid((4, 4, 4), (1.0, 1.0, 1.0))
        u = F.sample(g, lambda x, y, z: np.ones_like(x))
        region = np.zeros(g.dims, dtype=bool)
        region[:2] = True
        assert F.lp_norm(u, 3, region) == pytest.approx(0.5 ** (1 / 3))

    def test_empty_region_warns(self):
        g = grid3()
        u = F.sample(g, lambda x, y, z: np.ones_like(x))
        with pytest.warns(RuntimeWarning):
            assert F.lp_norm(u, 2, np.zeros(g.dims, bool)) == 0.0

    def test_triangle_inequality_random(self):
        rng = np.random.default_rng(0)
        g = grid3()
        for _ in range(5):
            a = F.Field(g, rng.normal(size=g.dims + (3,)))
            b = F.Field(g, rng.normal(size=g.dims + (3,)))
            c = F.Field(g, a.data + b.data)
            for p in (1.0, 2.0, 3.5):
                assert F.lp_norm(c, p) <= F.lp_norm(a, p) + F.lp_norm(b, p) + 1e-12


class TestTransforms:
    def test_roundtrip(self):
        rng = np.random.default_rng(1)
        for dims in [(8, 6, 4), (8, 6)]:
            g = F.Grid(dims, tuple(1.0 + i for i in range(len(dims))))
            u = F.Field(g, rng.normal(size=g.dims + (3,)))
            v = F.inverse_transform(F.forward_transform(u), g)
            assert np.max(np.abs(v.data - u.data)) < 1e-12 * np.max(np.abs(u.data))

    def test_delta_spectrum(self):
        g = F.Grid((4, 4, 4), (2.0, 2.0, 2.0))
        data = np.zeros(g.dims + (1,))
        data[1, 2, 3, 0] = 1.0
        coeffs = F.forward_transform(F.Field(g, data))
        assert np.allclose(np.abs(coeffs), g.cell_volume)

    def test_parseval(self):
        rng = np.random.default_rng(2)
        g = F.Grid((8, 6, 10), (1.0, 2.0, 3.0))
        u = F.Field(g, rng.normal(size=g.dims + (2,)))
        energy = F.spectral_energy(F.forward_transform(u), g)
        assert energy == pytest.approx(F.lp_norm(u, 2) ** 2, rel=1e-12)

    def test_shape_check(self):
        g = grid3()
        with pytest.raises(ShapeError):
            F.inverse_transform(np.zeros((3, 3, 3, 1), complex), g)


class TestPersistence:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(3)
        g = F.Grid((4, 6, 8), (1.0, 1.5, 2.0))
        mask = rng.random(g.dims) > 0.5
        u = F.masked(g, rng.normal(size=g.dims + (3,)), mask)
        path = tmp_path / "field.bin"
        F.dump_field(u, path)
        v = F.load_field(path)
        assert v.grid == g
        assert np.array_equal(v.data, u.data)
        assert np.array_equal(v.support_mask, mask)
        info = F.field_info(path)
        assert info["dims"] == [4, 6, 8] and info["components"] == 3


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_roundtrip_property(seed):
    rng = np.random.default_rng(seed)
    g = F.Grid((6, 4, 8), (1.0, 1.0, 2.0))
    u = F.Field(g, rng.normal(size=g.dims + (1,)))
    v = F.inverse_transform(F.forward_transform(u), g)
    assert np.max(np.abs(v.data - u.data)) < 1e-12
