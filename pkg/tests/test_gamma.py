import numpy as np
import pytest
import scipy.sparse.linalg

from nlfilm import energy as en
from nlfilm import field as F
from nlfilm import gamma as gm
from nlfilm import geometry as geo
from nlfilm import kernel as K
from nlfilm.errors import DomainError, ParameterError
from nlfilm.nlgrad import Horizon, NonlocalOperator


@pytest.fixture(scope="module")
def k3():
    return K.make_truncated_fractional(0.5, "bump")


@pytest.fixture(scope="module")
def k2(k3):
    return K.reduce_kernel(k3)


def small_setup(k3, dims=(16, 16, 8), delta=(0.5, 0.5)):
    g = F.Grid(dims, (6.0, 6.0, 3.0))
    d = geo.SlabDomain(geo.Rectangle(2.0, 1.5, center=(3.0, 3.0)),
                       (1.0, 2.0), Horizon(*delta), g)
    op = NonlocalOperator(k3, Horizon(*delta), g)
    return g, d, op


def bump(t):
    t = np.clip(np.abs(t), 0.0, 1.0)
    return (1.0 - t**2) ** 4


class TestMinimize:
    def test_config_validation(self):
        with pytest.raises(DomainError):
            gm.MinimizeConfig(gradient_tol=0.0)
        with pytest.raises(DomainError):
            gm.MinimizeConfig(backtrack_factor=1.5)
        with pytest.raises(DomainError):
            gm.MinimizeConfig(memory=0)
        with pytest.raises(ParameterError):
            gm.minimize(lambda u: 0.0, lambda u: u)

    def test_quadratic_exact(self):
        g = F.Grid((8, 8), (2.0, 2.0))
        rng = np.random.default_rng(0)
        target = F.Field(g, rng.normal(size=g.dims + (2,)))

        def val(u):
            return 0.5 * F.inner(u, u) - F.inner(u, target)

        def grad(u):
            return F.Field(g, u.data - target.data)

        u0 = F.Field(g, np.zeros(g.dims + (2,)))
        res = gm.minimize(val, grad, u0, gm.MinimizeConfig(gradient_tol=1e-10))
        assert res.converged
        assert np.max(np.abs(res.field.data - target.data)) < 1e-8
        # monotone non-increasing trace
        assert all(b <= a + 1e-12 for a, b in zip(res.trace, res.trace[1:]))

    def test_budget_exhaustion_flags(self):
        g = F.Grid((8, 8), (2.0, 2.0))
        rng = np.random.default_rng(1)
        target = F.Field(g, rng.normal(size=g.dims + (2,)))

        def val(u):
            return float(np.sum((u.data - target.data) ** 4))

        def grad(u):
            return F.Field(g, 4.0 * (u.data - target.data) ** 3
                           / g.cell_volume)

        u0 = F.Field(g, np.zeros(g.dims + (2,)))
        res = gm.minimize(val, grad, u0,
                          gm.MinimizeConfig(max_iters=2, gradient_tol=1e-14))
        assert not res.converged
        assert res.gradient_norm > 1e-14
        assert res.iterations == 2

    def test_respects_support_mask(self, k3):
        g, dom, op = small_setup(k3)
        _, fat, _ = dom.masks()
        W = en.lp_density(2)
        val, grad = gm.stabilized_objective(W, op, dom, 0.5, 0.1)
        rng = np.random.default_rng(2)
        u0 = F.masked(g, rng.normal(size=g.dims + (3,)), fat)
        res = gm.minimize(val, grad, u0,
                          gm.MinimizeConfig(max_iters=30, gradient_tol=1e-12))
        assert np.all(res.field.data[~fat] == 0.0)
        assert all(b <= a + 1e-12 for a, b in zip(res.trace, res.trace[1:]))


class TestObjectiveGradients:
    def test_fd_directional_derivatives(self, k3):
        # combined stabilized objective with a force term, 20 directions
        g, dom, op = small_setup(k3)
        mask_omega, fat, _ = dom.masks()
        W = en.lp_density(2)
        rng = np.random.default_rng(3)
        Vdata = rng.normal(size=g.dims + (9,)) * mask_omega[..., None]
        V = F.masked(g, Vdata, mask_omega)
        f = op.divergence(V)
        f = F.masked(g, f.data, fat)
        val, grad = gm.stabilized_objective(W, op, dom, 0.5, 0.2, force=f)
        u = F.masked(g, rng.normal(size=g.dims + (3,)), fat)
        gfield = grad(u)
        h = 1e-6
        for _ in range(20):
            v = F.masked(g, rng.normal(size=g.dims + (3,)), fat)
            up = F.masked(g, u.data + h * v.data, fat)
            um = F.masked(g, u.data - h * v.data, fat)
            fd_slope = (val(up) - val(um)) / (2 * h)
            an_slope = F.inner(gfield, v)
            assert fd_slope == pytest.approx(
                an_slope, rel=1e-5, abs=1e-8 * max(abs(an_slope), 1.0))

    def test_linear_solve_oracle(self, k3):
        # quadratic objective: stationarity is a linear system; conjugate
        # gradients on the masked degrees of freedom is the oracle
        g, dom, op = small_setup(k3, dims=(12, 12, 8))
        mask_omega, fat, _ = dom.masks()
        W = en.lp_density(2)
        rng = np.random.default_rng(4)
        Vdata = rng.normal(size=g.dims + (9,)) * mask_omega[..., None]
        V = F.masked(g, Vdata, mask_omega)
        f = F.masked(g, op.divergence(V).data, fat)
        val, grad = gm.stabilized_objective(W, op, dom, 0.5, 0.2, force=f)
        idx = np.flatnonzero(np.repeat(fat.ravel(), 3))
        zero = F.masked(g, np.zeros(g.dims + (3,)), fat)
        g0 = grad(zero).data.ravel()[idx]

        def matvec(x):
            data = np.zeros(g.dims + (3,)).ravel()
            data[idx] = x
            u = F.masked(g, data.reshape(g.dims + (3,)), fat)
            return grad(u).data.ravel()[idx] - g0

        A = scipy.sparse.linalg.LinearOperator((idx.size, idx.size), matvec)
        x_cg, info = scipy.sparse.linalg.cg(A, -g0, rtol=1e-12, maxiter=2000)
        assert info == 0
        res = gm.minimize(val, grad, zero,
                          gm.MinimizeConfig(max_iters=800,
                                            gradient_tol=1e-7))
        assert res.converged
        scale = max(np.max(np.abs(x_cg)), 1e-12)
        assert np.max(np.abs(res.field.data.ravel()[idx] - x_cg)) \
            <= 1e-5 * scale


class TestRecovery:
    def test_inverse_identity(self, k2):
        # averaging of the inverse-averaged field is the identity mode-wise
        g2 = F.Grid((24, 24), (6.0, 6.0))
        op2 = NonlocalOperator(k2, 1.0, g2)
        X2, Y2 = g2.mesh()
        d = F.Field(g2, np.stack([
            bump(np.hypot(X2 - 3, Y2 - 3) / 0.7) * np.sin(np.pi * X2 / 3.0),
            bump(np.hypot(X2 - 3, Y2 - 3) / 0.7),
            0.3 * np.cos(np.pi * Y2 / 3.0) * bump(np.hypot(X2 - 3, Y2 - 3)),
        ], axis=-1))
        b = op2.inverse_averaging(d)
        back = op2.averaging(b)
        assert np.max(np.abs(back.data - d.data)) < 1e-10

    def test_marginal_slice_consistency(self, k3, k2):
        # 3-D averaging of an x3-independent field agrees with the reduced
        # 2-D averaging on every slice
        g = F.Grid((24, 24, 12), (6.0, 6.0, 3.0))
        g2 = F.Grid((24, 24), (6.0, 6.0))
        op3 = NonlocalOperator(k3, Horizon(0.7, 0.4), g)
        op2 = NonlocalOperator(k2, 0.7, g2)
        X2, Y2 = g2.mesh()
        b2 = bump(np.hypot(X2 - 3, Y2 - 3) / 1.2) * np.sin(np.pi * X2 / 3.0)
        u3 = F.Field(g, np.repeat(b2[:, :, None, None], g.dims[2], axis=2))
        a3 = op3.averaging(u3)
        a2 = op2.averaging(F.Field(g2, b2[..., None]))
        spread = np.max(np.abs(a3.data - a3.data[:, :, :1, :]))
        assert spread < 1e-10
        assert np.max(np.abs(a3.data[:, :, 0, 0] - a2.data[..., 0])) < 1e-5

    @staticmethod
    def recovery_setup(k3, k2, dims=(32, 32, 16)):
        g = F.Grid(dims, (6.0, 6.0, 4.0))
        dom = geo.SlabDomain(geo.Rectangle(1.5, 1.5, center=(3.0, 3.0)),
                             (1.5, 2.5), Horizon(1.0, 0.5), g)
        op3 = NonlocalOperator(k3, Horizon(1.0, 0.5), g)
        g2 = dom.plane_grid
        op2 = NonlocalOperator(k2, 1.0, g2)
        X2, Y2 = g2.mesh()
        prof = bump(np.hypot(X2 - 3, Y2 - 3) / 0.7)
        ubar = F.Field(g2, np.stack([
            prof * np.sin(np.pi * X2 / 3.0), prof, 0.5 * prof], axis=-1))
        dfield = F.Field(g2, np.stack([
            0.3 * prof, 0.2 * prof * np.cos(np.pi * Y2 / 3.0),
            0.4 * prof], axis=-1))
        return g, dom, op3, g2, op2, ubar, dfield

    def test_representatives_agree_on_fattened_set(self, k3, k2):
        g, dom, op3, g2, op2, ubar, dfield = self.recovery_setup(k3, k2)
        eps_list = [0.2, 0.05]
        masked_fields, _ = gm.recovery_sequence(ubar, dfield, op2, dom,
                                                eps_list)
        smooth_fields, _ = gm.recovery_sequence(ubar, dfield, op2, dom,
                                                eps_list,
                                                representative="smooth")
        _, fat, _ = dom.masks()
        for um, us in zip(masked_fields, smooth_fields):
            assert um.support_mask is not None
            assert np.all(um.data[~fat] == 0.0)
            assert np.max(np.abs((um.data - us.data)[fat])) < 1e-13

    def test_zero_dfield(self, k3, k2):
        g, dom, op3, g2, op2, ubar, _ = self.recovery_setup(k3, k2)
        zero = F.Field(g2, np.zeros(g2.dims + (3,)))
        (u,), b = gm.recovery_sequence(ubar, zero, op2, dom, [0.1])
        _, fat, _ = dom.masks()
        assert np.max(np.abs(b.data)) == 0.0
        expect = np.repeat(ubar.data[:, :, None, :], g.dims[2], axis=2)
        expect[~fat] = 0.0
        assert np.array_equal(u.data, expect)

    def test_energy_upper_bound_trend(self, k3, k2):
        # bulk energies of the recovery fields approach the reduced target
        g, dom, op3, g2, op2, ubar, dfield = self.recovery_setup(k3, k2)
        eps_list = [0.2, 0.1, 0.05, 0.025]
        fields, b = gm.recovery_sequence(ubar, dfield, op2, dom, eps_list,
                                         representative="smooth")
        W = en.lp_density(2)
        # reduced target with the same in-plane discrete operator
        omega2, _ = en._plane_masks(dom)
        G = op2.gradient(ubar).data.reshape(g2.dims + (3, 2))
        Ffull = np.concatenate(
            [G, dfield.data[..., None]], axis=-1)
        target = float(np.sum(W.evaluate(Ffull)[omega2]) * g2.cell_volume)
        gaps = [abs(en.thin_energy(W, op3, dom, eps, u, check_support=False)
                    - target) for eps, u in zip(eps_list, fields)]
        assert all(b_ < a_ for a_, b_ in zip(gaps, gaps[1:]))
        assert gaps[-1] <= 0.25 * gaps[0]

    def test_third_column_on_interior(self, k3, k2):
        # rescaled third Jacobian column of the recovery field reproduces
        # dfield on the slab
        g, dom, op3, g2, op2, ubar, dfield = self.recovery_setup(k3, k2)
        eps = 0.05
        (u_eps,), _ = gm.recovery_sequence(ubar, dfield, op2, dom, [eps],
                                           representative="smooth")
        Fj = en._jacobian(op3, u_eps, eps)
        mask_omega = dom.masks()[0]
        err = np.abs(Fj[..., :, 2] - dfield.data[:, :, None, :])
        scale = np.max(np.abs(dfield.data))
        assert np.max(err[mask_omega]) <= 0.01 * scale


def sweep_setup(k3, dims=(16, 16, 12)):
    g = F.Grid(dims, (6.0, 6.0, 6.0))
    cs = geo.Rectangle(1.5, 1.5, center=(3.0, 3.0))

    def factory(hz):
        return geo.SlabDomain(cs, (2.5, 3.5), hz, g)

    dom0 = factory(Horizon(0.0, 0.0))
    mask_omega = dom0.masks()[0]
    X, Y, Z = g.mesh()
    prof = bump(np.hypot(X - 3, Y - 3) / 0.7) * bump((Z - 3.0) / 0.45)
    Vdata = np.zeros(g.dims + (9,))
    Vdata[..., 0] = prof
    Vdata[..., 4] = 0.5 * prof
    Vdata[..., 8] = 0.25 * prof
    Vdata *= mask_omega[..., None]
    V = F.masked(g, Vdata, mask_omega)
    return g, factory, V


class TestSweep:
    def test_rejects_bad_input(self, k3):
        g, factory, V = sweep_setup(k3)
        W = en.lp_density(2)
        with pytest.raises(ParameterError):
            gm.gamma_sweep("radial", [0.4, 0.2], W, 0.1, k3, factory, V)
        with pytest.raises(DomainError):
            gm.gamma_sweep("aniso", [0.2, 0.4], W, 0.1, k3, factory, V)

    @pytest.mark.parametrize("regime", ["aniso", "iso"])
    def test_sweep_trends(self, k3, regime):
        g, factory, V = sweep_setup(k3)
        W = en.anisotropic_density(1.0, (0.0, 0.0, 0.2))
        cfg = gm.MinimizeConfig(max_iters=1000, gradient_tol=1e-7)
        sweep = gm.gamma_sweep(regime, [0.8, 0.5, 0.3], W, 1.0, k3, factory,
                               V, cfg=cfg)
        assert sweep.trend_ok
        gaps = [r["gap"] for r in sweep.records]
        dists = [r["distance"] for r in sweep.records]
        assert gaps[-1] <= 1.1 * gaps[0]
        assert dists[-1] <= 1.1 * dists[0]
        assert all(r["converged"] for r in sweep.records)
        diag = gm.compactness_diagnostic(sweep)
        assert diag["bounded"]
        assert diag["pairing_drift"][-1] == 0.0
        assert diag["stab_nl_terms"][-1] <= diag["stab_nl_terms"][0] + 1e-12
