"""Anisotropic nonlocal operators on periodic grids.

The averaging operator is a convolution with the rescaled averaged kernel and
acts as a real spectral multiplier m(xi) = Qhat(|T xi|)/Qhat(0); the nonlocal
gradient composes it with the spectral derivative i xi_j.  A direct
spherical-shell quadrature of the defining singular integral serves as the
ground-truth oracle, and masked dense assemblies at tiny scale expose the
discrete null spaces.
"""

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.linalg
import scipy.sparse
from scipy.interpolate import CubicSpline

from . import field as fd
from ._quad import gauss_legendre, panel_rule, lin_edges, log_edges
from .errors import (DomainError, ShapeError, RegimeError, SizeError,
                     UnsupportedCaseError, IllConditionedInverseError)
from .kernel import reduce_kernel, SPHERE_MEASURE


@dataclass(frozen=True)
class Horizon:
    """Anisotropic interaction radii (inplane, outofplane) in [0, 1]^2."""

    inplane: float
    outofplane: float

    def __post_init__(self):
        for name, v in (("inplane", self.inplane),
                        ("outofplane", self.outofplane)):
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"horizon {name}={v} outside [0, 1]")

    @property
    def matrix(self):
        return np.diag([self.inplane, self.inplane, self.outofplane])

    @property
    def radii(self):
        return (self.inplane, self.inplane, self.outofplane)

    @property
    def is_local(self):
        return self.inplane == 0.0 and self.outofplane == 0.0

    def rescale(self, eps):
        """Thin-film rescaled horizon (inplane, outofplane/eps)."""
        if eps <= 0:
            raise DomainError(f"thickness must be positive, got {eps}")
        if self.outofplane > eps + 1e-15:
            raise RegimeError(
                f"out-of-plane horizon {self.outofplane} exceeds thickness "
                f"{eps}; the regime delta_3 > eps is unsupported")
        return Horizon(self.inplane, min(self.outofplane / eps, 1.0))


def _as_radii(horizon, ndim):
    if isinstance(horizon, Horizon):
        if ndim != 3:
            raise ShapeError("a 3-D horizon requires a 3-D grid")
        return horizon.radii
    r = float(horizon)
    if not 0.0 <= r <= 1.0:
        raise DomainError(f"horizon {r} outside [0, 1]")
    return (r,) * ndim


class NonlocalOperator:
    """Spectral realization of the anisotropic nonlocal calculus."""

    def __init__(self, kernel, horizon, grid):
        if kernel.dimension != grid.ndim:
            raise ShapeError(
                f"kernel dimension {kernel.dimension} != grid dimension "
                f"{grid.ndim}")
        self.kernel = kernel
        self.horizon = horizon if isinstance(horizon, Horizon) else float(horizon)
        self.grid = grid
        self.radii = _as_radii(horizon, grid.ndim)
        self._xi = grid.xi_mesh()
        self.multiplier = self._build_multiplier()

    def _build_multiplier(self):
        if all(r == 0.0 for r in self.radii):
            return np.ones(self.grid.spectral_shape)
        w2 = sum((r * xi) ** 2 for r, xi in zip(self.radii, self._xi))
        w = np.sqrt(np.broadcast_to(w2, self.grid.spectral_shape))
        wmax = float(w.max())
        ap = self.kernel.averaged()
        table_w = np.linspace(0.0, wmax * (1.0 + 1e-9) + 1e-9,
                              max(4096, int(8 * wmax)))
        q0 = ap.fourier(0.0)
        spline = CubicSpline(table_w, ap.fourier(table_w) / q0)
        return np.clip(spline(w), -1.0, 1.0)

    def _check(self, u):
        if u.grid != self.grid:
            raise ShapeError("field grid does not match operator grid")

    # -- core spectral maps

    def averaging(self, u):
        self._check(u)
        coeffs = fd.forward_transform(u) * self.multiplier[..., None]
        return fd.inverse_transform(coeffs, self.grid)

    def gradient(self, u):
        """Per-component spectral derivatives of the averaged field.

        Channel layout of the output: component-major, direction-minor
        (channel = comp * ndim + direction).
        """
        self._check(u)
        d = self.grid.ndim
        coeffs = fd.forward_transform(u) * self.multiplier[..., None]
        out = np.empty(coeffs.shape[:-1] + (u.components * d,), dtype=complex)
        for j in range(d):
            dcoef = 1j * self._xi[j][..., None] * coeffs
            out[..., j::d] = dcoef
        return fd.inverse_transform(out, self.grid)

    def divergence(self, v):
        """Row-wise divergence; input channels must be a multiple of ndim."""
        self._check(v)
        d = self.grid.ndim
        if v.components % d != 0:
            raise ShapeError(
                f"divergence input needs channels divisible by {d}")
        coeffs = fd.forward_transform(v) * self.multiplier[..., None]
        rows = v.components // d
        out = np.zeros(coeffs.shape[:-1] + (rows,), dtype=complex)
        for j in range(d):
            out += 1j * self._xi[j][..., None] * coeffs[..., j::d]
        return fd.inverse_transform(out, self.grid)

    def gradient_adjoint(self, g):
        """Adjoint of ``gradient`` wrt the discrete L2 pairing (= -divergence)."""
        out = self.divergence(g)
        return fd.Field(self.grid, -out.data)

    def inverse_averaging(self, v, regularization=1e-8):
        """Spectral division by the multiplier with a clamping floor.

        Modes where |m| falls below the floor are divided by the floor
        instead; their share of the spectral energy is reported and must not
        exceed 1%.
        """
        self._check(v)
        if regularization <= 0:
            raise DomainError("regularization floor must be positive")
        m = self.multiplier
        coeffs = fd.forward_transform(v)
        clamped = np.abs(m) < regularization
        safe = np.where(clamped, np.where(m < 0, -regularization,
                                          regularization), m)
        total = fd.spectral_energy(coeffs, self.grid)
        clamped_energy = fd.spectral_energy(
            np.where(clamped[..., None], coeffs, 0.0), self.grid)
        fraction = clamped_energy / total if total > 0 else 0.0
        if fraction > 0.01:
            raise IllConditionedInverseError(
                f"{fraction:.3%} of the spectral energy sits on clamped "
                "multiplier modes", energy_fraction=fraction)
        out = fd.inverse_transform(coeffs / safe[..., None], self.grid)
        out.clamp_report = {"clamped_modes": int(np.sum(clamped)),
                            "energy_fraction": float(fraction)}
        return out


# functional aliases matching the public operation names


def averaging(op, u):
    return op.averaging(u)


def nonlocal_gradient(op, u):
    return op.gradient(u)


def nonlocal_divergence(op, v):
    return op.divergence(v)


def inverse_averaging(op, v, regularization=1e-8):
    return op.inverse_averaging(v, regularization)


def bar_columns(g, ndim=3):
    """In-plane columns (directions 0, 1) of a gradient-layout field."""
    d = ndim
    comps = g.components // d
    idx = [c * d + j for c in range(comps) for j in range(2)]
    return fd.Field(g.grid, g.data[..., idx])


def leibniz_remainder(op, u, chi):
    """Spectral Leibniz remainder D(chi u) - chi D u."""
    if chi.components != 1:
        raise ShapeError("cutoff field must be scalar")
    chiu = fd.Field(u.grid, chi.data * u.data)
    g_chiu = op.gradient(chiu)
    g_u = op.gradient(u)
    d = op.grid.ndim
    chi_bcast = np.repeat(chi.data, u.components * d, axis=-1)
    return fd.Field(u.grid, g_chiu.data - chi_bcast * g_u.data)


# ---------------------------------------------------------------------------
# direct quadrature oracle


def _sphere_grid(n_theta=24, n_phi=48):
    """Product quadrature on S^2: Gauss in cos(theta), uniform azimuth."""
    mu, wmu = gauss_legendre(n_theta)
    phi = 2.0 * math.pi * (np.arange(n_phi) + 0.5) / n_phi
    wphi = 2.0 * math.pi / n_phi
    st = np.sqrt(1.0 - mu**2)
    dirs = np.stack([
        np.outer(st, np.cos(phi)).ravel(),
        np.outer(st, np.sin(phi)).ravel(),
        np.outer(mu, np.ones(n_phi)).ravel(),
    ], axis=-1)
    weights = np.outer(wmu, np.full(n_phi, wphi)).ravel()
    return dirs, weights


def _eval_vector(u, pts):
    vals = np.asarray(u(pts), dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    return vals


def _fd_gradient(u, x, step=1e-5):
    x = np.asarray(x, dtype=float)
    pts = np.vstack([x + step * np.eye(3), x - step * np.eye(3)])
    vals = _eval_vector(u, pts)
    return (vals[:3] - vals[3:]).T / (2.0 * step)


def direct_quadrature_gradient(k, horizon, u, x, panels=64, r_split=1e-3,
                               n_theta=24, n_phi=48):
    """Ground-truth nonlocal gradient at one point by singular quadrature.

    Integrates (u(x + T z) - u(x)) z_j rho(z)/|z|^2 over the unit ball with a
    spherical-shell rule on [r_split, 1]; the inner ball, where the integrand
    is a classical-gradient contribution plus O(r^2), is carried analytically
    using a finite-difference gradient of u.  Returns a (components, 3)
    matrix.
    """
    if k.dimension != 3:
        raise DomainError("direct quadrature requires a 3-D kernel")
    radii = np.asarray(_as_radii(horizon, 3))
    if np.any(radii <= 0.0):
        raise DomainError(
            "direct quadrature needs positive horizons; use the spectral "
            "path for degenerate ones")
    x = np.asarray(x, dtype=float)
    dirs, dir_w = _sphere_grid(n_theta, n_phi)
    r_nodes, r_w = panel_rule(log_edges(r_split, 1.0, panels), 8)
    # shell contributions: sum_r w_r r rho(r) sum_dir w_dir u(x + T r d) d_j
    pts = (x[None, None, :] +
           (r_nodes[:, None, None] * dirs[None, :, :]) * radii[None, None, :])
    vals = _eval_vector(u, pts.reshape(-1, 3))
    c = vals.shape[-1]
    vals = vals.reshape(len(r_nodes), len(dirs), c)
    sphere = np.einsum("rdc,dj,d->rcj", vals, dirs, dir_w)
    radial_factor = r_w * r_nodes * np.asarray(k.profile(r_nodes))
    outer = np.einsum("r,rcj->cj", radial_factor, sphere)
    # inner ball: grad contribution with the partial kernel mass
    nodes, weights = panel_rule(log_edges(1e-40, r_split, 200), 8)
    inner_mass = SPHERE_MEASURE[3] * float(
        np.sum(weights * k.profile(nodes) * nodes**2))
    g = k.profile(np.array([1e-40, 1e-38]))
    if g[0] > 0 and g[1] > 0:
        p = math.log(g[1] / g[0]) / math.log(100.0) + 2.0
        if p > -1.0:
            inner_mass += SPHERE_MEASURE[3] * float(
                g[0] * 1e-40**2) * 1e-40 / (p + 1.0)
    grad = _fd_gradient(u, x)
    inner = grad * radii[None, :] * (inner_mass / 3.0)
    return (outer + inner) / radii[None, :]


def leibniz_remainder_quadrature(k, horizon, u, chi, x, panels=48,
                                 grad_u=None, grad_chi=None,
                                 n_theta=16, n_phi=32, r_split=1e-3):
    """Brute-force Leibniz remainder at one point.

    With ``grad_u``/``grad_chi`` available, evaluates the defining integral
    Q(z) [(chi(x - Tz) - chi(x)) grad_u(x - Tz) + u(x - Tz) o grad_chi(x - Tz)].
    Without them it falls back to the integrated column forms, which require
    both horizon components positive.
    """
    radii = np.asarray(_as_radii(horizon, 3))
    x = np.asarray(x, dtype=float)
    dirs, dir_w = _sphere_grid(n_theta, n_phi)
    r_nodes, r_w = panel_rule(log_edges(r_split, 1.0, panels), 8)
    pts = (x[None, None, :] -
           (r_nodes[:, None, None] * dirs[None, :, :]) * radii[None, None, :])
    flat = pts.reshape(-1, 3)
    u_vals = _eval_vector(u, flat)
    c = u_vals.shape[-1]
    u_vals = u_vals.reshape(len(r_nodes), len(dirs), c)
    chi_vals = np.asarray(chi(flat), dtype=float).reshape(len(r_nodes),
                                                          len(dirs))
    chi_x = float(np.asarray(chi(x[None, :])).ravel()[0])
    ap = k.averaged()

    if grad_u is not None and grad_chi is not None:
        q_r = ap.q_profile(r_nodes)
        gu = np.asarray(grad_u(flat), dtype=float).reshape(
            len(r_nodes), len(dirs), c, 3)
        gchi = np.asarray(grad_chi(flat), dtype=float).reshape(
            len(r_nodes), len(dirs), 3)
        integrand = ((chi_vals - chi_x)[..., None, None] * gu +
                     u_vals[..., :, None] * gchi[..., None, :])
        shell = np.einsum("rdcj,d->rcj", integrand, dir_w)
        out = np.einsum("r,rcj->cj", r_w * r_nodes**2 * q_r, shell)
        # inner ball: u(x) o grad_chi(x) times the partial Q mass
        nodes, weights = panel_rule(log_edges(1e-40, r_split, 200), 8)
        q_inner = ap.q_profile(nodes)
        inner_mass = SPHERE_MEASURE[3] * float(
            np.sum(weights * q_inner * nodes**2))
        slope = math.log(q_inner[1] / q_inner[0]) / math.log(
            nodes[1] / nodes[0]) + 2.0
        if slope > -1.0:
            inner_mass += SPHERE_MEASURE[3] * float(
                q_inner[0] * nodes[0] ** 2) * nodes[0] / (slope + 1.0)
        u_x = _eval_vector(u, x[None, :])[0]
        gchi_x = np.asarray(grad_chi(x[None, :]), dtype=float).reshape(3)
        return out + np.outer(u_x, gchi_x) * inner_mass
    # integrated forms need both horizons positive
    if np.any(radii <= 0.0):
        raise UnsupportedCaseError(
            "integrated Leibniz forms require positive horizons; supply "
            "grad_u/grad_chi for degenerate ones")
    rho_r = np.asarray(k.profile(r_nodes))
    # columns j: -(z_j / delta_j) rho/|z|^2 (chi diff) u with z = r d
    integrand = (chi_vals - chi_x)[..., None] * u_vals
    shell = np.einsum("rdc,dj,d->rcj", integrand, -dirs, dir_w)
    out = np.einsum("r,rcj->cj", r_w * r_nodes * rho_r, shell)
    # inner ball: u(x) o grad_chi(x) times the partial rho mass over 3
    nodes, weights = panel_rule(log_edges(1e-40, r_split, 200), 8)
    inner_mass = SPHERE_MEASURE[3] * float(
        np.sum(weights * k.profile(nodes) * nodes**2))
    gvals = np.asarray(k.profile(np.array([1e-40, 1e-38])))
    if gvals[0] > 0 and gvals[1] > 0:
        p = math.log(gvals[1] / gvals[0]) / math.log(100.0) + 2.0
        if p > -1.0:
            inner_mass += SPHERE_MEASURE[3] * float(
                gvals[0] * 1e-40**2) * 1e-40 / (p + 1.0)
    u_x = _eval_vector(u, x[None, :])[0]
    gchi_x = _fd_gradient(chi, x)[0]
    out += np.outer(u_x, gchi_x) * radii[None, :] * (inner_mass / 3.0)
    return out / radii[None, :]


# ---------------------------------------------------------------------------
# masked real-space operator and null spaces


def _averaging_stencil(op):
    """Integer offsets and weights of the discrete averaging convolution.

    Weights follow the rescaled averaged kernel, evaluated at offset centers
    and normalized to unit sum so constants are reproduced exactly.  Axes
    with vanishing radius carry no offsets (delta convolution there).
    """
    grid = op.grid
    h = np.asarray(grid.spacing)
    radii = np.asarray(op.radii, dtype=float)
    d = grid.ndim
    if np.all(radii == 0.0):
        return np.zeros((1, d), dtype=int), np.ones(1)
    reach = [int(math.floor(radii[a] / h[a] + 0.5)) if radii[a] > 0 else 0
             for a in range(d)]
    grids = np.meshgrid(*(np.arange(-r, r + 1) for r in reach), indexing="ij")
    offsets = np.stack([g.ravel() for g in grids], axis=-1)
    phys = offsets * h[None, :]
    active = radii > 0
    scaled = np.zeros(len(offsets))
    scaled = np.sqrt(np.sum(
        (phys[:, active] / radii[None, active]) ** 2, axis=-1))
    keep = scaled <= 1.0
    offsets, scaled = offsets[keep], scaled[keep]
    # effective radius for the singular center cell
    r_eff = 0.25 * float(np.min(h[active] / radii[active]))
    scaled = np.where(scaled == 0.0, r_eff, scaled)
    n_active = int(np.sum(active))
    if n_active == grid.ndim:
        q = op.kernel.averaged()
    elif n_active == 2:
        q = reduce_kernel(op.kernel).averaged()
    else:
        q = _once_reduced_1d(op.kernel)
    weights = q.q_profile(scaled)
    total = weights.sum()
    if total <= 0:
        raise DomainError("averaging stencil has no interior support; "
                          "grid too coarse for this horizon")
    return offsets, weights / total


def _once_reduced_1d(kernel):
    """Averaged profile of the kernel integrated over two axes (1-D trace)."""
    ap = kernel.averaged()

    class _OneD:
        @staticmethod
        def q_profile(t):
            t = np.atleast_1d(np.asarray(t, dtype=float))
            out = np.zeros_like(t)
            inside = t < 1.0
            for i in np.nonzero(inside)[0]:
                rmax = math.sqrt(1.0 - t[i] ** 2)
                nodes, w = panel_rule(lin_edges(0.0, rmax, 32), 8)
                out[i] = 2 * math.pi * float(np.sum(
                    w * nodes * ap.q_profile(np.sqrt(nodes**2 + t[i] ** 2))))
            return out

    return _OneD()


def _roll_all(mask, offsets):
    """Nodes from which every stencil offset lands inside ``mask``."""
    ok = np.ones_like(mask, dtype=bool)
    for off in offsets:
        ok &= np.roll(mask, shift=tuple(-off), axis=tuple(range(mask.ndim)))
    return ok


class MaskedOperator:
    """Dense scalar assembly of forward-difference o averaging on masks."""

    def __init__(self, op, mask_in, mask_omega, max_nodes=24**3):
        grid = op.grid
        if int(np.prod(grid.dims)) > max_nodes:
            raise SizeError(
                f"grid {grid.dims} exceeds the dense-assembly guard "
                f"({max_nodes} nodes)")
        self.grid = grid
        self.mask_in = np.asarray(mask_in, dtype=bool)
        self.mask_omega = np.asarray(mask_omega, dtype=bool)
        offsets, weights = _averaging_stencil(op)
        d = grid.ndim
        self.col_index = -np.ones(grid.dims, dtype=int)
        cols = np.argwhere(self.mask_in)
        self.cols = cols
        self.col_index[tuple(cols.T)] = np.arange(len(cols))
        ok = _roll_all(self.mask_in, offsets)
        self.eval_masks = []
        mats = []
        n_cols = len(cols)
        for j in range(d):
            e_j = self.mask_omega & ok & np.roll(ok, -1, axis=j)
            self.eval_masks.append(e_j)
            rows = np.argwhere(e_j)
            h_j = grid.spacing[j]
            data, ri, ci = [], [], []
            shift = np.zeros(d, dtype=int)
            for off, w in zip(offsets, weights):
                for sign, base in ((1.0, 1), (-1.0, 0)):
                    shift[:] = off
                    shift[j] += base
                    tgt = (rows + shift[None, :]) % np.asarray(grid.dims)
                    cidx = self.col_index[tuple(tgt.T)]
                    valid = cidx >= 0
                    ri.append(np.nonzero(valid)[0])
                    ci.append(cidx[valid])
                    data.append(np.full(valid.sum(), sign * w / h_j))
            mat = scipy.sparse.coo_matrix(
                (np.concatenate(data),
                 (np.concatenate(ri), np.concatenate(ci))),
                shape=(len(rows), n_cols)).tocsr()
            mats.append(mat)
        self.mats = mats

    def stacked(self):
        return scipy.sparse.vstack(self.mats).toarray()

    def apply_scalar(self, values):
        """values: (n_cols,) -> list of per-direction images."""
        return [m @ values for m in self.mats]

    def apply_field(self, u):
        """Masked gradient of a field; returns (c*d)-channel data on grid."""
        d = self.grid.ndim
        c = u.components
        out = np.zeros(self.grid.dims + (c * d,))
        vals = u.data[tuple(self.cols.T)]
        for j, (mat, e_j) in enumerate(zip(self.mats, self.eval_masks)):
            img = mat @ vals
            idx = np.argwhere(e_j)
            for comp in range(c):
                out[tuple(idx.T) + (comp * d + j,)] = img[:, comp]
        return fd.Field(self.grid, out)


@dataclass
class NullspaceBasis:
    """Orthonormal discrete null space of the masked nonlocal gradient."""

    grid: object
    mask_in: np.ndarray
    mask_omega: np.ndarray
    scalar_basis: np.ndarray        # (n_mask_nodes, scalar_dim)
    singular_values: np.ndarray
    channels: int = 3
    operator: object = dc_field(default=None, repr=False)

    @property
    def scalar_dimension(self):
        return self.scalar_basis.shape[1]

    @property
    def dimension(self):
        return self.scalar_dimension * self.channels

    @property
    def sigma_min_positive(self):
        sv = self.singular_values
        tol = 1e-8 * sv.max()
        pos = sv[sv > tol]
        return float(pos.min()) if len(pos) else 0.0

    def fields(self):
        """Basis fields (orthonormal in discrete L2), one per basis element."""
        cols = np.argwhere(self.mask_in)
        scale = 1.0 / math.sqrt(self.grid.cell_volume)
        out = []
        for comp in range(self.channels):
            for i in range(self.scalar_dimension):
                data = np.zeros(self.grid.dims + (self.channels,))
                data[tuple(cols.T) + (comp,)] = self.scalar_basis[:, i] * scale
                out.append(fd.masked(self.grid, data, self.mask_in))
        return out

    def project_values(self, values):
        """Project per-node channel values (n_mask, c) onto the basis span."""
        b = self.scalar_basis
        return b @ (b.T @ values)

    def min_distance(self, u):
        """Discrete L2 distance of a supported field to the null space."""
        vals = u.data[tuple(np.argwhere(self.mask_in).T)]
        resid = vals - self.project_values(vals)
        return math.sqrt(float(np.sum(resid**2)) * self.grid.cell_volume)


def x3_constancy_residual(basis, values):
    """Distance of a scalar mask vector to nullspace + x3-independent span.

    A vector annihilated by the out-of-plane gradient column splits, up to
    discretization error, into a null-space element plus a field constant
    along each vertical mask column.  Returns the relative least-squares
    residual of that decomposition.
    """
    cols = np.argwhere(basis.mask_in)
    key = cols[:, 0] * (basis.grid.dims[1] + 1) + cols[:, 1]
    uniq, inv = np.unique(key, return_inverse=True)
    x3 = np.zeros((len(cols), len(uniq)))
    x3[np.arange(len(cols)), inv] = 1.0
    span = np.hstack([basis.scalar_basis, x3])
    q, _ = np.linalg.qr(span)
    resid = values - q @ (q.T @ values)
    norm = np.linalg.norm(values)
    return float(np.linalg.norm(resid) / norm) if norm > 0 else 0.0


def _domain_masks(domain):
    if hasattr(domain, "masks"):
        m = domain.masks()
        return m[0], m[1]
    mask_omega, mask_in = domain
    return np.asarray(mask_omega, bool), np.asarray(mask_in, bool)


def nullspace(op, domain, tol=1e-8):
    """Dense SVD null space of u|_{Omega_delta} -> (Du)|_Omega.

    The masked map decomposes channel-wise into one scalar operator, so the
    SVD is computed once and the basis is expanded over channels.
    """
    mask_omega, mask_in = _domain_masks(domain)
    masked_op = MaskedOperator(op, mask_in, mask_omega)
    dense = masked_op.stacked()
    _, sv, vt = scipy.linalg.svd(dense, full_matrices=True)
    cutoff = tol * (sv.max() if len(sv) else 1.0)
    n_cols = dense.shape[1]
    null_count = n_cols - int(np.sum(sv > cutoff))
    basis = vt[n_cols - null_count:].T if null_count else np.zeros((n_cols, 0))
    return NullspaceBasis(grid=op.grid, mask_in=mask_in,
                          mask_omega=mask_omega, scalar_basis=basis,
                          singular_values=sv, operator=masked_op)


# ---------------------------------------------------------------------------
# horizon continuity


def horizon_convergence_check(k, u, horizons, reference):
    """Sup-norm distances of gradients along a horizon sequence.

    Returns per-step errors, ratios to |delta_j - delta| and a fitted rate.
    """
    ref_op = NonlocalOperator(k, reference, u.grid)
    ref = ref_op.gradient(u).data
    ref_r = np.asarray(_as_radii(reference, u.grid.ndim))
    errors, dists = [], []
    for hz in horizons:
        op = NonlocalOperator(k, hz, u.grid)
        err = float(np.max(np.abs(op.gradient(u).data - ref)))
        dist = float(np.linalg.norm(
            np.asarray(_as_radii(hz, u.grid.ndim)) - ref_r, ord=np.inf))
        errors.append(err)
        dists.append(dist)
    ratios = [e / d if d > 0 else 0.0 for e, d in zip(errors, dists)]
    pos = [(d, e) for d, e in zip(dists, errors) if d > 0 and e > 0]
    rate = None
    if len(pos) >= 2:
        ld = np.log([p[0] for p in pos])
        le = np.log([p[1] for p in pos])
        rate = float(np.polyfit(ld, le, 1)[0])
    return {"errors": errors, "distances": dists, "ratios": ratios,
            "rate": rate}
