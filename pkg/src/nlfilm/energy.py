"""Energy densities, thin-film functionals, stabilizer and the 2-D limit.

Densities act on batched matrices with shape (..., 3, 3); the thin-film
functional evaluates W at the rescaled nonlocal Jacobian (third column
divided by the thickness) over the slab, the stabilizer penalizes
out-of-plane variation per column, and the limit functional combines the
reduced density with the fiber-length weight.
"""

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.optimize

from . import field as fd
from .errors import (DomainError, ParameterError, RegimeError, SupportError,
                     ValidationError, OptimizationError, UnsupportedCaseError)


@dataclass(frozen=True)
class EnergyDensity:
    """Nonnegative density on 3x3 matrices with a p-growth certificate.

    ``evaluate`` and ``derivative`` are vectorized over leading axes.
    ``reduced``/``reduced_derivative``/``reduced_minimizer``, when present,
    are closed forms of the partial minimization over the third column.
    """

    name: str
    evaluate: object
    derivative: object
    growth: tuple                     # (c, C, p)
    convexity_declared: bool
    reduced: object = None
    reduced_derivative: object = None
    reduced_minimizer: object = None

    @property
    def p(self):
        return self.growth[2]


def _frob2(F):
    return np.sum(F**2, axis=(-2, -1))


def lp_density(p=2.0):
    """W(F) = |F|^p (Frobenius), convex for p >= 1."""
    if p < 1:
        raise DomainError("growth exponent must be >= 1")

    def ev(F):
        return _frob2(F) ** (p / 2.0)

    def dv(F):
        n2 = _frob2(F)
        fac = p * np.where(n2 > 0, n2, 1.0) ** (p / 2.0 - 1.0)
        return np.where(n2[..., None, None] > 0, fac[..., None, None] * F,
                        0.0)

    def red(A):
        return np.sum(A**2, axis=(-2, -1)) ** (p / 2.0)

    def red_dv(A):
        n2 = np.sum(A**2, axis=(-2, -1))
        fac = p * np.where(n2 > 0, n2, 1.0) ** (p / 2.0 - 1.0)
        return np.where(n2[..., None, None] > 0, fac[..., None, None] * A,
                        0.0)

    def red_min(A):
        return np.zeros(A.shape[:-2] + (3,))

    return EnergyDensity(f"lp(p={p})", ev, dv, (1.0, 1.0, p), True,
                         red, red_dv, red_min)


def anisotropic_density(alpha=1.0, v=(0.0, 0.0, 1.0)):
    """W(F) = |F|^2 + alpha |F e3 - v|^2, convex with a nonzero minimizer."""
    if alpha <= 0:
        raise DomainError("anisotropy weight must be positive")
    v = np.asarray(v, dtype=float)

    def ev(F):
        col = F[..., :, 2]
        return _frob2(F) + alpha * np.sum((col - v) ** 2, axis=-1)

    def dv(F):
        out = 2.0 * F.copy()
        out[..., :, 2] += 2.0 * alpha * (F[..., :, 2] - v)
        return out

    cst = alpha * float(v @ v) / (1.0 + alpha)
    c_up = max(1.0 + 2.0 * alpha, 2.0 * alpha * float(v @ v) + 1.0)

    def red(A):
        return np.sum(A**2, axis=(-2, -1)) + cst

    def red_dv(A):
        return 2.0 * A

    def red_min(A):
        a = alpha * v / (1.0 + alpha)
        return np.broadcast_to(a, A.shape[:-2] + (3,)).copy()

    return EnergyDensity(f"aniso(alpha={alpha})", ev, dv,
                         (1.0, c_up, 2.0), True, red, red_dv, red_min)


def double_well_density():
    """W(F) = (|F|^2 - 1)^2, non-convex demo without an exact envelope."""

    def ev(F):
        return (_frob2(F) - 1.0) ** 2

    def dv(F):
        return 4.0 * (_frob2(F) - 1.0)[..., None, None] * F

    def red(A):
        n2 = np.sum(A**2, axis=(-2, -1))
        return np.where(n2 >= 1.0, (n2 - 1.0) ** 2, 0.0)

    def red_min(A):
        n2 = np.sum(A**2, axis=(-2, -1))
        a3 = np.sqrt(np.maximum(1.0 - n2, 0.0))
        out = np.zeros(A.shape[:-2] + (3,))
        out[..., 2] = a3
        return out

    return EnergyDensity("double_well", ev, dv, (0.5, 3.0, 4.0), False,
                         red, None, red_min)


BUILTIN_DENSITIES = {
    "lp": lp_density,
    "anisotropic": anisotropic_density,
    "double_well": double_well_density,
}


def validate_density(W, rng=None, samples=10**4, fd_points=20):
    """Growth sandwich on a random matrix sample and derivative FD check."""
    rng = rng or np.random.default_rng(0)
    c, C, p = W.growth
    scales = rng.uniform(-3, 3, size=samples)
    F = rng.normal(size=(samples, 3, 3)) * (10.0 ** scales)[:, None, None]
    vals = W.evaluate(F)
    norms = np.sqrt(_frob2(F))
    lower_ok = bool(np.all(c * norms**p - C <= vals * (1 + 1e-12) + 1e-12))
    upper_ok = bool(np.all(vals <= C * (norms**p + 1.0) * (1 + 1e-12)))
    nonneg_ok = bool(np.all(vals >= 0.0))
    worst = 0.0
    for _ in range(fd_points):
        F0 = rng.normal(size=(3, 3))
        D = rng.normal(size=(3, 3))
        h = 1e-5
        fd_val = (W.evaluate(F0 + h * D) - W.evaluate(F0 - h * D)) / (2 * h)
        an = float(np.sum(W.derivative(F0) * D))
        denom = max(abs(fd_val), abs(an), 1e-8)
        worst = max(worst, abs(fd_val - an) / denom)
    report = {"lower_ok": lower_ok, "upper_ok": upper_ok,
              "nonneg_ok": nonneg_ok, "derivative_rel_err": worst,
              "derivative_ok": worst <= 1e-6}
    report["all_ok"] = all([lower_ok, upper_ok, nonneg_ok,
                            report["derivative_ok"]])
    return report


# ---------------------------------------------------------------------------
# reduced density


def reduced_density(W, Abar, rng=None, gtol=1e-8):
    """min over a of W(Abar | a) by multistart quasi-Newton descent."""
    Abar = np.asarray(Abar, dtype=float)
    if Abar.shape != (3, 2):
        raise DomainError("reduced density expects a 3x2 matrix")
    rng = rng or np.random.default_rng(0)

    def fun(a):
        F = np.concatenate([Abar, a[:, None]], axis=1)
        return float(W.evaluate(F))

    def jac(a):
        F = np.concatenate([Abar, a[:, None]], axis=1)
        return W.derivative(F)[:, 2]

    starts = [np.zeros(3), Abar[:, 0], -Abar[:, 0], Abar[:, 1],
              rng.normal(size=3)]
    best = None
    diagnostics = []
    for a0 in starts:
        res = scipy.optimize.minimize(fun, a0, jac=jac, method="BFGS",
                                      options={"gtol": gtol, "maxiter": 500})
        diagnostics.append((res.success, res.fun,
                            float(np.max(np.abs(res.jac)))))
        if np.max(np.abs(res.jac)) <= 10 * gtol:
            if best is None or res.fun < best[0]:
                best = (float(res.fun), np.asarray(res.x))
    if best is None:
        raise OptimizationError(
            f"all descent starts failed for the reduced density: "
            f"{diagnostics}")
    return best


class ReducedDensity:
    """Partial minimization of a density over its out-of-plane column."""

    def __init__(self, source, envelope_mode=None):
        if envelope_mode is None:
            envelope_mode = ("exact_convex" if source.convexity_declared
                             else "raw")
        if envelope_mode == "exact_convex" and not source.convexity_declared:
            raise ParameterError(
                "exact_convex envelope requires a declared-convex density")
        if envelope_mode not in ("exact_convex", "raw"):
            raise ParameterError(f"unknown envelope mode {envelope_mode!r}")
        self.source = source
        self.envelope_mode = envelope_mode

    @property
    def p(self):
        return self.source.p

    def evaluate(self, Abar):
        Abar = np.asarray(Abar, dtype=float)
        if self.source.reduced is not None:
            return self.source.reduced(Abar)
        flat = Abar.reshape(-1, 3, 2)
        vals = np.array([reduced_density(self.source, A)[0] for A in flat])
        return vals.reshape(Abar.shape[:-2])

    def derivative(self, Abar):
        Abar = np.asarray(Abar, dtype=float)
        if self.source.reduced_derivative is not None:
            return self.source.reduced_derivative(Abar)
        # envelope theorem: in-plane block of dW at the optimal extension
        flat = Abar.reshape(-1, 3, 2)
        outs = []
        for A in flat:
            _, a = reduced_density(self.source, A)
            F = np.concatenate([A, a[:, None]], axis=1)
            outs.append(self.source.derivative(F)[:, :2])
        return np.array(outs).reshape(Abar.shape)

    def minimizer(self, Abar):
        Abar = np.asarray(Abar, dtype=float)
        if self.source.reduced_minimizer is not None:
            return self.source.reduced_minimizer(Abar)
        flat = Abar.reshape(-1, 3, 2)
        outs = [reduced_density(self.source, A)[1] for A in flat]
        return np.array(outs).reshape(Abar.shape[:-2] + (3,))


# ---------------------------------------------------------------------------
# functionals


def _jacobian(op, u, eps):
    """Rescaled nonlocal Jacobian field, shape dims + (c, 3)."""
    g = op.gradient(u)
    c = u.components
    F = g.data.reshape(u.grid.dims + (c, 3)).copy()
    F[..., :, 2] /= eps
    return F


def thin_energy(W, op, domain, eps, u, check_support=True):
    """Bulk term: grid quadrature of W at the rescaled Jacobian over Omega.

    Returns the +infinity sentinel when the field leaks off the fattened
    support mask; ``check_support=False`` skips the sentinel for smooth
    out-of-class representatives that agree with an admissible field on the
    fattened set.
    """
    if eps <= 0:
        raise DomainError("thickness must be positive")
    mask_omega, mask_fat, _ = domain.masks()
    if check_support and np.any(u.data[~mask_fat] != 0.0):
        return math.inf
    F = _jacobian(op, u, eps)
    vals = W.evaluate(F)
    return float(np.sum(vals[mask_omega]) * u.grid.cell_volume)


def thin_energy_gradient(W, op, domain, eps, u):
    """L2 gradient of thin_energy, masked to the fattened support."""
    mask_omega, mask_fat, _ = domain.masks()
    F = _jacobian(op, u, eps)
    P = W.derivative(F)
    P[~mask_omega] = 0.0
    P[..., :, 2] /= eps
    c = u.components
    pfield = fd.Field(u.grid, P.reshape(u.grid.dims + (c * 3,)))
    out = op.gradient_adjoint(pfield)
    return fd.masked(u.grid, out.data, mask_fat)


def stabilizer(domain, eps, p, u, return_terms=False):
    """L^p mass plus the out-of-plane difference quotient double sum.

    The double integral runs per in-plane column over ordered node pairs
    with the diagonal excluded (the integrand has a removable zero there).
    """
    if eps <= 0:
        raise DomainError("thickness must be positive")
    _, mask_fat, _ = domain.masks()
    grid = u.grid
    mag_p = np.sum(u.data**2, axis=-1) ** (p / 2.0)
    first = float(np.sum(mag_p[mask_fat]) * grid.cell_volume)
    z = grid.nodes(2)
    dz = np.abs(z[:, None] - z[None, :])
    np.fill_diagonal(dz, 1.0)
    wpair = 1.0 / (eps * dz)
    np.fill_diagonal(wpair, 0.0)
    diff = u.data[:, :, :, None, :] - u.data[:, :, None, :, :]
    dmag = np.sum(diff**2, axis=-1) ** (p / 2.0)
    pair_mask = mask_fat[:, :, :, None] & mask_fat[:, :, None, :]
    h3 = grid.spacing[2]
    area = grid.spacing[0] * grid.spacing[1]
    second = float(np.sum(dmag * wpair * pair_mask) * area * h3 * h3)
    if return_terms:
        return first + second, {"stab_lp": first, "stab_nl": second}
    return first + second


def stabilizer_gradient(domain, eps, p, u):
    """L2 gradient of the stabilizer, masked to the fattened support."""
    _, mask_fat, _ = domain.masks()
    grid = u.grid
    mag2 = np.sum(u.data**2, axis=-1)
    fac = p * np.where(mag2 > 0, mag2, 1.0) ** (p / 2.0 - 1.0)
    g1 = np.where(mag2[..., None] > 0, fac[..., None] * u.data, 0.0)
    z = grid.nodes(2)
    dz = np.abs(z[:, None] - z[None, :])
    np.fill_diagonal(dz, 1.0)
    wpair = 1.0 / (eps * dz)
    np.fill_diagonal(wpair, 0.0)
    diff = u.data[:, :, :, None, :] - u.data[:, :, None, :, :]
    d2 = np.sum(diff**2, axis=-1)
    dfac = p * np.where(d2 > 0, d2, 1.0) ** (p / 2.0 - 1.0)
    dfac = np.where(d2 > 0, dfac, 0.0)
    pair_mask = mask_fat[:, :, :, None] & mask_fat[:, :, None, :]
    h3 = grid.spacing[2]
    g2 = 2.0 * np.sum(diff * (dfac * wpair * pair_mask)[..., None],
                      axis=3) * h3
    return fd.masked(grid, g1 + g2, mask_fat)


def stabilized_energy(W, op, domain, eps, lam, u, return_terms=False):
    """thin_energy + lambda * stabilizer at the density's growth exponent."""
    if lam <= 0:
        raise ParameterError("stabilization parameter must be positive")
    p = W.p
    bulk = thin_energy(W, op, domain, eps, u)
    stab, terms = stabilizer(domain, eps, p, u, return_terms=True)
    total = bulk + lam * stab
    if return_terms:
        terms = {"bulk": bulk, **terms}
        return total, terms
    return total


def stabilized_energy_gradient(W, op, domain, eps, lam, u):
    gb = thin_energy_gradient(W, op, domain, eps, u)
    gs = stabilizer_gradient(domain, eps, W.p, u)
    return fd.Field(gb.grid, gb.data + lam * gs.data, gb.support_mask)


def _plane_masks(domain):
    g2 = domain.plane_grid
    X2, Y2 = g2.mesh()
    sd = domain.inplane_signed_distance(X2, Y2)
    omega2 = sd < 0.0
    dbar = domain.horizon.inplane
    plane = sd < dbar if dbar > 0 else omega2
    return omega2, plane


def limit_energy(Wbar, op2d, domain, lam, ubar, allow_upper_bound=False,
                 weight="analytic", return_terms=False):
    """2-D limit functional: reduced density over omega plus weighted mass.

    The weight term integrates lambda d |ubar|^p over the fattened
    cross-section, times the interval length.  ``weight="discrete"`` uses
    the column counts of the 3-D mask instead of the closed form.
    """
    if lam <= 0:
        raise ParameterError("stabilization parameter must be positive")
    if Wbar.envelope_mode != "exact_convex" and not allow_upper_bound:
        raise UnsupportedCaseError(
            "non-convex density has no exact envelope; pass "
            "allow_upper_bound=True to accept the unrelaxed value")
    g2 = domain.plane_grid
    if ubar.grid != g2:
        raise DomainError("2-D field grid does not match the cross-section")
    omega2, plane = _plane_masks(domain)
    c = ubar.components
    G = op2d.gradient(ubar).data.reshape(g2.dims + (c, 2))
    bulk_vals = Wbar.evaluate(G)
    bulk = float(np.sum(bulk_vals[omega2]) * g2.cell_volume)
    p = Wbar.p
    X2, Y2 = g2.mesh()
    if weight == "analytic":
        w = np.zeros(g2.dims)
        pts = np.stack([X2[plane], Y2[plane]], axis=-1)
        w[plane] = domain.limit_weight(pts)
    elif weight == "discrete":
        _, fat, _ = domain.masks()
        w = fat.sum(axis=2) * domain.grid.spacing[2] / domain.thickness
    else:
        raise ParameterError(f"unknown weight mode {weight!r}")
    mag_p = np.sum(ubar.data**2, axis=-1) ** (p / 2.0)
    wterm = float(np.sum(w * mag_p) * g2.cell_volume * domain.thickness)
    total = bulk + lam * wterm
    if return_terms:
        return total, {"bulk": bulk, "weight_term": wterm}
    return total


def limit_energy_gradient(Wbar, op2d, domain, lam, ubar,
                          allow_upper_bound=False, weight="analytic"):
    """L2 gradient of limit_energy, masked to the fattened cross-section."""
    g2 = domain.plane_grid
    omega2, plane = _plane_masks(domain)
    c = ubar.components
    G = op2d.gradient(ubar).data.reshape(g2.dims + (c, 2))
    P = Wbar.derivative(G)
    P[~omega2] = 0.0
    pfield = fd.Field(g2, P.reshape(g2.dims + (c * 2,)))
    gb = op2d.gradient_adjoint(pfield).data
    p = Wbar.p
    X2, Y2 = g2.mesh()
    if weight == "analytic":
        w = np.zeros(g2.dims)
        pts = np.stack([X2[plane], Y2[plane]], axis=-1)
        w[plane] = domain.limit_weight(pts)
    else:
        _, fat, _ = domain.masks()
        w = fat.sum(axis=2) * domain.grid.spacing[2] / domain.thickness
    mag2 = np.sum(ubar.data**2, axis=-1)
    fac = p * np.where(mag2 > 0, mag2, 1.0) ** (p / 2.0 - 1.0)
    gw = np.where(mag2[..., None] > 0,
                  (w * fac)[..., None] * ubar.data, 0.0) * domain.thickness
    return fd.masked(g2, gb + lam * gw, plane)


# ---------------------------------------------------------------------------
# forces


@dataclass
class ForceSpec:
    """Force family derived from a matrix potential supported on the slab."""

    potential: object
    f_eps: list
    f0: object
    fbar0: object
    orthogonality: dict = dc_field(default_factory=dict)


def admissible_force(V, ops, op0, basis=None):
    """Divergence-of-potential forces for a horizon sequence and its limit.

    ``V`` must be a 9-channel field masked inside the slab.  Orthogonality
    against the supplied null-space basis fields (or constants) is recorded.
    """
    if V.support_mask is None:
        raise SupportError("force potential must carry a support mask")
    if V.components != 9:
        raise DomainError("force potential needs 3x3 = 9 channels")
    f_eps = [op.divergence(V) for op in ops]
    f0 = op0.divergence(V)
    g3 = V.grid
    h3 = g3.spacing[2]
    fbar_data = f0.data.sum(axis=2) * h3
    g2 = fd.Grid(g3.dims[:2], g3.lengths[:2])
    fbar0 = fd.Field(g2, fbar_data)
    orth = {}
    if basis is not None:
        # pair through the matching discrete adjoint: <Div V, h> = -<V, A h>
        # with A the masked real-space gradient whose kernel contains h
        pairs = [abs(fd.inner(V, basis.operator.apply_field(h)))
                 for h in basis.fields()]
        orth["max_nullspace_pairing"] = max(pairs) if pairs else 0.0
    consts = [abs(float(np.sum(f.data[..., c])) * g3.cell_volume)
              for f in f_eps + [f0] for c in range(3)]
    orth["max_constant_pairing"] = max(consts)
    if orth["max_constant_pairing"] > 1e-8:
        raise ValidationError(
            "force is not orthogonal to constants; divergence lost its "
            "zero mean")
    return ForceSpec(V, f_eps, f0, fbar0, orth)
