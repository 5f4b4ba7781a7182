"""Radial interaction kernels with finite horizon and their derived profiles.

A kernel is given by a radial profile rho^rad supported on [0, 1], normalized
so that its full-space integral equals the ambient dimension n.  From it we
derive the averaged profile Q(r) = int_r^1 rho^rad(t)/t dt, its radial Fourier
multiplier, and the dimensionally reduced 2-D kernel obtained by integrating
the 3-D kernel along one axis.
"""

import math

import numpy as np
from scipy.special import j0

from ._quad import panel_rule, lin_edges, log_edges
from .errors import DomainError, ValidationError, QuadratureError

# surface measure of the unit sphere S^{n-1}
SPHERE_MEASURE = {2: 2.0 * math.pi, 3: 4.0 * math.pi}

# radius below which integral tails are carried analytically to zero
_RMIN = 1e-40
_YMAX = -math.log(_RMIN)


# ---------------------------------------------------------------------------
# cutoffs


def bump_cutoff(r):
    """Polynomial bump (1 - r^2)^4 on [0, 1], zero outside."""
    r = np.asarray(r, dtype=float)
    inside = r < 1.0
    t = np.minimum(r, 1.0)
    v = 1.0 - t * t
    v *= v
    v *= v
    return np.where(inside, v, 0.0)


def plateau_cutoff(r):
    """Cutoff equal to 1 on [0, 1/2], polynomial decay to 0 at 1."""
    r = np.asarray(r, dtype=float)
    t = np.minimum(np.maximum(2.0 * r - 1.0, 0.0), 1.0)
    v = 1.0 - t * t
    v *= v
    v *= v
    return np.where(r < 1.0, v, 0.0)


def indicator_cutoff(r):
    """Indicator of [0, 1]; not smooth, used as a closed-form oracle."""
    r = np.asarray(r, dtype=float)
    return np.where(r < 1.0, 1.0, 0.0)


CUTOFFS = {
    "bump": bump_cutoff,
    "plateau": plateau_cutoff,
    "indicator": indicator_cutoff,
}


def _resolve_cutoff(cutoff):
    if callable(cutoff):
        return getattr(cutoff, "__name__", "custom"), cutoff
    try:
        return cutoff, CUTOFFS[cutoff]
    except KeyError:
        raise DomainError(f"unknown cutoff {cutoff!r}; choose from {sorted(CUTOFFS)}")


def _validate_cutoff(chi):
    r = np.linspace(0.0, 1.6, 257)
    vals = np.asarray(chi(r), dtype=float)
    if vals[0] <= 0.0:
        raise ValidationError("cutoff must be positive at 0")
    outside = r > 1.0
    if np.any(vals[outside] != 0.0):
        bad = r[outside][np.nonzero(vals[outside])[0][0]]
        raise ValidationError(f"cutoff not supported on [0, 1]: nonzero at r={bad:.4f}")
    diffs = np.diff(vals)
    if np.any(diffs > 1e-12):
        bad = r[1:][diffs > 1e-12][0]
        raise ValidationError(f"cutoff not non-increasing near r={bad:.4f}")


# ---------------------------------------------------------------------------
# kernels


class RadialKernel:
    """Immutable radial kernel; ``profile(r)`` includes the normalization."""

    def __init__(self, dimension, profile, cutoff, normalization, eta0,
                 sigma, gamma, nu, fractional_order=None, name="custom"):
        if dimension not in (2, 3):
            raise DomainError(f"dimension must be 2 or 3, got {dimension}")
        if not (0 < sigma <= gamma < 1):
            raise DomainError("exponents must satisfy 0 < sigma <= gamma < 1")
        if nu <= 0:
            raise DomainError("nu must be positive")
        if eta0 <= 0:
            raise DomainError("eta0 must be positive")
        self.dimension = dimension
        self.profile = profile
        self.cutoff = cutoff
        self.normalization = float(normalization)
        self.eta0 = float(eta0)
        self.sigma = float(sigma)
        self.gamma = float(gamma)
        self.nu = float(nu)
        self.fractional_order = fractional_order
        self.name = name
        self._averaged = None

    def f_rho(self, r):
        r = np.asarray(r, dtype=float)
        return r ** (self.dimension - 2) * self.profile(r)

    def mass(self, panels=400, order=16):
        """Full-space integral by radial quadrature; target value = dimension."""
        n = self.dimension
        nodes, weights = panel_rule(log_edges(_RMIN, 1.0, panels), order)
        integral = float(np.sum(weights * self.profile(nodes) * nodes ** (n - 1)))
        # analytic power-law tail below the smallest quadrature radius
        g = self.profile(np.array([_RMIN, 100.0 * _RMIN])) * np.array(
            [_RMIN, 100.0 * _RMIN]) ** (n - 1)
        if g[0] > 0 and g[1] > 0:
            p = math.log(g[1] / g[0]) / math.log(100.0)
            if p > -1.0:
                integral += float(g[0]) * _RMIN / (p + 1.0)
        return SPHERE_MEASURE[n] * integral

    def averaged(self):
        if self._averaged is None:
            self._averaged = AveragedProfile(self)
        return self._averaged


def _fractional_mass_integral(chi, s, n):
    """int_0^1 chi(r) r^{n-1} r^{-(n-1+s)} dr = int_0^1 chi(r) r^{-s} dr."""
    nodes, weights = panel_rule(log_edges(_RMIN, 1.0, 400), 16)
    val = float(np.sum(weights * np.asarray(chi(nodes)) * nodes ** (-s)))
    # tail below rmin, where chi is constant to machine precision
    val += float(np.asarray(chi(_RMIN))) * _RMIN ** (1.0 - s) / (1.0 - s)
    if not np.isfinite(val) or val <= 0:
        raise QuadratureError("mass integral failed on (0, 1]")
    return val


def make_truncated_fractional(s, cutoff="bump", dimension=3, eta0=None,
                              validate=True):
    """Truncated fractional kernel chi(r) / r^{n-1+s}, normalized to mass n."""
    if not 0.0 < s < 1.0:
        raise DomainError(f"fractional order must lie in (0, 1), got {s}")
    name, chi = _resolve_cutoff(cutoff)
    if validate:
        _validate_cutoff(chi)
    n = dimension
    if n not in (2, 3):
        raise DomainError(f"dimension must be 2 or 3, got {n}")
    norm = n / (SPHERE_MEASURE[n] * _fractional_mass_integral(chi, s, n))
    expo = n - 1 + s

    def profile(r, _norm=norm, _chi=chi, _expo=expo):
        r = np.asarray(r, dtype=float)
        rr = np.where(r > 0, r, 1.0)
        return np.where(r > 0, _norm * np.asarray(_chi(r)) * rr ** (-_expo), 0.0)

    if eta0 is None:
        eta0 = 0.5
    return RadialKernel(
        dimension=n, profile=profile, cutoff=chi, normalization=norm,
        eta0=eta0, sigma=s / 2.0, gamma=(1.0 + s) / 2.0, nu=1.0,
        fractional_order=s, name=f"truncated_fractional(s={s}, cutoff={name})")


# ---------------------------------------------------------------------------
# averaged profile Q and its Fourier multiplier


def _q_values(profile, r, min_panels=48, order=12):
    """Q(r) = int_r^1 rho^rad(t)/t dt via t = r e^tau, vectorized over r."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.zeros_like(r)
    inside = (r > 0) & (r < 1.0)
    if not np.any(inside):
        return out
    ri = r[inside]
    ymax = np.log(1.0 / ri)
    panels = max(min_panels, int(math.ceil(3.0 * float(ymax.max()))))
    u_nodes, u_weights = panel_rule(lin_edges(0.0, 1.0, panels), order)
    t = ri[:, None] * np.exp(ymax[:, None] * u_nodes[None, :])
    np.minimum(t, 1.0, out=t)
    vals = profile(t)
    out[inside] = ymax * (vals @ u_weights)
    return out


class AveragedProfile:
    """The averaged kernel profile Q, its L1 mass and Fourier multiplier."""

    def __init__(self, source, table_size=4096, table_rmin=1e-6):
        self.source = source
        self.radii = np.geomspace(table_rmin, 1.0, table_size)
        self.q_table = _q_values(source.profile, self.radii)
        self._nodes = None
        self._omega_cap = 0.0
        self.l1_mass = self._l1_mass()

    def q_profile(self, r):
        """Evaluate Q(r) by direct quadrature (vectorized, exact support)."""
        r = np.asarray(r, dtype=float)
        scalar = r.ndim == 0
        vals = _q_values(self.source.profile, np.atleast_1d(r).ravel())
        vals = vals.reshape(np.atleast_1d(r).shape)
        return float(vals[0]) if scalar else vals

    # -- internal log-radius node set shared by the L1 and Fourier integrals

    def _build_nodes(self, omega_cap):
        osc_panels = max(32, int(math.ceil(omega_cap)))
        y_osc, w_osc = panel_rule(lin_edges(0.0, 2.0, osc_panels), 16)
        y_tail, w_tail = panel_rule(lin_edges(2.0, _YMAX, 128), 16)
        y = np.concatenate([y_osc, y_tail])
        w = np.concatenate([w_osc, w_tail])
        r = np.exp(-y)
        q = _q_values(self.source.profile, r)
        self._nodes = (y, w, r, q)
        self._omega_cap = omega_cap
        # analytic power-law tail of int_0^rmin Q(r) r^{n-1} dr, which is not
        # negligible when the fractional order approaches 1
        n = self.source.dimension
        qa = _q_values(self.source.profile, np.array([_RMIN, 100.0 * _RMIN]))
        slope = math.log(qa[1] / qa[0]) / math.log(100.0)
        self._tail = SPHERE_MEASURE[n] * float(qa[0]) * _RMIN**n / (n + slope)

    def _l1_mass(self):
        if self._nodes is None:
            self._build_nodes(32.0)
        y, w, r, q = self._nodes
        n = self.source.dimension
        return SPHERE_MEASURE[n] * float(np.sum(w * q * np.exp(-n * y))) + self._tail

    def fourier(self, omega):
        """Radial Fourier transform of Q at |xi| = omega (real multiplier)."""
        omega = np.asarray(omega, dtype=float)
        scalar = omega.ndim == 0
        om = np.atleast_1d(omega).ravel()
        omax = float(np.abs(om).max(initial=0.0))
        if self._nodes is None or omax > self._omega_cap:
            self._build_nodes(max(32.0, 1.25 * omax))
        y, w, r, q = self._nodes
        n = self.source.dimension
        wr = np.abs(om)[:, None] * r[None, :]
        osc = np.sinc(wr / math.pi) if n == 3 else j0(wr)
        vals = SPHERE_MEASURE[n] * (osc @ (w * q * np.exp(-n * y)))
        # below rmin the oscillatory factor is 1 to machine precision
        vals = (vals + self._tail).reshape(np.atleast_1d(omega).shape)
        return float(vals[0]) if scalar else vals


def q_profile(k):
    """Averaged profile of a kernel (cached on the kernel object)."""
    return k.averaged()


def fourier_profile(k, freq_max, samples):
    """Tabulate the radial Fourier multiplier on [0, freq_max]."""
    if freq_max <= 0:
        raise DomainError(f"freq_max must be positive, got {freq_max}")
    if samples < 2:
        raise DomainError(f"samples must be at least 2, got {samples}")
    omega = np.linspace(0.0, float(freq_max), int(samples))
    return omega, k.averaged().fourier(omega)


# ---------------------------------------------------------------------------
# dimensional reduction


def _reduced_profile_values(profile, r, order=96):
    """rho_bar(r) = 2 r int_0^{arccos r} rho^rad(r / cos(theta)) d(theta)."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.zeros_like(r)
    inside = (r > 0) & (r < 1.0)
    if not np.any(inside):
        return out
    ri = r[inside]
    theta_c = np.arccos(ri)
    gn, gw = panel_rule(lin_edges(0.0, 1.0, 4), order // 4)
    theta = theta_c[:, None] * gn[None, :]
    arg = ri[:, None] / np.cos(theta)
    vals = profile(np.minimum(arg, 1.0)) * (arg < 1.0)
    out[inside] = 2.0 * ri * theta_c * (vals @ gw)
    return out


def reduce_kernel(k, table_size=8192, table_rmin=1e-8):
    """Integrate a 3-D kernel along one axis, yielding the 2-D kernel.

    The reduced profile is evaluated once on a dense log-spaced radius table
    and represented as rho_bar(r) = cutoff_bar(r) / r^{1+s} with the bounded
    factor cutoff_bar interpolated monotonically in log-radius.  The direct
    nested quadrature would otherwise dominate every downstream evaluation.
    """
    if k.dimension != 3:
        raise DomainError("reduce_kernel requires a 3-D kernel")
    from scipy.interpolate import PchipInterpolator

    s = k.fractional_order if k.fractional_order is not None else 0.5
    radii = np.geomspace(table_rmin, 1.0, table_size)
    rho_bar = _reduced_profile_values(k.profile, radii)
    chi_bar = rho_bar * radii ** (1.0 + s)
    interp = PchipInterpolator(np.log(radii), chi_bar, extrapolate=False)
    log_rmin = math.log(table_rmin)
    chi_bar0 = float(chi_bar[0])

    def cutoff(r, _interp=interp, _lo=log_rmin, _c0=chi_bar0):
        r = np.asarray(r, dtype=float)
        rr = np.where(r > 0, r, 1.0)
        vals = _interp(np.log(rr))
        vals = np.where(np.log(rr) < _lo, _c0, vals)
        vals = np.where((r <= 0) | (r >= 1.0), 0.0, vals)
        return np.where(np.isnan(vals), 0.0, vals)

    def profile(r, _cut=cutoff, _s=s):
        r = np.asarray(r, dtype=float)
        rr = np.where(r > 0, r, 1.0)
        return _cut(r) * rr ** (-(1.0 + _s))

    return RadialKernel(
        dimension=2, profile=profile, cutoff=cutoff, normalization=1.0,
        eta0=k.eta0, sigma=k.sigma, gamma=k.gamma, nu=k.nu,
        fractional_order=k.fractional_order, name=f"reduced({k.name})")


def reduced_q_identity_check(k, radii):
    """Compare the fiber integral of Q with the averaged reduced profile.

    For each in-plane radius r the out-of-plane integral of Q over the fiber
    must equal the 2-D averaged profile of the reduced kernel at r.
    Returns a report dict with per-radius discrepancies.
    """
    if k.dimension != 3:
        raise DomainError("identity check requires a 3-D kernel")
    q3 = k.averaged()
    q2 = reduce_kernel(k).averaged()
    rows = []
    for r in radii:
        r = float(r)
        if not 0.0 < r < 1.0:
            raise DomainError(f"radius must lie in (0, 1), got {r}")
        tmax = math.sqrt(max(1.0 - r * r, 0.0))
        if tmax > 0:
            nodes, weights = panel_rule(lin_edges(0.0, tmax, 64), 12)
            lhs = 2.0 * float(np.sum(weights * q3.q_profile(
                np.sqrt(r * r + nodes**2))))
        else:
            lhs = 0.0
        rhs = float(q2.q_profile(r))
        rows.append({"radius": r, "lhs": lhs, "rhs": rhs,
                     "discrepancy": abs(lhs - rhs)})
    return {"rows": rows,
            "max_discrepancy": max(row["discrepancy"] for row in rows)}


# ---------------------------------------------------------------------------
# hypothesis certification


def _fd_derivative(f, r, k, h_rel=1e-2):
    """k-th central finite difference of f at points r (k = 1, 2, 3)."""
    h = h_rel * r
    if k == 1:
        return (f(r + h) - f(r - h)) / (2 * h)
    if k == 2:
        return (f(r + h) - 2 * f(r) + f(r - h)) / h**2
    if k == 3:
        return (f(r + 2 * h) - 2 * f(r + h) + 2 * f(r - h) - f(r - 2 * h)) / (
            2 * h**3)
    raise DomainError(f"derivative order {k} unsupported (k <= 3)")


def hypothesis_report(k, samples=200, almost_constant_bound=1e3):
    """Numerically certify the admissibility hypotheses of a kernel.

    Checks the mass normalization, compact support, positivity near zero,
    monotonicity of r^nu f(r), bounded log-derivatives of f, and almost
    monotonicity of the moment-weighted profile near the origin.  The
    almost-monotonicity constants are reported and compared against a
    configurable engineering bound.
    """
    n = k.dimension
    report = {"dimension": n, "name": k.name}

    mass = k.mass()
    report["mass"] = mass
    report["mass_ok"] = abs(mass - n) <= 1e-6

    r_out = np.array([1.0 + 1e-9, 1.1, 1.5, 10.0])
    report["support_ok"] = bool(np.all(k.profile(r_out) == 0.0))

    r_in = np.geomspace(1e-6, k.eta0 * (1 - 1e-12), samples)
    vals_in = k.profile(r_in)
    report["lower_bound"] = float(vals_in.min())
    report["lower_bound_ok"] = bool(vals_in.min() > 0.0)

    r_h1 = np.geomspace(1e-6, 1.0 - 1e-9, samples)
    g1 = r_h1**k.nu * k.f_rho(r_h1)
    report["h1_ok"] = bool(np.all(np.diff(g1) <= 1e-12 * np.abs(g1[:-1])))

    h2 = {}
    r_h2 = np.geomspace(1e-5, k.eta0 * 0.8, 40)
    f_here = k.f_rho(r_h2)
    for order in (1, 2, 3):
        deriv = _fd_derivative(k.f_rho, r_h2, order)
        h2[order] = float(np.max(np.abs(deriv) * r_h2**order / f_here))
    report["h2_constants"] = h2
    report["h2_ok"] = all(np.isfinite(v) for v in h2.values())

    g3 = r_in ** (n + k.sigma - 1) * vals_in
    g4 = r_in ** (n + k.gamma - 1) * vals_in
    # worst pairwise violation factor of (almost) monotonicity
    c3 = float(np.max(g3[1:] / np.minimum.accumulate(g3)[:-1]))
    c4 = float(np.max(np.maximum.accumulate(g4)[:-1] / g4[1:]))
    report["h3_constant"] = c3
    report["h4_constant"] = c4
    report["h3_ok"] = c3 <= almost_constant_bound
    report["h4_ok"] = c4 <= almost_constant_bound

    report["all_ok"] = all(report[key] for key in
                           ("mass_ok", "support_ok", "lower_bound_ok",
                            "h1_ok", "h2_ok", "h3_ok", "h4_ok"))
    return report
