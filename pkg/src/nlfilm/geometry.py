"""Slab domains, ellipsoid-fattened sets, grid masks and the limit weight.

A slab Omega = omega x I sits inside the torus of a grid; fattening by the
anisotropic ellipsoid T B_1 is evaluated analytically from the closed-form
cross-section distance, so masks and the fiber-length weight share one exact
geometric predicate.
"""

import math
from dataclasses import dataclass

import numpy as np

from .field import Grid
from .errors import DomainError, GeometryError


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned rectangular cross-section."""

    width: float
    height: float
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise DomainError("rectangle sides must be positive")

    def signed_distance(self, x, y):
        dx = np.abs(np.asarray(x) - self.center[0]) - 0.5 * self.width
        dy = np.abs(np.asarray(y) - self.center[1]) - 0.5 * self.height
        outside = np.sqrt(np.maximum(dx, 0.0) ** 2 + np.maximum(dy, 0.0) ** 2)
        inside = np.minimum(np.maximum(dx, dy), 0.0)
        return outside + inside

    @property
    def half_extent(self):
        return (0.5 * self.width, 0.5 * self.height)


@dataclass(frozen=True)
class Disk:
    """Circular cross-section."""

    radius: float
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.radius <= 0:
            raise DomainError("disk radius must be positive")

    def signed_distance(self, x, y):
        r = np.hypot(np.asarray(x) - self.center[0],
                     np.asarray(y) - self.center[1])
        return r - self.radius

    @property
    def half_extent(self):
        return (self.radius, self.radius)


@dataclass(frozen=True)
class SlabDomain:
    """Omega = omega x (z0, z1) with an anisotropic fattening horizon.

    The horizon carries the fattening radii (inplane, outofplane); masks are
    rendered on the grid at cell centers with strict (open-set) inequalities.
    """

    cross_section: object
    interval: tuple
    horizon: object
    grid: Grid

    def __post_init__(self):
        if self.grid.ndim != 3:
            raise DomainError("slab domains require a 3-D grid")
        z0, z1 = self.interval
        if not z1 > z0:
            raise DomainError("interval must have positive length")
        dbar, d3 = self.horizon.inplane, self.horizon.outofplane
        hx, hy = self.cross_section.half_extent
        cx, cy = self.cross_section.center
        # clearance of one kernel support length per axis beyond the fattening
        bounds = [(cx - hx, cx + hx, dbar, "x"),
                  (cy - hy, cy + hy, dbar, "y"),
                  (z0, z1, d3, "z")]
        for axis, (lo, hi, delta, name) in enumerate(bounds):
            if lo - 2 * delta < 0 or hi + 2 * delta > self.grid.lengths[axis]:
                raise GeometryError(
                    f"slab plus fattening leaves no clearance along axis "
                    f"{name}", axis=name)

    @property
    def plane_grid(self):
        return Grid(self.grid.dims[:2], self.grid.lengths[:2])

    @property
    def thickness(self):
        return self.interval[1] - self.interval[0]

    def inplane_signed_distance(self, x, y):
        return self.cross_section.signed_distance(x, y)

    def axial_distance(self, z):
        z0, z1 = self.interval
        return np.maximum(np.maximum(z0 - np.asarray(z),
                                     np.asarray(z) - z1), 0.0)

    def masks(self, jitter=False):
        """(mask_Omega, mask_Omega_delta, mask_omega_deltabar).

        A node belongs to the fattened set iff its in-plane and out-of-plane
        distances satisfy the open ellipsoid criterion; a zero radius forces
        the corresponding distance to vanish (interior membership).  With
        ``jitter`` the sample points shift by half a cell to break degenerate
        boundary alignments.
        """
        if not jitter:
            cached = self.__dict__.get("_mask_cache")
            if cached is not None:
                return cached
            result = self._render_masks(jitter=False)
            object.__setattr__(self, "_mask_cache", result)
            return result
        return self._render_masks(jitter=True)

    def _render_masks(self, jitter):
        shift = np.array(self.grid.spacing) * (0.5 if jitter else 0.0)
        X, Y, Z = self.grid.mesh()
        X, Y, Z = X + shift[0], Y + shift[1], Z + shift[2]
        sd = self.inplane_signed_distance(X, Y)
        z0, z1 = self.interval
        in_plane = sd < 0.0
        in_axis = (Z > z0) & (Z < z1)
        mask_omega = in_plane & in_axis
        mask_fat = self._ellipsoid_mask(sd, self.axial_distance(Z),
                                        in_plane, in_axis)
        px = self.plane_grid.mesh()
        px = [px[0] + shift[0], px[1] + shift[1]]
        sd2 = self.inplane_signed_distance(*px)
        dbar = self.horizon.inplane
        mask_plane = sd2 < dbar if dbar > 0 else sd2 < 0.0
        return mask_omega, mask_fat, mask_plane

    def _ellipsoid_mask(self, sd, d3, in_plane, in_axis):
        dbar_r = self.horizon.inplane
        d3_r = self.horizon.outofplane
        q = np.zeros(sd.shape)
        ok = np.ones(sd.shape, dtype=bool)
        if dbar_r > 0:
            q = q + (np.maximum(sd, 0.0) / dbar_r) ** 2
        else:
            ok &= in_plane
        if d3_r > 0:
            q = q + (d3 / d3_r) ** 2
        else:
            ok &= in_axis
        return ok & (q < 1.0)

    def limit_weight(self, xbar):
        """Fiber length of the fattened slab over in-plane points, over |I|.

        Equals 1 + 2 delta_3 sqrt(1 - (dist/delta_bar)^2) / |I| strictly
        inside the fattened cross-section and 1 + 2 delta_3 / |I| inside
        omega; raises outside.
        """
        xbar = np.asarray(xbar, dtype=float)
        pts = xbar.reshape(-1, 2)
        sd = self.inplane_signed_distance(pts[:, 0], pts[:, 1])
        dist = np.maximum(sd, 0.0)
        dbar = self.horizon.inplane
        d3 = self.horizon.outofplane
        if dbar > 0:
            if np.any(dist >= dbar):
                raise DomainError(
                    "point outside the fattened cross-section")
            root = np.sqrt(1.0 - (dist / dbar) ** 2)
        else:
            if np.any(sd >= 0.0):
                raise DomainError(
                    "point outside the cross-section with zero in-plane "
                    "horizon")
            root = np.ones(len(pts))
        w = 1.0 + 2.0 * d3 * root / self.thickness
        return w.reshape(xbar.shape[:-1]) if xbar.ndim > 1 else float(w[0])


def masks(domain, jitter=False):
    return domain.masks(jitter=jitter)


def inplane_distance(domain, xbar):
    """Distance to the cross-section (0 inside), exact closed form."""
    xbar = np.asarray(xbar, dtype=float)
    pts = xbar.reshape(-1, 2)
    d = np.maximum(
        domain.inplane_signed_distance(pts[:, 0], pts[:, 1]), 0.0)
    return d.reshape(xbar.shape[:-1]) if xbar.ndim > 1 else float(d[0])


def limit_weight(domain, xbar):
    return domain.limit_weight(xbar)
