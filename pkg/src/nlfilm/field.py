"""Uniform periodic grids, sampled fields, transforms and grid quadrature.

Fields live on cell-centered nodes x_i = (i + 1/2) h of a 2-D or 3-D torus
and carry a trailing channel axis.  The discrete Fourier transform follows
the convention u_hat(xi) = sum u(x) e^{-i xi.x} h1 h2 h3 with frequencies
xi = 2 pi k / L per axis, stored Hermitian-packed along the last spatial
axis.
"""

import json
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import DomainError, ShapeError, SupportError, SamplingError, ValidationError


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on a 2-D or 3-D torus."""

    dims: tuple
    lengths: tuple

    def __post_init__(self):
        if len(self.dims) not in (2, 3) or len(self.lengths) != len(self.dims):
            raise DomainError("dims/lengths must both have 2 or 3 axes")
        for n in self.dims:
            if n < 4 or n % 2 != 0:
                raise DomainError(f"grid size {n} must be even and >= 4")
        for length in self.lengths:
            if length <= 0:
                raise DomainError(f"torus period {length} must be positive")
        object.__setattr__(self, "dims", tuple(int(n) for n in self.dims))
        object.__setattr__(self, "lengths", tuple(float(x) for x in self.lengths))

    @property
    def ndim(self):
        return len(self.dims)

    @property
    def spacing(self):
        return tuple(L / n for L, n in zip(self.lengths, self.dims))

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    def nodes(self, axis):
        """Cell-centered coordinates along one axis."""
        h = self.spacing[axis]
        return (np.arange(self.dims[axis]) + 0.5) * h

    def mesh(self):
        """Coordinate arrays of shape ``dims`` (dense meshgrid)."""
        return np.meshgrid(*(self.nodes(a) for a in range(self.ndim)),
                           indexing="ij")

    def xi(self, axis):
        """Angular frequencies 2*pi*k/L along one axis (rfft layout on last)."""
        n, L = self.dims[axis], self.lengths[axis]
        if axis == self.ndim - 1:
            return 2.0 * np.pi * np.fft.rfftfreq(n, d=L / n)
        return 2.0 * np.pi * np.fft.fftfreq(n, d=L / n)

    def xi_mesh(self):
        """Broadcastable frequency arrays matching the packed spectrum shape."""
        arrays = []
        for a in range(self.ndim):
            shape = [1] * self.ndim
            vals = self.xi(a)
            shape[a] = vals.shape[0]
            arrays.append(vals.reshape(shape))
        return arrays

    @property
    def spectral_shape(self):
        return self.dims[:-1] + (self.dims[-1] // 2 + 1,)


@dataclass
class Field:
    """Real samples on a grid with a trailing channel axis."""

    grid: Grid
    data: np.ndarray
    support_mask: np.ndarray = dc_field(default=None)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.shape[:-1] != self.grid.dims or data.ndim != self.grid.ndim + 1:
            raise ShapeError(
                f"data shape {data.shape} does not match grid {self.grid.dims}"
                " plus a channel axis")
        if not np.all(np.isfinite(data)):
            raise ValidationError("field data contains non-finite values")
        self.data = data
        if self.support_mask is not None:
            mask = np.asarray(self.support_mask, dtype=bool)
            if mask.shape != self.grid.dims:
                raise ShapeError("support mask shape does not match grid")
            if np.any(data[~mask] != 0.0):
                raise SupportError("field data nonzero off the support mask")
            self.support_mask = mask

    @property
    def components(self):
        return self.data.shape[-1]

    def copy(self):
        mask = None if self.support_mask is None else self.support_mask.copy()
        return Field(self.grid, self.data.copy(), mask)


def masked(grid, data, mask):
    """Zero data off the mask and wrap it as a supported field."""
    data = np.asarray(data, dtype=float).copy()
    data[~np.asarray(mask, dtype=bool)] = 0.0
    return Field(grid, data, np.asarray(mask, dtype=bool))


def sample(grid, f):
    """Sample a callable at the cell-centered nodes.

    ``f`` receives the dense coordinate arrays (one per axis) and returns an
    array of shape ``dims`` (one channel) or ``dims + (c,)``.
    """
    mesh = grid.mesh()
    values = np.asarray(f(*mesh), dtype=float)
    if values.shape == grid.dims:
        values = values[..., None]
    if values.shape[:-1] != grid.dims:
        raise ShapeError(f"sampled values have shape {values.shape}")
    if not np.all(np.isfinite(values)):
        idx = np.argwhere(~np.isfinite(values))[0]
        raise SamplingError("sampled callable returned a non-finite value",
                            index=tuple(int(i) for i in idx))
    return Field(grid, values)


def lp_norm(u, p, region=None):
    """Discrete L^p norm with Euclidean channel magnitude."""
    if p < 1:
        raise DomainError(f"exponent p must be >= 1, got {p}")
    mag = np.sqrt(np.sum(u.data**2, axis=-1))
    if region is not None:
        region = np.asarray(region, dtype=bool)
        if region.shape != u.grid.dims:
            raise ShapeError("region mask shape does not match grid")
        if not np.any(region):
            warnings.warn("lp_norm over an empty region", RuntimeWarning)
            return 0.0
        mag = mag[region]
    return float(np.sum(mag**p) * u.grid.cell_volume) ** (1.0 / p)


def inner(u, v, region=None):
    """Discrete L^2 inner product (channel-wise dot, grid quadrature)."""
    if u.grid != v.grid or u.components != v.components:
        raise ShapeError("inner product requires matching grids and channels")
    prod = np.sum(u.data * v.data, axis=-1)
    if region is not None:
        prod = prod[np.asarray(region, dtype=bool)]
    return float(np.sum(prod) * u.grid.cell_volume)


def forward_transform(u):
    """Hermitian-packed spectrum, scaled to approximate the integral transform."""
    axes = tuple(range(u.grid.ndim))
    return np.fft.rfftn(u.data, axes=axes) * u.grid.cell_volume


def inverse_transform(coeffs, grid):
    """Inverse of forward_transform; returns a plain (unmasked) field."""
    axes = tuple(range(grid.ndim))
    expected = grid.spectral_shape
    if coeffs.shape[:-1] != expected:
        raise ShapeError(
            f"spectrum shape {coeffs.shape} does not match grid {expected}")
    data = np.fft.irfftn(coeffs, s=grid.dims, axes=axes) / grid.cell_volume
    return Field(grid, data)


def spectral_energy(coeffs, grid):
    """Parseval sum: equals lp_norm(u, 2)^2 for coeffs = forward_transform(u).

    The packed last axis stores only non-negative frequencies; interior
    entries represent a conjugate pair and count twice.
    """
    weights = np.ones(grid.spectral_shape)
    weights[..., 1:] = 2.0
    if grid.dims[-1] % 2 == 0:
        weights[..., -1] = 1.0
    total = float(np.sum(weights[..., None] * np.abs(coeffs) ** 2))
    return total / float(np.prod(grid.lengths))


# ---------------------------------------------------------------------------
# persistence


def dump_field(u, path):
    """Raw little-endian float64 C-order dump with a JSON sidecar."""
    path = str(path)
    u.data.astype("<f8").tofile(path)
    sidecar = {
        "dims": list(u.grid.dims),
        "lengths": list(u.grid.lengths),
        "components": u.components,
        "mask_file": None,
    }
    if u.support_mask is not None:
        mask_path = path + ".mask"
        u.support_mask.astype("<u1").tofile(mask_path)
        sidecar["mask_file"] = mask_path
    with open(path + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2)


def load_field(path):
    path = str(path)
    with open(path + ".json") as fh:
        sidecar = json.load(fh)
    grid = Grid(tuple(sidecar["dims"]), tuple(sidecar["lengths"]))
    shape = grid.dims + (sidecar["components"],)
    data = np.fromfile(path, dtype="<f8").reshape(shape)
    mask = None
    if sidecar.get("mask_file"):
        mask = np.fromfile(sidecar["mask_file"], dtype="<u1").reshape(
            grid.dims).astype(bool)
    return Field(grid, data, mask)


def field_info(path):
    with open(str(path) + ".json") as fh:
        return json.load(fh)
