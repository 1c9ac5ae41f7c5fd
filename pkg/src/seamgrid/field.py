"""Explicit voxel radiance fields.

A field is a density grid and a spherical-harmonics colour grid sharing one
axis-aligned box. Both grids are node-centred: node ``0`` sits on
``aabb.min`` and node ``res - 1`` on ``aabb.max``. Queries outside the box
return zero density and zero colour.

Grid arrays are indexed ``[x, y, z]``; colour coefficients have shape
``(nx, ny, nz, 3, (degree + 1) ** 2)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199

# fractional slack (in grid units) for treating a point as inside the box;
# absorbs round-off from unified-space <-> local-space round trips
INSIDE_TOL = 1e-9

_CORNERS = np.array(
    [[(c >> 2) & 1, (c >> 1) & 1, c & 1] for c in range(8)], dtype=np.int64
)


def _frozen(a, dtype=np.float64):
    a = np.array(a, dtype=dtype, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Aabb:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo = _frozen(np.reshape(self.min, 3))
        hi = _frozen(np.reshape(self.max, 3))
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("aabb bounds must be finite")
        if not np.all(lo < hi):
            raise ValueError(f"aabb min {lo} must be < max {hi} component-wise")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @property
    def extent(self) -> np.ndarray:
        return self.max - self.min

    def corners(self) -> np.ndarray:
        return self.min + _CORNERS * self.extent

    def contains(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return np.all((p >= self.min) & (p <= self.max), axis=1)


@dataclass(frozen=True)
class DensityGrid:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3 or min(v.shape) < 2:
            raise ValueError(f"density grid needs shape (nx, ny, nz) with every axis >= 2, got {v.shape}")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("density values must be finite and non-negative")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def resolution(self) -> tuple[int, int, int]:
        return tuple(self.values.shape)


@dataclass(frozen=True)
class ShColorGrid:
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.float64)
        if c.ndim != 5 or c.shape[3] != 3 or min(c.shape[:3]) < 2:
            raise ValueError(f"colour grid needs shape (nx, ny, nz, 3, K), got {c.shape}")
        if c.shape[4] not in (1, 4):
            raise ValueError(f"only SH degree 0 or 1 is supported, got {c.shape[4]} coefficients")
        if not np.all(np.isfinite(c)):
            raise ValueError("colour coefficients must be finite")
        object.__setattr__(self, "coeffs", _frozen(c))

    @property
    def resolution(self) -> tuple[int, int, int]:
        return tuple(self.coeffs.shape[:3])

    @property
    def degree(self) -> int:
        return 0 if self.coeffs.shape[4] == 1 else 1

    @property
    def n_coeffs(self) -> int:
        return self.coeffs.shape[4]


@dataclass(frozen=True)
class RadianceField:
    aabb: Aabb
    density: DensityGrid
    color: ShColorGrid

    @property
    def degree(self) -> int:
        return self.color.degree

    def color_pitch(self) -> np.ndarray:
        """Local-space spacing between colour nodes along each axis."""
        return self.aabb.extent / (np.asarray(self.color.resolution) - 1)

    def color_node_positions(self) -> np.ndarray:
        """Local coordinates of every colour node, flattened in C order."""
        res = self.color.resolution
        axes = [np.linspace(self.aabb.min[k], self.aabb.max[k], res[k]) for k in range(3)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        return grid.reshape(-1, 3)


def as_points(x) -> tuple[np.ndarray, bool]:
    """Return ``(N, 3)`` float array and whether the input was a single point."""
    a = np.asarray(x, dtype=np.float64)
    single = a.ndim == 1
    return a.reshape(-1, 3), single


def trilinear_stencil(aabb: Aabb, resolution, points):
    """Corner node indices and weights for node-centred trilinear interpolation.

    Returns ``(flat, weights, inside)`` where ``flat`` holds C-order flat node
    indices of shape ``(N, 8)``, ``weights`` the matching interpolation
    weights (all zero for points outside the box) and ``inside`` a boolean
    mask.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    res = np.asarray(resolution, dtype=np.int64)
    top = (res - 1).astype(np.float64)
    g = (pts - aabb.min) / aabb.extent * top
    slack = INSIDE_TOL * top
    inside = np.all((g >= -slack) & (g <= top + slack), axis=1)
    g = np.clip(g, 0.0, top)
    i0 = np.minimum(np.floor(g).astype(np.int64), res - 2)
    f = g - i0

    idx = i0[:, None, :] + _CORNERS[None, :, :]
    flat = (idx[..., 0] * res[1] + idx[..., 1]) * res[2] + idx[..., 2]
    per_axis = np.where(_CORNERS[None, :, :] == 1, f[:, None, :], 1.0 - f[:, None, :])
    w = per_axis[..., 0] * per_axis[..., 1] * per_axis[..., 2]
    w[~inside] = 0.0
    return flat, w, inside


def eval_sh_basis(d, degree: int) -> np.ndarray:
    """Real spherical-harmonics basis up to ``degree`` (0 or 1) at unit directions."""
    if degree not in (0, 1):
        raise ValueError(f"SH degree must be 0 or 1, got {degree}")
    dirs, single = as_points(d)
    norms = np.linalg.norm(dirs, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        raise ValueError("view directions must be unit length")
    out = np.empty((len(dirs), (degree + 1) ** 2))
    out[:, 0] = SH_C0
    if degree == 1:
        x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]
        out[:, 1] = -SH_C1 * y
        out[:, 2] = SH_C1 * z
        out[:, 3] = -SH_C1 * x
    return out[0] if single else out


def interpolate_grid(aabb: Aabb, values: np.ndarray, points) -> np.ndarray:
    """Trilinearly interpolate per-node payloads; zero outside the box.

    ``values`` has shape ``(nx, ny, nz, *payload)``; returns ``(N, *payload)``.
    """
    res = values.shape[:3]
    flat, w, _ = trilinear_stencil(aabb, res, points)
    payload = values.shape[3:]
    table = values.reshape((-1,) + payload)
    corner_vals = table[flat]
    w = w.reshape(w.shape + (1,) * len(payload))
    return (w * corner_vals).sum(axis=1)


def sample_density(field: RadianceField, x):
    pts, single = as_points(x)
    out = interpolate_grid(field.aabb, field.density.values, pts)
    # guards against -0.0 and round-off below zero
    out = np.maximum(out, 0.0)
    return float(out[0]) if single else out


def shade(coeffs_at_points: np.ndarray, d) -> np.ndarray:
    """Dot ``(N, 3, K)`` interpolated coefficients with the SH basis of ``d``."""
    k = coeffs_at_points.shape[-1]
    basis = eval_sh_basis(np.asarray(d).reshape(-1, 3), 0 if k == 1 else 1)
    return np.einsum("nck,nk->nc", coeffs_at_points, basis)


def sample_color(field: RadianceField, x, d, delta: np.ndarray | None = None):
    """Unclamped view-dependent colour; ``delta`` is an additive coefficient grid."""
    pts, single = as_points(x)
    dirs = np.broadcast_to(np.asarray(d, dtype=np.float64).reshape(-1, 3), pts.shape)
    rgb = shade(interpolate_grid(field.aabb, field.color.coeffs, pts), dirs)
    if delta is not None:
        rgb = rgb + shade(interpolate_grid(field.aabb, delta, pts), dirs)
    return rgb[0] if single else rgb
