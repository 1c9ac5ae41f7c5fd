"""Deterministic desk-scale test scenes.

Every generated value is rounded through float32 so that fields survive a
save/load round trip bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .field import SH_C0, SH_C1, Aabb, DensityGrid, RadianceField, ShColorGrid
from .merge import AffineTransform, FieldEntry, MergedField
from .render import Camera

KINDS = ("two_box", "striped_sphere_pair", "lshape")

SOURCE_DENSITY = 20.0
TARGET_DENSITY = 10.0


@dataclass
class SyntheticScene:
    kind: str
    seed: int
    fields: list[RadianceField]
    transforms: list[AffineTransform]
    betas: list[float]
    cameras: list[Camera]

    def merged(self) -> MergedField:
        return MergedField([FieldEntry(f, t, b) for f, t, b in zip(self.fields, self.transforms, self.betas)])


def _f32(a) -> np.ndarray:
    return np.asarray(a, dtype=np.float32).astype(np.float64)


def _nodes(lo, hi, res):
    axes = [np.linspace(lo[k], hi[k], res) for k in range(3)]
    return np.meshgrid(*axes, indexing="ij")


def _make_field(lo, hi, density, rgb, degree=0, view=None) -> RadianceField:
    """Build a field from node-wise density (nx,ny,nz) and rgb (nx,ny,nz,3).

    ``view`` optionally gives degree-1 colour as (nx,ny,nz,3,3): the rgb
    change per unit of view direction x, y, z.
    """
    k = (degree + 1) ** 2
    coeffs = np.zeros(rgb.shape[:3] + (3, k))
    coeffs[..., 0] = rgb / SH_C0
    if degree == 1 and view is not None:
        # basis order: C0, -C1*y, C1*z, -C1*x
        coeffs[..., 1] = -view[..., 1] / SH_C1
        coeffs[..., 2] = view[..., 2] / SH_C1
        coeffs[..., 3] = -view[..., 0] / SH_C1
    return RadianceField(Aabb(lo, hi), DensityGrid(_f32(density)), ShColorGrid(_f32(coeffs)))


def _square_wave(t, periods):
    return np.where(np.floor(t * 2 * periods) % 2 == 0, 1.0, -1.0)


def orbit_cameras(center, radius, count=8, elevation_deg=25.0, size=32, fov=40.0) -> list[Camera]:
    cams = []
    el = math.radians(elevation_deg)
    for j in range(count):
        az = 2 * math.pi * j / count
        offset = radius * np.array([math.cos(az) * math.cos(el), math.sin(az) * math.cos(el), math.sin(el)])
        pos = np.asarray(center, float) + offset
        cams.append(Camera(tuple(pos), tuple(map(float, center)), (0.0, 0.0, 1.0), fov, size, size))
    return cams


def _two_box(rng, res, degree):
    lo, hi = np.zeros(3), np.ones(3)
    x, y, z = _nodes(lo, hi, res)
    base = rng.uniform([0.65, 0.25, 0.1], [0.85, 0.4, 0.25])
    ramp = 0.2 * (x - 0.5)[..., None] * np.array([1.0, 0.5, 0.0]) + 0.2 * (y - 0.5)[..., None] * np.array([0.0, 0.5, 1.0])
    source = _make_field(lo, hi, np.full(x.shape, SOURCE_DENSITY), base + ramp, degree)

    tbase = rng.uniform([0.1, 0.3, 0.6], [0.2, 0.45, 0.85])
    amp = rng.uniform(0.08, 0.15)
    stripes = amp * _square_wave(y, 4)[..., None] * np.ones(3)
    target = _make_field(lo, hi, np.full(x.shape, TARGET_DENSITY), tbase + stripes, degree)

    # target occupies unified [-0.5, 0.3] x [0.1, 0.9] x [0.1, 0.9]
    t_lo = np.array([-0.5, 0.1, 0.1])
    scale = 1.0 / 0.8
    transform = AffineTransform.from_linear(np.eye(3) * scale, -t_lo * scale)
    cams = orbit_cameras((-0.1, 0.5, 0.5), 3.0)
    return [source, target], [AffineTransform.identity(), transform], cams


def _sphere_density(x, y, z, peak, radius=0.7, fade=0.1):
    r = np.sqrt(x * x + y * y + z * z)
    return peak * np.clip((radius + fade - r) / fade, 0.0, 1.0)


def _striped_sphere_pair(rng, res, degree):
    lo, hi = -np.ones(3), np.ones(3)
    x, y, z = _nodes(lo, hi, res)
    base = rng.uniform([0.6, 0.5, 0.2], [0.8, 0.65, 0.35])
    ramp = 0.15 * x[..., None] * np.array([1.0, 0.3, -0.5])
    source = _make_field(lo, hi, _sphere_density(x, y, z, SOURCE_DENSITY), base + ramp, 0)

    tbase = rng.uniform([0.15, 0.2, 0.55], [0.3, 0.35, 0.75])
    amp = rng.uniform(0.1, 0.18)
    stripes = amp * _square_wave((z + 1) / 2, 5)[..., None] * np.array([1.0, 1.0, 0.6])
    view = None
    if degree == 1:
        # a broad highlight that brightens towards +z and +x views
        strength = 0.12 + 0.05 * np.cos(np.pi * y)
        view = np.zeros(x.shape + (3, 3))
        view[..., :, 0] = 0.5 * strength[..., None]
        view[..., :, 2] = strength[..., None]
    target = _make_field(lo, hi, _sphere_density(x, y, z, TARGET_DENSITY), tbase + stripes, degree, view)

    transform = AffineTransform.from_linear(np.eye(3), [-1.2, 0.0, 0.0])
    cams = orbit_cameras((0.6, 0.0, 0.0), 4.5)
    return [source, target], [AffineTransform.identity(), transform], cams


def _lshape(rng, res, degree):
    lo, hi = np.zeros(3), np.ones(3)
    x, y, z = _nodes(lo, hi, res)
    notch = (x > 0.5) & (y > 0.5)
    base = rng.uniform([0.55, 0.55, 0.2], [0.75, 0.7, 0.35])
    ramp = 0.2 * (z - 0.5)[..., None] * np.array([0.5, 0.5, 1.0])
    source = _make_field(lo, hi, np.where(notch, 0.0, SOURCE_DENSITY), base + ramp, degree)

    tbase = rng.uniform([0.5, 0.1, 0.4], [0.7, 0.25, 0.6])
    amp = rng.uniform(0.08, 0.15)
    stripes = amp * _square_wave(z, 3)[..., None] * np.ones(3)
    target = _make_field(lo, hi, np.full(x.shape, TARGET_DENSITY), tbase + stripes, degree)

    # target fills the notch: unified [0.4, 1.0] x [0.4, 1.0] x [0, 1]
    t_lo = np.array([0.4, 0.4, 0.0])
    scale = np.array([1 / 0.6, 1 / 0.6, 1.0])
    transform = AffineTransform.from_linear(np.diag(scale), -t_lo * scale)
    cams = orbit_cameras((0.5, 0.5, 0.5), 3.0)
    return [source, target], [AffineTransform.identity(), transform], cams


_GENERATORS = {"two_box": _two_box, "striped_sphere_pair": _striped_sphere_pair, "lshape": _lshape}


def generate_synthetic(kind: str, seed: int = 0, resolution: int = 32, degree: int = 0) -> SyntheticScene:
    """Source/target field pair plus suggested transforms and cameras.

    ``resolution`` is the node count per axis of every grid.
    """
    if kind not in _GENERATORS:
        raise ValueError(f"unknown synthetic scene kind {kind!r}; expected one of {', '.join(KINDS)}")
    if degree not in (0, 1):
        raise ValueError("degree must be 0 or 1")
    if resolution < 4:
        raise ValueError("resolution must be at least 4")
    rng = np.random.default_rng(seed)
    fields, transforms, cams = _GENERATORS[kind](rng, resolution, degree)
    return SyntheticScene(kind, seed, fields, transforms, [1.0] * len(fields), cams)


def random_scene(seed: int, resolution: int = 8, degree: int = 1) -> SyntheticScene:
    """Two overlapping fields with noise textures and a random rigid-ish transform."""
    rng = np.random.default_rng(seed)
    k = (degree + 1) ** 2
    shape = (resolution,) * 3
    fields = []
    for peak in (SOURCE_DENSITY, TARGET_DENSITY):
        density = rng.uniform(0.2, 1.0, shape) * peak
        coeffs = rng.normal(0.0, 0.3, shape + (3, k))
        coeffs[..., 0] += 0.5 / SH_C0
        fields.append(RadianceField(Aabb(-np.ones(3), np.ones(3)), DensityGrid(_f32(density)), ShColorGrid(_f32(coeffs))))
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    rot = q * np.sign(np.diag(r))
    linear = rot * rng.uniform(0.8, 1.25)
    transform = AffineTransform.from_linear(linear, rng.uniform(-0.5, 0.5, 3))
    cams = orbit_cameras((0.0, 0.0, 0.0), 4.0, count=4, size=16)
    return SyntheticScene("random", seed, fields, [AffineTransform.identity(), transform], [1.0, 1.0], cams)
