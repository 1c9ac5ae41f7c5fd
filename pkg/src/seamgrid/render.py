"""Pinhole cameras and emission-absorption ray marching of merged fields."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .field import as_points
from .merge import MergedField, merged_color, select_with_density

TERMINATION_TRANSMITTANCE = 1e-4
STEPS_PER_EDGE = 256
_CHUNK = 32


@dataclass(frozen=True)
class Camera:
    position: tuple
    look_at: tuple
    up: tuple = (0.0, 0.0, 1.0)
    vertical_fov: float = 40.0
    width: int = 64
    height: int = 64

    def __post_init__(self):
        if not 0.0 < self.vertical_fov < 180.0:
            raise ValueError(f"vertical_fov must lie in (0, 180), got {self.vertical_fov}")
        if self.width < 1 or self.height < 1:
            raise ValueError("camera width and height must be positive")

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Unit (forward, right, up) vectors."""
        forward = np.asarray(self.look_at, float) - np.asarray(self.position, float)
        n = np.linalg.norm(forward)
        if n == 0:
            raise ValueError("camera position coincides with look_at")
        forward = forward / n
        right = np.cross(forward, np.asarray(self.up, float))
        rn = np.linalg.norm(right)
        if rn < 1e-9 * max(1.0, np.linalg.norm(self.up)):
            raise ValueError("camera up vector is degenerate (zero or parallel to the view direction)")
        right = right / rn
        return forward, right, np.cross(right, forward)


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray


@dataclass
class Rays:
    """A batch of rays stored as ``(N, 3)`` origin and unit direction arrays."""

    origins: np.ndarray
    directions: np.ndarray

    def __len__(self) -> int:
        return len(self.origins)

    def __getitem__(self, j: int) -> Ray:
        return Ray(self.origins[j], self.directions[j])


@dataclass
class ImageBuffer:
    width: int
    height: int
    rgb: np.ndarray  # (height, width, 3) float32, row-major

    def __post_init__(self):
        self.rgb = np.asarray(self.rgb, dtype=np.float32).reshape(self.height, self.width, 3)


@dataclass
class RenderStats:
    weight_sum: np.ndarray
    transmittance: np.ndarray


def generate_camera_rays(cam: Camera) -> Rays:
    """One ray per pixel through pixel centres, rows top to bottom."""
    forward, right, up = cam.basis()
    tan_half = math.tan(math.radians(cam.vertical_fov) / 2.0)
    aspect = cam.width / cam.height
    cols = (np.arange(cam.width) + 0.5) / cam.width * 2.0 - 1.0
    rows = 1.0 - (np.arange(cam.height) + 0.5) / cam.height * 2.0
    u = np.tile(cols * tan_half * aspect, cam.height)
    v = np.repeat(rows * tan_half, cam.width)
    dirs = forward[None] + u[:, None] * right[None] + v[:, None] * up[None]
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    origins = np.broadcast_to(np.asarray(cam.position, float), dirs.shape).copy()
    return Rays(origins, dirs)


def composite(sigmas, colors, deltas, background=(0.0, 0.0, 0.0)):
    """Emission-absorption compositing of samples ordered front to back.

    Returns ``(rgb, weights, residual_transmittance)``; rgb is not clamped.
    """
    sigmas = np.atleast_2d(np.asarray(sigmas, float))
    colors = np.asarray(colors, float).reshape(sigmas.shape + (3,))
    deltas = np.broadcast_to(np.asarray(deltas, float), sigmas.shape)
    tau = sigmas * deltas
    before = np.cumsum(tau, axis=1) - tau
    weights = np.exp(-before) * (1.0 - np.exp(-tau))
    residual = np.exp(-tau.sum(axis=1))
    rgb = (weights[..., None] * colors).sum(axis=1) + residual[:, None] * np.asarray(background, float)
    return rgb, weights, residual


def default_step(m: MergedField) -> float:
    edges = [m.unified_bounds(i).extent.min() for i in range(len(m))]
    return float(min(edges)) / STEPS_PER_EDGE


def _ray_span(m: MergedField, origins, dirs):
    """Entry/exit distances of each ray through the union of field bounds."""
    n = len(origins)
    t0 = np.full(n, np.inf)
    t1 = np.full(n, -np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        for i in range(len(m)):
            box = m.unified_bounds(i)
            a = (box.min - origins) * inv
            b = (box.max - origins) * inv
            # rays parallel to a slab: inside -> unbounded, outside -> miss
            par = dirs == 0
            inside = (origins >= box.min) & (origins <= box.max)
            a = np.where(par, np.where(inside, -np.inf, np.inf), a)
            b = np.where(par, np.where(inside, np.inf, -np.inf), b)
            near = np.max(np.minimum(a, b), axis=1)
            far = np.min(np.maximum(a, b), axis=1)
            near = np.maximum(near, 0.0)
            hit = far > near
            t0 = np.where(hit, np.minimum(t0, near), t0)
            t1 = np.where(hit, np.maximum(t1, far), t1)
    return t0, t1


def render_rays(
    m: MergedField,
    origins,
    directions,
    step: float | None = None,
    background=(1.0, 1.0, 1.0),
    overrides: Mapping[int, np.ndarray] | None = None,
    return_stats: bool = False,
):
    """March rays at a uniform step and composite the merged field.

    Each ray's span is cut into ``ceil(length / step)`` equal segments sampled
    at their midpoints, so the actual step never exceeds ``step``. Marching
    stops once transmittance falls below ``TERMINATION_TRANSMITTANCE``.
    """
    origins, _ = as_points(origins)
    dirs, _ = as_points(directions)
    if step is None:
        step = default_step(m)
    if not step > 0:
        raise ValueError("step must be positive")
    bg = np.asarray(background, float)
    n = len(origins)

    t0, t1 = _ray_span(m, origins, dirs)
    hit = np.isfinite(t0) & (t1 > t0)
    length = np.where(hit, t1 - t0, 0.0)
    count = np.where(hit, np.ceil(length / step).astype(np.int64), 0)
    count = np.maximum(count, hit.astype(np.int64))
    seg = np.where(count > 0, length / np.maximum(count, 1), 0.0)

    depth = np.zeros(n)  # accumulated optical depth
    rgb = np.zeros((n, 3))
    wsum = np.zeros(n)
    active = np.flatnonzero(count > 0)
    j0 = 0
    while active.size:
        js = np.arange(j0, j0 + _CHUNK)
        valid = js[None, :] < count[active, None]
        t = t0[active, None] + (js[None, :] + 0.5) * seg[active, None]
        pts = origins[active, None, :] + t[..., None] * dirs[active, None, :]
        flat_pts = pts.reshape(-1, 3)
        sel, sigma = select_with_density(m, flat_pts)
        sigma = sigma.reshape(t.shape) * valid
        tau = sigma * seg[active, None]
        before = depth[active, None] + np.cumsum(tau, axis=1) - tau
        trans = np.exp(-before)
        live = trans >= TERMINATION_TRANSMITTANCE
        w = np.where(live, trans * (1.0 - np.exp(-tau)), 0.0)

        need = (w > 0).reshape(-1)
        colors = np.zeros((len(flat_pts), 3))
        if np.any(need):
            ray_dirs = np.repeat(dirs[active], _CHUNK, axis=0)
            colors[need] = merged_color(m, flat_pts[need], ray_dirs[need], overrides, selection=sel[need])
        rgb[active] += (w[..., None] * colors.reshape(t.shape + (3,))).sum(axis=1)
        wsum[active] += w.sum(axis=1)
        depth[active] += (tau * live).sum(axis=1)

        j0 += _CHUNK
        done = (~live[:, -1]) | (j0 >= count[active])
        active = active[~done]

    residual = np.exp(-depth)
    out = np.clip(rgb + residual[:, None] * bg, 0.0, 1.0)
    if return_stats:
        return out, RenderStats(wsum, residual)
    return out


def render_ray(m: MergedField, ray: Ray, step: float | None = None, background=(1.0, 1.0, 1.0), overrides=None):
    return render_rays(m, ray.origin, ray.direction, step, background, overrides)[0]


def render_image(
    m: MergedField,
    cam: Camera,
    step: float | None = None,
    background=(1.0, 1.0, 1.0),
    overrides: Mapping[int, np.ndarray] | None = None,
    threads: int = 1,
) -> ImageBuffer:
    rays = generate_camera_rays(cam)
    if step is None:
        step = default_step(m)
    n = len(rays)
    threads = max(1, min(int(threads), n))
    bounds = np.linspace(0, n, threads + 1).astype(int)

    def work(k):
        a, b = bounds[k], bounds[k + 1]
        return render_rays(m, rays.origins[a:b], rays.directions[a:b], step, background, overrides)

    if threads == 1:
        parts = [work(0)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, range(threads)))
    return ImageBuffer(cam.width, cam.height, np.concatenate(parts, axis=0))
