"""Closest-camera-ray view directions for arbitrary points.

Rays are treated as infinite lines: the foot of the perpendicular is not
clamped to the forward half-line.
"""
from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .field import as_points
from .merge import AffineTransform, transform_direction, transform_point
from .render import Camera, Ray, generate_camera_rays

_BRUTE_CHUNK = 64


def _sq_dist(origins, dirs, x):
    """Squared point-to-line distance; shapes broadcast, last axis is xyz.

    Written component-wise so every path that calls it rounds identically.
    """
    v = origins - x
    s = v[..., 0] * dirs[..., 0] + v[..., 1] * dirs[..., 1] + v[..., 2] * dirs[..., 2]
    dx = v[..., 0] - s * dirs[..., 0]
    dy = v[..., 1] - s * dirs[..., 1]
    dz = v[..., 2] - s * dirs[..., 2]
    return dx * dx + dy * dy + dz * dz


def point_to_ray_distance(ray: Ray, x) -> tuple[np.ndarray, float]:
    """Closest point on the (infinite) ray line and its distance to ``x``."""
    p = np.asarray(ray.origin, float)
    d = np.asarray(ray.direction, float)
    x = np.asarray(x, float)
    foot = p - np.dot(p - x, d) * d
    return foot, float(np.linalg.norm(foot - x))


class RayIndex:
    """Uniform grid over a query box; each cell lists the rays crossing it.

    Lookups expand a cube of cells around the query until the best candidate
    is provably closer than any ray not yet seen, and fall back to a full
    scan when that cannot be certified.
    """

    def __init__(self, origins, dirs, lo, hi, cells: int = 16):
        self.lo = np.asarray(lo, float)
        self.hi = np.asarray(hi, float)
        self.cells = int(cells)
        self.size = (self.hi - self.lo) / self.cells
        n = self.cells

        # clip every line to the box
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / dirs
            a = (self.lo - origins) * inv
            b = (self.hi - origins) * inv
            par = dirs == 0
            inside = (origins >= self.lo) & (origins <= self.hi)
            a = np.where(par, np.where(inside, -np.inf, np.inf), a)
            b = np.where(par, np.where(inside, np.inf, -np.inf), b)
            tmin = np.max(np.minimum(a, b), axis=1)
            tmax = np.min(np.maximum(a, b), axis=1)
            hits = np.flatnonzero(tmax > tmin)

            # crossing parameters with every interior grid plane, per axis
            planes = self.lo[:, None] + self.size[:, None] * np.arange(1, n)[None, :]
            o, d = origins[hits], dirs[hits]
            ts = (planes[None, :, :] - o[:, :, None]) / d[:, :, None]
        ts = ts.reshape(len(hits), -1)
        lo_t, hi_t = tmin[hits, None], tmax[hits, None]
        # unused slots collapse onto the exit point and give empty segments
        ts = np.where(np.isfinite(ts) & (ts > lo_t) & (ts < hi_t), ts, hi_t)
        ts = np.sort(np.concatenate([lo_t, ts, hi_t], axis=1), axis=1)
        # midpoints of consecutive crossings each lie inside one traversed cell
        mids = 0.5 * (ts[:, :-1] + ts[:, 1:])
        ok = ts[:, 1:] > ts[:, :-1]
        ray_ids = np.broadcast_to(hits[:, None], mids.shape)[ok]
        pts = o[np.nonzero(ok)[0]] + mids[ok][:, None] * d[np.nonzero(ok)[0]]
        cell = np.clip(np.floor((pts - self.lo) / self.size).astype(np.int64), 0, n - 1)
        flat = (cell[:, 0] * n + cell[:, 1]) * n + cell[:, 2]

        pairs = np.unique(np.stack([flat, ray_ids], axis=1), axis=0)
        self.cell_rays = pairs[:, 1]
        self.cell_start = np.searchsorted(pairs[:, 0], np.arange(n**3 + 1))

    def cell_of(self, points) -> np.ndarray:
        c = np.floor((points - self.lo) / self.size).astype(np.int64)
        return np.clip(c, 0, self.cells - 1)

    def contains(self, points) -> np.ndarray:
        return np.all((points >= self.lo) & (points <= self.hi), axis=1)

    def rays_in_block(self, c_lo, c_hi) -> np.ndarray:
        """Sorted ids of rays crossing any cell in the inclusive block."""
        n = self.cells
        xs, ys, zs = (np.arange(c_lo[k], c_hi[k] + 1) for k in range(3))
        flat = ((xs[:, None, None] * n + ys[None, :, None]) * n + zs[None, None, :]).ravel()
        starts = self.cell_start[flat]
        counts = self.cell_start[flat + 1] - starts
        total = int(counts.sum())
        if total == 0:
            return np.empty(0, dtype=np.int64)
        offsets = np.repeat(starts - np.cumsum(counts) + counts, counts)
        return np.unique(self.cell_rays[offsets + np.arange(total)])


class RayBank:
    """A fixed set of camera rays, optionally indexed for fast lookups."""

    def __init__(self, origins, directions):
        self.origins = np.array(origins, dtype=np.float64).reshape(-1, 3)
        self.directions = np.array(directions, dtype=np.float64).reshape(-1, 3)
        if len(self.origins) == 0:
            raise ValueError("ray bank is empty")
        if len(self.origins) != len(self.directions):
            raise ValueError("origins and directions differ in length")
        if np.any(np.abs(np.linalg.norm(self.directions, axis=1) - 1.0) > 1e-6):
            raise ValueError("ray directions must be unit length")

    def __len__(self) -> int:
        return len(self.origins)

    @classmethod
    def from_cameras(cls, cameras: Iterable[Camera], stride: int = 16, transform: AffineTransform | None = None):
        """Every ``stride``-th pixel ray of each camera.

        ``transform`` maps camera coordinates into unified space when the
        cameras were declared in a field's local frame.
        """
        origins, dirs = [], []
        for cam in cameras:
            rays = generate_camera_rays(cam)
            origins.append(rays.origins[::stride])
            dirs.append(rays.directions[::stride])
        o = np.concatenate(origins)
        d = np.concatenate(dirs)
        if transform is not None:
            o = transform_point(transform, o)
            d = transform_direction(transform, d)
        return cls(o, d)

    def build_index(self, lo, hi, cells: int = 16) -> RayIndex:
        return RayIndex(self.origins, self.directions, lo, hi, cells)

    def closest_indices_exhaustive(self, points) -> np.ndarray:
        pts, _ = as_points(points)
        out = np.empty(len(pts), dtype=np.int64)
        for a in range(0, len(pts), _BRUTE_CHUNK):
            block = pts[a:a + _BRUTE_CHUNK]
            d2 = _sq_dist(self.origins[None], self.directions[None], block[:, None, :])
            out[a:a + _BRUTE_CHUNK] = np.argmin(d2, axis=1)
        return out

    def closest_indices(self, points, index: RayIndex | None = None) -> np.ndarray:
        """Index of the nearest ray per point; ties go to the lowest index."""
        pts, _ = as_points(points)
        if index is None:
            if len(pts) * len(self) < 4_000_000:
                return self.closest_indices_exhaustive(pts)
            lo, hi = pts.min(axis=0), pts.max(axis=0)
            pad = np.maximum(1e-3 * (hi - lo).max(), 1e-6)
            index = self.build_index(lo - pad, hi + pad, cells=_auto_cells(len(pts), len(self)))
        return self._indexed(pts, index)

    def _indexed(self, pts, index: RayIndex) -> np.ndarray:
        out = np.full(len(pts), -1, dtype=np.int64)
        inside = index.contains(pts)
        fallback = list(np.flatnonzero(~inside))

        cells = index.cell_of(pts[inside])
        members = np.flatnonzero(inside)
        n = index.cells
        key = (cells[:, 0] * n + cells[:, 1]) * n + cells[:, 2]
        order = np.argsort(key, kind="stable")
        key_sorted = key[order]
        starts = np.flatnonzero(np.r_[True, key_sorted[1:] != key_sorted[:-1]])
        ends = np.r_[starts[1:], len(key_sorted)]
        # margin absorbs round-off in the lower bound
        margin = 1e-9 * float(np.max(index.hi - index.lo))

        for s, e in zip(starts, ends):
            if e <= s:
                continue
            group = members[order[s:e]]
            c = cells[order[s]]
            todo = group
            r = 0
            while todo.size:
                c_lo = np.maximum(c - r, 0)
                c_hi = np.minimum(c + r, n - 1)
                cand = index.rays_in_block(c_lo, c_hi)
                whole = np.all(c_lo == 0) and np.all(c_hi == n - 1)
                if cand.size:
                    x = pts[todo]
                    d2 = _sq_dist(self.origins[cand][None], self.directions[cand][None], x[:, None, :])
                    j = np.argmin(d2, axis=1)
                    best = np.sqrt(d2[np.arange(len(todo)), j])
                    box_lo = index.lo + c_lo * index.size
                    box_hi = index.lo + (c_hi + 1) * index.size
                    box_hi = np.where(c_hi == n - 1, index.hi, box_hi)
                    bound = np.minimum((x - box_lo).min(axis=1), (box_hi - x).min(axis=1))
                    ok = best < bound - margin
                    out[todo[ok]] = cand[j[ok]]
                    todo = todo[~ok]
                if whole:
                    fallback.extend(todo.tolist())
                    break
                r += 1

        if fallback:
            fb = np.array(sorted(fallback), dtype=np.int64)
            out[fb] = self.closest_indices_exhaustive(pts[fb])
        return out


def _auto_cells(n_points: int, n_rays: int) -> int:
    # aim for a few dozen query points per occupied cell
    return int(np.clip(round(min(n_points / 24.0, n_rays / 4.0) ** (1.0 / 3.0)), 2, 32))


def closest_ray_direction(bank: RayBank, x) -> np.ndarray:
    j = bank.closest_indices(np.asarray(x, float).reshape(1, 3))[0]
    return bank.directions[j].copy()


def assign_directions(bank: RayBank, points, index: RayIndex | None = None) -> np.ndarray:
    pts, _ = as_points(points)
    return bank.directions[bank.closest_indices(pts, index)].copy()


class RandomDirections:
    """Uniformly random unit directions, one per point (comparison baseline)."""

    def __init__(self, seed: int = 0):
        self.seed = seed

    def assign(self, points) -> np.ndarray:
        pts, _ = as_points(points)
        rng = np.random.default_rng(self.seed)
        v = rng.normal(size=(len(pts), 3))
        return v / np.linalg.norm(v, axis=1, keepdims=True)


class ClosestRayDirections:
    """Direction source backed by a :class:`RayBank`."""

    def __init__(self, bank: RayBank):
        self.bank = bank

    def assign(self, points) -> np.ndarray:
        return assign_directions(self.bank, points)


def as_direction_source(src):
    if isinstance(src, RayBank):
        return ClosestRayDirections(src)
    if hasattr(src, "assign"):
        return src
    raise TypeError(f"not a direction source: {src!r}")
