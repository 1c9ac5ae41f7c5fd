"""Placing fields in a unified space and evaluating the piecewise merged field."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .field import Aabb, RadianceField, as_points, sample_color, sample_density


@dataclass(frozen=True)
class AffineTransform:
    """3x4 matrix mapping unified-space points into a field's local frame."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.size != 12:
            raise ValueError(f"affine transform needs 12 entries (3x4), got {m.size}")
        m = m.reshape(3, 4).copy()
        if not np.all(np.isfinite(m)):
            raise ValueError("affine transform entries must be finite")
        if abs(np.linalg.det(m[:, :3])) <= 1e-9:
            raise ValueError("affine transform's linear block is singular")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "AffineTransform":
        return cls(np.hstack([np.eye(3), np.zeros((3, 1))]))

    @classmethod
    def from_linear(cls, linear, translation=(0.0, 0.0, 0.0)) -> "AffineTransform":
        return cls(np.hstack([np.asarray(linear, float).reshape(3, 3), np.reshape(translation, (3, 1))]))

    @property
    def linear(self) -> np.ndarray:
        return self.matrix[:, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.matrix[:, 3]

    def is_identity(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.matrix - AffineTransform.identity().matrix) <= tol))

    def inverse(self) -> "AffineTransform":
        inv = np.linalg.inv(self.linear)
        return AffineTransform.from_linear(inv, -inv @ self.translation)


def transform_point(M: AffineTransform, x) -> np.ndarray:
    pts, single = as_points(x)
    out = pts @ M.linear.T + M.translation
    return out[0] if single else out


def transform_direction(M: AffineTransform, d) -> np.ndarray:
    """Apply the linear block (homogeneous w = 0) and renormalise."""
    dirs, single = as_points(d)
    out = dirs @ M.linear.T
    norm = np.linalg.norm(out, axis=1, keepdims=True)
    if np.any(norm == 0) or not np.all(np.isfinite(norm)):
        raise ValueError("direction has zero length after transformation")
    out = out / norm
    return out[0] if single else out


@dataclass(frozen=True)
class FieldEntry:
    field: RadianceField
    transform: AffineTransform
    beta: float = 1.0


class MergedField:
    """Ordered fields in one unified space; entry 0 is the source.

    Indices are 0-based throughout: the source is index 0, targets are
    ``1 .. len(m) - 1``.
    """

    def __init__(self, entries: Sequence[FieldEntry]):
        entries = list(entries)
        if len(entries) < 2:
            raise ValueError("a merged field needs a source and at least one target")
        for k, e in enumerate(entries):
            if not e.beta > 0:
                raise ValueError(f"entry {k}: beta must be positive, got {e.beta}")
        if not entries[0].transform.is_identity():
            raise ValueError("entry 0 (source) must use the identity transform")
        self.entries = entries

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, i: int) -> FieldEntry:
        return self.entries[i]

    @property
    def targets(self) -> range:
        return range(1, len(self.entries))

    def unified_bounds(self, i: int) -> Aabb:
        """Axis-aligned bounds, in unified space, of field ``i``'s box."""
        e = self.entries[i]
        corners = transform_point(e.transform.inverse(), e.field.aabb.corners())
        return Aabb(corners.min(axis=0), corners.max(axis=0))

    def with_betas(self, betas) -> "MergedField":
        return MergedField([FieldEntry(e.field, e.transform, float(b)) for e, b in zip(self.entries, betas)])


def field_densities(m: MergedField, x) -> np.ndarray:
    """Raw (unweighted) density of every field at unified points, shape ``(N, F)``."""
    pts, _ = as_points(x)
    cols = [sample_density(e.field, transform_point(e.transform, pts)) for e in m.entries]
    return np.stack(cols, axis=1)


def select_with_density(m: MergedField, x) -> tuple[np.ndarray, np.ndarray]:
    """Owning field index and its (unweighted) density for each point."""
    pts, _ = as_points(x)
    sigma = field_densities(m, pts)
    betas = np.array([e.beta for e in m.entries])
    # argmax returns the first maximum, so ties go to the lowest index
    sel = np.argmax(sigma * betas, axis=1)
    return sel, sigma[np.arange(len(pts)), sel]


def select_field(m: MergedField, x):
    pts, single = as_points(x)
    sel, _ = select_with_density(m, pts)
    return int(sel[0]) if single else sel


def merged_density(m: MergedField, x):
    pts, single = as_points(x)
    _, sigma = select_with_density(m, pts)
    return float(sigma[0]) if single else sigma


def entry_color(m: MergedField, i: int, x, d, delta: np.ndarray | None = None) -> np.ndarray:
    """Colour of field ``i`` at unified points/directions (no selection)."""
    e = m.entries[i]
    pts, _ = as_points(x)
    dirs = np.broadcast_to(np.asarray(d, dtype=np.float64).reshape(-1, 3), pts.shape)
    return sample_color(e.field, transform_point(e.transform, pts), transform_direction(e.transform, dirs), delta)


def merged_color(
    m: MergedField,
    x,
    d,
    overrides: Mapping[int, np.ndarray] | None = None,
    selection: np.ndarray | None = None,
):
    """Colour of the owning field; ``overrides`` maps field index to a delta grid."""
    pts, single = as_points(x)
    dirs = np.broadcast_to(np.asarray(d, dtype=np.float64).reshape(-1, 3), pts.shape)
    sel = select_with_density(m, pts)[0] if selection is None else np.asarray(selection)
    out = np.zeros((len(pts), 3))
    overrides = overrides or {}
    for i in np.unique(sel):
        mask = sel == i
        out[mask] = entry_color(m, int(i), pts[mask], dirs[mask], overrides.get(int(i)))
    return out[0] if single else out
