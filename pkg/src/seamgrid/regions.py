"""Boundary and interior sample sets that drive appearance blending."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import EmptyRegionError
from .field import Aabb, sample_density
from .merge import MergedField, entry_color, select_field, transform_point
from .rays import as_direction_source

DEFAULT_THRESHOLD = 1.0
DEFAULT_GRID_RES = 64


@dataclass
class SampleSet:
    """Frozen sample points for one target.

    ``reference`` is the source colour per point for boundary sets, and the
    original finite differences ``(P, 3 axes, 3 rgb)`` for interior sets.
    ``offsets`` (interior only) holds the neighbour step vectors, one row per
    axis.
    """

    kind: str
    field_index: int
    points: np.ndarray
    directions: np.ndarray
    reference: np.ndarray
    offsets: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("boundary", "interior"):
            raise ValueError(f"unknown sample set kind {self.kind!r}")
        if not (len(self.points) == len(self.directions) == len(self.reference)):
            raise ValueError("points, directions and references differ in length")
        for name in ("points", "directions", "reference", "offsets"):
            a = getattr(self, name)
            if a is not None:
                a = np.array(a, dtype=np.float64)
                a.flags.writeable = False
                setattr(self, name, a)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def region_tag(self) -> str:
        return f"{self.kind}({self.field_index})"

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for a in (self.points, self.directions, self.reference, self.offsets):
            if a is not None:
                h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()

    def to_json(self) -> str:
        doc = {
            "tag": self.region_tag,
            "points": self.points.tolist(),
            "directions": self.directions.tolist(),
            "reference": self.reference.tolist(),
        }
        if self.offsets is not None:
            doc["offsets"] = self.offsets.tolist()
        return json.dumps(doc)


def lattice(box: Aabb, res: int) -> np.ndarray:
    """``res`` points per axis spanning ``box`` inclusively, C order."""
    axes = [np.linspace(box.min[k], box.max[k], res) for k in range(3)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)


def node_lattice(m: MergedField, i: int) -> np.ndarray:
    """Target ``i``'s colour nodes expressed in unified space."""
    e = m[i]
    return transform_point(e.transform.inverse(), e.field.color_node_positions())


def default_offsets(m: MergedField, i: int) -> np.ndarray:
    """Unified-space images of one colour-voxel step along each local axis."""
    e = m[i]
    pitch = e.field.color_pitch()
    inv = np.linalg.inv(e.transform.linear)
    return (inv * pitch[None, :]).T


def resolve_offsets(m: MergedField, i: int, offsets=None) -> np.ndarray:
    if offsets is None:
        return default_offsets(m, i)
    a = np.asarray(offsets, dtype=np.float64)
    if a.shape == (3,):
        if not np.all(a > 0):
            raise ValueError("finite-difference steps must be positive")
        return np.diag(a)
    if a.shape == (3, 3):
        if np.any(np.linalg.norm(a, axis=1) == 0):
            raise ValueError("finite-difference offsets must be nonzero")
        return a
    raise ValueError(f"offsets must be a 3-vector or 3x3 rows, got shape {a.shape}")


def _check_target(m: MergedField, i: int):
    if not 1 <= i < len(m):
        raise ValueError(f"target index must be in 1..{len(m) - 1}, got {i}")


def _intersect(a: Aabb, b: Aabb) -> Aabb | None:
    lo = np.maximum(a.min, b.min)
    hi = np.minimum(a.max, b.max)
    if np.all(lo < hi):
        return Aabb(lo, hi)
    return None


def detect_boundary(
    m: MergedField,
    i: int,
    threshold: float = DEFAULT_THRESHOLD,
    grid_res: int = DEFAULT_GRID_RES,
    directions=None,
    node_aligned: bool = False,
) -> SampleSet:
    """Points owned by the source where target ``i`` is still non-empty."""
    _check_target(m, i)
    if not threshold > 0:
        raise ValueError("density threshold must be positive")
    if directions is None:
        raise ValueError("a direction source (ray bank) is required")
    if node_aligned:
        pts = node_lattice(m, i)
    else:
        region = _intersect(m.unified_bounds(0), m.unified_bounds(i))
        if region is None:
            raise EmptyRegionError(f"target {i} does not overlap the source")
        pts = lattice(region, grid_res)

    sel = select_field(m, pts)
    sigma_t = sample_density(m[i].field, transform_point(m[i].transform, pts))
    pts = pts[(sel == 0) & (sigma_t > threshold)]
    if len(pts) == 0:
        raise EmptyRegionError(f"no boundary points between the source and target {i}")
    dirs = as_direction_source(directions).assign(pts)
    ref = entry_color(m, 0, pts, dirs)
    return SampleSet("boundary", i, pts, dirs, ref)


def sample_interior(
    m: MergedField,
    i: int,
    grid_res: int = DEFAULT_GRID_RES,
    offsets=None,
    directions=None,
    node_aligned: bool = False,
    min_density: float | None = None,
) -> SampleSet:
    """Points owned by target ``i`` with their frozen original colour differences."""
    _check_target(m, i)
    if directions is None:
        raise ValueError("a direction source (ray bank) is required")
    steps = resolve_offsets(m, i, offsets)
    pts = node_lattice(m, i) if node_aligned else lattice(m.unified_bounds(i), grid_res)
    keep = select_field(m, pts) == i
    if min_density is not None:
        keep &= sample_density(m[i].field, transform_point(m[i].transform, pts)) > min_density
    pts = pts[keep]
    if len(pts) == 0:
        raise EmptyRegionError(f"target {i} owns no lattice points")
    dirs = as_direction_source(directions).assign(pts)
    here = entry_color(m, i, pts, dirs)
    diffs = np.stack([here - entry_color(m, i, pts + steps[k], dirs) for k in range(3)], axis=1)
    return SampleSet("interior", i, pts, dirs, diffs, steps)
