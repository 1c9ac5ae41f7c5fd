import numpy as np
import pytest

from seamgrid.errors import EmptyRegionError
from seamgrid.field import sample_density
from seamgrid.merge import select_field, transform_point
from seamgrid.regions import default_offsets, detect_boundary, lattice, node_lattice, sample_interior
from seamgrid.field import Aabb

from conftest import constant_field, field_from_function, merged, translated


def overlap_scene(src_density=5.0, tgt_density=2.0):
    src = constant_field(density=src_density, rgb=(1, 0, 0), res=5)
    tgt = constant_field(density=tgt_density, rgb=(0, 0, 1), res=5)
    return merged((src, None, 1.0), (tgt, translated([0.5, 0, 0]), 1.0))


def test_boundary_is_overlap_lattice(dirs):
    m = overlap_scene()
    b = detect_boundary(m, 1, threshold=1.0, grid_res=6, directions=dirs)
    expected = lattice(Aabb(np.array([0.5, 0, 0]), np.ones(3)), 6)
    np.testing.assert_array_equal(b.points, expected)
    np.testing.assert_allclose(b.reference, np.tile([1.0, 0, 0], (len(expected), 1)), atol=1e-12)
    assert b.kind == "boundary" and b.field_index == 1


def test_boundary_predicate_rechecked(two_box_small, dirs):
    m = two_box_small.merged()
    b = detect_boundary(m, 1, 1.0, 10, dirs)
    assert np.all(select_field(m, b.points) == 0)
    assert np.all(sample_density(m[1].field, transform_point(m[1].transform, b.points)) > 1.0)


def test_disjoint_boxes(dirs):
    m = merged((constant_field(), None, 1.0), (constant_field(), translated([3, 0, 0]), 1.0))
    with pytest.raises(EmptyRegionError):
        detect_boundary(m, 1, directions=dirs)


def test_threshold_above_target_max(dirs):
    with pytest.raises(EmptyRegionError):
        detect_boundary(overlap_scene(), 1, threshold=2.5, grid_res=6, directions=dirs)


def test_directions_required():
    with pytest.raises(ValueError):
        detect_boundary(overlap_scene(), 1, grid_res=6)


def test_constant_target_has_zero_differences(dirs):
    m = overlap_scene()
    s = sample_interior(m, 1, grid_res=8, directions=dirs, offsets=[0.01, 0.01, 0.01])
    inside = np.all(transform_point(m[1].transform, s.points) + 0.01 <= 1.0, axis=1)
    assert inside.sum() > 100
    np.testing.assert_allclose(s.reference[inside], 0.0, atol=1e-12)
    # stepping out of the box reads empty space
    np.testing.assert_allclose(s.reference[~inside].max(axis=(1, 2)), 1.0)


def test_linear_target_differences(dirs):
    a = np.array([[0.3, -0.2, 0.1], [0.05, 0.4, -0.3], [0.2, 0.2, 0.2]])  # rows: rgb, cols: xyz

    def color(p):
        return 0.5 + p @ a.T

    src = constant_field(density=5.0, res=5)
    tgt = field_from_function((0, 0, 0), (1, 1, 1), 6, 2.0, color)
    m = merged((src, None, 1.0), (tgt, translated([0.5, 0, 0]), 1.0))
    step = np.array([0.02, 0.03, 0.05])
    s = sample_interior(m, 1, grid_res=7, offsets=step, directions=dirs)
    inside = np.all(transform_point(m[1].transform, s.points) + step <= 1.0, axis=1)
    for k in range(3):
        np.testing.assert_allclose(s.reference[inside, k], np.tile(-a[:, k] * step[k], (inside.sum(), 1)), atol=1e-12)


def test_node_step_gives_node_difference(rng, dirs):
    res = 4
    tgt = constant_field(density=2.0, res=res)
    coeffs = rng.normal(size=tgt.color.coeffs.shape)
    tgt = type(tgt)(tgt.aabb, tgt.density, type(tgt.color)(coeffs))
    m = merged((constant_field(density=5.0), None, 1.0), (tgt, translated([0.5, 0.5, 0.5]), 1.0))
    s = sample_interior(m, 1, directions=dirs, node_aligned=True)
    np.testing.assert_allclose(s.offsets, np.eye(3) / (res - 1), atol=1e-15)
    local = transform_point(m[1].transform, s.points)
    g = np.rint(local * (res - 1)).astype(int)
    ok = np.all(g[:, None, :] + np.eye(3, dtype=int)[None] <= res - 1, axis=2)
    vals = 0.28209479177387814 * coeffs[..., 0]
    for k in range(3):
        rows = np.flatnonzero(ok[:, k])
        here = vals[tuple(g[rows].T)]
        there = vals[tuple((g[rows] + np.eye(3, dtype=int)[k]).T)]
        np.testing.assert_allclose(s.reference[rows, k], here - there, atol=1e-12)


def test_sets_disjoint_and_frozen(two_box_small, dirs):
    m = two_box_small.merged()
    b = detect_boundary(m, 1, 1.0, 10, dirs)
    s = sample_interior(m, 1, 10, directions=dirs)
    common = set(map(tuple, b.points)) & set(map(tuple, s.points))
    assert not common
    with pytest.raises(ValueError):
        s.reference[0, 0, 0] = 1.0
    assert s.fingerprint() == sample_interior(m, 1, 10, directions=dirs).fingerprint()


def test_default_offsets_follow_transform():
    tgt = constant_field(res=5)
    from seamgrid.merge import AffineTransform
    m = merged((constant_field(), None, 1.0), (tgt, AffineTransform.from_linear(np.diag([2.0, 1.0, 0.5])), 1.0))
    np.testing.assert_allclose(default_offsets(m, 1), np.diag([0.125, 0.25, 0.5]))
    pts = node_lattice(m, 1)
    assert len(pts) == 125
    np.testing.assert_allclose(pts.max(axis=0), [0.5, 1.0, 2.0])


def test_bad_target_index(dirs):
    with pytest.raises(ValueError):
        sample_interior(overlap_scene(), 0, directions=dirs)
