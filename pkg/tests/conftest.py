import numpy as np
import pytest

from seamgrid.field import SH_C0, Aabb, DensityGrid, RadianceField, ShColorGrid
from seamgrid.merge import AffineTransform, FieldEntry, MergedField
from seamgrid.rays import RandomDirections
from seamgrid.synthetic import generate_synthetic


def constant_field(lo=(0, 0, 0), hi=(1, 1, 1), density=1.0, rgb=(0.5, 0.5, 0.5), res=4, degree=0):
    shape = (res, res, res)
    coeffs = np.zeros(shape + (3, (degree + 1) ** 2))
    coeffs[..., 0] = np.asarray(rgb, float) / SH_C0
    return RadianceField(Aabb(np.array(lo, float), np.array(hi, float)),
                         DensityGrid(np.full(shape, float(density))), ShColorGrid(coeffs))


def field_from_function(lo, hi, res, density, color_fn, degree=0):
    """Field with colour nodes sampled from ``color_fn(points) -> (N, 3)`` rgb."""
    axes = [np.linspace(lo[k], hi[k], res) for k in range(3)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    coeffs = np.zeros((res, res, res, 3, (degree + 1) ** 2))
    coeffs[..., 0] = (color_fn(pts) / SH_C0).reshape(res, res, res, 3)
    dens = np.full((res, res, res), float(density)) if np.isscalar(density) else density
    return RadianceField(Aabb(np.array(lo, float), np.array(hi, float)), DensityGrid(dens), ShColorGrid(coeffs))


def translated(t):
    """Transform placing a field's local origin at unified position ``t``."""
    return AffineTransform.from_linear(np.eye(3), -np.asarray(t, float))


def merged(*entries):
    return MergedField([FieldEntry(f, t if t is not None else AffineTransform.identity(), b) for f, t, b in entries])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def dirs():
    return RandomDirections(5)


@pytest.fixture(scope="session")
def two_box_small():
    return generate_synthetic("two_box", seed=3, resolution=12)


def seamless_pair(res=9):
    """Source and target sampling one linear colour ramp, so the overlap is already seamless."""
    def ramp(p):
        return 0.3 + 0.2 * p @ np.array([[1.0, 0.5, 0.0], [0.0, 1.0, 0.5], [0.5, 0.0, 1.0]]).T

    src = field_from_function((0, 0, 0), (1, 1, 1), res, 20.0, ramp)
    # the target's local frame is unified space shifted by +0.5 on x
    tgt = field_from_function((0, 0, 0), (1, 1, 1), res, 10.0, lambda p: ramp(p + [0.5, 0.0, 0.0]))
    return merged((src, None, 1.0), (tgt, translated([0.5, 0.0, 0.0]), 1.0))


ACCEPTANCE = []


def record(number, name, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {name} :: {detail}"
    ACCEPTANCE.append((number, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
