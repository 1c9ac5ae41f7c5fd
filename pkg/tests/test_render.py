import math

import numpy as np
import pytest

from seamgrid.field import SH_C0, Aabb, DensityGrid, RadianceField, ShColorGrid
from seamgrid.render import (
    Camera, composite, default_step, generate_camera_rays, render_image, render_ray, render_rays,
)

from conftest import constant_field, field_from_function, merged, translated


def test_closed_form_two_samples():
    c1, c2 = np.array([0.9, 0.2, 0.1]), np.array([0.1, 0.5, 0.8])
    rgb, w, resid = composite([[1.0, 1.0]], [[c1, c2]], 1.0, background=(0, 0, 0))
    t1 = 1 - math.exp(-1)
    t2 = math.exp(-1) * (1 - math.exp(-1))
    np.testing.assert_allclose(w[0], [t1, t2], rtol=1e-12)
    np.testing.assert_allclose(rgb[0], 0.63212 * c1 + 0.23254 * c2, atol=1e-5)
    assert resid[0] == pytest.approx(math.exp(-2))


def test_opaque_sample():
    c = np.array([0.3, 0.6, 0.9])
    rgb, _, _ = composite([[20.0]], [[c]], 1.0, background=(1, 1, 1))
    np.testing.assert_allclose(rgb[0], c, atol=1e-6)
    np.testing.assert_allclose(rgb[0], c + math.exp(-20) * (1 - c), atol=1e-12)


def test_empty_scene_is_background():
    m = merged((constant_field(density=0.0), None, 1.0), (constant_field(density=0.0), translated([2, 0, 0]), 1.0))
    cam = Camera((0.5, -3, 0.5), (0.5, 0.5, 0.5), width=6, height=5)
    img = render_image(m, cam, background=(0.25, 0.5, 1.0))
    np.testing.assert_array_equal(img.rgb, np.broadcast_to(np.float32([0.25, 0.5, 1.0]), (5, 6, 3)))


def test_single_pixel_ray():
    cam = Camera((1, 2, 3), (4, 6, 3), width=1, height=1)
    rays = generate_camera_rays(cam)
    np.testing.assert_allclose(rays.directions[0], [0.6, 0.8, 0.0], atol=1e-15)


def test_rays_unit_and_mirrored():
    cam = Camera((0, -5, 0), (0, 0, 0), width=2, height=2)
    d = generate_camera_rays(cam).directions
    assert d.shape == (4, 3)
    np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1.0, atol=1e-15)
    # left and right columns mirror about the view axis
    np.testing.assert_allclose(d[0] * [-1, 1, 1], d[1], atol=1e-15)
    assert d[0, 2] > 0 > d[2, 2]


def test_deterministic_and_thread_invariant():
    m = merged((constant_field(density=3.0, rgb=(0.8, 0.3, 0.1), res=5), None, 1.0),
               (constant_field(density=2.0, rgb=(0.1, 0.3, 0.8), res=5), translated([0.6, 0.2, 0.0]), 1.0))
    cam = Camera((0.8, -3, 0.6), (0.8, 0.5, 0.5), width=9, height=7)
    a = render_image(m, cam)
    b = render_image(m, cam)
    c = render_image(m, cam, threads=3)
    np.testing.assert_array_equal(a.rgb, b.rgb)
    np.testing.assert_array_equal(a.rgb, c.rgb)


def test_opaque_box_hides_background():
    m = merged((constant_field(density=500.0, rgb=(0.2, 0.7, 0.4), res=3), None, 1.0),
               (constant_field(density=0.0), translated([5, 5, 5]), 1.0))
    cam = Camera((0.5, -1.0, 0.5), (0.5, 0.5, 0.5), vertical_fov=20, width=4, height=4)
    img = render_image(m, cam, background=(1, 0, 1))
    np.testing.assert_allclose(img.rgb, np.broadcast_to([0.2, 0.7, 0.4], img.rgb.shape), atol=1e-4)


def random_scene(rng, res=5):
    def fld():
        return RadianceField(Aabb(np.zeros(3), np.ones(3)), DensityGrid(rng.uniform(0, 8, (res,) * 3)),
                             ShColorGrid(rng.uniform(0, 1 / SH_C0, (res,) * 3 + (3, 1))))
    return merged((fld(), None, 1.0), (fld(), translated(rng.uniform(-0.5, 0.5, 3)), 1.0))


def test_weights_conserve(rng):
    m = random_scene(rng)
    o = rng.uniform(-2, 3, (200, 3))
    d = rng.uniform(0.2, 0.8, (200, 3)) - o
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    _, stats = render_rays(m, o, d, return_stats=True)
    assert np.all((stats.weight_sum >= 0) & (stats.weight_sum <= 1 + 1e-12))
    np.testing.assert_allclose(stats.weight_sum + stats.transmittance, 1.0, atol=1e-5)


def test_more_density_never_more_transmittance(rng):
    m = random_scene(rng)
    heavier = merged(*[(RadianceField(e.field.aabb, DensityGrid(e.field.density.values * 1.5), e.field.color),
                        e.transform, e.beta) for e in m.entries])
    o = np.tile([0.3, -2.0, 0.4], (50, 1))
    d = rng.uniform(0.1, 0.9, (50, 3)) - o
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    _, a = render_rays(m, o, d, return_stats=True)
    _, b = render_rays(heavier, o, d, return_stats=True)
    assert np.all(b.transmittance <= a.transmittance + 1e-15)


def test_step_refinement_second_order():
    def color(p):
        return 0.5 + 0.3 * np.stack([np.sin(3 * p[:, 0]), np.cos(2 * p[:, 1]), np.sin(p[:, 2] + p[:, 0])], axis=1)

    res = 33
    g = np.linspace(0, 1, res)
    x, y, z = np.meshgrid(g, g, g, indexing="ij")
    dens = 1.5 + np.sin(2 * x) * np.cos(y) + 0.5 * z
    f = field_from_function((0, 0, 0), (1, 1, 1), res, dens, color)
    m = merged((f, None, 1.0), (constant_field(density=0.0), translated([3, 3, 3]), 1.0))
    o = np.array([[-1.0, 0.31, 0.27]])
    d = np.array([[1.0, 0.23, 0.11]])
    d /= np.linalg.norm(d)
    ref = render_rays(m, o, d, step=1e-4, background=(0, 0, 0))
    errs = [np.abs(render_rays(m, o, d, step=h, background=(0, 0, 0)) - ref).max() for h in (0.1, 0.05, 0.025)]
    assert errs[0] / errs[1] >= 3 and errs[1] / errs[2] >= 3


def test_render_ray_matches_batch(rng):
    m = random_scene(rng)
    cam = Camera((0.5, -3, 0.5), (0.5, 0.5, 0.5), width=3, height=3)
    rays = generate_camera_rays(cam)
    batch = render_rays(m, rays.origins, rays.directions)
    np.testing.assert_array_equal(render_ray(m, rays[4]), batch[4])


def test_default_step():
    m = merged((constant_field(hi=(2, 1, 3)), None, 1.0), (constant_field(), translated([1, 0, 0]), 1.0))
    assert default_step(m) == pytest.approx(1 / 256)


def test_camera_validation():
    with pytest.raises(ValueError):
        Camera((0, 0, 0), (1, 0, 0), vertical_fov=180)
    with pytest.raises(ValueError):
        Camera((0, 0, 0), (0, 0, 1), up=(0, 0, 1)).basis()
