import hashlib
import warnings

import numpy as np
import pytest

from seamgrid.errors import NonFiniteGradientError
from seamgrid.objective import LossReport
from seamgrid.optimizer import BlendConfig, _check_monotone, adam_step, blend, init_side_branch
from seamgrid.render import Camera, render_image

from conftest import constant_field, seamless_pair


def test_init_is_zero(two_box_small):
    s = init_side_branch(two_box_small.fields[1])
    assert s.step_count == 0
    np.testing.assert_array_equal(s.delta, 0.0)
    np.testing.assert_array_equal(s.effective_coeffs(), two_box_small.fields[1].color.coeffs)


def test_zero_gradient_keeps_delta():
    s = init_side_branch(constant_field(res=2))
    s = adam_step(s, np.full(s.delta.shape, 0.5))
    t = adam_step(s, np.zeros(s.delta.shape))
    np.testing.assert_allclose(t.first_moment, 0.9 * s.first_moment)
    np.testing.assert_allclose(t.second_moment, 0.999 * s.second_moment)
    # the decayed first moment still moves delta; a fresh state does not
    fresh = init_side_branch(constant_field(res=2))
    np.testing.assert_array_equal(adam_step(fresh, np.zeros(fresh.delta.shape)).delta, 0.0)


def test_first_step_is_signed_lr(rng):
    s = init_side_branch(constant_field(res=3))
    g = rng.normal(size=s.delta.shape) * 10 ** rng.uniform(-3, 3, s.delta.shape)
    t = adam_step(s, g)
    np.testing.assert_allclose(t.delta, -1e-2 * np.sign(g), rtol=1e-4)
    assert t.step_count == 1


def test_adam_deterministic(rng):
    g = rng.normal(size=(3, 3, 3, 3, 1))
    runs = []
    for _ in range(2):
        s = init_side_branch(constant_field(res=3))
        for k in range(5):
            s = adam_step(s, g * (k + 1))
        runs.append(s.delta)
    np.testing.assert_array_equal(*runs)


def test_non_finite_gradient():
    s = init_side_branch(constant_field(res=2))
    g = np.zeros(s.delta.shape)
    g.flat[5] = np.nan
    with pytest.raises(NonFiniteGradientError, match="flat index 5"):
        adam_step(s, g)


def test_fresh_branch_renders_direct_merge(two_box_small):
    m = two_box_small.merged()
    cam = Camera((-0.1, -2.5, 1.2), (-0.1, 0.5, 0.5), width=10, height=8)
    s = init_side_branch(m[1].field)
    a = render_image(m, cam)
    b = render_image(m, cam, overrides={1: s.delta})
    assert np.abs(a.rgb - b.rgb).max() <= 1e-6


def digest(a):
    return hashlib.sha256(np.ascontiguousarray(a).tobytes()).hexdigest()


def test_blend_deterministic_and_frozen(two_box_small, dirs):
    m = two_box_small.merged()
    before = digest(m[1].field.color.coeffs)
    cfg = BlendConfig(iterations=15, grid_res=10)
    a = blend(m, cfg, dirs)
    b = blend(m, cfg, dirs)
    np.testing.assert_array_equal(a.deltas[1], b.deltas[1])
    assert digest(m[1].field.color.coeffs) == before
    assert digest(a.states[1].frozen_target.color.coeffs) == before
    assert len(a.history) == 16
    assert a.history[-1].total < a.history[0].total


def test_minibatch_runs(two_box_small, dirs):
    m = two_box_small.merged()
    r = blend(m, BlendConfig(iterations=5, grid_res=8, batch_size=50), dirs)
    assert r.history[0].n_boundary == 50
    assert r.history[-1].n_boundary == r.problem.n_boundary


def test_references_stay_frozen(two_box_small, dirs):
    m = two_box_small.merged()
    r = blend(m, BlendConfig(iterations=3, grid_res=8), dirs)
    prints = [s.fingerprint() for s in r.boundary + r.interior]
    r.problem.evaluate(r.deltas)
    assert prints == [s.fingerprint() for s in r.boundary + r.interior]


def test_fixed_point(dirs):
    m = seamless_pair()
    r = blend(m, BlendConfig(iterations=100, grid_res=12), dirs)
    assert r.history[0].total <= 1e-10
    assert np.sqrt(np.mean(r.deltas[1] ** 2)) <= 1e-4


def test_lambda_zero_pins_boundary(two_box_small, dirs):
    m = two_box_small.merged()
    r = blend(m, BlendConfig(iterations=400, grid_res=10, lam=0.0), dirs)
    p = r.problem
    assert p.boundary_error(r.deltas) < 0.05 * p.boundary_error(p.zero_deltas())
    assert p.gradient_deviation(r.deltas) > p.gradient_deviation(p.zero_deltas())


def test_monotone_warning():
    rising = [LossReport(1.0 + 0.01 * k, 0.0, 1.0 + 0.01 * k, 0.1) for k in range(60)]
    with pytest.warns(RuntimeWarning, match="rose"):
        _check_monotone(rising)
    falling = [LossReport(1.0 / (k + 1), 0.0, 1.0 / (k + 1), 0.1) for k in range(60)]
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        _check_monotone(falling)


@pytest.mark.parametrize("kwargs", [{"lam": -1}, {"learning_rate": 0}, {"beta1": 1.0}, {"batch_size": 0}])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        BlendConfig(**kwargs)
