"""Finite-difference check of the compiled objective's gradients."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .objective import BlendProblem, color_loss, grad_loss
from .optimizer import BlendConfig, build_sample_sets
from .rays import RandomDirections
from .synthetic import random_scene

FD_STEP = 1e-3
REL_FLOOR = 1e-6
THRESHOLD = 1e-4


@dataclass
class GradCheckReport:
    seed: int
    n_coeffs: int
    max_rel_error: float
    max_abs_error: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= THRESHOLD

    def to_json(self) -> str:
        return json.dumps({**asdict(self), "passed": self.passed})


def check_scene(seed: int, resolution: int = 8, n_coeffs: int = 100, lam: float = 0.1,
                step: float = FD_STEP) -> GradCheckReport:
    """Compare analytic gradients with central differences of the direct-path loss.

    Coefficients are drawn among those the loss depends on, at a random
    non-zero delta so that both terms are active.
    """
    scene = random_scene(seed, resolution)
    m = scene.merged()
    rng = np.random.default_rng(seed)
    config = BlendConfig(lam=lam, grid_res=resolution, threshold=0.5)
    boundary, interior = build_sample_sets(m, config, RandomDirections(seed))
    problem = BlendProblem(m, boundary, interior)
    deltas = {i: rng.normal(0.0, 0.05, shape) for i, shape in problem.shapes.items()}
    _, grads = problem.evaluate(deltas, lam)

    def loss(d):
        return color_loss(m, boundary, d) + lam * grad_loss(m, interior, d)

    pool = [(i, int(f)) for i, g in grads.items() for f in np.flatnonzero(g)]
    if len(pool) < n_coeffs:
        raise ValueError(f"only {len(pool)} coefficients influence the loss; need {n_coeffs}")
    picks = rng.choice(len(pool), size=n_coeffs, replace=False)
    rel = np.empty(n_coeffs)
    err = np.empty(n_coeffs)
    for n, p in enumerate(picks):
        i, f = pool[p]
        plus = {j: d.copy() for j, d in deltas.items()}
        minus = {j: d.copy() for j, d in deltas.items()}
        plus[i].flat[f] += step
        minus[i].flat[f] -= step
        fd = (loss(plus) - loss(minus)) / (2 * step)
        a = grads[i].flat[f]
        err[n] = abs(a - fd)
        rel[n] = err[n] / max(abs(a), abs(fd), REL_FLOOR)
    return GradCheckReport(seed, n_coeffs, float(rel.max()), float(err.max()))
