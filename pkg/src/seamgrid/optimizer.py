"""Side-branch fine-tuning of target appearance.

Each target keeps its original colour grid frozen and learns an additive,
zero-initialised delta grid. Before the first update the merged field is
therefore exactly the direct merge.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np

from .errors import NonFiniteGradientError
from .field import RadianceField
from .merge import MergedField
from .objective import DEFAULT_LAMBDA, BlendProblem, LossReport
from .regions import DEFAULT_GRID_RES, DEFAULT_THRESHOLD, SampleSet, detect_boundary, sample_interior

log = logging.getLogger(__name__)

MONOTONE_WINDOW = 50


@dataclass(frozen=True)
class BlendConfig:
    lam: float = DEFAULT_LAMBDA
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    iterations: int = 500
    threshold: float = DEFAULT_THRESHOLD
    grid_res: int = DEFAULT_GRID_RES
    boundary_res: int | None = None
    offsets: tuple | None = None
    node_aligned: bool = False
    use_color_loss: bool = True
    batch_size: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        for name in ("learning_rate", "eps", "threshold"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("moment decays must lie in [0, 1)")
        if self.iterations < 0 or self.grid_res < 2:
            raise ValueError("iterations must be >= 0 and grid_res >= 2")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be positive")


@dataclass(frozen=True)
class BlendState:
    frozen_target: RadianceField
    delta: np.ndarray
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    config: BlendConfig = field(default_factory=BlendConfig)

    def effective_coeffs(self) -> np.ndarray:
        return self.frozen_target.color.coeffs + self.delta


def init_side_branch(target: RadianceField, config: BlendConfig | None = None) -> BlendState:
    shape = target.color.coeffs.shape
    return BlendState(target, np.zeros(shape), np.zeros(shape), np.zeros(shape), 0, config or BlendConfig())


def adam_step(state: BlendState, grad: np.ndarray) -> BlendState:
    """One bias-corrected adaptive-moment update; returns a new state."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != state.delta.shape:
        raise ValueError(f"gradient shape {grad.shape} does not match delta {state.delta.shape}")
    bad = ~np.isfinite(grad)
    if np.any(bad):
        raise NonFiniteGradientError(
            f"{int(bad.sum())} non-finite gradient entries at step {state.step_count + 1}, "
            f"first at flat index {int(np.flatnonzero(bad)[0])}"
        )
    c = state.config
    t = state.step_count + 1
    m1 = c.beta1 * state.first_moment + (1.0 - c.beta1) * grad
    m2 = c.beta2 * state.second_moment + (1.0 - c.beta2) * (grad * grad)
    m_hat = m1 / (1.0 - c.beta1**t)
    v_hat = m2 / (1.0 - c.beta2**t)
    delta = state.delta - c.learning_rate * m_hat / (np.sqrt(v_hat) + c.eps)
    return replace(state, delta=delta, first_moment=m1, second_moment=m2, step_count=t)


@dataclass
class BlendResult:
    states: dict[int, BlendState]
    history: list[LossReport]
    boundary: list[SampleSet]
    interior: list[SampleSet]
    problem: BlendProblem

    @property
    def deltas(self) -> dict[int, np.ndarray]:
        return {i: s.delta for i, s in self.states.items()}


def build_sample_sets(m: MergedField, config: BlendConfig, directions) -> tuple[list[SampleSet], list[SampleSet]]:
    """Boundary and interior sets for every target.

    ``directions`` is a direction source (e.g. a ray bank) or a mapping from
    target index to one.
    """
    boundary, interior = [], []
    for i in m.targets:
        src = directions[i] if isinstance(directions, Mapping) else directions
        boundary.append(detect_boundary(m, i, config.threshold, config.boundary_res or config.grid_res, src,
                                        config.node_aligned))
        interior.append(sample_interior(m, i, config.grid_res, config.offsets, src, config.node_aligned))
    return boundary, interior


def _check_monotone(history: list[LossReport]):
    totals = np.array([h.total for h in history])
    if len(totals) <= MONOTONE_WINDOW:
        return
    rises = np.flatnonzero(totals[MONOTONE_WINDOW:] > totals[:-MONOTONE_WINDOW] * (1 + 1e-12))
    if rises.size:
        warnings.warn(
            f"total loss rose over a {MONOTONE_WINDOW}-iteration window starting at iteration {int(rises[0])}",
            RuntimeWarning,
            stacklevel=3,
        )


def blend(
    m: MergedField,
    config: BlendConfig,
    directions=None,
    sample_sets: tuple[list[SampleSet], list[SampleSet]] | None = None,
    on_step: Callable[[int, LossReport], None] | None = None,
) -> BlendResult:
    """Jointly optimise one delta grid per target.

    Sample sets are built once, so references stay frozen for the whole run.
    The returned history has one report per iteration, evaluated before that
    iteration's update, plus a final report after the last update.
    """
    if sample_sets is None:
        boundary, interior = build_sample_sets(m, config, directions)
    else:
        boundary, interior = sample_sets
    problem = BlendProblem(m, boundary, interior)
    states = {i: init_side_branch(m[i].field, config) for i in m.targets}
    color_weight = 1.0 if config.use_color_loss else 0.0
    rng = np.random.default_rng(config.seed)

    history: list[LossReport] = []
    for it in range(config.iterations):
        deltas = {i: s.delta for i, s in states.items()}
        batch = None
        if config.batch_size is not None:
            batch = (
                _subset(rng, problem.n_boundary, config.batch_size),
                _subset(rng, problem.n_interior, config.batch_size),
            )
        report, grads = problem.evaluate(deltas, config.lam, color_weight, batch=batch)
        history.append(report)
        if on_step is not None:
            on_step(it, report)
        states = {i: adam_step(s, grads[i]) for i, s in states.items()}

    final, _ = problem.evaluate({i: s.delta for i, s in states.items()}, config.lam, color_weight, with_grad=False)
    history.append(final)
    if on_step is not None:
        on_step(config.iterations, final)
    if config.batch_size is None:
        _check_monotone(history)
    log.info("blend finished: %s", final)
    return BlendResult(states, history, boundary, interior, problem)


def _subset(rng, n: int, k: int):
    if n == 0 or k >= n:
        return np.arange(n)
    return np.sort(rng.choice(n, size=k, replace=False))
