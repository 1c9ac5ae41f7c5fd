"""Boundary pinning and finite-difference gradient losses.

Two evaluation routes exist on purpose. ``color_loss`` and ``grad_loss``
query the merged field directly; :class:`BlendProblem` compiles the sample
sets into sparse interpolation operators and returns losses together with
exact analytic gradients. Tests check one against the other.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import sparse

from .field import eval_sh_basis, trilinear_stencil
from .merge import MergedField, entry_color, merged_color, select_field, transform_direction, transform_point
from .regions import SampleSet

DEFAULT_LAMBDA = 0.1


@dataclass(frozen=True)
class LossReport:
    color_loss: float
    grad_loss: float
    total: float
    lam: float
    n_boundary: int = 0
    n_interior: int = 0
    color_weight: float = 1.0

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def total_loss(color: float, grad: float, lam: float = DEFAULT_LAMBDA, color_weight: float = 1.0,
               n_boundary: int = 0, n_interior: int = 0) -> LossReport:
    if lam < 0:
        raise ValueError(f"lambda must be non-negative, got {lam}")
    if not all(np.isfinite([color, grad, lam, color_weight])):
        raise ValueError("loss terms must be finite")
    return LossReport(float(color), float(grad), float(color_weight * color + lam * grad), float(lam),
                      n_boundary, n_interior, float(color_weight))


def _as_list(sets) -> list[SampleSet]:
    if isinstance(sets, SampleSet):
        return [sets]
    return list(sets)


def _as_overrides(sets: list[SampleSet], deltas) -> dict[int, np.ndarray]:
    if deltas is None:
        return {}
    if isinstance(deltas, Mapping):
        return dict(deltas)
    idx = {s.field_index for s in sets}
    if len(idx) != 1:
        raise ValueError("pass a mapping of deltas when sets span several targets")
    return {idx.pop(): np.asarray(deltas)}


def color_loss(m: MergedField, boundary, deltas=None) -> float:
    """Mean squared rgb error between target (+delta) and frozen source colours."""
    sets = _as_list(boundary)
    for s in sets:
        if s.kind != "boundary":
            raise ValueError(f"color_loss needs boundary sets, got {s.region_tag}")
    n = sum(len(s) for s in sets)
    if n == 0:
        raise ValueError("empty boundary set")
    over = _as_overrides(sets, deltas)
    acc = 0.0
    for s in sets:
        c = entry_color(m, s.field_index, s.points, s.directions, over.get(s.field_index))
        acc += float(((c - s.reference) ** 2).sum())
    return acc / n


def grad_loss(m: MergedField, interior, deltas=None) -> float:
    """Mean over points and axes of the squared finite-difference mismatch."""
    sets = _as_list(interior)
    for s in sets:
        if s.kind != "interior":
            raise ValueError(f"grad_loss needs interior sets, got {s.region_tag}")
    n = sum(len(s) for s in sets)
    if n == 0:
        raise ValueError("empty interior set")
    over = _as_overrides(sets, deltas)
    acc = 0.0
    for s in sets:
        here = merged_color(m, s.points, s.directions, over)
        for k in range(3):
            there = merged_color(m, s.points + s.offsets[k], s.directions, over)
            acc += float(((here - there - s.reference[:, k]) ** 2).sum())
    return acc / (3 * n)


class _Probe:
    """Merged colour at fixed points, as an affine map of the delta grids.

    ``owners`` forces the field evaluated at each row; by default the
    merged-field selector decides.
    """

    def __init__(self, m: MergedField, points, dirs, trainable, owners=None):
        points = np.asarray(points, float)
        dirs = np.asarray(dirs, float)
        self.n = len(points)
        owners = select_field(m, points) if owners is None else np.asarray(owners)
        self.owners = owners
        self.frozen = np.zeros((self.n, 3))
        self.parts = {}
        for j in np.unique(owners):
            j = int(j)
            rows = np.flatnonzero(owners == j)
            e = m[j]
            self.frozen[rows] = entry_color(m, j, points[rows], dirs[rows])
            if j not in trainable:
                continue
            grid = e.field.color
            local = transform_point(e.transform, points[rows])
            flat, w, _ = trilinear_stencil(e.field.aabb, grid.resolution, local)
            n_nodes = int(np.prod(grid.resolution))
            W = sparse.csr_matrix(
                (w.ravel(), (np.repeat(rows, 8), flat.ravel())), shape=(self.n, n_nodes)
            )
            W.eliminate_zeros()
            basis = np.zeros((self.n, grid.n_coeffs))
            basis[rows] = eval_sh_basis(transform_direction(e.transform, dirs[rows]), grid.degree)
            self.parts[j] = (W, basis)

    def value(self, deltas: Mapping[int, np.ndarray], rows=None) -> np.ndarray:
        out = self.frozen.copy() if rows is None else self.frozen[rows].copy()
        for j, (W, B) in self.parts.items():
            d = deltas.get(j)
            if d is None:
                continue
            if rows is not None:
                W, B = W[rows], B[rows]
            k = B.shape[1]
            y = (W @ d.reshape(W.shape[1], 3 * k)).reshape(-1, 3, k)
            out += np.einsum("pck,pk->pc", y, B)
        return out

    def backprop(self, upstream: np.ndarray, grads: dict, rows=None):
        """Accumulate d(loss)/d(delta) given d(loss)/d(colour) per row."""
        for j, (W, B) in self.parts.items():
            if j not in grads:
                continue
            if rows is not None:
                W, B = W[rows], B[rows]
            k = B.shape[1]
            outer = (upstream[:, :, None] * B[:, None, :]).reshape(-1, 3 * k)
            grads[j] += (W.T @ outer).reshape(grads[j].shape)


class BlendProblem:
    """Compiled blending objective over fixed boundary and interior sample sets."""

    def __init__(self, m: MergedField, boundary: Sequence[SampleSet], interior: Sequence[SampleSet],
                 trainable=None):
        self.m = m
        self.boundary = _as_list(boundary)
        self.interior = _as_list(interior)
        self.trainable = set(m.targets if trainable is None else trainable)
        self.shapes = {j: m[j].field.color.coeffs.shape for j in self.trainable}

        if self.boundary:
            pts = np.concatenate([s.points for s in self.boundary])
            dirs = np.concatenate([s.directions for s in self.boundary])
            owners = np.concatenate([np.full(len(s), s.field_index) for s in self.boundary])
            self.pin = _Probe(m, pts, dirs, self.trainable, owners)
            self.pin_ref = np.concatenate([s.reference for s in self.boundary])
        else:
            self.pin = None
        self.n_boundary = sum(len(s) for s in self.boundary)

        if self.interior:
            pts = np.concatenate([s.points for s in self.interior])
            dirs = np.concatenate([s.directions for s in self.interior])
            steps = np.concatenate([np.broadcast_to(s.offsets, (len(s), 3, 3)) for s in self.interior])
            self.here = _Probe(m, pts, dirs, self.trainable)
            # neighbours stacked axis-major: rows [k * P + p]
            nbr = np.concatenate([pts + steps[:, k] for k in range(3)])
            self.there = _Probe(m, nbr, np.tile(dirs, (3, 1)), self.trainable)
            self.diff_ref = np.concatenate([s.reference for s in self.interior])
        else:
            self.here = None
        self.n_interior = sum(len(s) for s in self.interior)

    def zero_deltas(self) -> dict[int, np.ndarray]:
        return {j: np.zeros(shape) for j, shape in self.shapes.items()}

    def pin_residuals(self, deltas, rows=None) -> np.ndarray:
        ref = self.pin_ref if rows is None else self.pin_ref[rows]
        return self.pin.value(deltas, rows) - ref

    def diff_residuals(self, deltas, rows=None) -> np.ndarray:
        """Residuals of shape ``(P, 3 axes, 3 rgb)``."""
        p = self.n_interior
        here = self.here.value(deltas, rows)
        nrows = None if rows is None else np.concatenate([rows + k * p for k in range(3)])
        there = self.there.value(deltas, nrows).reshape(3, -1, 3).transpose(1, 0, 2)
        ref = self.diff_ref if rows is None else self.diff_ref[rows]
        return here[:, None, :] - there - ref

    def evaluate(self, deltas: Mapping[int, np.ndarray], lam: float = DEFAULT_LAMBDA, color_weight: float = 1.0,
                 with_grad: bool = True, batch: tuple | None = None):
        """Loss report and, optionally, gradients for every trainable delta.

        ``batch`` is an optional ``(boundary_rows, interior_rows)`` pair
        restricting the means to a minibatch.
        """
        b_rows, i_rows = batch if batch is not None else (None, None)
        grads = {j: np.zeros(shape) for j, shape in self.shapes.items()} if with_grad else None

        color = 0.0
        nb = 0
        if self.pin is not None:
            r = self.pin_residuals(deltas, b_rows)
            nb = len(r)
            color = float((r * r).sum()) / nb
            if with_grad and color_weight != 0:
                self.pin.backprop(2.0 * color_weight / nb * r, grads, b_rows)

        grad = 0.0
        ni = 0
        if self.here is not None:
            r = self.diff_residuals(deltas, i_rows)
            ni = len(r)
            grad = float((r * r).sum()) / (3 * ni)
            if with_grad and lam != 0:
                scale = 2.0 * lam / (3 * ni)
                self.here.backprop(scale * r.sum(axis=1), grads, i_rows)
                p = self.n_interior
                nrows = None if i_rows is None else np.concatenate([i_rows + k * p for k in range(3)])
                up = -scale * r.transpose(1, 0, 2).reshape(-1, 3)
                self.there.backprop(up, grads, nrows)

        report = total_loss(color, grad, lam, color_weight, nb, ni)
        return report, grads

    def boundary_error(self, deltas) -> float:
        """Mean Euclidean rgb distance between target and source on the boundary."""
        return float(np.linalg.norm(self.pin_residuals(deltas), axis=1).mean())

    def gradient_deviation(self, deltas) -> float:
        """RMS per-channel mismatch of merged finite differences against the originals."""
        r = self.diff_residuals(deltas)
        return float(np.sqrt((r * r).mean()))


def loss_gradients(m: MergedField, boundary, interior, deltas, lam: float = DEFAULT_LAMBDA) -> dict[int, np.ndarray]:
    b = _as_list(boundary)
    i = _as_list(interior)
    problem = BlendProblem(m, b, i)
    over = _as_overrides(b + i, deltas)
    full = problem.zero_deltas()
    full.update(over)
    return problem.evaluate(full, lam)[1]
