"""Direct solver for the node-aligned, view-independent blending problem.

With samples on the target's colour nodes, neighbour steps of one node pitch
and SH degree 0, trilinear interpolation is the identity and the blending
objective becomes a weighted linear least-squares problem in the node
colours. Its normal equations are solved with matrix-free conjugate
gradients, independently of the iterative optimizer.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConvergenceError
from .field import SH_C0
from .merge import MergedField, merged_color, select_field, transform_point
from .optimizer import BlendConfig, BlendState
from .regions import SampleSet, detect_boundary, sample_interior

ALIGN_TOL = 1e-6


@dataclass
class NodeSystem:
    """Rows of the quadratic objective over unknown node colours.

    Pin rows read ``w_pin * |u[pin] - value|^2``. Difference rows read
    ``w_diff * |u[a] - u[b] - target|^2``, or with ``b == -1``
    ``w_diff * |u[a] - const - target|^2``.
    """

    field_index: int
    nodes: np.ndarray
    pin_index: np.ndarray
    pin_value: np.ndarray
    pin_weight: float
    diff_a: np.ndarray
    diff_b: np.ndarray
    diff_target: np.ndarray
    diff_const: np.ndarray
    diff_weight: float

    @property
    def n_unknowns(self) -> int:
        return len(self.nodes)

    def apply(self, u: np.ndarray) -> np.ndarray:
        """Normal-equation operator on one channel."""
        n = self.n_unknowns
        out = np.bincount(self.pin_index, self.pin_weight * u[self.pin_index], minlength=n)
        pair = self.diff_b >= 0
        r = u[self.diff_a] - np.where(pair, u[np.maximum(self.diff_b, 0)], 0.0)
        out += np.bincount(self.diff_a, self.diff_weight * r, minlength=n)
        out -= np.bincount(self.diff_b[pair], self.diff_weight * r[pair], minlength=n)
        return out

    def rhs(self, channel: int) -> np.ndarray:
        n = self.n_unknowns
        pair = self.diff_b >= 0
        v = self.diff_target[:, channel]
        b = np.bincount(self.pin_index, self.pin_weight * self.pin_value[:, channel], minlength=n)
        b += np.bincount(self.diff_a, self.diff_weight * (v + np.where(pair, 0.0, self.diff_const[:, channel])),
                         minlength=n)
        b -= np.bincount(self.diff_b[pair], self.diff_weight * v[pair], minlength=n)
        return b

    def diagonal(self) -> np.ndarray:
        n = self.n_unknowns
        pair = self.diff_b >= 0
        d = np.bincount(self.pin_index, np.full(len(self.pin_index), self.pin_weight), minlength=n)
        d += np.bincount(self.diff_a, np.full(len(self.diff_a), self.diff_weight), minlength=n)
        d += np.bincount(self.diff_b[pair], np.full(int(pair.sum()), self.diff_weight), minlength=n)
        return d

    def objective(self, u: np.ndarray) -> float:
        """Weighted sum of squared row residuals for node colours ``u`` (U, 3)."""
        pr = u[self.pin_index] - self.pin_value
        pair = self.diff_b >= 0
        other = np.where(pair[:, None], u[np.maximum(self.diff_b, 0)], self.diff_const)
        dr = u[self.diff_a] - other - self.diff_target
        return float(self.pin_weight * (pr * pr).sum() + self.diff_weight * (dr * dr).sum())


def _node_of(m: MergedField, i: int, points) -> tuple[np.ndarray, np.ndarray]:
    """Flat colour-node index of each point and whether it sits on a node."""
    e = m[i]
    res = np.asarray(e.field.color.resolution)
    local = transform_point(e.transform, points)
    g = (local - e.field.aabb.min) / e.field.aabb.extent * (res - 1)
    r = np.rint(g)
    aligned = np.all(np.abs(g - r) <= ALIGN_TOL, axis=1) & np.all((r >= 0) & (r <= res - 1), axis=1)
    r = np.clip(r, 0, res - 1).astype(np.int64)
    flat = (r[:, 0] * res[1] + r[:, 1]) * res[2] + r[:, 2]
    return flat, aligned


def assemble_system(
    m: MergedField,
    i: int,
    config: BlendConfig,
    directions=None,
    sample_sets: tuple[SampleSet, SampleSet] | None = None,
    counts: tuple[int, int] | None = None,
) -> NodeSystem:
    """Node-aligned restriction of the blending objective for target ``i``.

    Row weights reproduce the mean-normalised objective: pins weigh
    ``1 / N_boundary`` and differences ``lam / (3 N_interior)``. ``counts``
    overrides those sample counts when several targets share the means.
    """
    e = m[i]
    if e.field.degree != 0:
        raise ValueError("the oracle only handles SH degree 0 targets")
    if not config.node_aligned:
        raise ValueError("the oracle needs a node-aligned sample lattice (config.node_aligned=True)")
    if sample_sets is None:
        boundary = detect_boundary(m, i, config.threshold, config.grid_res, directions, node_aligned=True)
        interior = sample_interior(m, i, config.grid_res, config.offsets, directions, node_aligned=True)
    else:
        boundary, interior = sample_sets

    b_nodes, ok = _node_of(m, i, boundary.points)
    if not np.all(ok):
        raise ValueError("boundary samples are not aligned with the target's colour nodes")
    a_nodes, ok = _node_of(m, i, interior.points)
    if not np.all(ok):
        raise ValueError("interior samples are not aligned with the target's colour nodes")

    diff_a, diff_b, target, const = [], [], [], []
    for k in range(3):
        nbr = interior.points + interior.offsets[k]
        owner = select_field(m, nbr)
        n_nodes, ok = _node_of(m, i, nbr)
        mine = owner == i
        if np.any(mine & ~ok):
            raise ValueError(f"axis-{k} neighbour steps do not land on colour nodes")
        c = np.zeros((len(nbr), 3))
        if np.any(~mine):
            c[~mine] = merged_color(m, nbr[~mine], interior.directions[~mine])
        diff_a.append(a_nodes)
        diff_b.append(np.where(mine, n_nodes, -1))
        target.append(interior.reference[:, k])
        const.append(c)
    diff_a = np.concatenate(diff_a)
    diff_b = np.concatenate(diff_b)

    referenced = np.concatenate([b_nodes, diff_a, diff_b[diff_b >= 0]])
    nodes = np.unique(referenced)

    def to_local(flat):
        return np.searchsorted(nodes, flat)

    nb, ni = counts if counts is not None else (len(boundary), len(interior))
    return NodeSystem(
        field_index=i,
        nodes=nodes,
        pin_index=to_local(b_nodes),
        pin_value=np.asarray(boundary.reference),
        pin_weight=1.0 / nb,
        diff_a=to_local(diff_a),
        diff_b=np.where(diff_b >= 0, to_local(np.maximum(diff_b, 0)), -1),
        diff_target=np.concatenate(target),
        diff_const=np.concatenate(const),
        diff_weight=config.lam / (3 * ni),
    )


def solve_cg(sys: NodeSystem, tol: float = 1e-8, max_iter: int | None = None, jacobi: bool = False) -> np.ndarray:
    """Per-channel conjugate gradients on the normal equations; returns (U, 3) rgb."""
    n = sys.n_unknowns
    if len(sys.pin_index) == 0:
        raise ValueError("system has no boundary rows and is singular")
    if max_iter is None:
        max_iter = max(10 * n, 1000)
    precond = None
    if jacobi:
        diag = sys.diagonal()
        precond = np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 1.0)
    out = np.zeros((n, 3))
    for c in range(3):
        b = sys.rhs(c)
        bnorm = np.linalg.norm(b)
        if bnorm == 0:
            continue
        x = np.zeros(n)
        r = b.copy()
        z = r * precond if precond is not None else r
        p = z.copy()
        rz = r @ z
        for it in range(max_iter):
            if np.linalg.norm(r) <= tol * bnorm:
                break
            ap = sys.apply(p)
            alpha = rz / (p @ ap)
            x += alpha * p
            r -= alpha * ap
            z = r * precond if precond is not None else r
            rz_new = r @ z
            p = z + (rz_new / rz) * p
            rz = rz_new
        else:
            res = np.linalg.norm(r) / bnorm
            if res > tol:
                raise ConvergenceError(
                    f"CG did not converge on channel {c}: relative residual {res:.3e} after {max_iter} iterations",
                    residual=res, iterations=max_iter,
                )
        out[:, c] = x
    return out


def node_colors(state: BlendState, nodes: np.ndarray) -> np.ndarray:
    """Degree-0 rgb of frozen + delta at the given flat node indices."""
    coeffs = state.effective_coeffs()
    return SH_C0 * coeffs.reshape(-1, 3, coeffs.shape[-1])[nodes, :, 0]


def solution_to_delta(sys: NodeSystem, rgb: np.ndarray, frozen_coeffs: np.ndarray) -> np.ndarray:
    """Delta grid that realises the node colours ``rgb`` on the unknown nodes."""
    delta = np.zeros(frozen_coeffs.shape)
    flat = delta.reshape(-1, 3, frozen_coeffs.shape[-1])
    flat[sys.nodes, :, 0] = rgb / SH_C0 - frozen_coeffs.reshape(-1, 3, frozen_coeffs.shape[-1])[sys.nodes, :, 0]
    return delta


@dataclass
class RmseReport:
    rmse: float
    max_abs: float
    n_nodes: int

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def compare_with_optimizer(sys: NodeSystem, oracle_rgb: np.ndarray, blended: BlendState) -> RmseReport:
    oracle_rgb = np.asarray(oracle_rgb, float)
    if oracle_rgb.shape != (sys.n_unknowns, 3):
        raise ValueError(f"oracle solution has shape {oracle_rgb.shape}, expected {(sys.n_unknowns, 3)}")
    if blended.delta.shape != blended.frozen_target.color.coeffs.shape or blended.delta.shape[-1] != 1:
        raise ValueError("blend state is not a degree-0 delta over the target grid")
    ours = node_colors(blended, sys.nodes)
    err = ours - oracle_rgb
    return RmseReport(float(np.sqrt((err * err).mean())), float(np.abs(err).max()), sys.n_unknowns)
