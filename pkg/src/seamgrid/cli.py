"""Command-line entry point: ``seamgrid <command> ...``."""
from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from .errors import SeamgridError
from .field import RadianceField, ShColorGrid
from .gradcheck import check_scene
from .io import load_delta, save_delta, save_field, save_ppm, save_raw
from .merge import MergedField
from .objective import BlendProblem
from .optimizer import BlendConfig, blend, build_sample_sets, init_side_branch
from .oracle import assemble_system, compare_with_optimizer, solution_to_delta, solve_cg
from .render import render_image
from .scene import SceneDescription, load_scene, write_synthetic
from .synthetic import KINDS, generate_synthetic

THREADS_ENV = "SEAMGRID_THREADS"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(json.dumps({"error": "usage", "message": message}) + "\n")
        sys.exit(2)


def _add_overrides(p):
    p.add_argument("--seed", type=int, help="override blend.seed")
    p.add_argument("--lambda", dest="lam", type=float, help="override blend.lambda")
    p.add_argument("--iters", type=int, help="override blend.iterations")
    p.add_argument("--tth", type=float, help="override the boundary density threshold")
    p.add_argument("--grid-res", type=int, help="override blend.grid_res")
    p.add_argument("--node-aligned", action="store_true", default=None, help="sample on target colour nodes")


def _add_threads(p):
    p.add_argument("--threads", type=int, help=f"render workers (default ${THREADS_ENV} or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="seamgrid", description="Merge and blend voxel radiance fields.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a synthetic scene directory")
    p.add_argument("kind", choices=KINDS)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--res", type=int, default=32)
    p.add_argument("--degree", type=int, choices=(0, 1), default=0)

    p = sub.add_parser("merge", help="render the direct merge")
    p.add_argument("scene", type=Path)
    p.add_argument("--out", required=True, type=Path, help="image path prefix; writes .ppm and .raw")
    _add_threads(p)

    p = sub.add_parser("blend", help="optimise target deltas and write checkpoints")
    p.add_argument("scene", type=Path)
    p.add_argument("--out", required=True, type=Path, help="output directory")
    _add_overrides(p)

    p = sub.add_parser("render", help="render the merged field, optionally with deltas")
    p.add_argument("scene", type=Path)
    p.add_argument("--out", required=True, type=Path, help="image path prefix; writes .ppm and .raw")
    p.add_argument("--deltas", type=Path, help="directory holding delta_<i>.snrd files")
    _add_threads(p)

    p = sub.add_parser("oracle", help="solve the node-aligned diffuse problem directly")
    p.add_argument("scene", type=Path)
    p.add_argument("--out", required=True, type=Path, help="output directory")
    p.add_argument("--deltas", type=Path, help="compare against these optimizer deltas")
    p.add_argument("--jacobi", action="store_true")
    _add_overrides(p)

    p = sub.add_parser("check-grad", help="finite-difference gradient check on random scenes")
    p.add_argument("--res", type=int, default=8)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--scenes", type=int, default=3)
    p.add_argument("--coeffs", type=int, default=100)
    return parser


def _threads(args) -> int:
    if getattr(args, "threads", None) is not None:
        n = args.threads
    else:
        env = os.environ.get(THREADS_ENV)
        try:
            n = int(env) if env else 1
        except ValueError:
            raise SeamgridError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    if n < 1:
        raise SeamgridError("thread count must be at least 1")
    return n


def _config(scene: SceneDescription, args) -> BlendConfig:
    over = {
        "seed": args.seed, "lam": args.lam, "iterations": args.iters, "threshold": args.tth,
        "grid_res": args.grid_res, "node_aligned": args.node_aligned,
    }
    try:
        return replace(scene.blend, **{k: v for k, v in over.items() if v is not None})
    except ValueError as exc:
        raise SeamgridError(str(exc)) from None


def _write_image(prefix: Path, image) -> list[str]:
    prefix.parent.mkdir(parents=True, exist_ok=True)
    ppm, raw = prefix.with_suffix(".ppm"), prefix.with_suffix(".raw")
    save_ppm(ppm, image)
    save_raw(raw, image)
    return [str(ppm), str(raw)]


def _render(scene: SceneDescription, m: MergedField, overrides, threads: int):
    r = scene.render
    return render_image(m, scene.render_camera(), r.step, r.background, overrides, threads)


def _load_deltas(directory: Path, m: MergedField) -> dict[int, np.ndarray]:
    out = {}
    for i in m.targets:
        path = directory / f"delta_{i}.snrd"
        if not path.is_file():
            raise SeamgridError(f"missing delta checkpoint {path}")
        d = load_delta(path)
        if d.shape != m[i].field.color.coeffs.shape:
            raise SeamgridError(f"{path}: shape {d.shape} does not match target {i}")
        out[i] = d
    return out


def cmd_generate(args) -> dict:
    synth = generate_synthetic(args.kind, args.seed, args.res, args.degree)
    path = write_synthetic(args.out, synth, BlendConfig(seed=args.seed))
    return {"scene": str(path)}


def cmd_merge(args) -> dict:
    scene = load_scene(args.scene)
    m = scene.merged_field()
    return {"images": _write_image(args.out, _render(scene, m, None, _threads(args)))}


def cmd_render(args) -> dict:
    scene = load_scene(args.scene)
    m = scene.merged_field()
    deltas = _load_deltas(args.deltas, m) if args.deltas else None
    return {"images": _write_image(args.out, _render(scene, m, deltas, _threads(args)))}


def cmd_blend(args) -> dict:
    scene = load_scene(args.scene)
    config = _config(scene, args)
    m = scene.merged_field()
    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "telemetry.jsonl", "w") as tel:
        def on_step(it, report):
            tel.write(json.dumps({"iteration": it, **json.loads(report.to_json())}) + "\n")

        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", RuntimeWarning)
            result = blend(m, config, scene.ray_banks(m), on_step=on_step)
    for w in caught:
        sys.stderr.write(json.dumps({"warning": str(w.message)}) + "\n")
    files = []
    for i, state in result.states.items():
        path = args.out / f"delta_{i}.snrd"
        save_delta(path, state.delta, m[i].field)
        files.append(path.name)
    problem = result.problem
    deltas = result.deltas
    summary = {
        "deltas": files,
        "final": json.loads(result.history[-1].to_json()),
        "boundary_error_before": problem.boundary_error(problem.zero_deltas()),
        "boundary_error_after": problem.boundary_error(deltas),
        "gradient_deviation_after": problem.gradient_deviation(deltas),
    }
    (args.out / "summary.json").write_text(json.dumps(summary, indent=2))
    return summary


def cmd_oracle(args) -> dict:
    scene = load_scene(args.scene)
    config = replace(_config(scene, args), node_aligned=True)
    m = scene.merged_field()
    boundary, interior = build_sample_sets(m, config, scene.ray_banks(m))
    counts = (sum(len(s) for s in boundary), sum(len(s) for s in interior))
    deltas = _load_deltas(args.deltas, m) if args.deltas else None
    args.out.mkdir(parents=True, exist_ok=True)

    oracle_deltas = {}
    report = {"targets": {}}
    for n, i in enumerate(m.targets):
        system = assemble_system(m, i, config, sample_sets=(boundary[n], interior[n]), counts=counts)
        rgb = solve_cg(system, jacobi=args.jacobi)
        target = m[i].field
        delta = solution_to_delta(system, rgb, target.color.coeffs)
        oracle_deltas[i] = delta
        solved = RadianceField(target.aabb, target.density, ShColorGrid(target.color.coeffs + delta))
        path = args.out / f"oracle_{i}.snrf"
        save_field(path, solved)
        entry = {"field": str(path), "n_unknowns": system.n_unknowns}
        if deltas is not None:
            state = replace(init_side_branch(target, config), delta=deltas[i])
            entry.update(json.loads(compare_with_optimizer(system, rgb, state).to_json()))
        report["targets"][str(i)] = entry

    problem = BlendProblem(m, boundary, interior)
    report["oracle_loss"] = problem.evaluate(oracle_deltas, config.lam, with_grad=False)[0].total
    if deltas is not None:
        report["optimizer_loss"] = problem.evaluate(deltas, config.lam, with_grad=False)[0].total
        report["rmse"] = max(t["rmse"] for t in report["targets"].values())
    (args.out / "rmse.json").write_text(json.dumps(report, indent=2))
    return report


def cmd_check_grad(args) -> dict:
    reports = [check_scene(args.seed + k, args.res, args.coeffs) for k in range(args.scenes)]
    worst = max(r.max_rel_error for r in reports)
    for r in reports:
        print(r.to_json())
    out = {"max_rel_error": worst, "passed": all(r.passed for r in reports)}
    if not out["passed"]:
        raise SeamgridError(f"gradient check failed: max relative error {worst:.3e}")
    return out


COMMANDS = {
    "generate": cmd_generate,
    "merge": cmd_merge,
    "blend": cmd_blend,
    "render": cmd_render,
    "oracle": cmd_oracle,
    "check-grad": cmd_check_grad,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        result = COMMANDS[args.command](args)
    except (SeamgridError, ValueError, OSError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1
    print(json.dumps(result))
    return 0


if __name__ == "__main__":
    sys.exit(main())
