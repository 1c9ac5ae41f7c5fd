"""JSON scene descriptions tying field files, cameras and settings together.

Example::

    {
      "fields": [
        {"path": "source.snrf", "transform": [1,0,0,0, 0,1,0,0, 0,0,1,0]},
        {"path": "target.snrf", "transform": [...12 numbers...], "beta": 1.0}
      ],
      "cameras": [{"position": [3,0,1], "look_at": [0,0,0], "up": [0,0,1],
                   "fov": 40, "width": 32, "height": 32, "field": null}],
      "render": {"step": null, "background": [1,1,1], "width": 64, "height": 64, "camera": 0},
      "rays": {"stride": 16, "bank": "target"},
      "blend": {"lambda": 0.1, "iterations": 500, "tth": 1.0, "grid_res": 64}
    }

A camera with ``"field": i`` is expressed in field ``i``'s local frame.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields as dc_fields, replace
from pathlib import Path

import numpy as np

from .errors import SceneError
from .io import load_field, save_field
from .merge import AffineTransform, FieldEntry, MergedField
from .optimizer import BlendConfig
from .rays import RayBank
from .render import Camera
from .synthetic import SyntheticScene

# scene-file key -> BlendConfig attribute
_BLEND_KEYS = {
    "lambda": "lam",
    "learning_rate": "learning_rate",
    "beta1": "beta1",
    "beta2": "beta2",
    "eps": "eps",
    "iterations": "iterations",
    "tth": "threshold",
    "grid_res": "grid_res",
    "boundary_res": "boundary_res",
    "offsets": "offsets",
    "node_aligned": "node_aligned",
    "use_color_loss": "use_color_loss",
    "batch_size": "batch_size",
    "seed": "seed",
}


@dataclass
class FieldSpec:
    path: str
    transform: AffineTransform
    beta: float = 1.0


@dataclass
class CameraSpec:
    camera: Camera
    field: int | None = None


@dataclass
class RenderSpec:
    step: float | None = None
    background: tuple = (1.0, 1.0, 1.0)
    width: int | None = None
    height: int | None = None
    camera: int = 0


@dataclass
class RaySpec:
    stride: int = 16
    bank: str = "target"


@dataclass
class SceneDescription:
    fields: list[FieldSpec]
    cameras: list[CameraSpec]
    render: RenderSpec = field(default_factory=RenderSpec)
    rays: RaySpec = field(default_factory=RaySpec)
    blend: BlendConfig = field(default_factory=BlendConfig)
    base_dir: Path | None = None

    def resolve(self, path: str) -> Path:
        p = Path(path)
        if not p.is_absolute() and self.base_dir is not None:
            p = self.base_dir / p
        return p

    def merged_field(self) -> MergedField:
        entries = []
        for k, spec in enumerate(self.fields):
            try:
                f = load_field(self.resolve(spec.path))
            except FileNotFoundError as exc:
                raise SceneError(f"fields[{k}]: file not found: {self.resolve(spec.path)}") from exc
            entries.append(FieldEntry(f, spec.transform, spec.beta))
        return MergedField(entries)

    def render_camera(self) -> Camera:
        r = self.render
        if not 0 <= r.camera < len(self.cameras):
            raise SceneError(f"render.camera {r.camera} out of range")
        cam = self.cameras[r.camera].camera
        return replace(cam, width=r.width or cam.width, height=r.height or cam.height)

    def ray_bank(self, m: MergedField, target: int) -> RayBank:
        """Camera rays in unified space used to assign view directions for ``target``."""
        def bank_of(specs):
            parts = []
            for spec in specs:
                inv = None if spec.field is None else m[spec.field].transform.inverse()
                parts.append(RayBank.from_cameras([spec.camera], self.rays.stride, inv))
            return RayBank(np.concatenate([b.origins for b in parts]), np.concatenate([b.directions for b in parts]))

        if self.rays.bank == "target":
            own = [c for c in self.cameras if c.field == target]
            if own:
                return bank_of(own)
            shared = [c for c in self.cameras if c.field is None]
            return bank_of(shared or self.cameras)
        return bank_of(self.cameras)

    def ray_banks(self, m: MergedField) -> dict[int, RayBank]:
        return {i: self.ray_bank(m, i) for i in m.targets}


def _vec3(value, where: str) -> tuple:
    try:
        v = tuple(float(x) for x in value)
    except (TypeError, ValueError):
        raise SceneError(f"{where}: expected 3 numbers") from None
    if len(v) != 3:
        raise SceneError(f"{where}: expected 3 numbers, got {len(v)}")
    return v


def _transform(value, where: str) -> AffineTransform:
    if not isinstance(value, list) or not all(isinstance(x, (int, float)) for x in value):
        raise SceneError(f"{where}: expected a list of 12 numbers (row-major 3x4)")
    if len(value) != 12:
        raise SceneError(f"{where}: expected 12 numbers (row-major 3x4), got {len(value)}")
    try:
        return AffineTransform(np.array(value, dtype=np.float64))
    except ValueError as exc:
        raise SceneError(f"{where}: {exc}") from None


def _camera(doc, where: str) -> CameraSpec:
    if not isinstance(doc, dict):
        raise SceneError(f"{where}: expected an object")
    try:
        cam = Camera(
            _vec3(doc["position"], f"{where}.position"),
            _vec3(doc["look_at"], f"{where}.look_at"),
            _vec3(doc.get("up", (0, 0, 1)), f"{where}.up"),
            float(doc.get("fov", 40.0)),
            int(doc.get("width", 32)),
            int(doc.get("height", 32)),
        )
        cam.basis()
    except KeyError as exc:
        raise SceneError(f"{where}: missing key {exc.args[0]!r}") from None
    except ValueError as exc:
        raise SceneError(f"{where}: {exc}") from None
    tag = doc.get("field")
    return CameraSpec(cam, None if tag is None else int(tag))


def _blend(doc, where: str = "blend") -> BlendConfig:
    if not isinstance(doc, dict):
        raise SceneError(f"{where}: expected an object")
    unknown = set(doc) - set(_BLEND_KEYS)
    if unknown:
        raise SceneError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {_BLEND_KEYS[k]: v for k, v in doc.items()}
    if kwargs.get("offsets") is not None:
        kwargs["offsets"] = tuple(np.asarray(kwargs["offsets"], float).ravel().tolist())
    try:
        return BlendConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise SceneError(f"{where}: {exc}") from None


def parse_scene(text, base_dir=None) -> SceneDescription:
    """Parse and validate a scene; defaults are filled for omitted settings."""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise SceneError(f"scene is not valid UTF-8: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneError(f"malformed JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise SceneError("scene must be a JSON object")

    raw_fields = doc.get("fields")
    if not raw_fields:
        raise SceneError("scene has no fields; the first entry must be the source")
    if len(raw_fields) < 2:
        raise SceneError("scene needs a source and at least one target field")
    specs = []
    for k, f in enumerate(raw_fields):
        where = f"fields[{k}]"
        if not isinstance(f, dict) or "path" not in f:
            raise SceneError(f"{where}: expected an object with a 'path'")
        t = _transform(f.get("transform", AffineTransform.identity().matrix.ravel().tolist()), f"{where}.transform")
        beta = float(f.get("beta", 1.0))
        if not beta > 0:
            raise SceneError(f"{where}.beta: must be positive, got {beta}")
        specs.append(FieldSpec(str(f["path"]), t, beta))
    if not specs[0].transform.is_identity():
        raise SceneError("fields[0] (source) transform must be the identity")

    raw_cams = doc.get("cameras") or []
    if not raw_cams:
        raise SceneError("scene needs at least one camera")
    cams = [_camera(c, f"cameras[{k}]") for k, c in enumerate(raw_cams)]
    for k, c in enumerate(cams):
        if c.field is not None and not 0 <= c.field < len(specs):
            raise SceneError(f"cameras[{k}].field: no field with index {c.field}")

    r = doc.get("render", {})
    render = RenderSpec(
        step=None if r.get("step") is None else float(r["step"]),
        background=_vec3(r.get("background", (1, 1, 1)), "render.background"),
        width=r.get("width"),
        height=r.get("height"),
        camera=int(r.get("camera", 0)),
    )
    if render.step is not None and not render.step > 0:
        raise SceneError("render.step: must be positive")

    rr = doc.get("rays", {})
    rays = RaySpec(int(rr.get("stride", 16)), str(rr.get("bank", "target")))
    if rays.bank not in ("target", "union") or rays.stride < 1:
        raise SceneError("rays: bank must be 'target' or 'union' and stride >= 1")

    return SceneDescription(specs, cams, render, rays, _blend(doc.get("blend", {})),
                            None if base_dir is None else Path(base_dir))


def load_scene(path) -> SceneDescription:
    path = Path(path)
    try:
        text = path.read_bytes()
    except FileNotFoundError:
        raise SceneError(f"scene file not found: {path}") from None
    scene = parse_scene(text, path.parent)
    for k, spec in enumerate(scene.fields):
        if not scene.resolve(spec.path).is_file():
            raise SceneError(f"fields[{k}]: file not found: {scene.resolve(spec.path)}")
    return scene


def blend_to_json(config: BlendConfig) -> dict:
    inv = {v: k for k, v in _BLEND_KEYS.items()}
    return {inv[f.name]: getattr(config, f.name) for f in dc_fields(config)}


def scene_to_json(scene: SceneDescription) -> str:
    doc = {
        "fields": [
            {"path": f.path, "transform": f.transform.matrix.ravel().tolist(), "beta": f.beta} for f in scene.fields
        ],
        "cameras": [
            {
                "position": list(c.camera.position), "look_at": list(c.camera.look_at), "up": list(c.camera.up),
                "fov": c.camera.vertical_fov, "width": c.camera.width, "height": c.camera.height, "field": c.field,
            }
            for c in scene.cameras
        ],
        "render": asdict(scene.render),
        "rays": asdict(scene.rays),
        "blend": blend_to_json(scene.blend),
    }
    doc["render"]["background"] = list(scene.render.background)
    return json.dumps(doc, indent=2)


def write_synthetic(directory, synth: SyntheticScene, blend: BlendConfig | None = None,
                    render: RenderSpec | None = None) -> Path:
    """Write field files and ``scene.json`` for a generated scene; returns the scene path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    specs = []
    for k, (f, t, b) in enumerate(zip(synth.fields, synth.transforms, synth.betas)):
        name = "source.snrf" if k == 0 else f"target_{k}.snrf"
        save_field(directory / name, f)
        specs.append(FieldSpec(name, t, b))
    scene = SceneDescription(specs, [CameraSpec(c) for c in synth.cameras], render or RenderSpec(width=64, height=64),
                             RaySpec(), blend or BlendConfig(), directory)
    path = directory / "scene.json"
    path.write_text(scene_to_json(scene))
    return path
