"""Merge voxel radiance fields and blend target appearance into the source."""
from .errors import (
    ConvergenceError,
    EmptyRegionError,
    FieldFormatError,
    NonFiniteGradientError,
    SceneError,
    SeamgridError,
)
from .field import Aabb, DensityGrid, RadianceField, ShColorGrid, eval_sh_basis, sample_color, sample_density
from .io import load_delta, load_field, load_raw, save_delta, save_field, save_ppm, save_raw
from .merge import AffineTransform, FieldEntry, MergedField, merged_color, merged_density, select_field
from .objective import BlendProblem, LossReport, color_loss, grad_loss, total_loss
from .optimizer import BlendConfig, BlendResult, BlendState, adam_step, blend, init_side_branch
from .oracle import assemble_system, compare_with_optimizer, solve_cg
from .rays import RandomDirections, RayBank, closest_ray_direction
from .regions import SampleSet, detect_boundary, sample_interior
from .render import Camera, ImageBuffer, generate_camera_rays, render_image, render_ray, render_rays
from .scene import SceneDescription, load_scene, parse_scene
from .synthetic import generate_synthetic

__version__ = "0.1.0"
