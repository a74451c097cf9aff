"""Ray-order radiance field rendering for lenticular light field displays."""

from .cache import PrecomputeCache, build_cache, read_cache, write_cache
from .display import (
    BUILTIN_PROFILES,
    DisplayProfile,
    interlace,
    load_profile,
    resize_bilinear,
    save_profile,
    subpixel_view,
    viewpoint_matrix,
)
from .errors import DataError, UsageError
from .fields import (
    AnalyticField,
    GaussianScene,
    RadianceField,
    covariance_from_rs,
    eval_sh,
    load_gaussian_scene,
    make_analytic_field,
    save_gaussian_scene,
    volume_render,
)
from .rays import CameraRig, RaySet, build_rayset, camera_rig, ray_params, reorder_to_encoded
from .raycast import (
    Bvh,
    GaussianField,
    brute_force_ray,
    build_bvh,
    build_field,
    gaussian_aabb,
    trace_ray,
    trace_rays,
)
from .repurpose import EncodedIndexMatrix, assemble_encoded, build_index_matrix, compute_beta

__version__ = "0.1.0"

__all__ = [
    "AnalyticField",
    "BUILTIN_PROFILES",
    "Bvh",
    "CameraRig",
    "DataError",
    "DisplayProfile",
    "EncodedIndexMatrix",
    "GaussianField",
    "GaussianScene",
    "PrecomputeCache",
    "RadianceField",
    "RaySet",
    "UsageError",
    "assemble_encoded",
    "brute_force_ray",
    "build_bvh",
    "build_cache",
    "build_field",
    "build_index_matrix",
    "build_rayset",
    "camera_rig",
    "compute_beta",
    "covariance_from_rs",
    "eval_sh",
    "gaussian_aabb",
    "interlace",
    "load_gaussian_scene",
    "load_profile",
    "make_analytic_field",
    "ray_params",
    "read_cache",
    "reorder_to_encoded",
    "resize_bilinear",
    "save_gaussian_scene",
    "save_profile",
    "subpixel_view",
    "trace_ray",
    "trace_rays",
    "viewpoint_matrix",
    "volume_render",
    "write_cache",
]
