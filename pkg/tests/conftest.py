import math

import numpy as np
import pytest

from lentiray.display import DisplayProfile, load_profile, viewpoint_matrix
from lentiray.fields import GaussianScene


@pytest.fixture(scope="session")
def desk_profile():
    return load_profile("desk")


@pytest.fixture(scope="session")
def desk_views(desk_profile):
    return viewpoint_matrix(desk_profile)


@pytest.fixture(scope="session")
def fig3b_profile():
    # The worked diagram parameters: tan(tilt) = -1/27, L_x = 16/3, 48 views.
    return DisplayProfile(
        width_px=64,
        height_px=64,
        line_count=16 / 3,
        tilt_angle_deg=math.degrees(math.atan(-1 / 27)),
        offset=0.0,
        num_views=48,
        fov_deg=40.0,
        focal_px=64.0,
        name="fig3b",
    )


def random_toy_profile(rng: np.random.Generator) -> DisplayProfile:
    """Small panel whose channel triplets always hit distinct viewpoints."""
    line_count = float(rng.uniform(2.5, 7.5))
    num_views = int(rng.integers(int(math.ceil(line_count)) + 1, 14))
    return DisplayProfile(
        width_px=int(rng.integers(10, 28)),
        height_px=int(rng.integers(10, 28)),
        line_count=line_count,
        tilt_angle_deg=float(rng.uniform(-18.0, 18.0)),
        offset=float(rng.uniform(0.0, line_count)),
        num_views=num_views,
        fov_deg=float(rng.uniform(20.0, 80.0)),
        focal_px=float(rng.uniform(16.0, 64.0)),
    )


def random_scene(rng: np.random.Generator, n: int, sh_blocks: int = 16,
                 spread: float = 1.0) -> GaussianScene:
    quats = rng.normal(0.0, 1.0, (n, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    return GaussianScene(
        means=rng.normal(0.0, spread, (n, 3)),
        scales=np.exp(rng.normal(-1.3, 0.4, (n, 3))),
        rotations=quats,
        opacities=rng.uniform(0.05, 1.0, n),
        sh=rng.normal(0.0, 0.35, (n, sh_blocks, 3)),
    )


def unit_vectors(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.normal(0.0, 1.0, (n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)
