"""Request/response models for the rendering service."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field


class PrecomputeRequest(BaseModel):
    profile: str = Field(description="built-in profile name or path to a profile JSON")
    area_width: int = Field(2, description="repurposing area width in grating units (P_w)")
    repurpose: bool = True
    out: str = Field(description="path the cache file is written to")


class PrecomputeResponse(BaseModel):
    profile: str
    panel: tuple[int, int]
    area_width: int
    repurpose: bool
    beta: float
    n_rays: int
    build_s: float
    cache: str | None = None
    cache_bytes: int | None = None


class RenderRequest(BaseModel):
    mode: Literal["directl", "standard"]
    poses: str = Field(description="pose file, one 4x4 row-major matrix per line")
    out_dir: str
    cache: str | None = None
    profile: str | None = None
    analytic: str | None = Field(None, description="analytic field kind")
    scene: str | None = Field(None, description="Gaussian scene file")
    view_res: Literal["lr", "mr", "hr"] = "hr"
    radius: float | None = Field(None, description="camera arc radius (world units)")
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)
    samples: int = Field(512, description="volume samples per ray for analytic fields")
    heap_capacity: int = Field(128, description="per-ray nearest-hit budget for Gaussian scenes")


class FrameTimingModel(BaseModel):
    stages_s: dict[str, float]
    total_s: float
    rays: int
    rays_per_s: float


class RenderResponse(BaseModel):
    mode: str
    frames: list[str]
    radius: float
    rays_per_frame: int
    mean_frame_s: float
    timings: list[FrameTimingModel]
    timing_log: str | None = None


class CompareRequest(BaseModel):
    image_a: str
    image_b: str


class CompareResponse(BaseModel):
    rmse: float


class BenchRequest(BaseModel):
    cache: str
    poses: str
    frames: int = 3
    analytic: str | None = None
    scene: str | None = None
    radius: float | None = None
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)
    samples: int = 512
    heap_capacity: int = 128


class BenchSide(BaseModel):
    n_rays: int
    beta: float
    mean_frame_s: float
    rays_per_s: float


class BenchResponse(BaseModel):
    frames: int
    repurposed: BenchSide
    standard_ray_order: BenchSide
    ray_ratio: float
    three_over_beta: float
    time_ratio: float


class ProfileInfo(BaseModel):
    name: str
    panel: tuple[int, int]
    num_views: int
    line_count: float
    tilt_angle_deg: float
    fov_deg: float
