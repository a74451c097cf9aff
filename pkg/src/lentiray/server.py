"""FastAPI service wrapping the rendering pipeline.

The service owns all file access (caches, scenes, poses, frames), so a thin
client only moves JSON.  Error envelope: usage problems map to HTTP 400,
bad or mismatched data files to HTTP 422, both carrying
``{"detail": {"kind": ..., "message": ...}}``.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import pipeline
from .display import BUILTIN_PROFILES, load_profile
from .errors import DataError, UsageError
from .schemas import (
    BenchRequest,
    BenchResponse,
    CompareRequest,
    CompareResponse,
    PrecomputeRequest,
    PrecomputeResponse,
    ProfileInfo,
    RenderRequest,
    RenderResponse,
)


def create_app() -> FastAPI:
    app = FastAPI(title="lentiray", description="ray-order light field rendering service")

    @app.exception_handler(UsageError)
    async def usage_handler(_: Request, exc: UsageError):
        return JSONResponse(
            status_code=400, content={"detail": {"kind": "usage", "message": str(exc)}}
        )

    @app.exception_handler(DataError)
    async def data_handler(_: Request, exc: DataError):
        return JSONResponse(
            status_code=422, content={"detail": {"kind": "data", "message": str(exc)}}
        )

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.get("/profiles", response_model=list[ProfileInfo])
    def profiles() -> list[ProfileInfo]:
        out = []
        for name in BUILTIN_PROFILES:
            p = load_profile(name)
            out.append(
                ProfileInfo(
                    name=name,
                    panel=(p.height_px, p.width_px),
                    num_views=p.num_views,
                    line_count=p.line_count,
                    tilt_angle_deg=p.tilt_angle_deg,
                    fov_deg=p.fov_deg,
                )
            )
        return out

    @app.post("/precompute", response_model=PrecomputeResponse)
    def precompute(req: PrecomputeRequest) -> PrecomputeResponse:
        result = pipeline.precompute_job(
            req.profile, req.area_width, req.repurpose, req.out
        )
        return PrecomputeResponse(**result)

    @app.post("/render", response_model=RenderResponse)
    def render(req: RenderRequest) -> RenderResponse:
        result = pipeline.render_job(
            mode=req.mode,
            poses_path=req.poses,
            out_dir=req.out_dir,
            cache_path=req.cache,
            profile_source=req.profile,
            analytic=req.analytic,
            scene=req.scene,
            view_res=req.view_res,
            radius=req.radius,
            background=req.background,
            n_samples=req.samples,
            heap_capacity=req.heap_capacity,
        )
        return RenderResponse(**result)

    @app.post("/compare", response_model=CompareResponse)
    def compare(req: CompareRequest) -> CompareResponse:
        return CompareResponse(rmse=pipeline.compare_images(req.image_a, req.image_b))

    @app.post("/bench", response_model=BenchResponse)
    def bench(req: BenchRequest) -> BenchResponse:
        result = pipeline.bench_job(
            cache_path=req.cache,
            poses_path=req.poses,
            frames=req.frames,
            analytic=req.analytic,
            scene=req.scene,
            radius=req.radius,
            background=req.background,
            n_samples=req.samples,
            heap_capacity=req.heap_capacity,
        )
        return BenchResponse(**result)

    return app


app = create_app()
