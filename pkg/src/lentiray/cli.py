"""Command-line client for the rendering service.

By default every subcommand spins the service up in-process and talks to it
over an in-memory ASGI transport; ``--server URL`` points the same client at
a remote instance instead.  Results print as JSON on stdout.

Exit codes: 0 success, 1 usage error, 2 data/format error.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys

import httpx

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad arguments; the documented usage code is 1.
    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _background(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("background must be r,g,b")
    return tuple(float(p) for p in parts)  # type: ignore[return-value]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lentiray", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--server", default=None,
                        help="URL of a running service; default runs in-process")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("precompute", help="derive the ray set and index cache for a display")
    p.add_argument("--profile", required=True, help="built-in name or profile JSON path")
    p.add_argument("--pw", type=int, default=2, help="area width in grating units")
    p.add_argument("--no-repurpose", action="store_true",
                   help="emit the standard one-to-one mapping (beta = 3)")
    p.add_argument("--out", required=True, help="cache file to write")

    r = sub.add_parser("render", help="render encoded frames for a pose sweep")
    r.add_argument("--mode", required=True, choices=("directl", "standard"))
    r.add_argument("--cache", help="precompute cache (required for directl)")
    r.add_argument("--profile", help="profile for standard mode, or cross-check for a cache")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--scene", help="Gaussian scene file")
    src.add_argument("--analytic", help="analytic field kind",
                     choices=("constant_sphere", "two_spheres", "gradient_box"))
    r.add_argument("--poses", required=True, help="pose file, 16 numbers per line")
    r.add_argument("--out", required=True, help="output directory for frames")
    r.add_argument("--view-res", default="hr", choices=("lr", "mr", "hr"),
                   help="per-view resolution for standard mode")
    r.add_argument("--radius", type=float, help="camera arc radius")
    r.add_argument("--background", type=_background, default=(0.0, 0.0, 0.0))
    r.add_argument("--samples", type=int, default=512)
    r.add_argument("--heap", type=int, default=128, dest="heap_capacity")

    c = sub.add_parser("compare", help="RMSE between two images (0..255 scale)")
    c.add_argument("image_a")
    c.add_argument("image_b")

    b = sub.add_parser("bench", help="time repurposed vs standard ray-order rendering")
    b.add_argument("--cache", required=True)
    src = b.add_mutually_exclusive_group(required=True)
    src.add_argument("--scene")
    src.add_argument("--analytic",
                     choices=("constant_sphere", "two_spheres", "gradient_box"))
    b.add_argument("--poses", required=True)
    b.add_argument("--frames", type=int, default=3)
    b.add_argument("--radius", type=float)
    b.add_argument("--background", type=_background, default=(0.0, 0.0, 0.0))
    b.add_argument("--samples", type=int, default=512)
    b.add_argument("--heap", type=int, default=128, dest="heap_capacity")

    s = sub.add_parser("serve", help="run the HTTP service")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8000)
    return parser


def _post(server: str | None, path: str, payload: dict) -> httpx.Response:
    if server:
        with httpx.Client(base_url=server, timeout=None) as client:
            return client.post(path, json=payload)

    async def _run() -> httpx.Response:
        from .server import create_app

        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(
            transport=transport, base_url="http://lentiray", timeout=None
        ) as client:
            return await client.post(path, json=payload)

    return asyncio.run(_run())


def _finish(response: httpx.Response) -> int:
    if response.status_code == 200:
        print(json.dumps(response.json(), indent=2))
        return EXIT_OK
    try:
        detail = response.json().get("detail")
    except ValueError:
        detail = None
    if isinstance(detail, dict) and "message" in detail:
        kind = detail.get("kind", "data")
        print(f"error ({kind}): {detail['message']}", file=sys.stderr)
        return EXIT_USAGE if kind == "usage" else EXIT_DATA
    print(f"error: service returned HTTP {response.status_code}: {response.text}",
          file=sys.stderr)
    return EXIT_DATA


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "precompute":
            payload = {
                "profile": args.profile,
                "area_width": args.pw,
                "repurpose": not args.no_repurpose,
                "out": args.out,
            }
            return _finish(_post(args.server, "/precompute", payload))
        if args.command == "render":
            payload = {
                "mode": args.mode,
                "poses": args.poses,
                "out_dir": args.out,
                "cache": args.cache,
                "profile": args.profile,
                "analytic": args.analytic,
                "scene": args.scene,
                "view_res": args.view_res,
                "radius": args.radius,
                "background": list(args.background),
                "samples": args.samples,
                "heap_capacity": args.heap_capacity,
            }
            return _finish(_post(args.server, "/render", payload))
        if args.command == "compare":
            payload = {"image_a": args.image_a, "image_b": args.image_b}
            return _finish(_post(args.server, "/compare", payload))
        if args.command == "bench":
            payload = {
                "cache": args.cache,
                "poses": args.poses,
                "frames": args.frames,
                "analytic": args.analytic,
                "scene": args.scene,
                "radius": args.radius,
                "background": list(args.background),
                "samples": args.samples,
                "heap_capacity": args.heap_capacity,
            }
            return _finish(_post(args.server, "/bench", payload))
        if args.command == "serve":
            import uvicorn

            from .server import create_app

            uvicorn.run(create_app(), host=args.host, port=args.port)
            return EXIT_OK
    except httpx.HTTPError as exc:
        print(f"error: cannot reach service: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
