"""Command-line pipeline: gen-synthetic, reconstruct, eval, render.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .carve import CarveConfig, CarveError, carve, fit_colors
from .dataset import (
    DatasetError,
    encode_depth,
    encode_normals,
    encode_u8,
    generate_dataset,
    load_dataset,
    normal_preflight,
    write_png,
)
from .geometry import MeshError, Normalization, TriMesh
from .init import EmptyMeshError, OrbitRig, PoissonError, marching_cubes, poisson_reconstruct, visual_hull
from .meshio import MeshFormatError, load_mesh, load_point_cloud, save_mesh
from .metrics import EvalReport, ToyEmbeddingProvider, chamfer, clip_score, normal_consistency, silhouette_iou
from .primitives import MAX_SUBDIVISION, make_primitive
from .raster import RasterConfig, render

log = logging.getLogger("orbitcarve")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
INIT_METHODS = ("poisson", "hull", "mesh-file")
CHANNELS = ("rgb", "mask", "normal", "depth")


class UsageError(ValueError):
    """Invalid flags or configuration values (exit code 2)."""


class StageError(RuntimeError):
    """A pipeline stage failed at runtime (exit code 1)."""

    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"{stage}: {exc}")
        self.stage = stage


def default_threads() -> int:
    env = os.environ.get("ORBITCARVE_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise UsageError(f"ORBITCARVE_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise UsageError("ORBITCARVE_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


@dataclass
class PipelineConfig:
    init: str | None = None  # poisson | hull | mesh-file; None picks poisson if points are given
    init_mesh: str | None = None
    points: str | None = None
    grid_resolution: int = 96
    hull_iso: float = 0.5
    carve: CarveConfig = field(default_factory=CarveConfig)
    raster: RasterConfig = field(default_factory=RasterConfig)
    color_iterations: int = 200
    seed: int = 0
    threads: int = 1
    dataset: str | None = None
    out: str | None = None

    # flat keys accepted in the config file, besides carve and raster fields
    _OWN = ("init", "init_mesh", "points", "grid_resolution", "hull_iso", "color_iterations", "seed", "threads")

    @property
    def init_method(self) -> str:
        if self.init is not None:
            return self.init
        return "poisson" if self.points else "hull"

    def validate(self) -> None:
        if self.init is not None and self.init not in INIT_METHODS:
            raise UsageError(f"init must be one of {', '.join(INIT_METHODS)}, got {self.init!r}")
        method = self.init_method
        if method == "poisson" and not self.points:
            raise UsageError("init 'poisson' needs an oriented point cloud (--points)")
        if method == "mesh-file" and not self.init_mesh:
            raise UsageError("init 'mesh-file' needs --init-mesh")
        for label, path in (("dataset", self.dataset), ("points", self.points), ("init mesh", self.init_mesh)):
            if path and not Path(path).exists():
                raise UsageError(f"{label} file not found: {path}")
        if not 8 <= self.grid_resolution <= 512:
            raise UsageError(f"grid_resolution must be in [8, 512], got {self.grid_resolution}")
        if not 0.0 < self.hull_iso < 1.0:
            raise UsageError("hull_iso must be in (0, 1)")
        if self.color_iterations < 0:
            raise UsageError("color_iterations must be >= 0")
        if self.threads < 1:
            raise UsageError("threads must be >= 1")

    @classmethod
    def from_flat(cls, values: dict) -> PipelineConfig:
        carve_names = {f.name for f in fields(CarveConfig)}
        raster_names = {f.name for f in fields(RasterConfig)} - {"mode"}  # carving is always soft
        unknown = set(values) - carve_names - raster_names - set(cls._OWN)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        own = {k: v for k, v in values.items() if k in cls._OWN}
        try:
            carve_kw = {k: v for k, v in values.items() if k in carve_names}
            if "betas" in carve_kw:
                carve_kw["betas"] = tuple(carve_kw["betas"])
            raster = RasterConfig(**{k: v for k, v in values.items() if k in raster_names})
            return cls(carve=CarveConfig(**carve_kw), raster=raster, **own)
        except (TypeError, ValueError) as exc:
            raise UsageError(str(exc)) from None

    def to_flat(self) -> dict:
        out = {k: getattr(self, k) for k in self._OWN}
        out.update(self.carve.to_dict())
        out.update({k: v for k, v in asdict(self.raster).items() if k != "mode"})
        return out


def read_config_file(path) -> dict:
    """Flat JSON object of config keys."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict) or any(isinstance(v, dict) for v in doc.values()):
        raise UsageError(f"config file {path} must be a flat JSON object")
    return doc


def _stage(name: str, fn, *args, **kwargs):
    t0 = time.perf_counter()
    try:
        result = fn(*args, **kwargs)
    except (UsageError, StageError):
        raise
    except CarveError as exc:
        raise StageError(name, exc) from exc
    except (OSError, ValueError, RuntimeError, MeshFormatError) as exc:
        raise StageError(name, exc) from exc
    log.info("%s done in %.1fs", name, time.perf_counter() - t0)
    return result


# ---------------------------------------------------------------- commands


def cmd_gen_synthetic(args) -> int:
    try:
        rig = OrbitRig(
            radius=args.radius,
            elevation=args.elevation,
            azimuth_start=args.azimuth_start,
            fov_y=args.fov,
            views=args.views,
            width=args.size,
            height=args.size,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    normalization = None
    if args.mesh:
        # an explicit mesh overrides --shape; it is normalized into the unit box
        mesh = _stage("load mesh", load_mesh, args.mesh)
        normalization = Normalization.fit(mesh.vertices)
        mesh = normalization.apply_mesh(mesh)
        name = Path(args.mesh).stem
    else:
        if not 0 <= args.subdivision <= MAX_SUBDIVISION:
            raise UsageError(f"subdivision must be in [0, {MAX_SUBDIVISION}]")
        mesh = make_primitive(args.shape, args.subdivision)
        name = args.shape
    dataset = _stage("generate", generate_dataset, mesh, rig, args.out, name, args.threads, normalization)
    save_mesh(mesh, Path(args.out) / "source.ply")
    print(dataset.manifest_path)
    return EXIT_OK


def build_config(args) -> PipelineConfig:
    values = read_config_file(args.config) if args.config else {}
    flags = {
        "init": args.init,
        "init_mesh": args.init_mesh,
        "points": args.points,
        "iterations": args.iters,
        "render_size": args.render_size,
        "grid_resolution": args.grid_resolution,
        "color_iterations": args.color_iters,
        "seed": args.seed,
        "threads": args.threads,
        "sigma": args.sigma,
    }
    values.update({k: v for k, v in flags.items() if v is not None})
    values.setdefault("threads", default_threads())
    cfg = PipelineConfig.from_flat(values)
    cfg.carve = replace(cfg.carve, threads=cfg.threads)
    cfg.dataset = args.dataset
    cfg.out = args.out
    cfg.validate()
    return cfg


def initial_mesh(cfg: PipelineConfig, dataset) -> TriMesh:
    method = cfg.init_method
    if method == "mesh-file":
        mesh = load_mesh(cfg.init_mesh)
        return TriMesh(mesh.vertices, mesh.faces)
    if method == "poisson":
        cloud = load_point_cloud(cfg.points)
        grid = poisson_reconstruct(cloud, cfg.grid_resolution)
        return marching_cubes(grid, 0.0)
    grid = visual_hull(dataset.masks, dataset.cameras, cfg.grid_resolution).smoothed()
    return marching_cubes(grid, cfg.hull_iso)


def run_reconstruct(cfg: PipelineConfig) -> dict:
    """The full pipeline; returns the run summary (also written beside the mesh)."""
    t0 = time.perf_counter()
    out = Path(cfg.out)
    dataset = _stage("load dataset", load_dataset, cfg.dataset)
    init = _stage("init", initial_mesh, cfg, dataset)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        preflight = _stage("preflight", normal_preflight, init, dataset.resized(min(cfg.carve.render_size, dataset.width)))
    for w in caught:
        log.warning("%s", w.message)
    mesh, report = _stage("carve", carve, init, dataset, cfg.carve, cfg.raster)
    colored, color_report = _stage("colors", fit_colors, mesh, dataset, cfg.color_iterations, seed=cfg.seed)
    out.parent.mkdir(parents=True, exist_ok=True)
    _stage("save", save_mesh, colored, out)
    stem = out.with_suffix("")
    Path(f"{stem}.log").write_text(report.to_log(), encoding="utf-8")
    loss_doc = {"carve": report.to_dict(), "colors": color_report.to_dict()}
    Path(f"{stem}.report.json").write_text(json.dumps(loss_doc, indent=1) + "\n", encoding="utf-8")
    summary = {
        "version": __version__,
        "config": cfg.to_flat(),
        "dataset": str(cfg.dataset),
        "init_method": cfg.init_method,
        "init_vertices": init.n_vertices,
        "normal_preflight_deg": preflight,
        "vertices": colored.n_vertices,
        "faces": colored.n_faces,
        "final_loss": report.final_total,
        "loss_decreased": report.decreased,
        "wall_time_s": round(time.perf_counter() - t0, 3),
    }
    Path(f"{stem}.summary.json").write_text(json.dumps(summary, indent=1) + "\n", encoding="utf-8")
    return summary


def cmd_reconstruct(args) -> int:
    cfg = build_config(args)
    summary = run_reconstruct(cfg)
    print(f"wrote {cfg.out} ({summary['vertices']} vertices, final loss {summary['final_loss']:.6g})")
    return EXIT_OK


def cmd_eval(args) -> int:
    if args.samples < 1:
        raise UsageError("--samples must be >= 1")
    pred = _stage("load pred", load_mesh, args.pred)
    gt = _stage("load gt", load_mesh, args.gt)
    report = EvalReport(samples=args.samples, seed=args.seed)
    ch = _stage("chamfer", chamfer, pred, gt, args.samples, args.seed)
    report.chamfer_mean, report.chamfer_rms = ch.mean, ch.rms
    report.chamfer_a_to_b, report.chamfer_b_to_a = ch.a_to_b, ch.b_to_a
    report.normal_consistency = _stage("normal consistency", normal_consistency, pred, gt, args.samples, args.seed)
    if args.dataset:
        dataset = _stage("load dataset", load_dataset, args.dataset)
        iou = _stage("silhouette iou", silhouette_iou, pred, dataset)
        report.iou_per_view, report.iou_mean, report.iou_empty_views = iou.per_view, iou.mean, iou.empty_union
        if args.prompt:
            from .dataset import read_png

            prompt = read_png(args.prompt).astype(np.float64) / 255.0
            report.clip_score = _stage("clip score", clip_score, prompt, dataset.images, ToyEmbeddingProvider())
    out = Path(args.out) if args.out else Path(args.pred).with_suffix(".eval.json")
    _stage("write report", report.write, out)
    print(report.table())
    return EXIT_OK


def cmd_render(args) -> int:
    mesh = _stage("load mesh", load_mesh, args.mesh)
    dataset = _stage("load dataset", load_dataset, args.dataset)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = RasterConfig(mode="hard")
    for k, cam in enumerate(dataset.cameras):
        r = render(mesh, cam, config)
        image = {
            "rgb": lambda: encode_u8(r.color),
            "mask": lambda: encode_u8(r.mask),
            "normal": lambda: encode_normals(r.normal),
            "depth": lambda: encode_depth(r.depth),
        }[args.channel]()
        _stage("write", write_png, out_dir / f"{args.channel}_{k:03d}.png", image)
    print(f"wrote {len(dataset)} {args.channel} images to {out_dir}")
    return EXIT_OK


# ------------------------------------------------------------------ parser


def _int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="orbitcarve", description="Orbit-view mesh reconstruction by differentiable carving.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-synthetic", help="render a synthetic orbit dataset")
    g.add_argument("--shape", choices=("sphere", "cube", "capsule", "torus"), default="sphere")
    g.add_argument("--mesh", help="mesh file; overrides --shape")
    g.add_argument("--subdivision", type=int, default=4)
    g.add_argument("--views", type=int, default=36)
    g.add_argument("--size", type=int, default=256)
    g.add_argument("--radius", type=float, default=3.0)
    g.add_argument("--elevation", type=float, default=0.0)
    g.add_argument("--azimuth-start", type=float, default=0.0)
    g.add_argument("--fov", type=float, default=40.0)
    g.add_argument("--threads", type=int, default=None)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_synthetic)

    r = sub.add_parser("reconstruct", help="init, carve and color a mesh from a dataset")
    r.add_argument("--dataset", required=True, help="manifest.json")
    r.add_argument("--out", required=True, help="output mesh (.ply or .obj)")
    r.add_argument("--config", help="flat JSON config; flags take precedence")
    r.add_argument("--init", choices=INIT_METHODS)
    r.add_argument("--init-mesh")
    r.add_argument("--points", help="oriented point cloud PLY for poisson init")
    r.add_argument("--iters", type=_int)
    r.add_argument("--render-size", type=int)
    r.add_argument("--grid-resolution", type=int)
    r.add_argument("--color-iters", type=int)
    r.add_argument("--sigma", type=float)
    r.add_argument("--seed", type=int)
    r.add_argument("--threads", type=int)
    r.set_defaults(func=cmd_reconstruct)

    e = sub.add_parser("eval", help="compare a mesh against ground truth")
    e.add_argument("--pred", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--dataset", help="manifest for silhouette IoU")
    e.add_argument("--prompt", help="prompt image for the view embedding score (needs --dataset)")
    e.add_argument("--samples", type=int, default=20000)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", help="report path (default: <pred>.eval.json)")
    e.set_defaults(func=cmd_eval)

    d = sub.add_parser("render", help="re-render a mesh on a dataset's cameras")
    d.add_argument("--mesh", required=True)
    d.add_argument("--dataset", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--channel", choices=CHANNELS, default="rgb")
    d.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        if getattr(args, "threads", None) is None and args.command == "gen-synthetic":
            args.threads = default_threads()
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"orbitcarve: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"orbitcarve: {args.command} failed in stage {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, DatasetError, MeshError, MeshFormatError, EmptyMeshError, PoissonError, CarveError) as exc:
        print(f"orbitcarve: {args.command} failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
