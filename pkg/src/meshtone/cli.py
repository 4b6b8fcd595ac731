"""Command line entry point: ``meshtone {estimate,correct-texture,synth,render}``.

Exit codes: 0 success, 1 validation failure, 2 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import PipelineConfig, env_worker_count
from .consistency import (
    run_estimate,
    write_color_matrix_csv,
    write_face_colors_csv,
    write_gain_csv,
)
from .geometry import PinholeView
from .io import (
    copy_obj_with_texture,
    export_face_colored_mesh,
    load_image,
    load_mesh,
    load_textured_obj,
    load_views,
    save_image,
)
from .visibility import dump_visibility

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


class StageError(Exception):
    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"{stage}: {exc}")
        self.stage = stage
        self.exc = exc


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (OSError, ValueError) as exc:
        raise StageError(name, exc) from exc


# --------------------------------------------------------------------------
# config handling
# --------------------------------------------------------------------------

# flag -> PipelineConfig field
_CONFIG_FLAGS = {
    "alpha": float,
    "min_pixels": int,
    "visibility_fraction": float,
    "min_overlap": int,
    "agreement_threshold": float,
    "max_clipped_fraction": float,
    "min_patch_mean": float,
    "channels": str,
    "worker_count": int,
    "seed": int,
}
_CONFIG_SWITCHES = ("dump_gains", "dump_colors", "dump_visibility")


def _add_config_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("pipeline configuration")
    g.add_argument("--config", type=Path, help="flat key = value config file; flags override it")
    for name, typ in _CONFIG_FLAGS.items():
        kwargs = {"type": typ, "default": None, "dest": name}
        if name == "channels":
            kwargs["choices"] = ["rgb", "gray"]
        flag = "--workers" if name == "worker_count" else "--" + name.replace("_", "-")
        g.add_argument(flag, **kwargs)
    for name in _CONFIG_SWITCHES:
        g.add_argument("--" + name.replace("_", "-"), action="store_true", default=None, dest=name)


def resolve_config(args) -> PipelineConfig:
    """Defaults, then the config file, then the worker env var, then flags."""
    config = PipelineConfig()
    if getattr(args, "config", None) is not None:
        try:
            config = PipelineConfig.load(args.config)
        except OSError as exc:
            raise StageError("config", exc) from exc
    env_workers = env_worker_count()
    if env_workers is not None:
        config = config.updated(worker_count=env_workers)
    flags = {k: getattr(args, k, None) for k in (*_CONFIG_FLAGS, *_CONFIG_SWITCHES)}
    return config.updated(**flags)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def _write_estimate_outputs(est, mesh, config: PipelineConfig, out: Path) -> None:
    export_face_colored_mesh(mesh, est.table, out / "colored.ply")
    write_face_colors_csv(est.table, out / "face_colors.csv")
    if config.dump_gains:
        write_gain_csv([ch.gains for ch in est.channels], out / "gains.csv")
    if config.dump_colors:
        write_color_matrix_csv([ch.filled for ch in est.channels], out / "color_matrix.csv")
    if config.dump_visibility and est.buffers is not None:
        dump_visibility(est.buffers, est.observations, out / "visibility")


def _summary(mesh, est) -> str:
    return (
        f"faces={mesh.n_faces} colored={int(est.table.colored.sum())} "
        f"uncolored={est.table.n_uncolored} views={len(est.observations)} "
        f"gain_pairs={est.gain_pairs} gain_density={est.gain_density:.3f}"
    )


def cmd_estimate(args) -> int:
    config = resolve_config(args)
    mesh = _stage("load mesh", load_mesh, args.mesh)
    views = _stage("load cameras", load_views, args.cameras)
    if not views:
        raise StageError("load cameras", ValueError("camera file lists no views"))
    if mesh.n_faces == 0:
        print("warning: mesh has no faces; writing empty outputs", file=sys.stderr)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    config.save(out / "config.txt")
    est = _stage("estimate", run_estimate, mesh, views, config, keep_buffers=config.dump_visibility)
    _stage("write outputs", _write_estimate_outputs, est, mesh, config, out)
    print(_summary(mesh, est))
    return EXIT_OK


def cmd_correct_texture(args) -> int:
    from .texture import correct_atlas, write_report_csv

    config = resolve_config(args)
    mesh, atlas = _stage("load textured mesh", load_textured_obj, args.mesh)
    views = _stage("load cameras", load_views, args.cameras)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    config.save(out / "config.txt")
    est = _stage("estimate", run_estimate, mesh, views, config)
    colors = est.table.colors
    if colors.shape[1] == 1 and atlas.image.channels == 3:
        raise StageError("correct", ValueError("gray estimates cannot correct an RGB atlas; use --channels rgb"))
    result = _stage("correct", correct_atlas, atlas, mesh, est.table, config.min_patch_mean)
    image_name = "corrected.png"
    save_image(result.image, out / image_name)
    copy_obj_with_texture(args.mesh, out / Path(args.mesh).name, image_name)
    write_report_csv(result.report, out / "report.csv")
    write_face_colors_csv(est.table, out / "face_colors.csv")
    corrected = sum(not r.skipped for r in result.report)
    clamped = sum(r.clamped for r in result.report)
    print(f"{_summary(mesh, est)} corrected_patches={corrected} clamped_texels={clamped}")
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synth import SynthConfig, render_scene, write_dataset

    cfg = SynthConfig(
        scene=args.scene,
        subdivisions=args.subdivisions,
        view_count=args.views,
        rig=args.rig,
        gain_range=(args.gain_min, args.gain_max),
        noise_sigma=args.noise,
        outlier_fraction=args.outliers,
        seed=args.seed,
        width=args.size,
        height=args.size,
        channels=1 if args.gray else 3,
        elevation_deg=args.elevation,
    )
    mesh, truth, views = render_scene(cfg)
    out = write_dataset(args.output, mesh, truth, views, with_atlas=args.with_atlas, seed=args.seed)
    lines = [f"{k} = {v}" for k, v in vars(cfg).items()]
    (out / "synth_config.txt").write_text("\n".join(lines) + "\n")
    print(f"wrote {out}: faces={mesh.n_faces} views={len(views)}")
    return EXIT_OK


def _pick_view(args) -> PinholeView:
    if args.pose is not None:
        try:
            e = json.loads(args.pose)
            return PinholeView(e["intrinsics"], e["rotation"], e["translation"], e["width"], e["height"])
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise StageError("pose", ValueError(f"malformed pose JSON: {exc}")) from exc
    views = _stage("load cameras", load_views, args.cameras, load_images=False)
    if not 0 <= args.camera < len(views):
        raise StageError("camera", ValueError(f"camera index {args.camera} out of range [0, {len(views)})"))
    return views[args.camera]


def cmd_render(args) -> int:
    from .consistency import read_face_colors_csv
    from .geometry import TextureAtlas
    from .render import render_flat

    mesh = _stage("load mesh", load_mesh, args.mesh)
    view = _pick_view(args)
    atlas = None
    colors = mesh.face_colors
    if args.colors is not None:
        colors = _stage("load colors", read_face_colors_csv, args.colors).colors
    elif mesh.has_uvs and mesh.texture_path is not None:
        atlas = TextureAtlas(_stage("load texture", load_image, mesh.texture_path))
    image = render_flat(mesh, view, face_colors=colors, atlas=atlas)
    _stage("write image", save_image, image, args.output)
    print(f"wrote {args.output}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="meshtone", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="estimate per-face colors and write a colored PLY")
    p.add_argument("mesh", type=Path)
    p.add_argument("cameras", type=Path)
    p.add_argument("-o", "--output", type=Path, default=Path("out"))
    _add_config_args(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("correct-texture", help="correct a textured OBJ's atlas toward the estimated colors")
    p.add_argument("mesh", type=Path, help="textured OBJ with vt records and an MTL/atlas")
    p.add_argument("cameras", type=Path)
    p.add_argument("-o", "--output", type=Path, default=Path("out"))
    _add_config_args(p)
    p.set_defaults(func=cmd_correct_texture)

    p = sub.add_parser("synth", help="write a synthetic dataset with known albedos")
    p.add_argument("output", type=Path)
    p.add_argument("--scene", choices=["cube", "icosphere", "room-box"], default="cube")
    p.add_argument("--subdivisions", type=int, default=2)
    p.add_argument("--views", type=int, default=8)
    p.add_argument("--rig", choices=["orbit", "sparse-wide"], default="orbit")
    p.add_argument("--gain-min", type=float, default=0.5)
    p.add_argument("--gain-max", type=float, default=2.0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--outliers", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--elevation", type=float, default=40.0)
    p.add_argument("--gray", action="store_true")
    p.add_argument("--with-atlas", action="store_true", help="also write textured.obj with a best-view atlas")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("render", help="flat-render a colored PLY or textured OBJ")
    p.add_argument("mesh", type=Path)
    p.add_argument("cameras", type=Path, nargs="?")
    p.add_argument("--camera", type=int, default=0)
    p.add_argument("--pose", help="inline JSON camera entry instead of a cameras file")
    p.add_argument("--colors", type=Path, help="face_colors.csv to paint instead of the mesh's own colors")
    p.add_argument("-o", "--output", type=Path, default=Path("render.png"))
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "render" and args.pose is None and args.cameras is None:
            raise StageError("camera", ValueError("give a cameras file or --pose"))
        return args.func(args)
    except StageError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO if isinstance(err.exc, OSError) else EXIT_INVALID
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
