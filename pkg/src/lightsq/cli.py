"""Command-line entry points: fit, eval, refine, decompose, serve.

Exit codes: 2 for I/O and file-format problems, 3 for a non-watertight mesh
without --force-parity, 4 when the pipeline produces an empty abstraction.
"""

from __future__ import annotations

import json
import sys
import warnings

import click
import numpy as np

from .config import RunConfig, parse_config_file
from .decomp import decompose, partition_labels
from .errors import LightSqError, MalformedFile, NonWatertightMesh, UnknownPrimitive
from .grid import TsdfGrid, load_grid, save_grid, save_labels
from .mesh import load_mesh, normalize_mesh, voxelize_mesh
from .metrics import evaluate
from .pipeline import Abstraction, multiscale_refine, run
from .superquadric import Superquadric

EXIT_IO = 2
EXIT_NOT_WATERTIGHT = 3
EXIT_EMPTY = 4


def _load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        return parse_config_file(path)
    except (OSError, MalformedFile) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_IO)


def _load_input(path: str, resolution: int, force_parity: bool):
    """Mesh or grid file -> (TsdfGrid, norm_scale, norm_translate)."""
    try:
        if path.lower().endswith((".obj", ".stl")):
            verts, faces = load_mesh(path)
            verts, scale, center = normalize_mesh(verts)
            grid = voxelize_mesh(verts, faces, resolution, force_parity=force_parity)
            return grid, scale, center
        grid = load_grid(path)
        return grid, 1.0, np.zeros(3)
    except NonWatertightMesh as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_NOT_WATERTIGHT)
    except (OSError, LightSqError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_IO)


def _write_json(data: dict, path: str | None) -> None:
    text = json.dumps(data, indent=2)
    if path is None:
        click.echo(text)
    else:
        try:
            with open(path, "w") as f:
                f.write(text + "\n")
        except OSError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_IO)


def _read_abstraction(path: str) -> Abstraction:
    try:
        with open(path) as f:
            return Abstraction.from_dict(json.load(f))
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        click.echo(f"error: {path}: {exc}", err=True)
        sys.exit(EXIT_IO)


def _export_obj(abstraction: Abstraction, path: str) -> None:
    lines = []
    offset = 0
    for p in abstraction.primitives:
        verts, tris = p.sq.tessellate()
        lines.append(f"o primitive_{p.id}")
        for v in verts:
            lines.append(f"v {v[0]:.6f} {v[1]:.6f} {v[2]:.6f}")
        for t in tris:
            lines.append(f"f {t[0]+1+offset} {t[1]+1+offset} {t[2]+1+offset}")
        offset += len(verts)
    try:
        with open(path, "w") as f:
            f.write("\n".join(lines) + "\n")
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_IO)


@click.group()
def main():
    """Superquadric shape abstraction toolkit."""


@main.command("fit")
@click.argument("input_path")
@click.option("-o", "--out", "out_path", default=None, help="abstraction JSON output")
@click.option("--res", "resolution", default=None, type=int, help="grid resolution")
@click.option("--config", "config_path", default=None, help="key=value config file")
@click.option("--export-obj", "obj_path", default=None, help="write union tessellation")
@click.option("--grid-out", default=None, help="also save the voxelized grid")
@click.option("--force-parity", is_flag=True, help="sign non-watertight meshes anyway")
def cmd_fit(input_path, out_path, resolution, config_path, obj_path, grid_out, force_parity):
    """Abstract a mesh or grid file into superquadrics."""
    cfg = _load_config(config_path)
    if resolution is not None:
        cfg.resolution = resolution
    grid, scale, center = _load_input(input_path, cfg.resolution, force_parity)
    abstraction = run(
        grid,
        fit_config=cfg.fit,
        decomp_config=cfg.decomp,
        prune_config=cfg.prune,
        k_per_partition=cfg.k_per_partition,
        norm_scale=scale,
        norm_translate=center,
    )
    if not abstraction.primitives:
        click.echo("error: empty abstraction", err=True)
        sys.exit(EXIT_EMPTY)
    _write_json(abstraction.to_dict(), out_path)
    if grid_out is not None:
        save_grid(grid, grid_out)
    if obj_path is not None:
        _export_obj(abstraction, obj_path)
    report = evaluate(abstraction, grid, seed=cfg.seed)
    click.echo(
        f"primitives={report.n_primitives} cd={report.cd:.4f} "
        f"emd={report.emd:.4f} iou={report.voxel_iou:.3f} "
        f"or={report.overlap_rate:.3f}",
        err=True,
    )


@main.command("eval")
@click.argument("abstraction_path")
@click.argument("reference_path")
@click.option("--csv", "csv_path", default=None, help="append one CSV row")
@click.option("--seed", default=0, type=int)
@click.option("--force-parity", is_flag=True)
def cmd_eval(abstraction_path, reference_path, csv_path, seed, force_parity):
    """Score an abstraction against a reference grid or mesh."""
    abstraction = _read_abstraction(abstraction_path)
    grid, scale, center = _load_input(
        reference_path, abstraction.resolution, force_parity
    )
    is_mesh = reference_path.lower().endswith((".obj", ".stl"))
    if is_mesh and (
        not np.isclose(scale, abstraction.norm_scale)
        or not np.allclose(center, abstraction.norm_translate)
    ):
        warnings.warn("normalization differs from abstraction meta, renormalizing")
    report = evaluate(abstraction, grid, seed=seed)
    click.echo(json.dumps(report.to_dict(), indent=2))
    if csv_path is not None:
        header = "cd,emd,voxel_iou,overlap_rate,n_primitives\n"
        row = (
            f"{report.cd},{report.emd},{report.voxel_iou},"
            f"{report.overlap_rate},{report.n_primitives}\n"
        )
        try:
            import os

            fresh = not os.path.exists(csv_path)
            with open(csv_path, "a") as f:
                if fresh:
                    f.write(header)
                f.write(row)
        except OSError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_IO)


@main.command("refine")
@click.argument("abstraction_path")
@click.argument("grid_path")
@click.option("--id", "target_id", required=True, type=int)
@click.option("--splits", default=2, type=int)
@click.option("-o", "--out", "out_path", default=None)
def cmd_refine(abstraction_path, grid_path, target_id, splits, out_path):
    """Refine one primitive into a finer local abstraction."""
    abstraction = _read_abstraction(abstraction_path)
    grid, _, _ = _load_input(grid_path, abstraction.resolution, False)
    try:
        refined = multiscale_refine(abstraction, grid, target_id, splits)
    except UnknownPrimitive as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_IO)
    _write_json(refined.to_dict(), out_path)


@main.command("decompose")
@click.argument("input_path")
@click.option("-o", "--out", "out_path", required=True, help="label volume output")
@click.option("--res", "resolution", default=None, type=int)
@click.option("--config", "config_path", default=None)
@click.option("--force-parity", is_flag=True)
def cmd_decompose(input_path, out_path, resolution, config_path, force_parity):
    """Dump the structure-aware partition labels of a shape."""
    cfg = _load_config(config_path)
    if resolution is not None:
        cfg.resolution = resolution
    grid, _, _ = _load_input(input_path, cfg.resolution, force_parity)
    parts = decompose(grid, cfg.decomp)
    labels = partition_labels(parts, grid.resolution)
    try:
        save_labels(labels, grid, out_path)
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_IO)
    click.echo(f"partitions={len(parts)}", err=True)


@main.command("serve")
@click.argument("grid_path")
@click.argument("abstraction_path")
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8008, type=int)
def cmd_serve(grid_path, abstraction_path, host, port):
    """Serve the interactive refinement API."""
    import uvicorn

    from .service import SessionState, create_app

    abstraction = _read_abstraction(abstraction_path)
    grid, _, _ = _load_input(grid_path, abstraction.resolution, False)
    app = create_app(SessionState(grid, abstraction))
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
