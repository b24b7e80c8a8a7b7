"""Command-line front end: build, plan, matrix, simulate, export."""

from __future__ import annotations

import functools
import json
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path

import click
import numpy as np

from .config import Config, load_config, override
from .dmg import build_dmg, load_dmg, save_dmg, to_dot
from .ects import simulate_execution
from .errors import ContactLost, DexGraphError, ExecutionStall, NoPath, NoPushPoint
from .manipulability import (build_matrix, export_csv, export_pgm, report_regrasp_areas,
                             sample_poses)
from .planner import grasp_from_dict, plan, plan_to_dict, sequence_from_dict
from .shapes import ShapeSpec
from .surface import load_surface, save_xyz, segment

EXIT_INPUT, EXIT_NOPATH, EXIT_EXECUTION = 1, 2, 3

logger = logging.getLogger("dexgraph")


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except NoPath as exc:
            _fail(EXIT_NOPATH, f"no path: {exc} (start component {exc.start_component}, "
                               f"goal component {exc.goal_component})")
        except (ExecutionStall, ContactLost, NoPushPoint) as exc:
            _fail(EXIT_EXECUTION, f"{type(exc).__name__}: {exc}")
        except (DexGraphError, ValueError, OSError, KeyError) as exc:
            _fail(EXIT_INPUT, f"{type(exc).__name__}: {exc}")
    return wrapper


def _vector(text: str) -> np.ndarray:
    try:
        v = np.array([float(x) for x in text.split(",")])
    except ValueError:
        raise click.BadParameter(f"{text!r} is not a comma-separated vector") from None
    if v.size != 3:
        raise click.BadParameter(f"{text!r} needs three components")
    return v


def _config(ctx: click.Context, extra: dict) -> Config:
    cfg = ctx.obj["config"]
    sets = list(ctx.obj["sets"])
    sets += [f"{k}={json.dumps(v)}" for k, v in extra.items() if v is not None]
    return override(cfg, sets) if sets else cfg


def _out(ctx) -> Path:
    out = Path(ctx.obj["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _surface_for(dmg_path: Path, dmg, surface_path):
    if surface_path is None:
        name = dmg.meta.get("surface")
        if not name:
            raise ValueError("DMG file does not reference a surface; pass --surface")
        surface_path = dmg_path.parent / name
    return load_surface(surface_path)


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="TOML or JSON config file.")
@click.option("--out-dir", default=".", show_default=True, help="Directory for outputs.")
@click.option("--set", "sets", multiple=True, metavar="KEY=VALUE",
              help="Override any config field, e.g. dmg.delta=0.1 (repeatable).")
@click.option("-v", "--verbose", is_flag=True)
@click.pass_context
def main(ctx, config_path, out_dir, sets, verbose):
    """Plan in-hand regrasps on the dexterous manipulation graph."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s | %(name)s | %(message)s")
    try:
        cfg = load_config(config_path) if config_path else Config()
    except FileNotFoundError:
        _fail(EXIT_INPUT, f"config file {config_path} not found")
    except ValueError as exc:
        _fail(EXIT_INPUT, f"bad config: {exc}")
    ctx.obj = {"config": cfg, "out_dir": out_dir, "sets": sets}


@main.command("config")
@click.pass_context
@_guarded
def config_cmd(ctx):
    """Print the effective configuration as JSON."""
    click.echo(json.dumps(_config(ctx, {}).to_dict(), indent=1, sort_keys=True))


@main.command()
@click.option("--input", "input_path", type=click.Path(dir_okay=False), default=None,
              help="PLY, OBJ or XYZ point cloud.")
@click.option("--shape", default=None, help="Generated solid, e.g. box:0.1,0.1,0.02.")
@click.option("--pitch", default=0.002, show_default=True, help="Sampling pitch for --shape (m).")
@click.option("--resolution", type=float, default=None, help="Segmentation resolution (m).")
@click.option("--delta", type=float, default=None, help="Normal-difference threshold.")
@click.pass_context
@_guarded
def build(ctx, input_path, shape, pitch, resolution, delta):
    """Segment a surface and build its DMG."""
    cfg = _config(ctx, {"segmentation.resolution": resolution, "dmg.delta": delta})
    if (input_path is None) == (shape is None):
        raise ValueError("give exactly one of --input or --shape")
    if shape is not None:
        surface = ShapeSpec.parse(shape, pitch).build()
        source = {"shape": shape, "pitch": pitch}
    else:
        surface = load_surface(input_path, cfg.normal_k, cfg.input_scale)
        source = {"input": str(input_path)}
    t0 = time.perf_counter()
    graph = segment(surface, cfg.segmentation.resolution, connectivity=cfg.segmentation.connectivity)
    dmg = build_dmg(graph, surface, cfg.dmg.finger(), cfg.dmg.delta)
    wall = time.perf_counter() - t0
    out = _out(ctx)
    dmg.meta.update({"surface": "surface.xyz", "source": source})
    save_xyz(surface, out / "surface.xyz")
    save_dmg(dmg, out / "dmg.json")
    (out / "dmg.dot").write_text(to_dot(dmg))
    stats = {
        "points": len(surface),
        "patches": len(graph.patches),
        "nodes": len(dmg),
        "edges": int(len(dmg.edges)),
        "components": dmg.n_components,
        "patch_components": dmg.patch_components,
        "removed_patches": len(dmg.removed_patches),
        "wall_time": round(wall, 4),
    }
    _dump(stats, out / "build_stats.json")
    click.echo(json.dumps(stats, sort_keys=True))


@main.command("plan")
@click.argument("dmg_path", type=click.Path(dir_okay=False))
@click.option("--start", "start", required=True, help="Start contact x,y,z.")
@click.option("--start-angle", type=float, required=True, help="Start finger angle (deg).")
@click.option("--goal", "goal", required=True, help="Goal contact x,y,z.")
@click.option("--goal-angle", type=float, required=True, help="Goal finger angle (deg).")
@click.option("--surface", "surface_path", default=None, help="Surface file if not next to the DMG.")
@click.option("--max-aperture", type=float, default=None)
@click.pass_context
@_guarded
def plan_cmd(ctx, dmg_path, start, start_angle, goal, goal_angle, surface_path, max_aperture):
    """Plan a regrasp between two finger placements."""
    cfg = _config(ctx, {"planner.max_aperture": max_aperture})
    dmg_path = Path(dmg_path)
    dmg = load_dmg(dmg_path)
    surface = _surface_for(dmg_path, dmg, surface_path)
    p = plan(dmg, surface, _vector(start), start_angle, _vector(goal), goal_angle,
             cfg.planner.weights(), cfg.planner.max_aperture)
    doc = plan_to_dict(p)
    doc["request"] = {
        "start": {"contact": _vector(start).tolist(), "angle": start_angle},
        "goal": {"contact": _vector(goal).tolist(), "angle": goal_angle},
        "weights": asdict(cfg.planner.weights()),
        "max_aperture": cfg.planner.max_aperture,
        "dmg": dmg_path.name,
    }
    out = _out(ctx)
    _dump(doc, out / "plan.json")
    rows = ["step,node,x,y,z,angle"]
    angles = doc["translation_angles"] + [p.goal.principal_angle]
    for i, (n, a) in enumerate(zip(doc["node_path"], angles)):
        x, y, z = dmg.positions[n]
        rows.append(f"{i},{n},{x:.9g},{y:.9g},{z:.9g},{a:g}")
    (out / "path.csv").write_text("\n".join(rows) + "\n")
    click.echo(json.dumps({"nodes": len(doc["node_path"]), "primitives": len(doc["sequence"]["steps"]),
                           "cost": doc["cost"]}, sort_keys=True))


@main.command()
@click.argument("dmg_path", type=click.Path(dir_okay=False))
@click.option("--surface", "surface_path", default=None)
@click.option("--grid-step", type=float, default=None)
@click.option("--angle-step", type=float, default=None)
@click.pass_context
@_guarded
def matrix(ctx, dmg_path, surface_path, grid_step, angle_step):
    """Manipulability matrix, block-ordered, with regrasp areas."""
    cfg = _config(ctx, {"manipulability.grid_step": grid_step, "manipulability.angle_step": angle_step})
    dmg_path = Path(dmg_path)
    dmg = load_dmg(dmg_path)
    surface = _surface_for(dmg_path, dmg, surface_path)
    m = cfg.manipulability
    samples = sample_poses(dmg, surface, m.grid_step, m.angle_step, cfg.planner.max_aperture,
                           closing_dirs=m.closing_dirs)
    M = build_matrix(dmg, surface, samples, cfg.planner.weights(), cfg.planner.max_aperture)
    out = _out(ctx)
    export_csv(M, out / "matrix.csv")
    export_pgm(M, out / "matrix.pgm")
    areas = report_regrasp_areas(M, k=m.representatives, dmg=dmg)
    rejected = {}
    for s in samples:
        if not s.valid:
            rejected[s.reason] = rejected.get(s.reason, 0) + 1
    summary = {"samples": len(samples), "valid": len(M.samples), "blocks": M.n_blocks, "rejected": rejected}
    _dump(summary | {"areas": areas}, out / "blocks.json")
    click.echo(json.dumps(summary, sort_keys=True))


@main.command()
@click.argument("dmg_path", type=click.Path(dir_okay=False))
@click.argument("plan_path", type=click.Path(dir_okay=False))
@click.option("--surface", "surface_path", default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--v-max", type=float, default=None)
@click.pass_context
@_guarded
def simulate(ctx, dmg_path, plan_path, surface_path, alpha, v_max):
    """Kinematically execute a plan with the dual-arm controller."""
    cfg = _config(ctx, {"ects.alpha": alpha, "ects.v_max": v_max})
    dmg_path = Path(dmg_path)
    dmg = load_dmg(dmg_path)
    surface = _surface_for(dmg_path, dmg, surface_path)
    doc = json.loads(Path(plan_path).read_text())
    seq = sequence_from_dict(doc["sequence"])
    start = grasp_from_dict(doc["start"]) if doc.get("start") else seq.start
    res = simulate_execution(surface, dmg, seq, start, cfg.ects.params(), cfg.ects.gains(),
                             depth=cfg.ects.depth, comfort_arc=cfg.planner.comfort_arc)
    out = _out(ctx)
    with open(out / "trajectory.jsonl", "w") as fh:
        for rec in res.records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    report = res.report | {"warnings": res.warnings}
    _dump(report, out / "report.json")
    click.echo(json.dumps(res.report, sort_keys=True))


@main.command()
@click.argument("dmg_path", type=click.Path(dir_okay=False))
@click.pass_context
@_guarded
def export(ctx, dmg_path):
    """Write DOT, node and edge tables for external viewers."""
    dmg = load_dmg(dmg_path)
    out = _out(ctx)
    (out / "dmg.dot").write_text(to_dot(dmg))
    step = dmg.finger.angle_step
    rows = ["node,patch,j,x,y,z,nx,ny,nz,angle_start,angle_count,component"]
    for n in dmg.nodes:
        rows.append(",".join(str(v) for v in (
            n.index, n.patch, n.j, *[f"{x:.9g}" for x in n.contact], *[f"{x:.9g}" for x in n.normal],
            f"{n.component.start * step:g}", n.component.size, int(dmg.components[n.index]))))
    (out / "nodes.csv").write_text("\n".join(rows) + "\n")
    (out / "edges.csv").write_text("a,b\n" + "".join(f"{a},{b}\n" for a, b in dmg.edges))
    click.echo(json.dumps({"nodes": len(dmg), "edges": int(len(dmg.edges))}))


if __name__ == "__main__":
    main()
