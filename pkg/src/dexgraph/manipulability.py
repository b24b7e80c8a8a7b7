"""Pairwise in-hand reachability between sampled gripper poses.

Entry ``(i, j)`` is 1 when the planner can carry pose ``i`` to pose ``j``
without regrasping. Reachability is decided exactly on the graph of valid
``(node, finger angle)`` states under the query's gripper context, which is
the same graph the planner searches, so no pairwise search is needed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .dmg import Dmg
from .errors import NoValidPoses
from .planner import CostWeights, GripperContext, _valid_runs
from .surface import OrientedSurface

REASONS = {
    "miss": "NoSecondaryContact",
    "aperture": "ApertureExceeded",
    "no_node": "NoSecondaryNode",
}


@dataclass(frozen=True, eq=False)
class PoseSample:
    contact: np.ndarray
    angle: float
    closing_dir: np.ndarray | None
    valid: bool
    reason: str = ""
    node: int | None = None
    grid_point: np.ndarray | None = None
    secondary_component: int | None = None

    def to_dict(self) -> dict:
        return {
            "contact": np.asarray(self.contact).tolist(),
            "angle": self.angle,
            "closing_dir": None if self.closing_dir is None else np.asarray(self.closing_dir).tolist(),
            "node": self.node,
            "valid": self.valid,
            "reason": self.reason,
        }


def _grid(lo, hi, step):
    # spans the box exactly; spacing is at most ``step``
    axes = [np.linspace(a, b, int(np.ceil((b - a) / step - 1e-9)) + 1) for a, b in zip(lo, hi)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)


def _context(dmg, surface, node, max_aperture, ray_radius=None):
    n = dmg.normals[node]
    return GripperContext(dmg, surface, -n, 0.0, n, max_aperture, ray_radius)


def sample_poses(dmg: Dmg, surface: OrientedSurface, grid_step: float | None = None, angle_step: float = 30.0,
                 max_aperture: float = 0.1, snap_radius: float | None = None, dedupe: bool = True,
                 closing_dirs=None, closing_tol: float = 5.0) -> list:
    """Grid the bounding box, sweep finger angles, and keep the poses the gripper can take.

    The closing direction is the inward normal of the snapped node. When
    ``closing_dirs`` is given, poses whose closing direction is more than
    ``closing_tol`` degrees from all of them are rejected. With ``dedupe``
    only the first sample per ``(node, angle)`` is kept.
    """
    grid_step = 2 * dmg.resolution if grid_step is None else grid_step
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    if angle_step <= 0 or abs(360.0 / angle_step - round(360.0 / angle_step)) > 1e-9:
        raise ValueError("angle_step must divide 360")
    radius = 2 * dmg.resolution if snap_radius is None else snap_radius
    step = dmg.finger.angle_step
    angles = np.arange(0.0, 360.0, angle_step)
    ks = np.rint(angles / step).astype(int) % dmg.finger.n_angles
    allowed = None
    if closing_dirs is not None:
        allowed = np.atleast_2d(np.asarray(closing_dirs, float))
        allowed = allowed / np.linalg.norm(allowed, axis=1, keepdims=True)
    cos_tol = np.cos(np.radians(closing_tol))
    contexts = {}
    out, seen = [], set()
    for g in _grid(surface.bbox[0], surface.bbox[1], grid_step):
        near = np.array(sorted(dmg.tree.query_ball_point(g, radius)), dtype=int)
        if near.size:
            order = np.argsort(np.linalg.norm(dmg.positions[near] - g, axis=1), kind="stable")
            near = near[order]
        for a, k in zip(angles, ks):
            if near.size == 0:
                out.append(PoseSample(g, float(a), None, False, "NoNearbyNode", grid_point=g))
                continue
            ok = near[dmg.masks[near, k]]
            if ok.size == 0:
                out.append(PoseSample(g, float(a), None, False, "NoAdmissibleNode", grid_point=g))
                continue
            node = int(ok[0])
            if dedupe and (node, int(k)) in seen:
                continue
            seen.add((node, int(k)))
            c = -dmg.normals[node]
            if allowed is not None and not np.any(allowed @ c >= cos_tol):
                out.append(PoseSample(dmg.positions[node], float(a), c, False, "ClosingDirectionExcluded", node, g))
                continue
            ctx = contexts.get(node)
            if ctx is None:
                ctx = contexts[node] = _context(dmg, surface, node, max_aperture)
            sec = ctx.secondary(node, int(k))
            if not sec.ok:
                out.append(PoseSample(dmg.positions[node], float(a), c, False, REASONS[sec.reason], node, g))
                continue
            out.append(PoseSample(dmg.positions[node], float(a), c, True, "", node, g,
                                  int(dmg.components[sec.node])))
    if not any(s.valid for s in out):
        raise NoValidPoses("no sampled pose admits a valid secondary contact")
    return out


def state_labels(ctx: GripperContext, nodes=None) -> np.ndarray:
    """Connected-component label of every valid ``(node, angle index)`` state, -1 if invalid.

    Only ``nodes`` (default: all) are considered. States are linked by
    rotations inside a valid run and by translations along DMG edges at a
    shared angle.
    """
    dmg = ctx.dmg
    n_ang = dmg.finger.n_angles
    nodes = np.arange(len(dmg)) if nodes is None else np.asarray(nodes, int)
    valid = np.zeros((len(dmg), n_ang), dtype=bool)
    rows, cols = [], []
    for v in nodes:
        comp = dmg.nodes[v].component
        idx = comp.indices
        ok = np.array([ctx.state_valid(int(v), int(k)) for k in idx])
        valid[v, idx] = ok
        runs = _valid_runs(comp, ok)
        for t in range(len(idx) - 1):
            if runs[t] >= 0 and runs[t] == runs[t + 1]:
                rows.append(v * n_ang + idx[t])
                cols.append(v * n_ang + idx[t + 1])
        if comp.full and len(idx) > 1 and runs[0] >= 0 and runs[0] == runs[-1]:
            rows.append(v * n_ang + idx[-1])
            cols.append(v * n_ang + idx[0])
    member = np.zeros(len(dmg), dtype=bool)
    member[nodes] = True
    for a, b in dmg.edges:
        if member[a] and member[b]:
            shared = np.flatnonzero(valid[a] & valid[b])
            rows.extend(a * n_ang + shared)
            cols.extend(b * n_ang + shared)
    size = len(dmg) * n_ang
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(size, size))
    _, labels = connected_components(graph, directed=False)
    labels = labels.reshape(len(dmg), n_ang)
    labels[~valid] = -1
    return labels


@dataclass(eq=False)
class ManipulabilityMatrix:
    entries: np.ndarray
    samples: list
    permutation: np.ndarray
    labels: np.ndarray

    @property
    def n_blocks(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    def ordered(self) -> np.ndarray:
        p = self.permutation
        return self.entries[np.ix_(p, p)]


def build_matrix(dmg: Dmg, surface: OrientedSurface, samples, weights: CostWeights | None = None,
                 max_aperture: float = 0.1) -> ManipulabilityMatrix:
    """Binary reachability matrix over the valid samples, block-ordered.

    ``weights`` only shape costs and cannot change reachability; the
    argument is accepted for symmetry with the planner.
    """
    valid = [s for s in samples if s.valid]
    if not valid:
        raise NoValidPoses("no valid samples to relate")
    P = len(valid)
    step = dmg.finger.angle_step
    n_ang = dmg.finger.n_angles
    nodes = np.array([s.node for s in valid])
    ks = np.rint(np.array([s.angle for s in valid]) / step).astype(int) % n_ang
    entries = np.zeros((P, P), dtype=np.uint8)
    cache = {}
    for i in range(P - 1):
        c = np.round(valid[i].closing_dir, 9)
        comp = int(dmg.components[nodes[i]])
        key = (tuple(c.tolist()), valid[i].secondary_component, comp)
        labels = cache.get(key)
        if labels is None:
            ctx = _context(dmg, surface, int(nodes[i]), max_aperture)
            ctx.secondary_component = valid[i].secondary_component
            members = np.flatnonzero(dmg.components == comp)
            labels = cache[key] = state_labels(ctx, members)
        li = labels[nodes[i], ks[i]]
        if li < 0:
            continue
        entries[i, i + 1:] = labels[nodes[i + 1:], ks[i + 1:]] == li
    entries = np.triu(entries, 1)
    entries = entries | entries.T
    perm, block = order_blocks(entries)
    return ManipulabilityMatrix(entries, valid, perm, block)


def order_blocks(entries) -> tuple:
    """Permutation making each connected component contiguous, and the block id of every index.

    Blocks are sorted by size (largest first), then by lowest member index.
    """
    entries = np.asarray(entries)
    n = entries.shape[0]
    if n == 0:
        return np.zeros(0, int), np.zeros(0, int)
    _, comp = connected_components(coo_matrix(entries != 0), directed=False)
    sizes = np.bincount(comp)
    first = np.full(len(sizes), n)
    np.minimum.at(first, comp, np.arange(n))
    order = sorted(range(len(sizes)), key=lambda c: (-sizes[c], first[c]))
    rank = np.empty(len(sizes), int)
    rank[order] = np.arange(len(order))
    labels = rank[comp]
    perm = np.lexsort((np.arange(n), labels))
    return perm, labels


def report_regrasp_areas(matrix: ManipulabilityMatrix, samples=None, k: int = 3, dmg: Dmg | None = None) -> list:
    """Contact-area extent and ``k`` representative poses for every block.

    The medoid comes first, the rest are picked by farthest-point sampling.
    """
    samples = matrix.samples if samples is None else [s for s in samples if s.valid]
    pts = np.array([s.contact for s in samples])
    out = []
    for b in range(matrix.n_blocks):
        members = np.flatnonzero(matrix.labels == b)
        P = pts[members]
        D = np.linalg.norm(P[:, None] - P[None], axis=-1)
        reps = [int(np.argmin(D.sum(axis=1)))]
        far = D[reps[0]].copy()
        while len(reps) < min(k, len(members)):
            nxt = int(np.argmax(far))
            if far[nxt] == 0:
                break
            reps.append(nxt)
            far = np.minimum(far, D[nxt])
        entry = {
            "block": b,
            "size": int(len(members)),
            "bbox": [P.min(axis=0).tolist(), P.max(axis=0).tolist()],
            "representatives": [samples[members[r]].to_dict() | {"index": int(members[r])} for r in reps],
        }
        if dmg is not None:
            entry["components"] = sorted({int(dmg.components[samples[m].node]) for m in members})
        out.append(entry)
    return out


def export_csv(matrix: ManipulabilityMatrix, path) -> None:
    np.savetxt(path, matrix.ordered(), fmt="%d", delimiter=",")


def export_pgm(matrix: ManipulabilityMatrix, path) -> None:
    """Binary P5 image of the ordered matrix (1 white, 0 black) plus a JSON sidecar."""
    path = Path(path)
    img = (matrix.ordered() * 255).astype(np.uint8)
    n = img.shape[0]
    with open(path, "wb") as f:
        f.write(f"P5\n{n} {n}\n255\n".encode("ascii"))
        f.write(img.tobytes())
    rows = []
    for r, i in enumerate(matrix.permutation):
        rows.append({"row": r, "sample": int(i), "block": int(matrix.labels[i])} | matrix.samples[i].to_dict())
    path.with_suffix(".json").write_text(json.dumps({"rows": rows}, indent=1))


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM file")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4][: w * h], dtype=np.uint8).reshape(h, w)
