"""Dexterous Manipulation Graph construction, serialisation and export.

A node pairs a patch centroid with one circularly contiguous run of finger
angles that are collision free at that contact. Nodes of neighbouring
patches are joined when their angle runs overlap.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import EmptyGraph
from .surface import OrientedSurface, SurfacePatchGraph

logger = logging.getLogger(__name__)

FORMAT_NAME = "dexgraph.dmg"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class FingerModel:
    """Parallel-jaw finger: a ``length`` x ``width`` rectangle in the tangent plane."""

    length: float = 0.1
    width: float = 0.02
    height_clearance: float = 0.003
    angle_step: float = 5.0

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0 or self.height_clearance < 0:
            raise ValueError("finger dimensions must be positive")
        n = 360.0 / self.angle_step
        if self.angle_step <= 0 or abs(n - round(n)) > 1e-9:
            raise ValueError("angle_step must divide 360")

    @property
    def n_angles(self) -> int:
        return int(round(360.0 / self.angle_step))

    def angles(self) -> np.ndarray:
        return np.arange(self.n_angles) * self.angle_step


def tangent_frame(normal) -> tuple:
    """Shared zero-angle convention: world +x projected on the tangent plane.

    Falls back to +y when the normal is within ~8 degrees of the x axis.
    """
    n = np.asarray(normal, float)
    n = n / np.linalg.norm(n)
    ref = np.array([1.0, 0.0, 0.0]) if abs(n[0]) <= 0.99 else np.array([0.0, 1.0, 0.0])
    t1 = ref - (ref @ n) * n
    t1 /= np.linalg.norm(t1)
    return t1, np.cross(n, t1)


def finger_direction(normal, angle_deg) -> np.ndarray:
    t1, t2 = tangent_frame(normal)
    a = np.radians(angle_deg)
    return np.cos(a) * t1 + np.sin(a) * t2


def angle_in_frame(direction, normal, angle_step=None) -> float:
    """Angle (degrees, [0, 360)) of ``direction`` in the tangent frame of ``normal``."""
    t1, t2 = tangent_frame(normal)
    a = np.degrees(np.arctan2(direction @ t2, direction @ t1)) % 360.0
    if angle_step:
        a = (round(a / angle_step) * angle_step) % 360.0
    return float(a)


@dataclass(frozen=True)
class AngularComponent:
    """Maximal circular run of admissible angles, stored by grid index.

    ``start`` is the first index walking counter-clockwise and ``size`` the
    number of consecutive steps; ``size == n`` denotes the full circle.
    """

    start: int
    size: int
    n: int
    step: float

    def __post_init__(self):
        if not 1 <= self.size <= self.n:
            raise ValueError("component must be nonempty and fit the circle")

    @property
    def full(self) -> bool:
        return self.size == self.n

    @property
    def indices(self) -> np.ndarray:
        return (self.start + np.arange(self.size)) % self.n

    @property
    def angles(self) -> np.ndarray:
        return self.indices * self.step

    @cached_property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.n, dtype=bool)
        m[self.indices] = True
        m.setflags(write=False)
        return m

    def index_of(self, angle: float) -> int:
        return int(round(angle / self.step)) % self.n

    def contains(self, angle: float) -> bool:
        return bool(self.mask[self.index_of(angle)])

    def offset(self, index: int) -> int:
        """Position of ``index`` along the run, counted from ``start``."""
        return (index - self.start) % self.n

    def __contains__(self, angle):
        return self.contains(angle)


def split_components(angles, angle_step: float) -> list:
    """Split a set of grid angles (degrees) into maximal circular runs."""
    n = int(round(360.0 / angle_step))
    mask = np.zeros(n, dtype=bool)
    for a in np.atleast_1d(np.asarray(angles, float)):
        mask[int(round(a / angle_step)) % n] = True
    return components_from_mask(mask, angle_step)


def components_from_mask(mask, angle_step: float) -> list:
    mask = np.asarray(mask, dtype=bool)
    n = len(mask)
    if not mask.any():
        return []
    if mask.all():
        return [AngularComponent(0, n, n, angle_step)]
    # a run starts where the previous slot (circularly) is empty
    starts = np.flatnonzero(mask & ~np.roll(mask, 1))
    out = []
    for s in starts:
        size = 0
        while mask[(s + size) % n]:
            size += 1
        out.append(AngularComponent(int(s), size, n, angle_step))
    return out


def admissible_mask(surface: OrientedSurface, contact, normal, finger: FingerModel) -> np.ndarray:
    """Boolean mask over the angle grid: True where the finger is collision free.

    The finger occupies ``0 <= along <= length`` and ``|across| <= width/2``
    in the tangent plane; any surface point rising more than
    ``height_clearance`` above that plane inside the footprint blocks it.
    """
    p = np.asarray(contact, float)
    n = np.asarray(normal, float)
    n = n / np.linalg.norm(n)
    reach = float(np.hypot(finger.length, finger.width / 2))
    idx = surface.tree.query_ball_point(p, reach)
    rel = surface.points[idx] - p
    rel = rel[rel @ n > finger.height_clearance]
    if len(rel) == 0:
        return np.ones(finger.n_angles, dtype=bool)
    t1, t2 = tangent_frame(n)
    u, v = rel @ t1, rel @ t2
    a = np.radians(finger.angles())
    ca, sa = np.cos(a), np.sin(a)
    along = np.outer(u, ca) + np.outer(v, sa)
    across = np.outer(v, ca) - np.outer(u, sa)
    hit = (along >= 0) & (along <= finger.length) & (np.abs(across) <= finger.width / 2)
    return ~hit.any(axis=0)


def admissible_angles(surface: OrientedSurface, contact, normal, finger: FingerModel) -> np.ndarray:
    return finger.angles()[admissible_mask(surface, contact, normal, finger)]


def refine_by_normals(graph: SurfacePatchGraph, delta: float) -> SurfacePatchGraph:
    """Drop edges whose patch normals differ by more than ``delta``, then isolated patches."""
    if not 0 < delta <= 2:
        raise ValueError("delta must lie in (0, 2]")
    pos = {p.id: i for i, p in enumerate(graph.patches)}
    normals = graph.normals
    if len(graph.edges):
        ia = np.array([pos[int(a)] for a in graph.edges[:, 0]])
        ib = np.array([pos[int(b)] for b in graph.edges[:, 1]])
        diff = np.linalg.norm(normals[ia] - normals[ib], axis=1)
        edges = graph.edges[diff <= delta]
    else:
        edges = graph.edges
    connected = set(np.unique(edges).tolist())
    patches = tuple(p for p in graph.patches if p.id in connected)
    return SurfacePatchGraph(
        patches, edges.copy(), graph.resolution, graph.connectivity,
        {**graph.meta, "delta": float(delta)},
    )


@dataclass(frozen=True, eq=False)
class DmgNode:
    index: int
    patch: int
    j: int
    contact: np.ndarray
    normal: np.ndarray
    component: AngularComponent

    @property
    def id(self) -> tuple:
        return (self.patch, self.j)


@dataclass(eq=False)
class Dmg:
    """Nodes, undirected edges (``(E, 2)`` node indices, ``a < b``) and component labels."""

    nodes: tuple
    edges: np.ndarray
    components: np.ndarray
    finger: FingerModel
    delta: float
    resolution: float
    patch_components: int = 0
    removed_patches: tuple = ()
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.nodes)

    @cached_property
    def positions(self) -> np.ndarray:
        return np.array([n.contact for n in self.nodes]).reshape(-1, 3)

    @cached_property
    def normals(self) -> np.ndarray:
        return np.array([n.normal for n in self.nodes]).reshape(-1, 3)

    @cached_property
    def masks(self) -> np.ndarray:
        if not self.nodes:
            return np.zeros((0, self.finger.n_angles), dtype=bool)
        return np.array([n.component.mask for n in self.nodes])

    @cached_property
    def tree(self) -> cKDTree:
        return cKDTree(self.positions)

    @cached_property
    def frames(self) -> np.ndarray:
        """``(N, 2, 3)`` tangent axes defining angle zero and +90 at every node."""
        return np.array([tangent_frame(n) for n in self.normals]).reshape(-1, 2, 3)

    def direction(self, node: int, angle: float) -> np.ndarray:
        a = np.radians(angle)
        t1, t2 = self.frames[node]
        return np.cos(a) * t1 + np.sin(a) * t2

    @cached_property
    def adjacency(self) -> list:
        adj = [[] for _ in self.nodes]
        for a, b in self.edges:
            adj[int(a)].append(int(b))
            adj[int(b)].append(int(a))
        return adj

    @cached_property
    def edge_set(self) -> frozenset:
        return frozenset((int(a), int(b)) for a, b in self.edges)

    def has_edge(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in self.edge_set

    @cached_property
    def by_id(self) -> dict:
        return {n.id: n.index for n in self.nodes}

    @property
    def n_components(self) -> int:
        return int(self.components.max()) + 1 if len(self.components) else 0

    def nodes_at_patch(self, patch: int) -> list:
        return [n.index for n in self.nodes if n.patch == patch]


def _label_components(n_nodes, edges) -> np.ndarray:
    if n_nodes == 0:
        return np.zeros(0, dtype=int)
    e = np.asarray(edges, dtype=int).reshape(-1, 2)
    m = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n_nodes, n_nodes))
    _, raw = connected_components(m, directed=False)
    # relabel by first appearance so labels follow node order
    _, first = np.unique(raw, return_index=True)
    remap = np.empty(len(first), dtype=int)
    remap[np.argsort(first)] = np.arange(len(first))
    return remap[raw]


def build_dmg(
    graph: SurfacePatchGraph, surface: OrientedSurface, finger: FingerModel | None = None, delta: float = 0.07
) -> Dmg:
    """Build the DMG from a patch graph of ``surface``."""
    finger = finger or FingerModel()
    refined = refine_by_normals(graph, delta)
    n_cg = len(refined.components())

    nodes, per_patch, removed = [], {}, []
    for patch in refined.patches:
        mask = admissible_mask(surface, patch.centroid, patch.normal, finger)
        comps = components_from_mask(mask, finger.angle_step)
        if not comps:
            removed.append(patch.id)
            continue
        per_patch[patch.id] = []
        for j, comp in enumerate(comps):
            node = DmgNode(len(nodes), patch.id, j, patch.centroid.copy(), patch.normal.copy(), comp)
            nodes.append(node)
            per_patch[patch.id].append(node)
    if not nodes:
        raise EmptyGraph("every patch was eliminated while building the graph")
    if removed:
        logger.info("removed %d patches with no admissible finger angle", len(removed))

    edges = []
    for a, b in refined.edges:
        for na in per_patch.get(int(a), ()):
            for nb in per_patch.get(int(b), ()):
                if np.any(na.component.mask & nb.component.mask):
                    edges.append((min(na.index, nb.index), max(na.index, nb.index)))
    edges = np.array(sorted(set(edges)), dtype=int).reshape(-1, 2)
    labels = _label_components(len(nodes), edges)
    return Dmg(
        tuple(nodes), edges, labels, finger, float(delta), float(graph.resolution),
        n_cg, tuple(removed), {"n_patches": len(graph.patches), "n_refined_patches": len(refined.patches)},
    )


# --------------------------------------------------------------------------- I/O


def dmg_to_dict(dmg: Dmg) -> dict:
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "params": {
            "delta": dmg.delta,
            "resolution": dmg.resolution,
            "finger": {
                "length": dmg.finger.length,
                "width": dmg.finger.width,
                "height_clearance": dmg.finger.height_clearance,
                "angle_step": dmg.finger.angle_step,
            },
        },
        "nodes": [
            {
                "id": [n.patch, n.j],
                "contact": n.contact.tolist(),
                "normal": n.normal.tolist(),
                "angles": {"start": n.component.start * dmg.finger.angle_step, "count": n.component.size},
            }
            for n in dmg.nodes
        ],
        "edges": dmg.edges.tolist(),
        "components": dmg.components.tolist(),
        "patch_components": dmg.patch_components,
        "removed_patches": list(dmg.removed_patches),
        "meta": dmg.meta,
    }


def dmg_from_dict(data: dict) -> Dmg:
    if data.get("format") != FORMAT_NAME:
        raise ValueError("not a dexgraph DMG document")
    if data.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported DMG version {data.get('version')}")
    p = data["params"]
    finger = FingerModel(**p["finger"])
    nodes = []
    for i, nd in enumerate(data["nodes"]):
        comp = AngularComponent(
            int(round(nd["angles"]["start"] / finger.angle_step)) % finger.n_angles,
            int(nd["angles"]["count"]), finger.n_angles, finger.angle_step,
        )
        nodes.append(DmgNode(i, int(nd["id"][0]), int(nd["id"][1]),
                             np.array(nd["contact"], float), np.array(nd["normal"], float), comp))
    return Dmg(
        tuple(nodes),
        np.array(data["edges"], dtype=int).reshape(-1, 2),
        np.array(data["components"], dtype=int),
        finger, float(p["delta"]), float(p["resolution"]),
        int(data.get("patch_components", 0)), tuple(data.get("removed_patches", ())),
        dict(data.get("meta", {})),
    )


def save_dmg(dmg: Dmg, path) -> None:
    with open(path, "w") as fh:
        json.dump(dmg_to_dict(dmg), fh, indent=1)


def load_dmg(path) -> Dmg:
    with open(path) as fh:
        return dmg_from_dict(json.load(fh))


def to_dot(dmg: Dmg) -> str:
    """Graphviz source with one cluster per connected component."""
    lines = ["graph dmg {", "  node [shape=point];"]
    for label in range(dmg.n_components):
        lines.append(f"  subgraph cluster_{label} {{")
        lines.append(f'    label="component {label}";')
        for idx in np.flatnonzero(dmg.components == label):
            n = dmg.nodes[idx]
            a0 = n.component.start * dmg.finger.angle_step
            a1 = a0 + (n.component.size - 1) * dmg.finger.angle_step
            lines.append(f'    n{idx} [tooltip="p{n.patch} j{n.j} [{a0:g}, {a1:g}]"];')
        lines.append("  }")
    for a, b in dmg.edges:
        lines.append(f"  n{a} -- n{b};")
    lines.append("}")
    return "\n".join(lines) + "\n"
