"""Object geometry: oriented point clouds, patch segmentation and ray queries."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateGeometry, ResolutionTooCoarse, TooFewPoints, UnreadableFile

logger = logging.getLogger(__name__)

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


@dataclass(frozen=True, eq=False)
class OrientedSurface:
    """Point set with one outward unit normal per point (meters).

    Arrays are copied, normalised and made read-only on construction, so a
    surface can be shared freely between planners and simulations.
    """

    points: np.ndarray
    normals: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 3)
        nrm = np.array(self.normals, dtype=float).reshape(-1, 3)
        if len(pts) != len(nrm):
            raise ValueError("points and normals must have the same length")
        if len(pts) < 4:
            raise TooFewPoints(f"need at least 4 points, got {len(pts)}")
        lengths = np.linalg.norm(nrm, axis=1)
        if np.any(lengths < 1e-12) or not np.all(np.isfinite(pts)):
            raise DegenerateGeometry("zero-length normal or non-finite point")
        nrm = nrm / lengths[:, None]
        pts.setflags(write=False)
        nrm.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "normals", nrm)

    def __len__(self):
        return len(self.points)

    @cached_property
    def bbox(self) -> np.ndarray:
        """``(2, 3)`` array holding the min and max corners."""
        return np.stack([self.points.min(axis=0), self.points.max(axis=0)])

    @cached_property
    def tree(self) -> cKDTree:
        return cKDTree(self.points)

    @cached_property
    def spacing(self) -> float:
        """Median nearest-neighbour distance, a proxy for the sampling pitch."""
        d, _ = self.tree.query(self.points, k=2)
        return float(np.median(d[:, 1]))

    @property
    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.bbox[1] - self.bbox[0]))

    def transformed(self, rotation=None, translation=None) -> "OrientedSurface":
        R = np.eye(3) if rotation is None else np.asarray(rotation, float)
        t = np.zeros(3) if translation is None else np.asarray(translation, float)
        return OrientedSurface(self.points @ R.T + t, self.normals @ R.T)

    @staticmethod
    def concatenate(surfaces) -> "OrientedSurface":
        return OrientedSurface(
            np.vstack([s.points for s in surfaces]), np.vstack([s.normals for s in surfaces])
        )


# --------------------------------------------------------------------------- loading


def _read_ply(path: Path):
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"ply":
            raise UnreadableFile(f"{path}: missing 'ply' magic")
        fmt = None
        elements = []  # (name, count, [(prop, dtype) | ("list", ...)])
        while True:
            line = fh.readline()
            if not line:
                raise UnreadableFile(f"{path}: truncated header")
            words = line.decode("ascii", "replace").split()
            if not words or words[0] in ("comment", "obj_info"):
                continue
            if words[0] == "format":
                fmt = words[1]
            elif words[0] == "element":
                elements.append((words[1], int(words[2]), []))
            elif words[0] == "property":
                if not elements:
                    raise UnreadableFile(f"{path}: property before element")
                if words[1] == "list":
                    elements[-1][2].append(("list", words[2], words[3], words[4]))
                else:
                    elements[-1][2].append((words[2], _PLY_TYPES[words[1]]))
            elif words[0] == "end_header":
                break
        body = fh.read()

    if fmt not in ("ascii", "binary_little_endian"):
        raise UnreadableFile(f"{path}: unsupported PLY format {fmt!r}")
    names = [e[0] for e in elements]
    if "vertex" not in names:
        raise UnreadableFile(f"{path}: no vertex element")
    vi = names.index("vertex")
    name, count, props = elements[vi]
    if any(p[0] == "list" for p in props):
        raise UnreadableFile(f"{path}: list properties on vertices are not supported")

    if fmt == "ascii":
        lines = body.decode("ascii", "replace").splitlines()
        offset = sum(e[1] for e in elements[:vi])
        rows = [ln.split() for ln in lines[offset:offset + count]]
        if len(rows) != count:
            raise UnreadableFile(f"{path}: expected {count} vertex rows")
        table = np.array(rows, dtype=float)
        columns = {p[0]: table[:, i] for i, p in enumerate(props)}
    else:
        offset = 0
        for _, n, eprops in elements[:vi]:
            if any(p[0] == "list" for p in eprops):
                raise UnreadableFile(f"{path}: variable-size element precedes vertices")
            offset += n * np.dtype([(p[0], "<" + p[1]) for p in eprops]).itemsize
        dtype = np.dtype([(p[0], "<" + p[1]) for p in props])
        arr = np.frombuffer(body, dtype=dtype, count=count, offset=offset)
        columns = {p[0]: arr[p[0]].astype(float) for p in props}

    try:
        points = np.column_stack([columns["x"], columns["y"], columns["z"]])
    except KeyError as exc:
        raise UnreadableFile(f"{path}: vertex lacks coordinate {exc}") from None
    normals = None
    if all(k in columns for k in ("nx", "ny", "nz")):
        normals = np.column_stack([columns["nx"], columns["ny"], columns["nz"]])
    return points, normals


def _read_obj(path: Path):
    verts, vnorms = [], []
    with open(path, encoding="utf-8", errors="replace") as fh:
        for line in fh:
            if line.startswith("v "):
                verts.append([float(x) for x in line.split()[1:4]])
            elif line.startswith("vn "):
                vnorms.append([float(x) for x in line.split()[1:4]])
    points = np.array(verts, dtype=float).reshape(-1, 3)
    # vn entries only map onto vertices when the file lists them one-to-one
    normals = np.array(vnorms, dtype=float) if len(vnorms) == len(verts) and verts else None
    return points, normals


def _read_xyz(path: Path):
    table = np.loadtxt(path, ndmin=2)
    if table.shape[1] == 3:
        return table, None
    if table.shape[1] == 6:
        return table[:, :3], table[:, 3:]
    raise UnreadableFile(f"{path}: expected 3 or 6 columns, got {table.shape[1]}")


def estimate_normals(points: np.ndarray, k: int = 12) -> np.ndarray:
    """Plane-fit normals over the ``k`` nearest neighbours, oriented outward.

    Orientation points away from the cloud centroid; normals nearly tangent
    to that radial direction take the majority sign of their confidently
    oriented neighbours instead.
    """
    points = np.asarray(points, float)
    k = int(min(max(k, 3), len(points)))
    tree = cKDTree(points)
    _, nbr = tree.query(points, k=k)
    local = points[nbr] - points[nbr].mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", local, local)
    _, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]

    radial = points - points.mean(axis=0)
    rnorm = np.linalg.norm(radial, axis=1)
    cosang = np.einsum("ij,ij->i", normals, radial) / np.maximum(rnorm, 1e-12)
    normals[cosang < 0] *= -1
    confident = np.abs(cosang) >= 0.1
    if not confident.any():
        return normals
    # propagate orientation into ambiguous regions, breadth-first over the k-NN graph
    for _ in range(len(points)):
        pending = np.flatnonzero(~confident)
        if pending.size == 0:
            break
        newly = []
        for i in pending:
            ref = nbr[i][confident[nbr[i]]]
            if ref.size == 0:
                continue
            if np.sum(normals[ref] @ normals[i]) < 0:
                normals[i] *= -1
            newly.append(i)
        if not newly:
            break
        confident[newly] = True
    return normals


def load_surface(path, normal_k: int = 12, input_scale: float = 1.0) -> OrientedSurface:
    """Read a PLY, OBJ or XYZ point cloud, estimating normals when absent."""
    path = Path(path)
    if not path.is_file():
        raise UnreadableFile(f"{path}: no such file")
    suffix = path.suffix.lower()
    try:
        if suffix == ".ply":
            points, normals = _read_ply(path)
        elif suffix == ".obj":
            points, normals = _read_obj(path)
        else:
            points, normals = _read_xyz(path)
    except UnreadableFile:
        raise
    except (OSError, ValueError, KeyError, IndexError) as exc:
        raise UnreadableFile(f"{path}: {exc}") from exc

    points = np.asarray(points, float) * float(input_scale)
    if len(points) < 4:
        raise TooFewPoints(f"{path}: {len(points)} points")
    sv = np.linalg.svd(points - points.mean(axis=0), compute_uv=False)
    if sv[1] <= 1e-9 * max(sv[0], 1e-300):
        raise DegenerateGeometry(f"{path}: points are collinear or coincident")
    if normals is None:
        normals = estimate_normals(points, normal_k)
    return OrientedSurface(points, normals)


def save_xyz(surface: OrientedSurface, path) -> None:
    np.savetxt(path, np.hstack([surface.points, surface.normals]), fmt="%.9g")


# --------------------------------------------------------------------------- segmentation


@dataclass(frozen=True)
class Patch:
    id: int
    centroid: np.ndarray
    normal: np.ndarray
    members: np.ndarray


@dataclass(frozen=True, eq=False)
class SurfacePatchGraph:
    """Patches with centroids, normals, member point indices and adjacency.

    ``edges`` is an ``(E, 2)`` integer array of patch ids with ``a < b``.
    Patch ids survive pruning, so they stay valid references into the
    original segmentation.
    """

    patches: tuple
    edges: np.ndarray
    resolution: float
    connectivity: int = 26
    meta: dict = field(default_factory=dict)

    @cached_property
    def ids(self) -> np.ndarray:
        return np.array([p.id for p in self.patches], dtype=int)

    @cached_property
    def centroids(self) -> np.ndarray:
        return np.array([p.centroid for p in self.patches]).reshape(-1, 3)

    @cached_property
    def normals(self) -> np.ndarray:
        return np.array([p.normal for p in self.patches]).reshape(-1, 3)

    def patch(self, pid: int) -> Patch:
        return self.patches[self._pos[pid]]

    @cached_property
    def _pos(self) -> dict:
        return {p.id: i for i, p in enumerate(self.patches)}

    def neighbors(self) -> dict:
        out = {p.id: [] for p in self.patches}
        for a, b in self.edges:
            out[int(a)].append(int(b))
            out[int(b)].append(int(a))
        return out

    def components(self) -> list:
        """Connected components as lists of patch ids, ordered by smallest id."""
        parent = {p.id: p.id for p in self.patches}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for a, b in self.edges:
            ra, rb = find(int(a)), find(int(b))
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
        groups = {}
        for p in self.patches:
            groups.setdefault(find(p.id), []).append(p.id)
        return [groups[k] for k in sorted(groups)]


def _offsets(connectivity: int) -> np.ndarray:
    limit = {6: 1, 18: 2, 26: 3}.get(connectivity)
    if limit is None:
        raise ValueError("connectivity must be 6, 18 or 26")
    offs = [o for o in product((-1, 0, 1), repeat=3) if sum(map(abs, o)) <= limit]
    return np.array(offs, dtype=np.int64)


def _seed_points(points, normals, lo, resolution, nvox, cos_split):
    idx = np.minimum(np.floor((points - lo) / resolution).astype(np.int64), nvox - 1)
    keys = np.ravel_multi_index(idx.T, nvox)
    order = np.argsort(keys, kind="stable")
    _, starts = np.unique(keys[order], return_index=True)
    if len(starts) == 1:
        members = order
        c = points[members].mean(axis=0)
        return [int(members[np.argmin(np.linalg.norm(points[members] - c, axis=1))])]
    seeds = []
    for members in np.split(order, starts[1:]):
        remaining = members
        while remaining.size:
            mean_n = normals[remaining].sum(axis=0)
            ref = remaining[int(np.argmax(normals[remaining] @ mean_n))]
            mask = normals[remaining] @ normals[ref] >= cos_split
            cluster = remaining[mask]
            c = points[cluster].mean(axis=0)
            seeds.append(int(cluster[np.argmin(np.linalg.norm(points[cluster] - c, axis=1))]))
            remaining = remaining[~mask]
    return seeds


def _adjacency(points, labels, voxel, connectivity):
    cell = np.floor((points - points.min(axis=0)) / voxel).astype(np.int64) + 1
    dims = cell.max(axis=0) + 2
    keys = np.ravel_multi_index(cell.T, dims)
    table = np.unique(np.column_stack([keys, labels]), axis=0)
    K, L = table[:, 0], table[:, 1]
    pairs = []
    for off in _offsets(connectivity):
        shift = int(np.ravel_multi_index(tuple(1 + off), dims) - np.ravel_multi_index((1, 1, 1), dims))
        target = K + shift
        left = np.searchsorted(K, target, "left")
        right = np.searchsorted(K, target, "right")
        counts = right - left
        if not counts.any():
            continue
        a = np.repeat(np.arange(len(K)), counts)
        within = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        b = np.repeat(left, counts) + within
        la, lb = L[a], L[b]
        keep = la != lb
        pairs.append(np.column_stack([np.minimum(la, lb), np.maximum(la, lb)])[keep])
    if not pairs:
        return np.zeros((0, 2), dtype=int)
    allp = np.vstack(pairs)
    return np.unique(allp, axis=0).astype(int) if len(allp) else np.zeros((0, 2), dtype=int)


def segment(
    surface: OrientedSurface,
    resolution: float,
    *,
    connectivity: int = 26,
    normal_weight: float = 1.0,
    split_angle: float = 45.0,
    adjacency_voxel: float | None = None,
    strict: bool = False,
) -> SurfacePatchGraph:
    """Over-segment ``surface`` into roughly ``resolution``-sized patches.

    Seeds come from a voxel grid of pitch ``resolution``; each voxel
    contributes one seed per group of points whose normals agree within
    ``split_angle`` degrees. Every point then joins the seed minimising
    ``distance / resolution + normal_weight * |n_point - n_seed|``, lowest
    seed index first on ties. Adjacency is read off a fine voxel grid
    (``adjacency_voxel``, default 1.5x the sampling pitch) using 6-, 18- or
    26-neighbourhoods.
    """
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    pts, nrm = surface.points, surface.normals
    lo, hi = surface.bbox
    nvox = np.maximum(np.ceil((hi - lo) / resolution - 1e-9).astype(np.int64), 1)
    seeds = np.array(
        _seed_points(pts, nrm, lo, resolution, nvox, np.cos(np.radians(split_angle))), dtype=int
    )

    k = min(8, len(seeds))
    tree = cKDTree(pts[seeds])
    dist, cand = tree.query(pts, k=k)
    dist, cand = dist.reshape(len(pts), k), cand.reshape(len(pts), k)
    # order candidates by seed index so argmin resolves ties to the lowest one
    by_index = np.argsort(cand, axis=1)
    cand = np.take_along_axis(cand, by_index, axis=1)
    dist = np.take_along_axis(dist, by_index, axis=1)
    ndiff = np.linalg.norm(nrm[:, None, :] - nrm[seeds[cand]], axis=2)
    cost = dist / resolution + normal_weight * ndiff
    assigned = cand[np.arange(len(pts)), np.argmin(cost, axis=1)]

    used, labels = np.unique(assigned, return_inverse=True)
    patches = []
    order = np.argsort(labels, kind="stable")
    _, starts = np.unique(labels[order], return_index=True)
    for pid, members in enumerate(np.split(order, starts[1:])):
        members = np.sort(members)
        mean = pts[members].mean(axis=0)
        centroid = pts[members[np.argmin(np.linalg.norm(pts[members] - mean, axis=1))]].copy()
        n = nrm[members].sum(axis=0)
        norm = np.linalg.norm(n)
        n = n / norm if norm > 1e-9 else nrm[members[0]].copy()
        patches.append(Patch(pid, centroid, n, members))

    voxel = adjacency_voxel or min(1.5 * surface.spacing, resolution)
    edges = _adjacency(pts, labels, voxel, connectivity) if len(patches) > 1 else np.zeros((0, 2), int)

    largest = max(len(p.members) for p in patches)
    if largest > 0.9 * len(pts) and len(pts) >= 4:
        msg = f"one patch covers {largest}/{len(pts)} points at resolution {resolution}"
        if strict:
            raise ResolutionTooCoarse(msg)
        warnings.warn(msg, stacklevel=2)
    logger.debug("segmented %d points into %d patches", len(pts), len(patches))
    return SurfacePatchGraph(
        tuple(patches), edges, float(resolution), connectivity,
        {"n_points": len(pts), "adjacency_voxel": float(voxel)},
    )


# --------------------------------------------------------------------------- rays


@dataclass(frozen=True)
class RayHit:
    position: np.ndarray
    normal: np.ndarray
    distance: float


def ray_intersect(
    surface: OrientedSurface,
    origin,
    direction,
    skip_radius: float = 0.0,
    radius: float | None = None,
) -> list:
    """Surface crossings along a ray, nearest first.

    A crossing is a run of points lying within ``radius`` of the ray
    (default 1.5x sampling pitch); runs separated by more than
    ``2 * radius`` along the ray count as distinct crossings. Points within
    ``skip_radius`` of the origin are ignored.
    """
    o = np.asarray(origin, float)
    d = np.asarray(direction, float)
    d = d / np.linalg.norm(d)
    r = 1.5 * surface.spacing if radius is None else float(radius)
    rel = surface.points - o
    s = rel @ d
    perp2 = np.einsum("ij,ij->i", rel, rel) - s * s
    mask = (s > 0) & (perp2 <= r * r)
    if skip_radius > 0:
        mask &= np.einsum("ij,ij->i", rel, rel) > skip_radius ** 2
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return []
    idx = idx[np.argsort(s[idx], kind="stable")]
    ss = s[idx]
    breaks = np.flatnonzero(np.diff(ss) > 2 * r) + 1
    hits = []
    for group in np.split(np.arange(len(idx)), breaks):
        members = idx[group]
        dist = float(ss[group].mean())
        n = surface.normals[members].sum(axis=0)
        norm = np.linalg.norm(n)
        if norm < 1e-9:
            n = surface.normals[members[np.argmin(perp2[members])]]
        else:
            n = n / norm
        hits.append(RayHit(o + dist * d, n, dist))
    return hits
