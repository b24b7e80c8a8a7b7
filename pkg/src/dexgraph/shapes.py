"""Sampled test solids with analytic outward normals.

Every generator returns an :class:`OrientedSurface`. Flat faces are sampled
at cell centres so that no point sits exactly on an edge shared by two
faces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .surface import OrientedSurface

_AXES = np.eye(3)


def _face_grid(center, u, v, size_u, size_v, pitch):
    nu = max(1, int(round(size_u / pitch)))
    nv = max(1, int(round(size_v / pitch)))
    a = (np.arange(nu) + 0.5) / nu - 0.5
    b = (np.arange(nv) + 0.5) / nv - 0.5
    A, B = np.meshgrid(a * size_u, b * size_v, indexing="ij")
    return center + A.reshape(-1, 1) * u + B.reshape(-1, 1) * v


def _box_faces(lo, hi, pitch):
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    size = hi - lo
    mid = (lo + hi) / 2
    out = []
    for ax in range(3):
        u_ax, v_ax = [a for a in range(3) if a != ax]
        for sign in (-1.0, 1.0):
            center = mid.copy()
            center[ax] = hi[ax] if sign > 0 else lo[ax]
            pts = _face_grid(center, _AXES[u_ax], _AXES[v_ax], size[u_ax], size[v_ax], pitch)
            out.append((pts, np.tile(sign * _AXES[ax], (len(pts), 1))))
    return out


def _inside(points, lo, hi, tol):
    return np.all((points >= lo - tol) & (points <= hi + tol), axis=1)


def boxes(extents, pitch=0.002) -> OrientedSurface:
    """Boundary of a union of axis-aligned boxes given as ``[(lo, hi), ...]``."""
    extents = [(np.asarray(lo, float), np.asarray(hi, float)) for lo, hi in extents]
    tol = 1e-9
    pts_all, nrm_all = [], []
    for i, (lo, hi) in enumerate(extents):
        for pts, nrm in _box_faces(lo, hi, pitch):
            keep = np.ones(len(pts), dtype=bool)
            for j, (lo2, hi2) in enumerate(extents):
                if j != i:
                    keep &= ~_inside(pts, lo2, hi2, tol)
            pts_all.append(pts[keep])
            nrm_all.append(nrm[keep])
    return OrientedSurface(np.vstack(pts_all), np.vstack(nrm_all))


def box(x, y, z, pitch=0.002, center=(0.0, 0.0, 0.0)) -> OrientedSurface:
    c = np.asarray(center, float)
    half = np.array([x, y, z], float) / 2
    return boxes([(c - half, c + half)], pitch)


def plate(x, y, thickness, pitch=0.002) -> OrientedSurface:
    return box(x, y, thickness, pitch)


def bar(length, width, height, pitch=0.002) -> OrientedSurface:
    return box(length, width, height, pitch)


def two_cubes(side, gap, pitch=0.002) -> OrientedSurface:
    """Two cubes of edge ``side`` separated along x by ``gap``."""
    off = (side + gap) / 2
    return OrientedSurface.concatenate(
        [box(side, side, side, pitch, (-off, 0, 0)), box(side, side, side, pitch, (off, 0, 0))]
    )


def cylinder(radius, height, pitch=0.002, angular_step=None, caps=True) -> OrientedSurface:
    """Cylinder along z. ``angular_step`` (degrees) overrides the ring pitch."""
    if angular_step is None:
        n_ang = max(8, int(round(2 * np.pi * radius / pitch)))
    else:
        n_ang = int(round(360.0 / angular_step))
    n_z = max(1, int(round(height / pitch)))
    th = 2 * np.pi * np.arange(n_ang) / n_ang
    z = ((np.arange(n_z) + 0.5) / n_z - 0.5) * height
    T, Z = np.meshgrid(th, z, indexing="ij")
    nrm = np.column_stack([np.cos(T).ravel(), np.sin(T).ravel(), np.zeros(T.size)])
    pts = np.column_stack([radius * nrm[:, 0], radius * nrm[:, 1], Z.ravel()])
    parts_p, parts_n = [pts], [nrm]
    if caps:
        n_r = max(1, int(round(radius / pitch)))
        for sign in (-1.0, 1.0):
            cap = []
            for k in range(n_r):
                rr = (k + 0.5) * radius / n_r
                m = max(3, int(round(2 * np.pi * rr / pitch)))
                a = 2 * np.pi * (np.arange(m) + 0.5) / m
                cap.append(np.column_stack([rr * np.cos(a), rr * np.sin(a), np.full(m, sign * height / 2)]))
            cap = np.vstack(cap)
            parts_p.append(cap)
            parts_n.append(np.tile([0.0, 0.0, sign], (len(cap), 1)))
    return OrientedSurface(np.vstack(parts_p), np.vstack(parts_n))


def sphere(radius, pitch=0.002) -> OrientedSurface:
    """Fibonacci-lattice sphere with roughly ``pitch`` spacing."""
    n = max(16, int(round(4 * np.pi * radius ** 2 / pitch ** 2)))
    i = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * i / n)
    theta = np.pi * (1 + 5 ** 0.5) * i
    nrm = np.column_stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)])
    return OrientedSurface(radius * nrm, nrm)


def plug(base=0.06, neck=0.02, neck_height=0.04, flange=0.02, pitch=0.002) -> OrientedSurface:
    """Wide base, narrow square neck, wide head stacked along z.

    A finger resting on the neck can lie horizontally in two opposite
    directions but not vertically, where the head and base overhang.
    """
    hb, hn = base / 2, neck / 2
    z1, z2, z3 = flange, flange + neck_height, 2 * flange + neck_height
    return boxes(
        [
            ((-hb, -hb, 0.0), (hb, hb, z1)),
            ((-hn, -hn, z1), (hn, hn, z2)),
            ((-hb, -hb, z2), (hb, hb, z3)),
        ],
        pitch,
    )


def t_solid(finger_length, width=0.02, thickness=0.01, wall_height=0.03, pitch=0.002) -> OrientedSurface:
    """Bar of length ``3 * finger_length`` along x with a wall standing on its top face.

    The wall sits at ``x = finger_length / 2`` so a finger at the bar centre
    pointing along +x hits it while -x and +/-y stay clear.
    """
    L = 3 * finger_length
    t = thickness / 2
    wx = finger_length / 2
    return boxes(
        [
            ((-L / 2, -width / 2, -t), (L / 2, width / 2, t)),
            ((wx, -width / 2 - 0.03, t), (wx + thickness, width / 2 + 0.03, t + wall_height)),
        ],
        pitch,
    )


def plate_with_slot(
    x=0.2, y=0.1, thickness=0.02, slot_x=0.03, slot_y=0.06, slot_depth=0.012, pitch=0.002
) -> OrientedSurface:
    """Plate whose bottom face carries a blind rectangular pocket at its centre.

    The top face is continuous; a finger on the bottom face cannot follow
    its partner across the pocket.
    """
    hx, hy, ht = x / 2, y / 2, thickness / 2
    sx, sy = slot_x / 2, slot_y / 2
    floor_z = -ht + slot_depth
    parts = []
    for pts, nrm in _box_faces((-hx, -hy, -ht), (hx, hy, ht), pitch):
        bottom = nrm[:, 2] < -0.5
        in_slot = (np.abs(pts[:, 0]) < sx) & (np.abs(pts[:, 1]) < sy)
        keep = ~(bottom & in_slot)
        parts.append((pts[keep], nrm[keep]))
    # pocket floor faces down into the void; walls face inward
    floor = _face_grid(np.array([0, 0, floor_z]), _AXES[0], _AXES[1], slot_x, slot_y, pitch)
    parts.append((floor, np.tile([0.0, 0.0, -1.0], (len(floor), 1))))
    zc = (floor_z - ht) / 2
    for sign in (-1.0, 1.0):
        w = _face_grid(np.array([sign * sx, 0, zc]), _AXES[1], _AXES[2], slot_y, slot_depth, pitch)
        parts.append((w, np.tile([-sign, 0.0, 0.0], (len(w), 1))))
        w = _face_grid(np.array([0, sign * sy, zc]), _AXES[0], _AXES[2], slot_x, slot_depth, pitch)
        parts.append((w, np.tile([0.0, -sign, 0.0], (len(w), 1))))
    return OrientedSurface(np.vstack([p for p, _ in parts]), np.vstack([n for _, n in parts]))


GENERATORS = {
    "box": box,
    "plate": plate,
    "bar": bar,
    "cylinder": cylinder,
    "sphere": sphere,
    "plug": plug,
    "plate_with_slot": plate_with_slot,
    "two_cubes": two_cubes,
    "t_solid": t_solid,
}


@dataclass(frozen=True)
class ShapeSpec:
    """Generator name plus positional dimensions, e.g. ``box:0.1,0.1,0.02``."""

    name: str
    dims: tuple = ()
    pitch: float = 0.002

    def __post_init__(self):
        if self.name not in GENERATORS:
            raise ValueError(f"unknown shape {self.name!r}; choose from {sorted(GENERATORS)}")
        if any(d <= 0 for d in self.dims) or self.pitch <= 0:
            raise ValueError("shape dimensions and pitch must be positive")

    @classmethod
    def parse(cls, text: str, pitch: float = 0.002) -> "ShapeSpec":
        name, _, rest = text.partition(":")
        dims = tuple(float(v) for v in rest.split(",") if v.strip()) if rest else ()
        return cls(name.strip(), dims, pitch)

    def build(self) -> OrientedSurface:
        return GENERATORS[self.name](*self.dims, pitch=self.pitch)
