import numpy as np
import pytest

from dexgraph import shapes
from dexgraph.errors import DegenerateGeometry, ResolutionTooCoarse, TooFewPoints, UnreadableFile
from dexgraph.shapes import ShapeSpec
from dexgraph.surface import (OrientedSurface, estimate_normals, load_surface, ray_intersect, save_xyz,
                              segment)


def _cube_faces(pitch=0.05):
    return shapes.box(1.0, 1.0, 1.0, pitch=pitch)


def test_normals_from_file_are_renormalised(tmp_path):
    s = _cube_faces()
    path = tmp_path / "cube.xyz"
    np.savetxt(path, np.hstack([s.points, 3.0 * s.normals]))
    got = load_surface(path)
    np.testing.assert_allclose(got.points, s.points)
    np.testing.assert_allclose(got.normals, s.normals, atol=1e-12)


def test_estimated_normals_match_cube_faces(tmp_path):
    s = _cube_faces()
    path = tmp_path / "cube.xyz"
    np.savetxt(path, s.points)
    got = load_surface(path, normal_k=8)
    # interior points: away from every edge of the unit cube
    interior = np.sum(np.abs(s.points) > 0.5 - 0.11, axis=1) == 1
    cos = np.einsum("ij,ij->i", got.normals[interior], s.normals[interior])
    assert np.all(cos >= np.cos(np.radians(5)))


def test_estimate_normals_point_outward():
    s = shapes.sphere(0.1, pitch=0.01)
    n = estimate_normals(s.points, 12)
    assert np.all(np.einsum("ij,ij->i", n, s.points) > 0)


@pytest.mark.parametrize("fmt", ["ply_ascii", "ply_binary", "obj"])
def test_loaders_agree(tmp_path, fmt):
    s = shapes.box(0.05, 0.04, 0.03, pitch=0.005)
    pts, nrm = s.points, s.normals
    if fmt == "obj":
        path = tmp_path / "s.obj"
        lines = [f"v {x} {y} {z}" for x, y, z in pts] + [f"vn {x} {y} {z}" for x, y, z in nrm]
        path.write_text("\n".join(lines) + "\n")
    else:
        path = tmp_path / "s.ply"
        binary = fmt == "ply_binary"
        header = ["ply", f"format {'binary_little_endian' if binary else 'ascii'} 1.0", "comment test",
                  f"element vertex {len(pts)}"]
        header += [f"property {'double' if binary else 'float'} {c}" for c in ("x", "y", "z", "nx", "ny", "nz")]
        header += ["element face 0", "property list uchar int vertex_indices", "end_header"]
        body = np.hstack([pts, nrm])
        with open(path, "wb") as fh:
            fh.write(("\n".join(header) + "\n").encode())
            if binary:
                fh.write(body.astype("<f8").tobytes())
            else:
                fh.write("\n".join(" ".join(f"{v:.9g}" for v in row) for row in body).encode() + b"\n")
    got = load_surface(path)
    np.testing.assert_allclose(got.points, pts, atol=1e-6)
    np.testing.assert_allclose(got.normals, nrm, atol=1e-6)


def test_input_scale(tmp_path):
    s = shapes.box(50.0, 40.0, 30.0, pitch=5.0)
    path = tmp_path / "mm.xyz"
    save_xyz(s, path)
    got = load_surface(path, input_scale=0.001)
    np.testing.assert_allclose(got.points, s.points * 0.001, atol=1e-9)


def test_too_few_points(tmp_path):
    path = tmp_path / "three.xyz"
    np.savetxt(path, np.eye(3))
    with pytest.raises(TooFewPoints):
        load_surface(path)
    with pytest.raises(TooFewPoints):
        OrientedSurface(np.eye(3), np.eye(3))


def test_unreadable_and_degenerate(tmp_path):
    with pytest.raises(UnreadableFile):
        load_surface(tmp_path / "missing.ply")
    bad = tmp_path / "bad.ply"
    bad.write_bytes(b"not a ply\n")
    with pytest.raises(UnreadableFile):
        load_surface(bad)
    line = tmp_path / "line.xyz"
    np.savetxt(line, np.outer(np.arange(10), [1.0, 2.0, 3.0]))
    with pytest.raises(DegenerateGeometry):
        load_surface(line)
    with pytest.raises(DegenerateGeometry):
        OrientedSurface(np.random.rand(5, 3), np.zeros((5, 3)))


def test_surface_is_read_only():
    s = shapes.box(0.05, 0.05, 0.05, pitch=0.01)
    with pytest.raises(ValueError):
        s.points[0, 0] = 1.0


def test_box_patch_count_near_area_over_resolution_squared():
    s = shapes.box(0.1, 0.1, 0.02, pitch=0.001)
    g = segment(s, 0.013)
    assert 116 <= len(g.patches) <= 216
    # every point belongs to exactly one patch
    members = np.concatenate([p.members for p in g.patches])
    assert np.array_equal(np.sort(members), np.arange(len(s)))


def test_segmentation_is_deterministic():
    s = shapes.plug()
    a, b = segment(s, 0.013), segment(s, 0.013)
    assert np.array_equal(a.edges, b.edges)
    assert all(np.array_equal(p.members, q.members) for p, q in zip(a.patches, b.patches))


def test_coarse_resolution_gives_one_patch():
    s = shapes.sphere(0.05, pitch=0.01)
    with pytest.warns(UserWarning):
        g = segment(s, 1.0)
    assert len(g.patches) == 1 and len(g.edges) == 0
    with pytest.raises(ResolutionTooCoarse):
        segment(s, 1.0, strict=True)


def test_two_disjoint_cubes_stay_apart(cubes):
    assert len(cubes.graph.components()) >= 2
    with pytest.raises(ValueError):
        segment(cubes.surface, 0.0)


@pytest.mark.parametrize("connectivity", [6, 18, 26])
def test_connectivity_options(connectivity):
    g = segment(shapes.box(0.05, 0.05, 0.02), 0.013, connectivity=connectivity)
    assert len(g.components()) == 1


def test_ray_through_box_thickness(box):
    top = [p for p in box.graph.patches if p.normal[2] > 0.99]
    p = min(top, key=lambda q: np.linalg.norm(q.centroid[:2]))
    hits = ray_intersect(box.surface, p.centroid, -p.normal, skip_radius=2 * 0.002)
    assert abs(hits[0].distance - 0.02) <= 0.013
    assert hits[0].normal[2] < -0.99


def test_ray_misses_and_self_hit_suppression(box):
    s = box.surface
    assert ray_intersect(s, [0, 0, 0.5], [0, 0, 1]) == []
    origin = s.points[np.argmin(np.linalg.norm(s.points - [0, 0, 0.01], axis=1))]
    with_self = ray_intersect(s, origin + [0, 0, 0.001], [0, 0, -1])
    resolution = 0.004
    without = ray_intersect(s, origin, [0, 0, -1], skip_radius=2 * resolution)
    assert with_self[0].distance < 0.005
    assert without[0].distance > 0.015


def test_shape_spec_parse():
    spec = ShapeSpec.parse("box:0.1,0.1,0.02")
    assert spec.name == "box" and spec.dims == (0.1, 0.1, 0.02)
    assert len(spec.build()) > 0
    with pytest.raises(ValueError):
        ShapeSpec.parse("teapot:1")
    with pytest.raises(ValueError):
        ShapeSpec.parse("box:0.1,-1,0.1")


def test_generated_normals_point_out_of_solids():
    for s in (shapes.plug(), shapes.plate_with_slot(), shapes.t_solid(0.05), shapes.cylinder(0.03, 0.08)):
        # stepping a little along the normal must leave the point cloud's own surface
        probe = s.points + 0.004 * s.normals
        d, _ = s.tree.query(probe)
        assert np.median(d) > 0.003
