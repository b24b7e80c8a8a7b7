import numpy as np
import pytest
from oracles import admissible_reference

from builders import make
from dexgraph import shapes
from dexgraph.dmg import (AngularComponent, FingerModel, admissible_angles, admissible_mask, build_dmg,
                          dmg_from_dict, dmg_to_dict, finger_direction, load_dmg, refine_by_normals,
                          save_dmg, split_components, tangent_frame, to_dot)
from dexgraph.errors import EmptyGraph
from dexgraph.surface import Patch, SurfacePatchGraph, segment


def test_finger_model_validation():
    assert FingerModel().n_angles == 72
    with pytest.raises(ValueError):
        FingerModel(angle_step=7.0)
    with pytest.raises(ValueError):
        FingerModel(length=0.0)


def test_tangent_frame_is_orthonormal():
    for n in ([0, 0, 1], [1, 0, 0], [0.3, -0.2, 0.9]):
        n = np.asarray(n, float) / np.linalg.norm(n)
        t1, t2 = tangent_frame(n)
        m = np.array([t1, t2, n])
        np.testing.assert_allclose(m @ m.T, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(finger_direction(n, 90.0), t2, atol=1e-12)


@pytest.mark.parametrize("angles, sizes", [
    (np.arange(0, 360, 5), [72]),
    ([350, 355, 0, 5], [4]),
    (list(range(0, 95, 5)) + list(range(180, 275, 5)), [19, 19]),
    ([], []),
])
def test_split_components(angles, sizes):
    comps = split_components(angles, 5.0)
    assert sorted(c.size for c in comps) == sorted(sizes)
    if sizes == [4]:
        assert comps[0].start == 70 and 0.0 in comps[0] and 10.0 not in comps[0]


def test_component_offsets_wrap():
    c = AngularComponent(70, 4, 72, 5.0)
    assert list(c.angles) == [350.0, 355.0, 0.0, 5.0]
    assert c.offset(1) == 3
    with pytest.raises(ValueError):
        AngularComponent(0, 0, 72, 5.0)


def _column_graph(surface, n_columns):
    """One patch per vertical column of a capless cylinder, ringed by edges."""
    theta = np.arctan2(surface.points[:, 1], surface.points[:, 0]) % (2 * np.pi)
    column = np.rint(theta / (2 * np.pi / n_columns)).astype(int) % n_columns
    patches = []
    for c in range(n_columns):
        members = np.flatnonzero(column == c)
        n = surface.normals[members].mean(axis=0)
        patches.append(Patch(c, surface.points[members].mean(axis=0), n / np.linalg.norm(n), members))
    edges = np.array([(min(c, (c + 1) % n_columns), max(c, (c + 1) % n_columns)) for c in range(n_columns)])
    return SurfacePatchGraph(tuple(patches), edges, 0.01)


def test_normal_threshold_on_cylinder_columns():
    s = shapes.cylinder(0.05, 0.04, angular_step=5.0, caps=False)
    g = _column_graph(s, 72)
    diff = np.linalg.norm(g.normals[0] - g.normals[1])
    assert diff == pytest.approx(2 * np.sin(np.radians(2.5)), rel=1e-9)
    assert len(refine_by_normals(g, 0.07).edges) == 0
    assert len(refine_by_normals(g, 0.10).edges) == 72


def test_refine_keeps_coplanar_and_drops_perpendicular(box):
    refined = refine_by_normals(box.graph, 0.07)
    pos = {p.id: i for i, p in enumerate(box.graph.patches)}
    n = box.graph.normals
    for a, b in refined.edges:
        assert np.linalg.norm(n[pos[a]] - n[pos[b]]) <= 0.07
    dropped = {tuple(e) for e in box.graph.edges.tolist()} - {tuple(e) for e in refined.edges.tolist()}
    assert dropped
    for a, b in dropped:
        assert np.linalg.norm(n[pos[a]] - n[pos[b]]) == pytest.approx(np.sqrt(2), abs=0.2)
    with pytest.raises(ValueError):
        refine_by_normals(box.graph, 0.0)


def test_flat_plate_centre_admits_every_angle():
    s = shapes.plate(0.5, 0.5, 0.01, pitch=0.005)
    mask = admissible_mask(s, [0, 0, 0.005], [0, 0, 1], FingerModel())
    assert mask.all()


def test_t_solid_wall_blocks_axis_direction():
    finger = FingerModel()
    s = shapes.t_solid(finger.length)
    angles = admissible_angles(s, [0, 0, 0.005], [0, 0, 1], finger)
    assert 0.0 not in angles  # +x runs into the wall
    assert {90.0, 180.0, 270.0} <= set(angles)
    ref = admissible_reference(s, [0, 0, 0.005], [0, 0, 1], finger)
    assert np.array_equal(ref, admissible_mask(s, [0, 0, 0.005], [0, 0, 1], finger))


def test_plug_neck_has_two_angle_runs(plug):
    d = plug.dmg
    at_neck = [n for n in d.nodes if abs(n.contact[2] - 0.04) < 0.008 and abs(n.contact[0] - 0.01) < 1e-6]
    by_patch = {}
    for n in at_neck:
        by_patch.setdefault(n.patch, []).append(n)
    pairs = [v for v in by_patch.values() if len(v) >= 2]
    assert pairs
    a, b = pairs[0][:2]
    assert not d.has_edge(a.index, b.index)
    assert d.components[a.index] != d.components[b.index]
    assert not np.any(a.component.mask & b.component.mask)


def test_box_has_one_component_per_face(box):
    assert box.dmg.n_components == 6
    for label in range(6):
        normals = box.dmg.normals[box.dmg.components == label]
        assert np.allclose(normals, normals[0], atol=1e-6)


def test_large_sphere_is_one_component():
    s = shapes.sphere(0.3, pitch=0.01)
    b = make(s, resolution=0.04, delta=0.2)
    assert b.dmg.n_components == 1
    assert all(n.component.full for n in b.dmg.nodes)


def test_nodes_match_independent_footprint(box, plug):
    for b in (box, plug):
        for node in b.dmg.nodes[::7]:
            ref = admissible_reference(b.surface, node.contact, node.normal, b.dmg.finger)
            assert ref[node.component.indices].all()


def test_edges_need_a_shared_angle(plug, cylinder):
    for b in (plug, cylinder):
        d = b.dmg
        for i, j in d.edges:
            assert np.any(d.nodes[i].component.mask & d.nodes[j].component.mask)
            assert d.components[i] == d.components[j]


def test_tiny_delta_empties_the_graph():
    # no two sphere patches share a normal, so every edge goes
    s = shapes.sphere(0.05, pitch=0.004)
    g = segment(s, 0.013)
    with pytest.raises(EmptyGraph):
        build_dmg(g, s, FingerModel(), 1e-9)


def test_cylinder_keeps_every_patch(cylinder):
    assert not cylinder.dmg.removed_patches
    assert cylinder.dmg.patch_components >= 1


def test_json_round_trip(tmp_path, plug):
    path = tmp_path / "dmg.json"
    save_dmg(plug.dmg, path)
    d = load_dmg(path)
    assert len(d) == len(plug.dmg)
    assert np.array_equal(d.edges, plug.dmg.edges)
    assert np.array_equal(d.components, plug.dmg.components)
    assert np.array_equal(d.masks, plug.dmg.masks)
    np.testing.assert_allclose(d.positions, plug.dmg.positions)
    assert dmg_to_dict(d) == dmg_to_dict(plug.dmg)
    with pytest.raises(ValueError):
        dmg_from_dict({"format": "other"})


def test_dot_export_has_every_node(box):
    dot = to_dot(box.dmg)
    assert dot.count("tooltip=") == len(box.dmg)
    assert dot.count(" -- ") == len(box.dmg.edges)
    assert dot.count("subgraph cluster_") == box.dmg.n_components
