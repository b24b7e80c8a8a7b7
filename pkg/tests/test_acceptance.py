"""Acceptance criteria, one check per criterion.

Under pytest every check records a PASS/FAIL line that is printed in the
terminal summary. Run as a script to print the same lines directly:

    python tests/test_acceptance.py
"""

import json
import math
import sys
import time
from collections import deque
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import builders  # noqa: E402
from oracles import (admissible_reference, euclidean_path, oracle_cost,  # noqa: E402
                     reachable_states)

from dexgraph import shapes  # noqa: E402
from dexgraph.dmg import FingerModel  # noqa: E402
from dexgraph.ects import (EctsParams, Twist, ects_inverse, ects_map, integrate_rotation,  # noqa: E402
                           rotation_velocity, simulate_execution)
from dexgraph.errors import InvalidStart, NoPath  # noqa: E402
from dexgraph.manipulability import build_matrix, sample_poses  # noqa: E402
from dexgraph.planner import (CostWeights, GraspState, GripperContext, grasp_at, make_context,  # noqa: E402
                              merge_segments, plan, plan_path, replay, snap_to_node, to_primitives)
from dexgraph.surface import segment  # noqa: E402
from dexgraph.dmg import build_dmg  # noqa: E402


def check_plug_disconnection():
    t0 = time.perf_counter()
    b = builders.plug()
    d = b.dmg
    contact = np.array([0.01, 0.0, 0.04])  # middle of the +x neck face
    a = snap_to_node(d, contact, 0.0)
    c = snap_to_node(d, contact, 180.0)
    same_spot = d.nodes[a].patch == d.nodes[c].patch and a != c
    try:
        start = grasp_at(d, b.surface, contact, 0.0)
        goal = GraspState(c, 180.0, start.closing_dir)
        plan_path(d, b.surface, start, goal)
        no_path = False
    except NoPath:
        no_path = True
    wall = time.perf_counter() - t0
    ok = same_spot and not d.has_edge(a, c) and no_path and wall < 10
    return ok, (f"nodes {a},{c} on patch {d.nodes[a].patch}, edge={d.has_edge(a, c)}, "
                f"components {d.components[a]}/{d.components[c]}, NoPath={no_path}, {wall:.2f}s")


def _run_matches(mask, comp):
    """The node's run must be a maximal run of the reference mask."""
    idx = comp.indices
    if not mask[idx].all():
        return False
    if comp.full:
        return bool(mask.all())
    before, after = (comp.start - 1) % comp.n, (comp.start + comp.size) % comp.n
    return not mask[before] and not mask[after]


def check_edge_soundness():
    violations, edges = 0, 0
    for name in ("box", "slot_plate", "cylinder", "plug"):
        b = getattr(builders, name)()
        d = b.dmg
        ref = {}
        for node in d.nodes:
            if node.patch not in ref:
                ref[node.patch] = admissible_reference(b.surface, node.contact, node.normal, d.finger)
            if not _run_matches(ref[node.patch], node.component):
                violations += 1
        for i, j in d.edges:
            edges += 1
            ni, nj = d.nodes[i], d.nodes[j]
            shared = ref[ni.patch] & ref[nj.patch] & ni.component.mask & nj.component.mask
            if not shared.any():
                violations += 1
    return violations == 0, f"{edges} edges on 4 fixtures, {violations} violations"


def _random_fixture(rng, kind):
    step = float(rng.choice([10, 15, 20, 30]))
    finger = FingerModel(length=float(rng.uniform(0.03, 0.1)), angle_step=step)
    res = float(rng.uniform(0.011, 0.02))
    if kind == 0:
        s = shapes.box(*rng.uniform([0.04, 0.04, 0.015], [0.12, 0.12, 0.04]))
    elif kind == 1:
        s = shapes.plate_with_slot()
    elif kind == 2:
        s = shapes.plug()
    else:
        s = shapes.t_solid(0.05)
    return s, builders.make(s, res, 0.07, finger).dmg


def check_search_exactness(n_fixtures=20, seed=7):
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    done, mismatches, finite, largest = 0, 0, 0, 0
    attempts = 0
    while done < n_fixtures and attempts < 5 * n_fixtures:
        kind = attempts % 4
        attempts += 1
        s, d = _random_fixture(rng, kind)
        if len(d) > 500:
            continue
        step = d.finger.angle_step
        w = CostWeights(*rng.uniform([1e-4, 0, 0, 0, 60, 0], [2e-3, 2, 20, 0.01, 180, 0.01]))
        ctx = None
        for _ in range(20):
            sn = int(rng.integers(len(d)))
            k0 = int(rng.choice(d.nodes[sn].component.indices))
            try:
                start = grasp_at(d, s, d.positions[sn], k0 * step)
                ctx = make_context(d, s, start, 0.1)
            except InvalidStart:
                continue
            if ctx.state_valid(start.principal_node, k0):
                break
            ctx = None
        if ctx is None:
            continue
        same = np.flatnonzero(d.components == d.components[start.principal_node])
        gn = int(rng.choice(same))
        kg = int(rng.choice(d.nodes[gn].component.indices))
        goal = GraspState(gn, kg * step, start.closing_dir)
        try:
            cost = plan_path(d, s, start, goal, w, 0.1, context=ctx).cost
        except NoPath:
            cost = math.inf
        ref = oracle_cost(ctx, w, start.principal_node, k0, gn, kg)
        if math.isinf(cost) and math.isinf(ref):
            same_cost = True
        else:
            same_cost = math.isclose(cost, ref, rel_tol=1e-12, abs_tol=0.0)
        mismatches += not same_cost
        finite += math.isfinite(ref)
        largest = max(largest, len(d))
        done += 1
    wall = time.perf_counter() - t0
    ok = done >= n_fixtures and mismatches == 0 and wall < 60
    return ok, (f"{done} fixtures (up to {largest} nodes, {finite} reachable goals), "
                f"{mismatches} mismatches, {wall:.1f}s")


def check_secondary_detour():
    b = builders.slot_plate()
    d, s = b.dmg, b.surface
    p = plan(d, s, [-0.08, 0.0, 0.01], 0.0, [0.08, 0.0, 0.01], 0.0)
    ctx = p.result.context
    flagged = {v for v in range(len(d))
               if not any(ctx.state_valid(v, int(k)) for k in d.nodes[v].component.indices)}
    path = p.result.nodes
    direct = euclidean_path(d, path[0], path[-1])
    crossed = flagged & set(direct)
    bad_steps = 0
    states = p.result.states
    for v, k in states:
        bad_steps += not ctx.state_valid(v, k)
    for (v0, k0), (v1, k1) in zip(states, states[1:]):
        if v0 == v1:
            bad_steps += not d.nodes[v0].component.mask[k1]
        else:
            bad_steps += (k0 != k1) or not d.has_edge(v0, v1)
    ok = not (flagged & set(path)) and bool(crossed) and bad_steps == 0
    return ok, (f"{len(flagged)} flagged nodes; planned path crosses {len(flagged & set(path))}, "
                f"euclidean path crosses {len(crossed)}; {bad_steps} invalid replay steps")


def _plans(rng, count=12):
    out = []
    fixtures = [builders.box(), builders.slot_plate(), builders.plug(), builders.cylinder(), builders.bar()]
    tries = 0
    while len(out) < count and tries < 20 * count:
        b = fixtures[tries % len(fixtures)]
        tries += 1
        d = b.dmg
        sn = int(rng.integers(len(d)))
        same = np.flatnonzero(d.components == d.components[sn])
        gn = int(rng.choice(same))
        a0 = float(rng.choice(d.nodes[sn].component.angles))
        ag = float(rng.choice(d.nodes[gn].component.angles))
        try:
            p = plan(d, b.surface, d.positions[sn], a0, d.positions[gn], ag, merge=False)
        except (NoPath, InvalidStart):
            continue
        out.append((b, p))
    return out


def check_primitive_replay(seed=3):
    rng = np.random.default_rng(seed)
    plans = _plans(rng)
    worst_pos, worst_merge, angle_misses = 0.0, 0.0, 0
    for b, p in plans:
        seq = p.sequence
        end, ang = replay(seq, p.start.contact, p.start.principal_angle)
        worst_pos = max(worst_pos, float(np.linalg.norm(end - p.goal.contact)) / b.dmg.resolution)
        angle_misses += ang != p.goal.principal_angle % 360.0
        m_end, m_ang = replay(merge_segments(seq), p.start.contact, p.start.principal_angle)
        worst_merge = max(worst_merge, float(np.linalg.norm(m_end - end)))
        angle_misses += m_ang != ang
    ok = len(plans) >= 10 and worst_pos <= 1.0 and angle_misses == 0 and worst_merge <= 1e-9
    return ok, (f"{len(plans)} plans, worst endpoint gap {worst_pos:.2e} resolutions, "
                f"{angle_misses} angle misses, merge drift {worst_merge:.1e} m")


def _context(d, s, sample):
    n = d.normals[sample.node]
    ctx = GripperContext(d, s, -n, 0.0, n, 0.1)
    ctx.secondary_component = sample.secondary_component
    return ctx


def _partition(entries):
    n = len(entries)
    seen, parts = set(), set()
    for i in range(n):
        if i in seen:
            continue
        block, queue = {i}, deque([i])
        while queue:
            u = queue.popleft()
            for v in np.flatnonzero(entries[u]):
                if int(v) not in block:
                    block.add(int(v))
                    queue.append(int(v))
        seen |= block
        parts.add(frozenset(block))
    return parts


def check_matrix_properties(seed=11):
    rng = np.random.default_rng(seed)
    problems, details = [], []
    for name in ("box", "slot_plate", "plug", "cubes"):
        b = getattr(builders, name)()
        d, s = b.dmg, b.surface
        samples = sample_poses(d, s)
        M = build_matrix(d, s, samples)
        E = M.entries
        comps = len({int(d.components[x.node]) for x in M.samples})
        if not np.array_equal(E, E.T) or E.diagonal().any():
            problems.append(f"{name}: not symmetric with zero diagonal")
        if M.n_blocks < comps:
            problems.append(f"{name}: {M.n_blocks} blocks < {comps} components")
        pick = sorted(rng.choice(len(M.samples), size=min(60, len(M.samples)), replace=False))
        sub = [M.samples[i] for i in pick]
        m = build_matrix(d, s, sub)
        oracle = np.zeros_like(m.entries)
        step = d.finger.angle_step
        for i, x in enumerate(sub):
            reach = reachable_states(_context(d, s, x), x.node, int(round(x.angle / step)) % d.finger.n_angles)
            for j, y in enumerate(sub):
                if i != j and (y.node, int(round(y.angle / step)) % d.finger.n_angles) in reach:
                    oracle[i, j] = 1
        blocks = {frozenset(np.flatnonzero(m.labels == k).tolist()) for k in range(m.n_blocks)}
        if not np.array_equal(oracle, m.entries) or blocks != _partition(oracle):
            problems.append(f"{name}: subset disagrees with BFS oracle")
        details.append(f"{name} {len(M.samples)}/{M.n_blocks}b/{comps}c")
    return not problems, "; ".join(problems or details)


def check_ects_algebra(seed=5, draws=1000):
    rng = np.random.default_rng(seed)
    worst_lin, worst_inv, inverted = 0.0, 0.0, 0
    for _ in range(draws):
        p = EctsParams(float(rng.uniform()), int(rng.integers(2)))
        xa, xr, ya, yr = (Twist.from_vector(rng.normal(size=6)) for _ in range(4))
        a, c = rng.normal(size=2)
        lhs = ects_map(p, a * xa + c * ya, a * xr + c * yr)
        r1, r2 = ects_map(p, xa, xr), ects_map(p, ya, yr)
        for u, v, w in zip(lhs, r1, r2):
            worst_lin = max(worst_lin, float(np.abs(u.as_vector() - (a * v + c * w).as_vector()).max()))
        if abs(p.determinant) > 0.05:
            inverted += 1
            back = ects_inverse(p, *r1)
            for u, v in zip(back, (xa, xr)):
                worst_inv = max(worst_inv, float(np.abs(u.as_vector() - v.as_vector()).max()))
    worst_spot = 0.0
    for theta in (0.0, math.pi / 2):
        for phi in (0.0, math.pi / 4):
            got = rotation_velocity(theta, phi, 1.0).as_vector()
            want = np.array([math.cos(theta + phi), 0, -math.sin(theta + phi), 0, 1, 0])
            worst_spot = max(worst_spot, float(np.abs(got - want).max()))
    ok = worst_lin <= 1e-12 and worst_inv <= 1e-12 and worst_spot <= 1e-12
    return ok, (f"linearity {worst_lin:.1e}, round trip {worst_inv:.1e} over {inverted} invertible draws, "
                f"spot values {worst_spot:.1e}")


def check_rotation_circle():
    theta, radius = 0.3, 0.05
    q, _ = integrate_rotation(theta, 30.0, 1.0, dt=1e-4, radius=radius)
    drift = float(np.abs(np.linalg.norm(q, axis=1) - radius).max()) / radius
    swept = math.degrees(math.atan2(q[-1, 0], q[-1, 2]) - math.atan2(q[0, 0], q[0, 2]))
    ok = drift < 1e-6 and abs(swept + 30.0) <= 0.01
    return ok, f"relative radius drift {drift:.1e}, swept {swept:.5f} deg"


def check_end_to_end():
    t0 = time.perf_counter()
    b = builders.box()
    p = plan(b.dmg, b.surface, [-0.03, 0.0, 0.01], 0.0, [0.03, 0.02, 0.01], 90.0)
    res = simulate_execution(b.surface, b.dmg, p.sequence, p.start, log=False)
    wall = time.perf_counter() - t0
    rot = sum(abs(r) for r in p.sequence.rotations)
    moved = float(np.linalg.norm(sum(p.sequence.translations)))
    e, a = res.report["position_error"], res.report["angle_error"]
    ok = e <= 1e-3 and a <= 1.0 and wall < 30 and rot >= 90 and moved > 0.05
    return ok, f"moved {moved * 1000:.0f} mm, rotated {rot:g} deg; error {e * 1000:.3f} mm, {a:.3f} deg, {wall:.1f}s"


def _build_time(surface, resolution):
    best = math.inf
    for _ in range(3):
        t0 = time.perf_counter()
        build_dmg(segment(surface, resolution), surface, FingerModel(angle_step=5.0), 0.07)
        best = min(best, time.perf_counter() - t0)
    return best


def check_scaling():
    s = shapes.box(0.1, 0.1, 0.02)
    coarse = _build_time(s, 0.013)
    fine = _build_time(s, 0.0065)
    ratio = fine / coarse
    return ratio <= 12, f"build {coarse:.3f}s at r, {fine:.3f}s at r/2, ratio {ratio:.1f}"


def check_defaults():
    from click.testing import CliRunner

    from dexgraph.cli import main

    out = CliRunner().invoke(main, ["config"])
    if out.exit_code != 0:
        return False, f"config command exited {out.exit_code}"
    cfg = json.loads(out.output)
    got = {
        "delta": cfg["dmg"]["delta"],
        "angle_step": cfg["dmg"]["angle_step"],
        "finger_length": cfg["dmg"]["finger_length"],
        "resolution": cfg["segmentation"]["resolution"],
        "gains": (cfg["ects"]["k_opening"], cfg["ects"]["k_linear"], cfg["ects"]["k_angular"]),
    }
    want = {"delta": 0.07, "angle_step": 5.0, "finger_length": 0.1, "resolution": 0.013,
            "gains": (0.7, 0.32, 16.0)}
    return got == want, ", ".join(f"{k}={v}" for k, v in got.items())


CRITERIA = {
    1: ("plug neck yields disconnected nodes", check_plug_disconnection),
    2: ("DMG edge soundness", check_edge_soundness),
    3: ("search cost equals brute-force oracle", check_search_exactness),
    4: ("secondary finger forces a detour", check_secondary_detour),
    5: ("primitive replay reaches the goal", check_primitive_replay),
    6: ("manipulability matrix properties", check_matrix_properties),
    7: ("cooperative task space algebra", check_ects_algebra),
    8: ("rotation circle conservation", check_rotation_circle),
    9: ("end-to-end box repositioning", check_end_to_end),
    10: ("build time scaling", check_scaling),
    11: ("default configuration", check_defaults),
}


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, acceptance):
    title, check = CRITERIA[number]
    ok, detail = check()
    acceptance.record(number, title, ok, detail)
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for number, (title, check) in sorted(CRITERIA.items()):
        ok, detail = check()
        failed += not ok
        print(f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} - {detail}", flush=True)
    sys.exit(1 if failed else 0)
