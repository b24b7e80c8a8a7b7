"""In-hand regrasp planning over the DMG for a parallel gripper.

The principal finger walks the DMG while the secondary finger is recovered
at every step by casting the closing line through the object. The search
runs Dijkstra over ``(node, finger angle, just-rotated)`` states so that
rotation and translation costs are exact functions of the state.
"""

from __future__ import annotations

import heapq
import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .dmg import AngularComponent, Dmg
from .errors import EmptyIntersection, InvalidGoal, InvalidStart, NoAdmissibleNode, NoPath
from .surface import OrientedSurface, ray_intersect

logger = logging.getLogger(__name__)

PUSH_FACE_COS = 0.5
OPPOSING_COS = 0.5


@dataclass(frozen=True)
class CostWeights:
    w_rotation: float = 0.0005
    w_opening: float = 1.0
    w_pull: float = 10.0
    w_excess_rotation: float = 0.001
    comfort_arc: float = 120.0
    w_rotation_fixed: float = 0.001

    def __post_init__(self):
        if min(self.w_rotation, self.w_opening, self.w_pull, self.w_excess_rotation,
               self.comfort_arc, self.w_rotation_fixed) < 0:
            raise ValueError("cost weights must be non-negative")

    def rotation_cost(self, arc_deg: float) -> float:
        """Cost of one rotation primitive; a flat charge discourages splitting it."""
        a = abs(arc_deg)
        return self.w_rotation_fixed + self.w_rotation * a + self.w_excess_rotation * max(0.0, a - self.comfort_arc)


@dataclass(frozen=True, eq=False)
class GraspState:
    """Full gripper configuration on the object."""

    principal_node: int
    principal_angle: float
    closing_dir: np.ndarray
    secondary_contact: np.ndarray | None = None
    opening: float | None = None
    secondary_node: int | None = None
    contact: np.ndarray | None = None


@dataclass(frozen=True)
class Secondary:
    ok: bool
    reason: str
    contact: np.ndarray | None = None
    opening: float | None = None
    node: int | None = None
    angle: float | None = None


def _rotate(v, axis, angle_deg):
    axis = axis / np.linalg.norm(axis)
    a = np.radians(angle_deg)
    return v * np.cos(a) + np.cross(axis, v) * np.sin(a) + axis * (axis @ v) * (1 - np.cos(a))


def snap_to_node(dmg: Dmg, contact, angle: float, radius: float | None = None) -> int:
    """Nearest node whose angular component holds ``angle``.

    Only nodes within ``radius`` (default twice the segmentation resolution)
    of ``contact`` are considered; ties go to the lowest node index.
    """
    if not len(dmg):
        raise NoAdmissibleNode("empty graph")
    radius = 2 * dmg.resolution if radius is None else radius
    p = np.asarray(contact, float)
    cand = np.array(sorted(dmg.tree.query_ball_point(p, radius)), dtype=int)
    if cand.size:
        k = int(round(angle / dmg.finger.angle_step)) % dmg.finger.n_angles
        cand = cand[dmg.masks[cand, k]]
    if cand.size == 0:
        raise NoAdmissibleNode(f"no node near {p.tolist()} admits angle {angle}")
    d = np.linalg.norm(dmg.positions[cand] - p, axis=1)
    return int(cand[np.argmin(d)])


def snap_direction(dmg: Dmg, contact, direction, radius: float, candidates=None) -> tuple:
    """Like :func:`snap_to_node` for a 3D finger direction, read in each node's frame.

    Returns ``(node, angle)`` or ``(None, None)``.
    """
    p = np.asarray(contact, float)
    if candidates is None:
        candidates = np.array(sorted(dmg.tree.query_ball_point(p, radius)), dtype=int)
    if len(candidates) == 0:
        return None, None
    fr = dmg.frames[candidates]
    ang = np.degrees(np.arctan2(fr[:, 1] @ direction, fr[:, 0] @ direction)) % 360.0
    step = dmg.finger.angle_step
    k = np.rint(ang / step).astype(int) % dmg.finger.n_angles
    ok = dmg.masks[candidates, k]
    if not ok.any():
        return None, None
    cand, k = candidates[ok], k[ok]
    best = int(np.argmin(np.linalg.norm(dmg.positions[cand] - p, axis=1)))
    return int(cand[best]), float(k[best] * step)


class GripperContext:
    """Validity rule for one query: closing-line model, secondary component, aperture.

    The closing direction is fixed across translations and turns with the
    finger about the reference normal, so it is a function of the finger
    angle alone.
    """

    def __init__(self, dmg: Dmg, surface: OrientedSurface, closing_dir, ref_angle: float,
                 ref_normal, max_aperture: float, ray_radius: float | None = None):
        self.dmg = dmg
        self.surface = surface
        self.max_aperture = float(max_aperture)
        c = np.asarray(closing_dir, float)
        self.c0 = c / np.linalg.norm(c)
        self.ref_normal = np.asarray(ref_normal, float) / np.linalg.norm(ref_normal)
        self.ref_angle = float(ref_angle)
        tangential = self.c0 - (self.c0 @ self.ref_normal) * self.ref_normal
        self.constant_closing = bool(np.linalg.norm(tangential) < 1e-9)
        self.ray_radius = ray_radius
        self.snap_radius = dmg.resolution
        self.secondary_component = None
        self._sec = {}
        self._rays = {}
        self._pull = {}

    @property
    def step(self):
        return self.dmg.finger.angle_step

    def closing(self, k: int) -> np.ndarray:
        if self.constant_closing:
            return self.c0
        return _rotate(self.c0, self.ref_normal, k * self.step - self.ref_angle)

    def _key(self, node, k):
        return node if self.constant_closing else (node, k)

    def _ray(self, node, k):
        key = self._key(node, k)
        hit = self._rays.get(key)
        if hit is None:
            p = self.dmg.positions[node]
            c = self.closing(k)
            spacing = self.surface.spacing if self.ray_radius is None else self.ray_radius / 1.5
            hits = ray_intersect(self.surface, p, c, skip_radius=3 * spacing, radius=self.ray_radius)
            valid = [h for h in hits if h.normal @ c > OPPOSING_COS]
            if not valid:
                hit = (Secondary(False, "miss"), None)
            else:
                h = valid[-1]
                opening = float(np.linalg.norm(h.position - p))
                cand = np.array(sorted(self.dmg.tree.query_ball_point(h.position, self.snap_radius)), dtype=int)
                reason = "aperture" if opening > self.max_aperture else ""
                hit = (Secondary(not reason, reason, h.position, opening), cand)
            self._rays[key] = hit
        return hit

    def secondary(self, node: int, k: int) -> Secondary:
        """Secondary contact for the principal at ``node`` with finger index ``k``."""
        sec = self._sec.get((node, k))
        if sec is None:
            sec, cand = self._ray(node, k)
            if sec.ok:
                d3 = self.dmg.direction(node, k * self.step)
                s_node, s_angle = snap_direction(self.dmg, sec.contact, d3, self.snap_radius, cand)
                if s_node is None:
                    sec = Secondary(False, "no_node", sec.contact, sec.opening)
                else:
                    sec = Secondary(True, "", sec.contact, sec.opening, s_node, s_angle)
            self._sec[(node, k)] = sec
        return sec

    def state_valid(self, node: int, k: int) -> bool:
        if not self.dmg.masks[node, k]:
            return False
        sec = self.secondary(node, k)
        if not sec.ok:
            return False
        if self.secondary_component is None:
            return True
        return int(self.dmg.components[sec.node]) == self.secondary_component

    def opening(self, node: int, k: int) -> float:
        return self.secondary(node, k).opening

    def pull(self, a: int, b: int, k: int) -> bool:
        """True when sliding from node ``a`` to ``b`` offers no face to push against."""
        key = (a, b) if self.constant_closing else (a, b, k)
        hit = self._pull.get(key)
        if hit is None:
            pa, pb = self.dmg.positions[a], self.dmg.positions[b]
            t = pb - pa
            sec = self.secondary(a, k)
            origin = pa if sec.contact is None else (pa + sec.contact) / 2
            hit = push_face(self.surface, origin, t, self.ray_radius) is None
            self._pull[key] = hit
        return hit

    def grasp_state(self, node: int, k: int) -> GraspState:
        sec = self.secondary(node, k)
        return GraspState(node, k * self.step, self.closing(k), sec.contact, sec.opening, sec.node,
                          self.dmg.positions[node].copy())


def push_face(surface: OrientedSurface, origin, direction, radius=None):
    """First crossing along ``direction`` if its outward normal lets a pusher act on it."""
    d = np.asarray(direction, float)
    d = d / np.linalg.norm(d)
    hits = ray_intersect(surface, origin, d, 0.0, radius)
    if hits and hits[0].normal @ d >= PUSH_FACE_COS:
        return hits[0]
    return None


def make_context(dmg, surface, start: GraspState, max_aperture: float, ray_radius=None) -> GripperContext:
    ctx = GripperContext(dmg, surface, start.closing_dir, start.principal_angle,
                         dmg.normals[start.principal_node], max_aperture, ray_radius)
    k0 = int(round(start.principal_angle / dmg.finger.angle_step)) % dmg.finger.n_angles
    sec = ctx.secondary(start.principal_node, k0)
    if not sec.ok:
        raise InvalidStart(f"start grasp has no valid secondary contact ({sec.reason})")
    ctx.secondary_component = int(dmg.components[sec.node])
    return ctx


def grasp_at(dmg: Dmg, surface: OrientedSurface, contact, angle: float, closing_dir=None,
             max_aperture: float = 0.1, snap_radius=None) -> GraspState:
    """Snap a principal contact and evaluate its secondary finger.

    ``closing_dir`` defaults to the inward normal of the snapped node.
    """
    node = snap_to_node(dmg, contact, angle, snap_radius)
    k = int(round(angle / dmg.finger.angle_step)) % dmg.finger.n_angles
    c = -dmg.normals[node] if closing_dir is None else np.asarray(closing_dir, float)
    ctx = GripperContext(dmg, surface, c, k * dmg.finger.angle_step, dmg.normals[node], max_aperture)
    return ctx.grasp_state(node, k)


@dataclass
class PlanDiagnostics:
    expanded: int = 0
    rejected_by_secondary: int = 0
    rejected_by_aperture: int = 0
    cost: float = 0.0
    warnings: list = field(default_factory=list)


@dataclass
class PlanResult:
    nodes: list
    translation_angles: list
    states: list
    diagnostics: PlanDiagnostics
    context: GripperContext | None = None

    @property
    def cost(self):
        return self.diagnostics.cost


class _States:
    """Dense indexing of ``(node, position along component, flag)`` states."""

    def __init__(self, dmg: Dmg):
        self.dmg = dmg
        sizes = np.array([n.component.size for n in dmg.nodes], dtype=int)
        self.base = np.concatenate([[0], np.cumsum(sizes)])
        self.total = int(self.base[-1])

    def index(self, node, k, flag=0):
        comp = self.dmg.nodes[node].component
        return 2 * (self.base[node] + comp.offset(k)) + flag

    def decode(self, s):
        flag = s & 1
        pos = s >> 1
        node = int(np.searchsorted(self.base, pos, side="right") - 1)
        comp = self.dmg.nodes[node].component
        return node, int((comp.start + pos - self.base[node]) % comp.n), flag


def _valid_runs(comp: AngularComponent, valid: np.ndarray):
    """Label each position of the component with its contiguous valid run (-1 if invalid)."""
    size = comp.size
    labels = -np.ones(size, dtype=int)
    run = -1
    for t in range(size):
        if valid[t]:
            if t == 0 or not valid[t - 1]:
                run += 1
            labels[t] = run
    if comp.full and valid[0] and valid[-1] and run > 0:
        labels[labels == run] = 0
    return labels


def rotation_targets(comp: AngularComponent, valid: np.ndarray, t: int, labels=None):
    """Positions reachable from ``t`` by rotating inside the component over valid angles.

    Returns ``(positions, signed_steps)``.
    """
    if labels is None:
        labels = _valid_runs(comp, valid)
    if labels[t] < 0:
        return np.zeros(0, int), np.zeros(0, int)
    size = comp.size
    same = np.flatnonzero(labels == labels[t])
    same = same[same != t]
    if comp.full and valid.all():
        d = (same - t) % size
        steps = np.where(d <= size // 2, d, d - size)
        if size % 2 == 0:
            steps = np.where(d == size // 2, size // 2, steps)
        return same, steps
    if comp.full:
        # run may wrap past position 0; measure along the run
        start = t
        while labels[(start - 1) % size] == labels[t] and (start - 1) % size != t:
            start = (start - 1) % size
        along = (same - start) % size
        return same, along - (t - start) % size
    return same, same - t


def plan_path(dmg: Dmg, surface: OrientedSurface, start: GraspState, goal: GraspState,
              weights: CostWeights | None = None, max_aperture: float = 0.1,
              context: GripperContext | None = None) -> PlanResult:
    """Minimum-cost principal-finger path from ``start`` to ``goal``."""
    weights = weights or CostWeights()
    step = dmg.finger.angle_step
    n_ang = dmg.finger.n_angles
    s_node, g_node = start.principal_node, goal.principal_node
    k0 = int(round(start.principal_angle / step)) % n_ang
    kg = int(round(goal.principal_angle / step)) % n_ang
    if not dmg.masks[s_node, k0]:
        raise InvalidStart("start angle outside the start node's angular component")
    if not dmg.masks[g_node, kg]:
        raise InvalidGoal("goal angle outside the goal node's angular component")
    ctx = context or make_context(dmg, surface, start, max_aperture)
    if dmg.components[s_node] != dmg.components[g_node]:
        raise NoPath(
            f"start lies in component {dmg.components[s_node]}, goal in {dmg.components[g_node]}",
            int(dmg.components[s_node]), int(dmg.components[g_node]),
        )
    if not ctx.state_valid(s_node, k0):
        raise InvalidStart("start grasp violates the secondary-finger constraint")

    diag = PlanDiagnostics()
    states = _States(dmg)
    dist = np.full(2 * states.total, np.inf)
    prev = np.full(2 * states.total, -1, dtype=np.int64)
    valid_cache, runs_cache = {}, {}
    seen_invalid = set()

    def node_valid(node):
        v = valid_cache.get(node)
        if v is None:
            comp = dmg.nodes[node].component
            v = np.array([ctx.state_valid(node, int(k)) for k in comp.indices])
            for k, ok in zip(comp.indices, v):
                if not ok and (node, int(k)) not in seen_invalid:
                    seen_invalid.add((node, int(k)))
                    reason = ctx.secondary(node, int(k)).reason
                    if reason == "aperture":
                        diag.rejected_by_aperture += 1
                    else:
                        diag.rejected_by_secondary += 1
            valid_cache[node] = v
            runs_cache[node] = _valid_runs(comp, v)
        return v

    src = states.index(s_node, k0, 0)
    dist[src] = 0.0
    heap = [(0.0, src)]
    goal_states = {states.index(g_node, kg, 0), states.index(g_node, kg, 1)}
    reached = None
    while heap:
        d, s = heapq.heappop(heap)
        if d > dist[s]:
            continue
        diag.expanded += 1
        if s in goal_states:
            reached = s
            break
        node, k, flag = states.decode(s)
        comp = dmg.nodes[node].component
        valid = node_valid(node)
        t = comp.offset(k)
        if flag == 0:
            targets, steps = rotation_targets(comp, valid, t, runs_cache[node])
            if targets.size:
                arc = np.abs(steps) * step
                costs = d + (weights.w_rotation_fixed + weights.w_rotation * arc
                             + weights.w_excess_rotation * np.maximum(0.0, arc - weights.comfort_arc))
                idx = 2 * (states.base[node] + targets) + 1
                better = costs < dist[idx]
                for i, c in zip(idx[better], costs[better]):
                    dist[i] = c
                    prev[i] = s
                    heapq.heappush(heap, (float(c), int(i)))
        p = dmg.positions[node]
        op = ctx.opening(node, k)
        for nb in dmg.adjacency[node]:
            if not dmg.masks[nb, k] or not node_valid(nb)[dmg.nodes[nb].component.offset(k)]:
                continue
            edge = float(np.sqrt(np.sum((dmg.positions[nb] - p) ** 2)))
            edge += weights.w_opening * abs(ctx.opening(nb, k) - op)
            if weights.w_pull and ctx.pull(node, nb, k):
                edge += weights.w_pull
            cost = d + edge
            i = states.index(nb, k, 0)
            if cost < dist[i]:
                dist[i] = cost
                prev[i] = s
                heapq.heappush(heap, (cost, i))

    if reached is None:
        raise NoPath("every route violates the secondary-finger or aperture constraints",
                     int(dmg.components[s_node]), int(dmg.components[g_node]))
    chain = [reached]
    while chain[-1] != src:
        chain.append(int(prev[chain[-1]]))
    chain.reverse()
    decoded = [states.decode(s)[:2] for s in chain]
    nodes, angles = [decoded[0][0]], []
    for (n0, ka), (n1, kb) in zip(decoded, decoded[1:]):
        if n1 != n0:
            angles.append(ka * step)
            nodes.append(n1)
    diag.cost = float(dist[reached])

    if goal.secondary_contact is not None:
        final = ctx.secondary(g_node, kg)
        gap = float(np.linalg.norm(final.contact - np.asarray(goal.secondary_contact)))
        if gap > dmg.resolution:
            msg = f"goal secondary contact differs from the reached one by {gap:.4f} m"
            warnings.warn(msg, stacklevel=2)
            diag.warnings.append(msg)
    return PlanResult(nodes, angles, decoded, diag, ctx)


# --------------------------------------------------------------------------- primitives


@dataclass(frozen=True, eq=False)
class Rotation:
    angle: float

    kind = "rotation"


@dataclass(frozen=True, eq=False)
class Translation:
    vector: np.ndarray

    kind = "translation"


@dataclass(eq=False)
class PrimitiveSequence:
    """Alternating rotations and translations, starting and ending with a rotation.

    ``snapshots[i]`` is the grasp expected after ``steps[i]``.
    """

    steps: list
    snapshots: list
    start: GraspState | None = None

    @property
    def rotations(self):
        return [s.angle for s in self.steps if isinstance(s, Rotation)]

    @property
    def translations(self):
        return [s.vector for s in self.steps if isinstance(s, Translation)]


def inside_rotation(comp: AngularComponent, from_angle: float, to_angle: float) -> float:
    """Signed rotation (degrees) from one angle to another without leaving ``comp``."""
    a, b = comp.index_of(from_angle), comp.index_of(to_angle)
    if not (comp.mask[a] and comp.mask[b]):
        raise EmptyIntersection("rotation endpoints must lie in the component")
    if comp.full:
        d = (b - a) % comp.n
        if d > comp.n // 2:
            d -= comp.n
        return d * comp.step
    return (comp.offset(b) - comp.offset(a)) * comp.step


def _guarded_rotation(comp, node, from_angle, to_angle, context):
    """Inside rotation that, on a full circle, avoids angles the context rejects."""
    r = inside_rotation(comp, from_angle, to_angle)
    if context is None or not comp.full or r == 0:
        return r
    a = comp.index_of(from_angle)
    steps = int(round(r / comp.step))
    sign = 1 if steps > 0 else -1
    if all(context.state_valid(node, (a + sign * i) % comp.n) for i in range(1, abs(steps) + 1)):
        return r
    return r - sign * 360.0


def _choose(comp, current, target_mask, goal_angle, policy):
    idx = np.flatnonzero(target_mask)
    if idx.size == 0:
        raise EmptyIntersection("consecutive path nodes share no finger angle")
    cur = comp.index_of(current)
    if policy == "minimal" and target_mask[cur]:
        return current, 0.0
    rots = np.array([inside_rotation(comp, current, i * comp.step) for i in idx])
    if policy == "minimal":
        key = np.lexsort((-np.sign(rots), np.abs(rots)))
    elif policy == "goal_seeking":
        gd = np.abs(((idx * comp.step - goal_angle) + 180.0) % 360.0 - 180.0)
        key = np.lexsort((np.abs(rots), gd))
    else:
        raise ValueError(f"unknown rotation policy {policy!r}")
    best = key[0]
    return (idx[best] * comp.step) % 360.0, float(rots[best])


def to_primitives(path, dmg: Dmg, start_angle: float, goal_angle: float,
                  rotation_policy: str = "minimal", translation_angles=None,
                  context: GripperContext | None = None) -> PrimitiveSequence:
    """Turn a node path into ``r0, t0, r1, ..., r_{K-1}``.

    ``translation_angles`` pins the finger angle used for each translation
    (as chosen by the search); otherwise ``rotation_policy`` picks them.
    """
    path = [int(n) for n in path]
    nodes = [dmg.nodes[n] for n in path]
    if not nodes[0].component.contains(start_angle):
        raise ValueError("start angle outside the first node's component")
    if not nodes[-1].component.contains(goal_angle):
        raise ValueError("goal angle outside the last node's component")
    step = dmg.finger.angle_step

    def snap(node, angle):
        if context is not None:
            return context.grasp_state(node, int(round(angle / step)) % dmg.finger.n_angles)
        return GraspState(node, angle % 360.0, np.zeros(3), contact=dmg.positions[node].copy())

    steps, snaps = [], []
    gamma = float(start_angle) % 360.0
    for k in range(len(path) - 1):
        comp = nodes[k].component
        inter = comp.mask & nodes[k + 1].component.mask
        if not inter.any():
            raise EmptyIntersection(f"nodes {path[k]} and {path[k + 1]} share no finger angle")
        if translation_angles is not None:
            target = float(translation_angles[k]) % 360.0
            if not inter[comp.index_of(target)]:
                raise EmptyIntersection(f"angle {target} not shared by nodes {path[k]}, {path[k + 1]}")
            r = _guarded_rotation(comp, path[k], gamma, target, context)
        else:
            target, r = _choose(comp, gamma, inter, goal_angle, rotation_policy)
        gamma = target
        steps.append(Rotation(r))
        snaps.append(snap(path[k], gamma))
        steps.append(Translation(dmg.positions[path[k + 1]] - dmg.positions[path[k]]))
        snaps.append(snap(path[k + 1], gamma))
    r = _guarded_rotation(nodes[-1].component, path[-1], gamma, goal_angle, context)
    steps.append(Rotation(r))
    snaps.append(snap(path[-1], goal_angle))
    start = snap(path[0], start_angle)
    return PrimitiveSequence(steps, snaps, start)


def replay(seq: PrimitiveSequence, contact, angle: float):
    """Fold the steps over a start contact and finger angle."""
    p = np.array(contact, float)
    a = float(angle)
    for s in seq.steps:
        if isinstance(s, Rotation):
            a += s.angle
        else:
            p = p + s.vector
    return p, a % 360.0


def merge_segments(seq: PrimitiveSequence, angle_tol: float = 0.0, direction_tol: float = 1.0) -> PrimitiveSequence:
    """Unite translations separated by a negligible rotation and nearly equal direction.

    A dropped rotation is carried into the next kept rotation, so the net
    rotation is unchanged.
    """
    cos_tol = np.cos(np.radians(direction_tol))
    steps, snaps = [], []
    carry = 0.0
    for s, snap in zip(seq.steps, seq.snapshots):
        if isinstance(s, Rotation):
            steps.append(Rotation(s.angle + carry))
            snaps.append(snap)
            carry = 0.0
            continue
        if (len(steps) >= 2 and isinstance(steps[-2], Translation)
                and abs(steps[-1].angle) <= angle_tol):
            prev = steps[-2].vector
            c = prev @ s.vector / (np.linalg.norm(prev) * np.linalg.norm(s.vector))
            if c >= cos_tol:
                carry = steps.pop().angle
                snaps.pop()
                steps[-1] = Translation(prev + s.vector)
                snaps[-1] = snap
                continue
        steps.append(s)
        snaps.append(snap)
    return PrimitiveSequence(steps, snaps, seq.start)


@dataclass
class Plan:
    result: PlanResult
    sequence: PrimitiveSequence
    start: GraspState
    goal: GraspState


def plan(dmg: Dmg, surface: OrientedSurface, start_contact, start_angle: float, goal_contact,
         goal_angle: float, weights: CostWeights | None = None, max_aperture: float = 0.1,
         closing_dir=None, merge: bool = True) -> Plan:
    """Snap both grasps, search, and emit the (merged) primitive sequence."""
    try:
        start = grasp_at(dmg, surface, start_contact, start_angle, closing_dir, max_aperture)
    except NoAdmissibleNode as exc:
        raise InvalidStart(str(exc)) from exc
    try:
        g_node = snap_to_node(dmg, goal_contact, goal_angle)
    except NoAdmissibleNode as exc:
        raise InvalidGoal(str(exc)) from exc
    goal = GraspState(g_node, goal_angle % 360.0, start.closing_dir, contact=dmg.positions[g_node].copy())
    result = plan_path(dmg, surface, start, goal, weights, max_aperture)
    seq = to_primitives(result.nodes, dmg, start.principal_angle, goal.principal_angle,
                        translation_angles=result.translation_angles, context=result.context)
    if merge:
        seq = merge_segments(seq)
    return Plan(result, seq, start, replace(goal, secondary_contact=seq.snapshots[-1].secondary_contact))


# --------------------------------------------------------------------------- JSON


def _vec(v):
    return None if v is None else np.asarray(v, float).tolist()


def grasp_to_dict(g: GraspState) -> dict:
    return {
        "principal_node": int(g.principal_node),
        "principal_angle": float(g.principal_angle),
        "closing_dir": _vec(g.closing_dir),
        "secondary_contact": _vec(g.secondary_contact),
        "opening": None if g.opening is None else float(g.opening),
        "secondary_node": None if g.secondary_node is None else int(g.secondary_node),
        "contact": _vec(g.contact),
    }


def grasp_from_dict(d: dict) -> GraspState:
    arr = lambda v: None if v is None else np.asarray(v, float)  # noqa: E731
    return GraspState(int(d["principal_node"]), float(d["principal_angle"]), arr(d["closing_dir"]),
                      arr(d.get("secondary_contact")), d.get("opening"), d.get("secondary_node"),
                      arr(d.get("contact")))


def sequence_to_dict(seq: PrimitiveSequence) -> dict:
    steps = []
    for s in seq.steps:
        if isinstance(s, Rotation):
            steps.append({"kind": "rotation", "angle": float(s.angle)})
        else:
            steps.append({"kind": "translation", "vector": _vec(s.vector)})
    return {
        "steps": steps,
        "snapshots": [grasp_to_dict(g) for g in seq.snapshots],
        "start": None if seq.start is None else grasp_to_dict(seq.start),
    }


def sequence_from_dict(d: dict) -> PrimitiveSequence:
    steps = []
    for s in d["steps"]:
        if s["kind"] == "rotation":
            steps.append(Rotation(float(s["angle"])))
        elif s["kind"] == "translation":
            steps.append(Translation(np.asarray(s["vector"], float)))
        else:
            raise ValueError(f"unknown primitive kind {s['kind']!r}")
    start = d.get("start")
    return PrimitiveSequence(steps, [grasp_from_dict(g) for g in d["snapshots"]],
                             None if start is None else grasp_from_dict(start))


def plan_to_dict(p: Plan) -> dict:
    diag = p.result.diagnostics
    return {
        "node_path": [int(n) for n in p.result.nodes],
        "translation_angles": [float(a) for a in p.result.translation_angles],
        "cost": float(diag.cost),
        "diagnostics": {
            "expanded": diag.expanded,
            "rejected_by_secondary": diag.rejected_by_secondary,
            "rejected_by_aperture": diag.rejected_by_aperture,
            "warnings": list(diag.warnings),
        },
        "start": grasp_to_dict(p.start),
        "goal": grasp_to_dict(p.goal),
        "sequence": sequence_to_dict(p.sequence),
    }
