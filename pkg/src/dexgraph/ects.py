"""Dual-arm execution of primitive sequences in the extended cooperative task space.

The first gripper holds the object, the second one pushes it. Everything is
kinematic: contacts stick, nothing slips, and the object pose relative to
the first gripper is integrated exactly from the commanded relative twist.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation as R

from .dmg import Dmg
from .errors import ContactLost, ExecutionStall, NoPushPoint
from .planner import GraspState, PrimitiveSequence, Rotation, Translation, push_face
from .surface import OrientedSurface, ray_intersect

PHASES = ("FindContact", "Approach", "Execute", "Leave")


@dataclass(frozen=True, eq=False)
class Twist:
    """Linear velocity ``v`` and angular velocity ``w`` stacked as ``(v, w)``."""

    v: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, float).reshape(3)
        w = np.asarray(self.w, float).reshape(3)
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(w))):
            raise ValueError("twist components must be finite")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "w", w)

    @classmethod
    def zero(cls) -> "Twist":
        return cls(np.zeros(3), np.zeros(3))

    @classmethod
    def from_vector(cls, x) -> "Twist":
        x = np.asarray(x, float).reshape(6)
        return cls(x[:3], x[3:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.v, self.w])

    def __add__(self, other: "Twist") -> "Twist":
        return Twist(self.v + other.v, self.w + other.w)

    def __sub__(self, other: "Twist") -> "Twist":
        return Twist(self.v - other.v, self.w - other.w)

    def __mul__(self, k: float) -> "Twist":
        return Twist(k * self.v, k * self.w)

    __rmul__ = __mul__

    def __neg__(self) -> "Twist":
        return Twist(-self.v, -self.w)

    def __repr__(self):
        return f"Twist(v={self.v.tolist()}, w={self.w.tolist()})"


@dataclass(frozen=True)
class EctsParams:
    alpha: float = 1.0
    beta: int = 1

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.beta not in (0, 1):
            raise ValueError("beta must be 0 or 1")

    @property
    def block(self) -> np.ndarray:
        """Coefficients multiplying the identity blocks."""
        a, b = self.alpha, self.beta
        return np.array([[a, -(1.0 - a)], [-b, a]])

    @property
    def determinant(self) -> float:
        a = self.alpha
        return a * a - self.beta * (1.0 - a)


def ects_map(params: EctsParams, xa: Twist, xr: Twist) -> tuple:
    """Per-arm twists ``(x1, x2)`` from absolute and relative twists."""
    a, b = params.alpha, params.beta
    return a * xa - (1.0 - a) * xr, -b * xa + a * xr


def ects_inverse(params: EctsParams, x1: Twist, x2: Twist) -> tuple:
    """Recover ``(xa, xr)``; raises ``ValueError`` when the map is singular."""
    det = params.determinant
    if det == 0.0:
        raise ValueError("coordination matrix is singular for these coefficients")
    a, b = params.alpha, params.beta
    return (a * x1 + (1.0 - a) * x2) * (1.0 / det), (b * x1 + a * x2) * (1.0 / det)


def translation_velocity(t_k, rotation, m: float) -> Twist:
    """Relative twist that slides the contact along ``t_k``: the object moves the other way.

    A 2D ``t_k`` is read in the gripper's xy plane.
    """
    t = np.asarray(t_k, float).ravel()
    if t.size == 2:
        t = np.array([t[0], t[1], 0.0])
    d = np.asarray(rotation, float) @ t
    n = np.linalg.norm(d)
    if n == 0.0:
        raise ValueError("translation direction must be nonzero")
    return Twist(-m * d / n, np.zeros(3))


def rotation_velocity(theta: float, phi: float, phi_dot: float) -> Twist:
    """Velocity of the tracked point at unit lever arm, gripper y as the axis."""
    c, s = math.cos(theta + phi), math.sin(theta + phi)
    return Twist((c * phi_dot, 0.0, -s * phi_dot), (0.0, phi_dot, 0.0))


def integrate_rotation(theta: float, r_deg: float, phi_dot: float, dt: float = 1e-4, radius: float = 1.0):
    """Track a point driven by :func:`rotation_velocity` while ``phi`` goes from 0 to ``-r``.

    Uses the midpoint angle for each step. Returns ``(q, phi)`` histories;
    ``q`` lives in the gripper zx plane as ``radius * (sin, 0, cos)``.
    """
    target = -math.radians(r_deg)
    if target == 0.0:
        q0 = radius * np.array([math.sin(theta), 0.0, math.cos(theta)])
        return q0[None], np.zeros(1)
    rate = math.copysign(abs(phi_dot), target)
    n_full = int(abs(target / rate) // dt)
    hs = [dt] * n_full
    rest = abs(target / rate) - n_full * dt
    if rest > 1e-15:
        hs.append(rest)
    q = radius * np.array([math.sin(theta), 0.0, math.cos(theta)])
    qs, phis = [q], [0.0]
    phi = 0.0
    for h in hs:
        mid = phi + rate * h / 2
        q = q + h * radius * rotation_velocity(theta, mid, rate).v
        phi += rate * h
        qs.append(q)
        phis.append(phi)
    phis[-1] = target
    return np.array(qs), np.array(phis)


@dataclass(frozen=True)
class ControllerGains:
    k_opening: float = 0.7
    k_linear: float = 0.32
    k_angular: float = 16.0
    dt: float = 0.01
    tolerance_pos: float = 0.001
    tolerance_ang: float = 0.1
    v_max: float = 0.05
    omega_max: float = 0.5
    max_steps: int = 20000
    standoff: float = 0.02
    contact_tol: float = 0.002

    def __post_init__(self):
        if min(self.k_opening, self.k_linear, self.k_angular, self.dt, self.tolerance_pos, self.tolerance_ang) <= 0:
            raise ValueError("gains, step and tolerances must be positive")
        if self.v_max < 0 or self.omega_max < 0:
            raise ValueError("velocity limits must be non-negative")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")


# --------------------------------------------------------------------------- push contacts


@dataclass(frozen=True, eq=False)
class PushContact:
    position: np.ndarray
    normal: np.ndarray
    depth: float = 0.0


def translation_push(surface: OrientedSurface, midpoint, t, radius=None) -> PushContact:
    hit = push_face(surface, midpoint, t, radius)
    if hit is None:
        raise NoPushPoint("no face to push along this translation; it would need a pull")
    return PushContact(hit.position, hit.normal)


def rotation_push(surface: OrientedSurface, midpoint, axis, finger_dir, r_deg: float, depth: float,
                  radius=None) -> PushContact:
    """Push point on the line orthogonal to the finger, inset ``depth`` beyond the fingertips.

    Of the two crossings, the one whose induced motion presses into the
    surface for a rotation of sign ``r_deg`` is returned.
    """
    n = np.asarray(axis, float)
    d3 = np.asarray(finger_dir, float)
    m = np.asarray(midpoint, float)
    back = ray_intersect(surface, m, -d3, 0.0, radius)
    if not back:
        raise NoPushPoint("no material beyond the fingertips to push on")
    d = min(depth, back[0].distance / 2)
    p0 = m - d * d3
    e = np.cross(n, d3)
    side = -e if r_deg > 0 else e
    hits = ray_intersect(surface, p0, side, 0.0, radius)
    if not hits:
        raise NoPushPoint("line orthogonal to the finger leaves the object on one side only")
    return PushContact(hits[0].position, hits[0].normal, d)


def _midpoint(grasp: GraspState, contact):
    if grasp.secondary_contact is None or grasp.contact is None:
        return np.asarray(contact, float)
    return np.asarray(contact, float) + (np.asarray(grasp.secondary_contact) - np.asarray(grasp.contact)) / 2


def find_push_contact(surface: OrientedSurface, dmg: Dmg, grasp: GraspState, primitive,
                      depth: float | None = None) -> PushContact:
    """Where the second gripper pushes to execute ``primitive`` from ``grasp``."""
    contact = dmg.positions[grasp.principal_node] if grasp.contact is None else grasp.contact
    mid = _midpoint(grasp, contact)
    if isinstance(primitive, Translation):
        return translation_push(surface, mid, primitive.vector)
    if isinstance(primitive, Rotation):
        if primitive.angle == 0:
            raise ValueError("a zero rotation needs no push")
        depth = 5 * dmg.resolution if depth is None else depth
        n = dmg.normals[grasp.principal_node]
        d3 = dmg.direction(grasp.principal_node, grasp.principal_angle)
        return rotation_push(surface, mid, n, d3, primitive.angle, depth)
    raise TypeError(f"unknown primitive {primitive!r}")


# --------------------------------------------------------------------------- simulation


@dataclass
class ExecutionState:
    """Object pose in the first-gripper frame plus both gripper poses in the world."""

    obj_rotation: np.ndarray
    obj_translation: np.ndarray
    g1_rotation: np.ndarray
    g1_position: np.ndarray
    g2_rotation: np.ndarray
    g2_position: np.ndarray
    opening: float
    push_contact: np.ndarray | None = None
    phase: str = "FindContact"
    time: float = 0.0

    def to_object(self, p_g1):
        return self.obj_rotation.T @ (np.asarray(p_g1) - self.obj_translation)

    def to_world(self, p_obj):
        return self.g1_position + self.g1_rotation @ (self.obj_rotation @ p_obj + self.obj_translation)

    @property
    def contact(self):
        """Principal contact in object coordinates (the first gripper's origin)."""
        return self.to_object(np.zeros(3))

    @property
    def finger(self):
        return self.obj_rotation.T @ np.array([0.0, 0.0, -1.0])

    @property
    def axis(self):
        return self.obj_rotation.T @ np.array([0.0, 1.0, 0.0])


@dataclass
class ExecutionResult:
    records: list
    report: dict
    state: ExecutionState | None = None
    warnings: list = field(default_factory=list)


def _screw(position, rotation, v, w, ref, dt):
    """Flow a rigid pose under a constant spatial twist given at point ``ref``."""
    ww = float(w @ w)
    if ww == 0.0:
        return position + v * dt, rotation
    axis_pt = ref + np.cross(w, v) / ww
    pitch = (w @ v) / ww
    dR = R.from_rotvec(w * dt).as_matrix()
    return axis_pt + dR @ (position - axis_pt) + pitch * w * dt, dR @ rotation


def _signed_angle(a, b, axis):
    return math.atan2(float(axis @ np.cross(a, b)), float(a @ b))


def _pose(rot, pos):
    return {"rotvec": R.from_matrix(rot).as_rotvec().tolist(), "position": np.asarray(pos).tolist()}


class _Simulator:
    def __init__(self, surface, dmg, params, gains, absolute, depth, raise_on_stall, log):
        self.surface = surface
        self.dmg = dmg
        self.params = params
        self.gains = gains
        self.absolute = absolute
        self.depth = 5 * dmg.resolution if depth is None else depth
        self.raise_on_stall = raise_on_stall
        self.log = log
        self.records = []
        self.steps = 0
        self.stalls = 0
        self.warnings = []
        self.primitive = -1

    def start(self, grasp: GraspState):
        dmg = self.dmg
        c0 = dmg.positions[grasp.principal_node] if grasp.contact is None else np.asarray(grasp.contact, float)
        n = dmg.normals[grasp.principal_node]
        z = -dmg.direction(grasp.principal_node, grasp.principal_angle)
        x = np.cross(n, z)
        Ro = np.vstack([x, n, z])
        home = self.surface.centroid + self.surface.diameter * np.array([0.0, 0.0, 1.0])
        self.s = ExecutionState(Ro, -Ro @ c0, np.eye(3), np.zeros(3), np.eye(3), Ro @ (home - c0),
                                grasp.opening or 0.0)

    def record(self, x1: Twist, x2: Twist):
        s = self.s
        self.steps += 1
        if self.log:
            self.records.append({
                "time": round(s.time, 9),
                "phase": s.phase,
                "primitive": self.primitive,
                "object_pose": _pose(s.obj_rotation, s.obj_translation),
                "g1_pose": _pose(s.g1_rotation, s.g1_position),
                "g2_pose": _pose(s.g2_rotation, s.g2_position),
                "x1": x1.as_vector().tolist(),
                "x2": x2.as_vector().tolist(),
                "opening": s.opening,
            })

    def stall(self, what):
        msg = f"primitive {self.primitive}: {what} did not converge in {self.gains.max_steps} steps"
        if self.raise_on_stall:
            raise ExecutionStall(msg)
        self.stalls += 1
        self.warnings.append(msg)

    def move_relative(self, target_obj):
        """P motion of the second gripper toward an object point, split between the arms by the ECTS map."""
        s, g = self.s, self.gains
        for _ in range(g.max_steps):
            err = s.g1_rotation.T @ (s.to_world(target_obj) - s.g2_position)
            dist = float(np.linalg.norm(err))
            if dist < g.tolerance_pos:
                return
            speed = min(g.k_linear * dist, g.v_max)
            # free-space moves carry no absolute component
            x1, x2 = ects_map(self.params, Twist.zero(), Twist(speed * err / dist, np.zeros(3)))
            s.g1_position = s.g1_position + s.g1_rotation @ x1.v * g.dt
            s.g2_position = s.g2_position + s.g1_rotation @ x2.v * g.dt
            s.time += g.dt
            self.record(x1, x2)
        self.stall(s.phase.lower())

    def apply(self, xr: Twist, push_obj):
        """Advance one step under relative twist ``xr`` (first-gripper frame, at the push point)."""
        s, g = self.s, self.gains
        x1, x2 = ects_map(self.params, self.absolute, xr)
        ref = s.to_world(push_obj)
        R1 = s.g1_rotation
        p1, r1 = _screw(s.g1_position, R1, R1 @ x1.v, R1 @ x1.w, ref, g.dt)
        p2, r2 = _screw(s.g2_position, s.g2_rotation, R1 @ x2.v, R1 @ x2.w, ref, g.dt)
        # object relative to the first gripper, exact for a rigid pivot about its origin
        if np.any(xr.w):
            dR = R.from_rotvec(xr.w * g.dt).as_matrix()
            s.obj_rotation = dR @ s.obj_rotation
            s.obj_translation = dR @ s.obj_translation
        else:
            s.obj_translation = s.obj_translation + xr.v * g.dt
        s.g1_position, s.g1_rotation, s.g2_position, s.g2_rotation = p1, r1, p2, r2
        s.time += g.dt
        self.record(x1, x2)
        gap = float(np.linalg.norm(s.g2_position - s.to_world(push_obj)))
        if gap > g.contact_tol + g.tolerance_pos:
            raise ContactLost(f"primitive {self.primitive}: pusher drifted {gap:.4f} m from the push point")

    def track_opening(self, target):
        if target is not None:
            self.s.opening += self.gains.k_opening * (target - self.s.opening) * self.gains.dt

    def push(self, contact: PushContact):
        """FindContact and Approach for a push at ``contact`` (object coordinates)."""
        s = self.s
        s.phase = "FindContact"
        s.push_contact = contact.position
        self.record(Twist.zero(), Twist.zero())
        s.phase = "Approach"
        self.move_relative(contact.position)

    def leave(self, contact: PushContact):
        s = self.s
        s.phase = "Leave"
        self.move_relative(contact.position + self.gains.standoff * contact.normal)
        s.push_contact = None

    def translate(self, target, mid_offset, opening):
        s, g = self.s, self.gains
        t = target - s.contact
        contact = translation_push(self.surface, s.contact + mid_offset, t)
        self.push(contact)
        s.phase = "Execute"
        for _ in range(g.max_steps):
            err = target - s.contact
            dist = float(np.linalg.norm(err))
            if dist < g.tolerance_pos:
                break
            m = min(g.k_linear * dist, g.v_max)
            if m == 0.0:
                continue
            self.apply(translation_velocity(s.obj_rotation @ err, np.eye(3), m), contact.position)
            self.track_opening(opening)
        else:
            self.stall("translation")
        self.leave(contact)

    def rotate(self, delta_deg, mid_offset, opening):
        s, g = self.s, self.gains
        contact = rotation_push(self.surface, s.contact + mid_offset, s.axis, s.finger, delta_deg, self.depth)
        self.push(contact)
        s.phase = "Execute"
        q = s.obj_rotation @ contact.position + s.obj_translation
        rho = math.hypot(q[0], q[2])
        theta = math.atan2(q[0], q[2])
        target = -math.radians(delta_deg)
        tol = math.radians(g.tolerance_ang)
        phi = 0.0
        for _ in range(g.max_steps):
            err = target - phi
            if abs(err) < tol:
                break
            rate = float(np.clip(g.k_angular * err, -g.omega_max, g.omega_max))
            if rate == 0.0:
                continue
            unit = rotation_velocity(theta, phi, rate)
            self.apply(Twist(rho * unit.v, unit.w), contact.position)
            phi += rate * g.dt
            self.track_opening(opening)
        else:
            self.stall("rotation")
        self.leave(contact)


def simulate_execution(surface: OrientedSurface, dmg: Dmg, sequence: PrimitiveSequence,
                       start: GraspState | None = None, params: EctsParams | None = None,
                       gains: ControllerGains | None = None, *, absolute: Twist | None = None,
                       depth: float | None = None, comfort_arc: float = 120.0,
                       raise_on_stall: bool = True, log: bool = True) -> ExecutionResult:
    """Run FindContact, Approach, Execute and Leave for every primitive.

    Targets are absolute: each translation drives the contact to the next
    snapshot and each rotation closes the remaining finger-angle gap, so
    residuals do not pile up along the sequence. ``absolute`` is added to
    the commanded twists while a primitive executes.
    """
    params = params or EctsParams()
    gains = gains or ControllerGains()
    start = start or sequence.start
    if not sequence.steps:
        return ExecutionResult([], {"position_error": 0.0, "angle_error": 0.0, "steps": 0, "stalls": 0})
    if start is None:
        raise ValueError("a start grasp is required")
    sim = _Simulator(surface, dmg, params, gains, absolute or Twist.zero(), depth, raise_on_stall, log)
    sim.start(start)
    prev = start
    for i, (step, snap) in enumerate(zip(sequence.steps, sequence.snapshots)):
        sim.primitive = i
        s = sim.s
        offset = _midpoint(prev, np.zeros(3)) if prev.secondary_contact is not None else np.zeros(3)
        if isinstance(step, Translation):
            target = dmg.positions[snap.principal_node] if snap.contact is None else np.asarray(snap.contact)
            if np.linalg.norm(target - s.contact) >= gains.tolerance_pos:
                sim.translate(target, offset, snap.opening)
        else:
            planned = dmg.direction(prev.principal_node, prev.principal_angle)
            drift = math.degrees(_signed_angle(s.finger, planned, s.axis))
            delta = step.angle + drift
            if abs(step.angle) > comfort_arc:
                sim.warnings.append(f"primitive {i}: rotation of {step.angle:.1f} deg exceeds the comfort arc")
            if abs(delta) >= gains.tolerance_ang:
                sim.rotate(delta, offset, snap.opening)
        prev = snap

    goal = sequence.snapshots[-1]
    s = sim.s
    goal_contact = dmg.positions[goal.principal_node] if goal.contact is None else np.asarray(goal.contact)
    goal_dir = dmg.direction(goal.principal_node, goal.principal_angle)
    report = {
        "position_error": float(np.linalg.norm(s.contact - goal_contact)),
        "angle_error": abs(math.degrees(_signed_angle(s.finger, goal_dir, s.axis))),
        "steps": sim.steps,
        "stalls": sim.stalls,
    }
    return ExecutionResult(sim.records, report, s, sim.warnings)
