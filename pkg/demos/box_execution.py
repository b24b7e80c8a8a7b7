"""Plan a slide plus a quarter turn on a box and execute it with both arms.

Runs the same plan with the holding arm still (alpha=1), shared motion
(alpha=0.5) and the pushing arm still (alpha=0).
"""

import numpy as np

from dexgraph import shapes
from dexgraph.dmg import FingerModel, build_dmg
from dexgraph.ects import EctsParams, simulate_execution
from dexgraph.planner import Rotation, plan
from dexgraph.surface import segment

surface = shapes.box(0.1, 0.1, 0.02)
dmg = build_dmg(segment(surface, 0.013), surface, FingerModel(), 0.07)
p = plan(dmg, surface, [-0.03, 0.0, 0.01], 0.0, [0.03, 0.02, 0.01], 90.0)

for step in p.sequence.steps:
    if isinstance(step, Rotation):
        print(f"  rotate {step.angle:+.0f} deg")
    else:
        print(f"  translate {np.round(step.vector * 1000, 1)} mm")

for alpha in (1.0, 0.5, 0.0):
    res = simulate_execution(surface, dmg, p.sequence, p.start, EctsParams(alpha, 1))
    g1 = np.array([r["g1_pose"]["position"] for r in res.records])
    g2 = np.array([r["g2_pose"]["position"] for r in res.records])
    print(f"alpha={alpha}: error {res.report['position_error'] * 1000:.3f} mm, "
          f"{res.report['angle_error']:.3f} deg, arm travel "
          f"{np.linalg.norm(np.diff(g1, axis=0), axis=1).sum():.3f} / "
          f"{np.linalg.norm(np.diff(g2, axis=0), axis=1).sum():.3f} m")
