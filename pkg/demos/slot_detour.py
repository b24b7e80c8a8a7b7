"""The second finger forces a detour around a pocket on the far side of a plate.

The principal finger rides the continuous top face. Above the pocket its
partner would land on the pocket floor, which is a different graph
component, so the planner walks around.
"""

from dexgraph import shapes
from dexgraph.dmg import FingerModel, build_dmg
from dexgraph.planner import plan
from dexgraph.surface import segment

surface = shapes.plate_with_slot()
dmg = build_dmg(segment(surface, 0.013), surface, FingerModel(), 0.07)
p = plan(dmg, surface, [-0.08, 0.0, 0.01], 0.0, [0.08, 0.0, 0.01], 0.0)

print(f"cost {p.result.cost:.4f}, {len(p.result.nodes)} nodes, "
      f"{p.result.diagnostics.rejected_by_secondary} states rejected by the second finger")
for n in p.result.nodes:
    x, y, _ = dmg.positions[n]
    print(f"  node {n:4d}  x={x:+.3f}  y={y:+.3f}")
print("the pocket spans |x| < 0.015, |y| < 0.03")
