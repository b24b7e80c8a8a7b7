"""A finger on the plug's neck can point left or right but not up or down.

The two angle ranges become separate graph nodes at the same spot, and no
in-hand motion connects them.
"""

import numpy as np

from dexgraph import shapes
from dexgraph.dmg import FingerModel, build_dmg
from dexgraph.planner import snap_to_node
from dexgraph.surface import segment

surface = shapes.plug()
dmg = build_dmg(segment(surface, 0.013), surface, FingerModel(), 0.07)
print(f"{len(dmg)} nodes, {len(dmg.edges)} edges, {dmg.n_components} components")

contact = np.array([0.01, 0.0, 0.04])
for angle in (0.0, 180.0):
    n = snap_to_node(dmg, contact, angle)
    comp = dmg.nodes[n].component
    lo, hi = comp.angles[0], comp.angles[-1]
    print(f"angle {angle:5.1f}: node {n} at {dmg.positions[n].round(3)}, "
          f"angles {lo:g}..{hi:g}, component {dmg.components[n]}")
