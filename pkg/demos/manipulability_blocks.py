"""Manipulability matrix on the slotted plate, written as CSV and PGM.

One surface component can host several blocks: poses above the pocket
cannot reach the rest of the top face without regrasping.
"""

import sys
from pathlib import Path

from dexgraph import shapes
from dexgraph.dmg import FingerModel, build_dmg
from dexgraph.manipulability import (build_matrix, export_csv, export_pgm, report_regrasp_areas,
                                     sample_poses)
from dexgraph.surface import segment

out = Path(sys.argv[1] if len(sys.argv) > 1 else ".")
out.mkdir(parents=True, exist_ok=True)
surface = shapes.plate_with_slot()
dmg = build_dmg(segment(surface, 0.013), surface, FingerModel(), 0.07)
samples = sample_poses(dmg, surface)
M = build_matrix(dmg, surface, samples)
export_csv(M, out / "slot_matrix.csv")
export_pgm(M, out / "slot_matrix.pgm")

print(f"{len(samples)} samples, {len(M.samples)} valid, {M.n_blocks} blocks")
for area in report_regrasp_areas(M, dmg=dmg):
    lo, hi = area["bbox"]
    print(f"  block {area['block']}: {area['size']:4d} poses, components {area['components']}, "
          f"x {lo[0]:+.3f}..{hi[0]:+.3f}, y {lo[1]:+.3f}..{hi[1]:+.3f}, z {lo[2]:+.3f}..{hi[2]:+.3f}")
