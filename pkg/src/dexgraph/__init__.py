"""In-hand regrasp planning on the dexterous manipulation graph."""

from .dmg import Dmg, FingerModel, build_dmg, load_dmg, save_dmg
from .errors import DexGraphError, NoPath
from .planner import CostWeights, plan, plan_path, to_primitives
from .surface import OrientedSurface, load_surface, segment

__version__ = "0.1.0"

__all__ = [
    "CostWeights",
    "DexGraphError",
    "Dmg",
    "FingerModel",
    "NoPath",
    "OrientedSurface",
    "build_dmg",
    "load_dmg",
    "load_surface",
    "plan",
    "plan_path",
    "save_dmg",
    "segment",
    "to_primitives",
]
