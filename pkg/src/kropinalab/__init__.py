"""Kropina metrics via Zermelo navigation: jets, curvature, classification and flows."""

from .kropina import KropinaData, NavigationData, eval_F, from_navigation, to_navigation
from .scenes import Scene, builtin, load_scene
from .suite import run_suite

__all__ = ["KropinaData", "NavigationData", "Scene", "builtin", "eval_F", "from_navigation",
           "load_scene", "run_suite", "to_navigation"]
__version__ = "0.1.0"
