"""Grid A* and Dubins RRT* planners over a predicted complexity field."""

from .astar import astar_plan, dijkstra_plan, neighborhood_max
from .common import (
    CostWeights,
    PlannedPath,
    accumulated_complexity,
    attach_headings,
    predict_field,
)
from .rrtstar import RRTStarOptions, rrt_star_plan

__all__ = [
    "CostWeights",
    "PlannedPath",
    "RRTStarOptions",
    "accumulated_complexity",
    "astar_plan",
    "attach_headings",
    "dijkstra_plan",
    "neighborhood_max",
    "predict_field",
    "rrt_star_plan",
]
