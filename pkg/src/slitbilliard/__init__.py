"""Numerical laboratory for a rectangular billiard with two moving slits."""

__version__ = "0.1.0"

from .wall_motion import (JumpData, Side, SlitConfig, TrigSeries, elliptic_config,
                          eval_series, example_config, jump_data, wall_at)
from .exact_billiard import (Chamber, CollisionRecord, Kind, Status, Trajectory,
                             collision_map, monodromy, next_collision, simulate)

__all__ = ["JumpData", "Side", "SlitConfig", "TrigSeries", "elliptic_config", "eval_series",
           "example_config", "jump_data", "wall_at", "Chamber", "CollisionRecord", "Kind",
           "Status", "Trajectory", "collision_map", "monodromy", "next_collision", "simulate",
           "__version__"]
