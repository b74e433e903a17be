"""Demand-aware adaptive task assignment for spatial crowdsourcing.

Modules by concern: ``core`` (entities, travel, validity),
``grid_demand`` and ``ddgnn`` (demand series and forecasting), ``seqplan``
(per-worker task sequences), ``depgraph`` (worker dependency tree),
``search_tvf`` (exact and value-guided search), ``engine`` (event loop and
strategies), and the harness modules ``stream``, ``workload``,
``experiment``, ``report``, ``config`` and ``cli``.
"""

from .core import Assignment, Location, Task, TaskSequence, TravelModel, Worker
from .engine import EngineConfig, Simulator, Strategy, adaptive_assign, baseline_assign, tpa

__version__ = "0.1.0"

__all__ = [
    "Assignment", "Location", "Task", "TaskSequence", "TravelModel", "Worker",
    "EngineConfig", "Simulator", "Strategy", "adaptive_assign", "baseline_assign", "tpa",
]
