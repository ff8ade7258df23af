"""Discrete-event simulator for TCP congestion-control experiments on a dumbbell.

Emits and reads NS-2 style trace files; see :mod:`tcpsim.cli` for the
command-line interface.
"""
from .engine import Simulator
from .experiments import ScenarioConfig, run_scenario
from .metrics import TraceAnalyzer, fairness, jain_index
from .tracing import emit_line, parse_line, read_trace

__all__ = ["Simulator", "ScenarioConfig", "run_scenario", "TraceAnalyzer", "fairness",
           "jain_index", "emit_line", "parse_line", "read_trace"]
__version__ = "0.1.0"
