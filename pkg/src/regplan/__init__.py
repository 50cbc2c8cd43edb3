"""Regulation-aware path planning with a deterministic scenario simulator.

The package is organized around a behavior FSM (``fsm``), a scripted scene
describer with a keyword parser (``scene``), a machine-readable regulation
database (``regdb``), spline path geometry and speed profiles (``geom``),
a weighted plan cost (``cost``), and a closed-loop simulator with a
post-hoc compliance auditor (``sim``).
"""

__version__ = "0.1.0"
