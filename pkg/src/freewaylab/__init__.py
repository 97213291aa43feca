"""Freeway driving-policy laboratory.

A 3-lane microscopic freeway simulator, a DDQN driving policy trained on an
occupancy-grid state with prioritized experience replay, evaluation-time
safety rules, a finite-horizon dynamic-programming benchmark, and the
experiment harness that compares them at desk scale.
"""

__version__ = "0.1.0"
