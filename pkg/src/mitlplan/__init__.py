"""Planner for metric-interval temporal logic tasks with probabilistically
timed external events: formula compilation to stochastic timed automata,
clock truncation with error bounds, product-MDP policy synthesis,
simulation, and monitoring."""

__version__ = "0.1.0"
