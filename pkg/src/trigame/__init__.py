"""Simulation and spectral analysis of three-player smooth games."""
from .games import GameKind, GameSpec, GradientField, PlayerState
from .dynamics import Order, ScheduleConfig, Trajectory, classify_equilibrium, run

__version__ = "0.1.0"

__all__ = [
    "GameKind",
    "GameSpec",
    "GradientField",
    "PlayerState",
    "Order",
    "ScheduleConfig",
    "Trajectory",
    "classify_equilibrium",
    "run",
]
