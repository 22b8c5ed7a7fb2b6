"""Discrete-event RPL simulator with Q-learning congestion-aware parent selection."""
from .config import SimConfig, parse_config
from .engine import run
from .network import Network, simulate

__all__ = ["SimConfig", "parse_config", "run", "simulate", "Network"]
__version__ = "0.1.0"
