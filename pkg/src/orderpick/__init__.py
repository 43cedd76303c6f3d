"""Warehouse order-picking simulator with scripted and learned AGV/picker policies."""

from .engine import EngineConfig, OrderPickingEnv
from .warehouse import OrderProfile, WarehouseGraph, WorkerSpec, generate_layout

__version__ = "0.1.0"

__all__ = [
    "EngineConfig",
    "OrderPickingEnv",
    "OrderProfile",
    "WarehouseGraph",
    "WorkerSpec",
    "generate_layout",
]
