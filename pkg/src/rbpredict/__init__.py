from .graph import ProjectGraph, Edge, compute_schedule  # noqa: F401
from .instance import ProjectInstance  # noqa: F401

__version__ = '0.1.0.dev0'
