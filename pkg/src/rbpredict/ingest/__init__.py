"""
Reading and writing project instances: the canonical JSON format, PSPLIB `.sm` files, tabular
effort data, and the preprocessing applied before training.
"""
from .canonical import (  # noqa: F401
    read_canonical, write_canonical, read_instance, write_instance, read_dataset, write_dataset,
)
from .psplib import parse_psplib, read_psplib  # noqa: F401
from .tabular import build_surrogate_graph, read_table  # noqa: F401
from .preprocess import PreprocessStats, fit_preprocess, apply_preprocess  # noqa: F401
