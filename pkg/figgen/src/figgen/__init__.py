"""Figure rendering for vinestep CSV outputs."""

from .render import FigureSpec, SchemaError, SpecError, load_spec, read_rows, render

__all__ = [
    "FigureSpec",
    "SchemaError",
    "SpecError",
    "load_spec",
    "read_rows",
    "render",
]
