"""CDF figure rendering for simulation CSV output."""

from .figures import FigureSpec, SchemaError, extract_curves, load_cdf_rows, render_cdf_figure

__all__ = [
    "FigureSpec",
    "SchemaError",
    "extract_curves",
    "load_cdf_rows",
    "render_cdf_figure",
]
