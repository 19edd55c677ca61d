"""banditplots: figure rendering for banditlab experiment CSVs."""

__version__ = "0.1.0"

from .figures import FIGURE_KINDS, FigureSpec, RenderError, render  # noqa: F401
