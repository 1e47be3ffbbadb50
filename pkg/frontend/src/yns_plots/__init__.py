"""Static figure rendering for yns run artifacts (CSV series + JSON summaries)."""

__version__ = "0.1.0"

from .figures import FigureResult, FigureSpecError, RenderError, render

__all__ = ["FigureResult", "FigureSpecError", "RenderError", "render", "__version__"]
