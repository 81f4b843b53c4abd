"""Figure rendering for the results-CSV contract of the opshadow toolkit."""

__version__ = "0.1.0"

from .figures import FigureSpecError, load_spec, render
