"""Batch figure rendering for pcm output files.

Every plot is a pure function of its input files: fixed style, fixed or
documented axes, and deterministic PNG/SVG bytes (SVG dates and id salts
are pinned). Statistics are never recomputed here; the single source of
truth is the CSV/JSON written by the pcm CLI.
"""

__version__ = "0.1.0"

from .plots import (FigureInputError, level_grayscale, plot_errcurve,
                    plot_histogram, plot_homogeneity, plot_subpopulations)

__all__ = [
    "__version__", "FigureInputError", "level_grayscale", "plot_errcurve",
    "plot_histogram", "plot_homogeneity", "plot_subpopulations",
]
