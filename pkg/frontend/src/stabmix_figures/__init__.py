"""Figure generation from stabmix experiment CSV files.

Consumes only the public CSV schema (version header ``# stabmix-csv-v1``);
it has no dependency on the integrator package itself.
"""

from .figures import (EmptyData, FigureSpec, MissingColumn, plot_convergence,
                      plot_qorder, plot_spacetime, plot_stability,
                      plot_stages, render)

__version__ = "0.1.0"

__all__ = [
    "FigureSpec",
    "MissingColumn",
    "EmptyData",
    "plot_convergence",
    "plot_stability",
    "plot_stages",
    "plot_spacetime",
    "plot_qorder",
    "render",
]
