"""Count-data regression for zero-inflated trial outcomes.

Fits Poisson, NB2, ZIP, marginalized ZIP and linear models by maximum
likelihood, calibrates zero-inflated data generators to a target zero rate,
and runs the Monte Carlo Type I error / power study over a scenario grid.
"""
from importlib.resources import files

__version__ = "0.1.0"


def data_path(name: str):
    """Path of a CSV file bundled with the package (e.g. ``"tiny.csv"``)."""
    return files(__name__) / "data" / name
