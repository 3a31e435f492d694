"""Cycling-infrastructure labeling pipeline and temporal sequence classifier."""
from .taxonomy import MainClass, SubClass, main_of, subclasses_of

__all__ = ["MainClass", "SubClass", "main_of", "subclasses_of"]
__version__ = "0.1.0"
