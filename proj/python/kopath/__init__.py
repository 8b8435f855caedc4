"""Kinetic-optimal Gaussian probability paths.

Thin bindings over the C++ library; arrays come back as numpy arrays.
"""

from ._core import *  # noqa: F401,F403
from ._core import KopathError

__version__ = "0.1.0"
