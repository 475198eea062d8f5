"""Boundary-driven diffusive systems with weak (Robin) reservoir contact."""

from .errors import *  # noqa: F401,F403
from .functionals import CurrentField, Drive, Grid1D
from .models import KMP, SEP, Model, NonRevExclusion, ZeroRange, make_model

__version__ = "0.1.0"
