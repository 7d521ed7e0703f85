"""Conditional trace generation for business process event logs."""

from ._tracegen import *  # noqa: F401,F403
from ._tracegen import __version__  # noqa: F401
