"""Batch online learning for logistic click prediction."""

from ._batchol import *  # noqa: F401,F403
from ._batchol import __version__  # noqa: F401
