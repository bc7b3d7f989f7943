"""Speculative decoding with pluggable candidate-length policies."""

from ._specdec import *  # noqa: F401,F403
from ._specdec import __version__  # noqa: F401
