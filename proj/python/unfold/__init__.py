"""Unfolded ADMM decoder for compressed sensing under l2 FGSM attacks."""

from ._core import *  # noqa: F401,F403
from ._core import __doc__  # noqa: F401
