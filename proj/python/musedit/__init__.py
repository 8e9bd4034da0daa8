"""Instruction-guided music editing toolkit (C++ core)."""

from musedit._core import *  # noqa: F401,F403
from musedit._core import __doc__  # noqa: F401
