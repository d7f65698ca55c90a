"""Streaming distribution-shift detection with a guaranteed false-positive rate.

The heavy lifting lives in the C++ extension; this package re-exports it.
"""

from ._driftgale import *  # noqa: F401,F403
from ._driftgale import __doc__  # noqa: F401
