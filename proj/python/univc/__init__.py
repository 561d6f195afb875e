"""Split likelihood-ratio inference for variance components."""

from ._univc import *  # noqa: F401,F403
from ._univc import __version__, Error  # noqa: F401
