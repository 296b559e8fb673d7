"""Black-box attribution via Sobol total-order sensitivity indices."""

import os

from ._core import *  # noqa: F401,F403
from ._core import __version__, set_directions_path  # noqa: F401

# Point the sequence generator at the packaged direction-number table unless
# the caller already pinned one through the environment.
if not os.environ.get("SOBOL_ATTRIB_DIRECTIONS"):
    _table = os.path.join(os.path.dirname(__file__), "data", "new-joe-kuo-6.2080.txt")
    if os.path.exists(_table):
        set_directions_path(_table)
