"""DM-SBL channel estimation: python bindings of the C++ core."""

from ._dmsbl import *  # noqa: F401,F403
from ._dmsbl import __doc__  # noqa: F401
