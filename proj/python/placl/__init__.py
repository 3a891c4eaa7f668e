"""Pseudo-labeled auto-curriculum learning."""

try:
    from ._placl import *  # noqa: F401,F403
    from ._placl import __doc__  # noqa: F401
except ImportError:  # in-tree build: the extension sits next to, not inside, the package
    from _placl import *  # noqa: F401,F403

__version__ = "0.1.0"
