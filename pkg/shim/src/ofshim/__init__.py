"""Thin pandas-subset layer over the orderframe CLI.

The kernel does all the work in a subprocess; this package only rewrites
familiar dataframe calls into the CLI's statement language and reads the
rendered answers back. See frame.py for the supported subset and the
documented deviations.
"""

from .frame import Session, ShimFrame, UnsupportedCall, get_dummies
from .session import KernelProcessError, KernelStatementError, ShimError

__all__ = [
    "KernelProcessError",
    "KernelStatementError",
    "Session",
    "ShimError",
    "ShimFrame",
    "UnsupportedCall",
    "get_dummies",
]
