"""Picks the kernel implementation once, at import.

Set ``STMN_BACKEND=python`` to force the numpy fallback even when the
compiled extension is importable.
"""

import os

from . import _kernels_py

if os.environ.get("STMN_BACKEND", "").strip().lower() == "python":
    kernels = _kernels_py
else:
    try:
        from . import _kernels as kernels
    except ImportError:
        kernels = _kernels_py

BACKEND = kernels.NAME


def available():
    """All importable kernel modules, fallback first."""
    mods = [_kernels_py]
    try:
        from . import _kernels
    except ImportError:
        return mods
    mods.append(_kernels)
    return mods
