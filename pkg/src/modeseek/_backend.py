"""Select the compiled kernels when available, else the numpy fallback.

Set ``MODESEEK_PURE=1`` to force the fallback (used by the parity tests and
the benchmark).
"""

import os

from . import _fallback

fallback = _fallback

if os.environ.get("MODESEEK_PURE"):
    kernels = _fallback
    COMPILED = False
else:
    try:
        from . import _kernels as kernels
        COMPILED = True
    except ImportError:  # extension not built
        kernels = _fallback
        COMPILED = False

BACKEND = "compiled" if COMPILED else "numpy"
