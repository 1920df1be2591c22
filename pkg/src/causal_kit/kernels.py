"""Select the compiled kernels when available, else the pure-Python twins.

Set ``CAUSAL_KIT_PURE=1`` to force the fallback.
"""
import os

from . import _fallback

BACKEND = "python"
splitmix_block = _fallback.splitmix_block
run_block = _fallback.run_block

if os.environ.get("CAUSAL_KIT_PURE") != "1":
    try:
        from . import _kernels
    except ImportError:  # extension not built
        pass
    else:
        BACKEND = "cython"
        splitmix_block = _kernels.splitmix_block
        run_block = _kernels.run_block
