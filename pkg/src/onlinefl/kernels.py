"""Selects the compiled kernels when available, else the pure-Python fallback.

Set ``ONLINEFL_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels as python_backend

compiled_backend = None
if os.environ.get("ONLINEFL_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

backend = compiled_backend if compiled_backend is not None else python_backend
BACKEND_NAME = "compiled" if compiled_backend is not None else "python"

rofl_matrix = backend.rofl_matrix
rofl_hub = backend.rofl_hub
rofl_instrumented = backend.rofl_instrumented
