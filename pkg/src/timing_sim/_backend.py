"""Select the round-loop backend at import.

The compiled extension is used when it was built; set
``TIMING_SIM_BACKEND=python`` to force the pure-Python loop.
"""

from __future__ import annotations

import os

from . import _kernel_py

python_run_chunk = _kernel_py.run_chunk

try:
    from ._kernel import run_chunk as compiled_run_chunk
except ImportError:  # extension not built
    compiled_run_chunk = None

if compiled_run_chunk is not None and os.environ.get("TIMING_SIM_BACKEND", "").lower() != "python":
    run_chunk = compiled_run_chunk
    BACKEND = "cython"
else:
    run_chunk = python_run_chunk
    BACKEND = "python"

__all__ = ["run_chunk", "python_run_chunk", "compiled_run_chunk", "BACKEND"]
