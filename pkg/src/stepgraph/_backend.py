"""Select the compiled kernels when available, else the pure-Python fallback.

Set ``STEPGRAPH_PURE_PYTHON=1`` to force the fallback.
"""
import os

from stepgraph import _fallback

if os.environ.get("STEPGRAPH_PURE_PYTHON", "") not in ("", "0"):
    _impl = _fallback
else:
    try:
        from stepgraph import _speedups as _impl
    except ImportError:  # extension not built
        _impl = _fallback

BACKEND = "compiled" if _impl is not _fallback else "python"

tokenize_bytes = _impl.tokenize_bytes
csr_matmul = _impl.csr_matmul
