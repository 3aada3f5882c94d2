"""Hot kernels, compiled when available.

``BACKEND`` is ``"cython"`` when the extension imported, else ``"python"``.
Set ``SPINNOISE_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py as python_kernels

compiled_kernels = None
if not os.environ.get("SPINNOISE_PURE_PYTHON"):
    try:
        from . import _kernels as compiled_kernels
    except ImportError:
        compiled_kernels = None

_impl = compiled_kernels or python_kernels
BACKEND = "cython" if compiled_kernels is not None else "python"

exp_sum = _impl.exp_sum
exp_sum_uniform = _impl.exp_sum_uniform
mcwf_stream = _impl.mcwf_stream
coincidence_histogram = _impl.coincidence_histogram

__all__ = ["BACKEND", "exp_sum", "exp_sum_uniform", "mcwf_stream", "coincidence_histogram",
           "python_kernels", "compiled_kernels"]
