"""Hot-loop kernels, compiled when available.

The Cython extension ``_ckernels`` is used if it was built; otherwise the
numpy fallback in ``_pykernels`` is selected. Set ``PATIENTVEC_PURE=1`` to
force the fallback. ``BACKEND`` names the active implementation.
"""

import os

from . import _pykernels as python_backend

compiled_backend = None
if not os.environ.get("PATIENTVEC_PURE"):
    try:
        from . import _ckernels as compiled_backend
    except ImportError:
        compiled_backend = None

_impl = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if compiled_backend is not None else "python"

spmv = _impl.spmv
cbow_epoch = _impl.cbow_epoch
svm_dcd_sweep = _impl.svm_dcd_sweep
rmsprop_dense = _impl.rmsprop_dense
rmsprop_rows = _impl.rmsprop_rows
