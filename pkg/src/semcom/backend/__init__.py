"""Hot-kernel backend: compiled extension with a pure-NumPy fallback.

The compiled module is picked automatically when present. Set
``SEMCOM_BACKEND=numpy`` to force the fallback or ``SEMCOM_BACKEND=cython``
to require the extension (ImportError if it was not built).
"""

import os

_requested = os.environ.get("SEMCOM_BACKEND", "auto").lower()
if _requested not in ("auto", "cython", "numpy"):
    raise ValueError(
        f"SEMCOM_BACKEND={_requested!r}: expected 'auto', 'cython' or 'numpy'"
    )

if _requested == "numpy":
    from . import kernels_np as _impl
    BACKEND = "numpy"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
        BACKEND = "cython"
    except ImportError:
        if _requested == "cython":
            raise
        from . import kernels_np as _impl
        BACKEND = "numpy"

im2col = _impl.im2col
col2im_add = _impl.col2im_add
maxpool2_forward = _impl.maxpool2_forward
maxpool2_backward = _impl.maxpool2_backward

__all__ = ["BACKEND", "im2col", "col2im_add", "maxpool2_forward", "maxpool2_backward"]
