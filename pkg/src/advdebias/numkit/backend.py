"""Kernel backend selection.

The compiled extension (``_kernels``) is preferred when importable; the numpy
fallback (``_kernels_py``) is used otherwise. Override with the environment
variable ``ADVDEBIAS_KERNELS`` set to ``c``, ``py``, or ``auto`` (default).
"""

import os

_choice = os.environ.get("ADVDEBIAS_KERNELS", "auto").lower()
if _choice not in ("auto", "c", "py"):
    raise ValueError(f"ADVDEBIAS_KERNELS must be 'auto', 'c', or 'py', got {_choice!r}")

if _choice == "py":
    from . import _kernels_py as _impl

    KERNEL_BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        KERNEL_BACKEND = "c"
    except ImportError:
        if _choice == "c":
            raise
        from . import _kernels_py as _impl

        KERNEL_BACKEND = "python"

ACT_IDENTITY = _impl.ACT_IDENTITY
ACT_TANH = _impl.ACT_TANH
ACT_RELU = _impl.ACT_RELU

adamw_update = _impl.adamw_update
act_forward = _impl.act_forward
act_backward = _impl.act_backward
