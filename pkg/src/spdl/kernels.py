"""Backend selection for the point-mass kernels.

The compiled extension is used when it was built; otherwise, or when the
environment variable ``SPDL_PURE_PYTHON`` is set to a non-empty value other
than ``0``, the pure-Python implementation is used.
"""

import os

from spdl import _kernels_py

_force_py = os.environ.get("SPDL_PURE_PYTHON", "") not in ("", "0")

if _force_py:
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from spdl import _kernels_ext as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

pointmass_step = _impl.pointmass_step
pointmass_rollout = _impl.pointmass_rollout


def get_backend(name: str):
    """Return the kernel module for ``name`` in ``{"python", "cython"}``."""
    if name == "python":
        return _kernels_py
    if name == "cython":
        from spdl import _kernels_ext

        return _kernels_ext
    raise ValueError(f"unknown kernel backend {name!r}")
