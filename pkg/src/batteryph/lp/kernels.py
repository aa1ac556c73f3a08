"""Kernel backend selection.

The compiled extension is preferred; setting ``BATTERYPH_PURE_PYTHON=1``
(or a failed build) selects the numpy fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("BATTERYPH_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

ftran_etas = _impl.ftran_etas
btran_etas = _impl.btran_etas
select_entering = _impl.select_entering
ratio_phase1 = _impl.ratio_phase1
ratio_phase2 = _impl.ratio_phase2


def get_backend(name=None):
    """Return a kernel module by name ("cython" or "python"), default the active one."""
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")
