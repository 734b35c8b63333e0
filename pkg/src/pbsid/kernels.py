"""Backend selection for the simulation kernels.

The compiled extension ``pbsid._ckernels`` is used when it was built;
otherwise the numpy implementations in ``pbsid._pykernels`` are used. Set
``PBSID_PURE_PYTHON=1`` to force the fallback.
"""

import os

from pbsid import _pykernels

try:
    from pbsid import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    BACKENDS["cython"] = _ckernels

if _ckernels is not None and not os.environ.get("PBSID_PURE_PYTHON"):
    BACKEND = "cython"
else:
    BACKEND = "python"
_impl = BACKENDS[BACKEND]

ss_simulate = _impl.ss_simulate
predictor_simulate = _impl.predictor_simulate
rod_integrate = _impl.rod_integrate

__all__ = ["BACKEND", "BACKENDS", "ss_simulate", "predictor_simulate", "rod_integrate"]
