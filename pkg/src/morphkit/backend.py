"""Kernel backend selection.

The compiled extension (morphkit._ckernels) is preferred when it was built;
otherwise the numpy fallback (morphkit._pykernels) is used.  Set
MORPHKIT_BACKEND=py or =c to force a choice (forcing `c` when the extension
is missing raises at import).
"""
from __future__ import annotations

import os

from morphkit import _pykernels

_forced = os.environ.get("MORPHKIT_BACKEND", "").lower()

if _forced in ("py", "python"):
    kernels = _pykernels
elif _forced in ("c", "cython", "compiled"):
    from morphkit import _ckernels

    kernels = _ckernels
else:
    try:
        from morphkit import _ckernels

        kernels = _ckernels
    except ImportError:
        kernels = _pykernels

BACKEND_NAME = "compiled" if kernels.IS_COMPILED else "python"

minhash_mins = kernels.minhash_mins
gru_forward = kernels.gru_forward
gru_backward = kernels.gru_backward
