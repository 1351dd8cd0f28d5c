"""Byte kernel selection.

The compiled extension is used when it imports; otherwise the numpy version.
Set ``PDNSIM_PURE=1`` to force the fallback.
"""

import os

from . import _pykernels

if os.environ.get("PDNSIM_PURE"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

keystream = _impl.keystream
xor_keystream = _impl.xor_keystream

__all__ = ["BACKEND", "keystream", "xor_keystream"]
