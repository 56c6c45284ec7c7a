"""Kernel backend selection.

The compiled extension is used when it imported cleanly; otherwise the numpy
fallback takes over.  Set ``IGNET_FORCE_PY=1`` to force the fallback.  Both
backends expose the same ``*_plan`` functions and the same work-item
granularity, so either one is deterministic for any worker count.
"""

import os

from . import pure as _pure

_impl = _pure
COMPILED = False
if os.environ.get("IGNET_FORCE_PY", "") not in ("1", "true", "yes"):
    try:
        from . import _fast as _impl  # type: ignore[no-redef]

        COMPILED = True
    except ImportError:
        pass


def backend_name() -> str:
    return "compiled" if COMPILED else "numpy"


conv_forward_plan = _impl.conv_forward_plan
conv_backward_weights_plan = _impl.conv_backward_weights_plan
conv_backward_input_plan = _impl.conv_backward_input_plan
maxpool_forward_plan = _impl.maxpool_forward_plan
maxpool_backward_plan = _impl.maxpool_backward_plan
