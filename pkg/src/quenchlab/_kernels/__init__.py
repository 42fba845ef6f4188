"""Hot-kernel dispatch: compiled Cython core with a pure-numpy fallback.

The compiled module is built by ``setup.py`` (marked optional, so installs
succeed without a compiler).  Set ``QUENCHLAB_PURE_PYTHON=1`` to force the
fallback, e.g. for benchmarking the two implementations against each other.
"""

import os

from . import _ref

if os.environ.get("QUENCHLAB_PURE_PYTHON", "").strip() not in ("", "0"):
    _impl = _ref
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = _ref

HAVE_COMPILED = _impl.IMPL == "compiled"
IMPL = _impl.IMPL

shift_kernel_sum = _impl.shift_kernel_sum
lpp_grid = _impl.lpp_grid
fpp_grid = _impl.fpp_grid

__all__ = ["HAVE_COMPILED", "IMPL", "shift_kernel_sum", "lpp_grid", "fpp_grid", "_ref"]
