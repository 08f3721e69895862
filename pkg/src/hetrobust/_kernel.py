"""Select the compiled Imhof loop when available, else the numpy fallback.

Set ``HETROBUST_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _imhof_py

integrate_rows_py = _imhof_py.integrate_rows

try:
    if os.environ.get("HETROBUST_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("fallback forced by environment")
    from ._imhof_ext import integrate_rows as integrate_rows_ext
except ImportError:  # pragma: no cover - depends on the build
    integrate_rows_ext = None

if integrate_rows_ext is not None:
    integrate_rows = integrate_rows_ext
    BACKEND = "compiled"
else:
    integrate_rows = integrate_rows_py
    BACKEND = "python"
