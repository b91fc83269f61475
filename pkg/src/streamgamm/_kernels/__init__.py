"""Backend selection for the ARMA filter kernel.

Prefers the compiled extension and falls back to the pure-NumPy
implementation when the extension is missing (source checkout without a
build step, unsupported platform).  ``KERNEL_BACKEND`` records which one
is live; both expose the same ``kalman_filter`` contract.

Set ``STREAMGAMM_FORCE_PY_KERNEL=1`` to force the fallback, mainly for
benchmarking and backend-equivalence tests.
"""

import os

from . import _filter_py

if os.environ.get("STREAMGAMM_FORCE_PY_KERNEL", "") == "1":
    kalman_filter = _filter_py.kalman_filter
    KERNEL_BACKEND = "python"
else:
    try:
        from . import _filter_cy

        kalman_filter = _filter_cy.kalman_filter
        KERNEL_BACKEND = "cython"
    except ImportError:
        kalman_filter = _filter_py.kalman_filter
        KERNEL_BACKEND = "python"

__all__ = ["kalman_filter", "KERNEL_BACKEND"]
