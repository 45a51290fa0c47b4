"""Hot numeric kernels with two interchangeable backends.

The numba backend JIT-compiles the inner loops; the numpy backend is a pure
vectorized fallback. Both expose the same functions and must agree within
floating-point tolerance (exactly, for integer outputs such as instance
masks). Selection happens once at import time via the ``EHOIKIT_KERNELS``
environment variable: ``numba`` (default) or ``numpy``. When numba is not
importable the numpy backend is used silently.

Kernel families:
  * rasterization primitives painting RGB / instance-mask / depth planes
  * separable Gaussian filtering and window validity for SSIM
  * conv2d forward/backward and RoI-align forward/backward for the network
"""

import os

_env = os.environ.get("EHOIKIT_KERNELS", "numba").strip().lower()
if _env not in ("numba", "numpy"):
    raise ValueError(
        f"EHOIKIT_KERNELS must be 'numba' or 'numpy', got {_env!r}"
    )

if _env == "numba":
    try:
        from . import numba_backend as _impl
    except ImportError:  # numba unavailable; fall back quietly
        from . import numpy_backend as _impl
else:
    from . import numpy_backend as _impl

BACKEND = _impl.NAME

fill_ellipse = _impl.fill_ellipse
fill_ring = _impl.fill_ring
fill_capsule = _impl.fill_capsule
fill_convex_polygon = _impl.fill_convex_polygon
sep_gaussian_valid = _impl.sep_gaussian_valid
window_all_clean = _impl.window_all_clean
conv2d_fwd = _impl.conv2d_fwd
conv2d_bwd_x = _impl.conv2d_bwd_x
conv2d_bwd_w = _impl.conv2d_bwd_w
roi_align_fwd = _impl.roi_align_fwd
roi_align_bwd = _impl.roi_align_bwd
