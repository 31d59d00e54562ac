"""Hot-kernel backend selection.

The compiled extension is preferred; the numpy/scipy fallback is a drop-in
twin used when the extension was not built.  ``backend_name`` reports which
one is active.  Both modules stay importable so tests and benchmarks can
compare them directly.
"""
from panoptic._kernels import _fallback as fallback

try:
    from panoptic._kernels import _native as native
except ImportError:
    native = None

_impl = native if native is not None else fallback

backend_name = "native" if native is not None else "fallback"
local_peak_mask = _impl.local_peak_mask
group_pixels = _impl.group_pixels
encode_heatmap = _impl.encode_heatmap

__all__ = [
    "backend_name",
    "encode_heatmap",
    "fallback",
    "group_pixels",
    "local_peak_mask",
    "native",
]
