"""Backend selection for the distance kernels.

The compiled extension ``rdcbf._ckernels`` is used when it can be imported;
otherwise, or when the environment variable ``RDCBF_PURE_PYTHON`` is set to
``1``, the pure-Python implementation in ``rdcbf._pykernels`` is used. Both
expose the same functions with the same return conventions.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("RDCBF_PURE_PYTHON") != "1":
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        _impl = _ckernels
        BACKEND = "cython"

point_seg = _impl.point_seg
seg_seg = _impl.seg_seg
seg_rect = _impl.seg_rect
rect_clip = _impl.rect_clip
link_segment_sqdist = _impl.link_segment_sqdist
link_rect_sqdist = _impl.link_rect_sqdist
segment_pairs_sqdist = _impl.segment_pairs_sqdist

# shared helpers that are not performance critical
rect_frame = _pykernels.rect_frame
project_point = _pykernels.project_point


def backends():
    """Return the available kernel modules keyed by name."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        return out
    out["cython"] = _ckernels
    return out
