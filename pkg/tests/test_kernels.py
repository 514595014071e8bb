import os
import subprocess
import sys

import numpy as np
import pytest

from rdcbf import kernels

impls = kernels.backends()
needs_both = pytest.mark.skipif("cython" not in impls, reason="compiled extension not built")


def batch_inputs(rng):
    links = rng.uniform(-1, 1, (6, 2, 3))
    segs = rng.uniform(-2, 2, (40, 2, 3))
    # include degenerate and parallel primitives
    segs[0, 1] = segs[0, 0]
    segs[1, 1] = segs[1, 0] + (links[0, 1] - links[0, 0])
    c = rng.uniform(-2, 2, (30, 3))
    u = rng.normal(size=(30, 3))
    v = np.cross(u, rng.normal(size=(30, 3)))
    u *= rng.uniform(0.1, 0.6, (30, 1)) / np.linalg.norm(u, axis=1, keepdims=True)
    v *= rng.uniform(0.1, 0.6, (30, 1)) / np.linalg.norm(v, axis=1, keepdims=True)
    rects = np.stack([c - u - v, c + u - v, c + u + v, c - u + v], axis=1)
    return links, segs, rects


@needs_both
def test_backends_agree_bitwise(rng):
    py, cy = impls["python"], impls["cython"]
    for _ in range(20):
        links, segs, rects = batch_inputs(rng)
        for name, args in (("link_segment_sqdist", (links, segs)), ("link_rect_sqdist", (links, rects)),
                           ("segment_pairs_sqdist", (links, segs[:6]))):
            for a, b in zip(getattr(py, name)(*args), getattr(cy, name)(*args)):
                assert np.max(np.abs(np.asarray(a) - np.asarray(b))) <= 1e-15, name


@needs_both
def test_scalar_kernels_agree(rng):
    py, cy = impls["python"], impls["cython"]
    for _ in range(200):
        p, a, b = rng.normal(size=(3, 3))
        assert np.allclose(py.point_seg(*p, *a, *b), cy.point_seg(*p, *a, *b), rtol=0, atol=1e-15)
        a0, a1, b0, b1 = rng.normal(size=(4, 3))
        assert np.allclose(py.seg_seg(a0, a1, b0, b1)[0], cy.seg_seg(a0, a1, b0, b1)[0], rtol=0, atol=1e-15)


def test_backend_selection_honours_env():
    code = "from rdcbf import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, RDCBF_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    env["RDCBF_PURE_PYTHON"] = "0"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == ("cython" if "cython" in impls else "python")
