"""Pure-NumPy implementations of the convolution/pooling hot kernels.

These are the fallback used when the compiled extension is unavailable.
Both backends must produce bit-identical results; the test suite checks
them against each other and the benchmark in ``benchmarks/`` compares
their speed.

Layout conventions (channels-last, stride 1, kernels pre-padded):
  images  (B, H, W, C) row-major
  columns (B, H_out * W_out, kh * kw * C), patch index scanning rows
          then columns, entries ordered (di, dj, c)
"""

import numpy as np


def im2col(xpad, kh, kw):
    """Gather kh x kw patches of a padded image batch into columns."""
    B, Hp, Wp, C = xpad.shape
    Ho, Wo = Hp - kh + 1, Wp - kw + 1
    sb, sh, sw, sc = xpad.strides
    patches = np.lib.stride_tricks.as_strided(
        xpad,
        shape=(B, Ho, Wo, kh, kw, C),
        strides=(sb, sh, sw, sh, sw, sc),
        writeable=False,
    )
    return np.ascontiguousarray(patches.reshape(B, Ho * Wo, kh * kw * C))


def col2im_add(cols, Hp, Wp, C, kh, kw):
    """Scatter-add columns back onto a zeroed padded image (im2col adjoint)."""
    B = cols.shape[0]
    Ho, Wo = Hp - kh + 1, Wp - kw + 1
    xpad = np.zeros((B, Hp, Wp, C), dtype=cols.dtype)
    patches = cols.reshape(B, Ho, Wo, kh, kw, C)
    for di in range(kh):
        for dj in range(kw):
            xpad[:, di:di + Ho, dj:dj + Wo, :] += patches[:, :, :, di, dj, :]
    return xpad


def maxpool2_forward(x):
    """2x2 max pooling with stride 2.

    Returns the pooled output and, per output cell, the flat index
    (0..3, ordered 2*di+dj) of the first maximum in its window.
    """
    B, H, W, C = x.shape
    H2, W2 = H // 2, W // 2
    win = x.reshape(B, H2, 2, W2, 2, C).transpose(0, 1, 3, 2, 4, 5).reshape(B, H2, W2, 4, C)
    idx = win.argmax(axis=3).astype(np.uint8)
    out = np.take_along_axis(win, idx[:, :, :, None, :].astype(np.intp), axis=3)[:, :, :, 0, :]
    return np.ascontiguousarray(out), idx


def maxpool2_backward(g, idx):
    """Route pooled gradients back to the argmax positions."""
    B, H2, W2, C = g.shape
    scat = np.zeros((B, H2, W2, 4, C), dtype=g.dtype)
    np.put_along_axis(scat, idx[:, :, :, None, :].astype(np.intp), g[:, :, :, None, :], axis=3)
    gx = scat.reshape(B, H2, W2, 2, 2, C).transpose(0, 1, 3, 2, 4, 5).reshape(B, H2 * 2, W2 * 2, C)
    return np.ascontiguousarray(gx)
