"""Low-level forward/backward kernels on plain numpy arrays.

Feature maps are (C, H, W); convolution weights are (C_out, C_in, k, k);
transposed-convolution weights are (C_in, C_out, k, k).  All kernels preserve
the input dtype (float32 for training, float64 for gradient checks) and are
bit-deterministic for fixed inputs.

conv2d and deconv2d share the same im2col/col2im pair, so deconv2d_forward is
the exact linear adjoint of conv2d_forward with the same kernel.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError


def conv_out_extent(extent: int, kernel: int, stride: int, padding: int) -> int:
    """Output extent of a convolution along one axis."""
    return (extent + 2 * padding - kernel) // stride + 1


def deconv_out_extent(extent: int, kernel: int, stride: int, padding: int) -> int:
    """Output extent of a transposed convolution along one axis."""
    return (extent - 1) * stride - 2 * padding + kernel


def im2col(x: np.ndarray, kernel: int, stride: int, padding: int) -> np.ndarray:
    """Unfold (C, H, W) into a (C*k*k, oh*ow) patch matrix."""
    c, h, w = x.shape
    oh = conv_out_extent(h, kernel, stride, padding)
    ow = conv_out_extent(w, kernel, stride, padding)
    if oh < 1 or ow < 1:
        raise DimensionError(
            f"conv output extent {oh}x{ow} is not positive for input {h}x{w}, "
            f"kernel {kernel}, stride {stride}, padding {padding}"
        )
    if padding > 0:
        x = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    windows = np.lib.stride_tricks.sliding_window_view(x, (kernel, kernel), axis=(1, 2))
    windows = windows[:, ::stride, ::stride]        # (C, oh, ow, k, k)
    cols = windows.transpose(0, 3, 4, 1, 2).reshape(c * kernel * kernel, oh * ow)
    return np.ascontiguousarray(cols)


def col2im(
    cols: np.ndarray,
    channels: int,
    out_h: int,
    out_w: int,
    kernel: int,
    stride: int,
    padding: int,
) -> np.ndarray:
    """Adjoint of :func:`im2col`: scatter-add a patch matrix back to (C, H, W).

    ``cols`` has shape (C*k*k, gh*gw) where gh/gw is the patch-grid extent
    implied by out_h/out_w via the convolution extent formula.
    """
    gh = conv_out_extent(out_h, kernel, stride, padding)
    gw = conv_out_extent(out_w, kernel, stride, padding)
    out = np.zeros((channels, out_h + 2 * padding, out_w + 2 * padding), dtype=cols.dtype)
    cols = cols.reshape(channels, kernel, kernel, gh, gw)
    for ki in range(kernel):
        for kj in range(kernel):
            out[:, ki : ki + stride * gh : stride, kj : kj + stride * gw : stride] += cols[:, ki, kj]
    if padding > 0:
        out = out[:, padding:-padding, padding:-padding]
    return out


def conv2d_forward(
    x: np.ndarray,
    weight: np.ndarray,
    bias: np.ndarray | None,
    stride: int = 1,
    padding: int = 0,
    cols: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Cross-correlate (C_in, H, W) with (C_out, C_in, k, k).

    Returns (output, cols); ``cols`` is the unfolded input, reused by the
    backward pass.
    """
    c_out, c_in, k, _ = weight.shape
    if x.shape[0] != c_in:
        raise DimensionError(f"conv input has {x.shape[0]} channels, weight expects {c_in}")
    if cols is None:
        cols = im2col(x, k, stride, padding)
    oh = conv_out_extent(x.shape[1], k, stride, padding)
    ow = conv_out_extent(x.shape[2], k, stride, padding)
    out = weight.reshape(c_out, -1) @ cols
    if bias is not None:
        out += bias[:, None]
    return out.reshape(c_out, oh, ow), cols


def conv2d_backward(
    grad_out: np.ndarray,
    cols: np.ndarray,
    x_shape: tuple[int, int, int],
    weight: np.ndarray,
    stride: int = 1,
    padding: int = 0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of conv2d_forward: (grad_input, grad_weight, grad_bias)."""
    c_out, c_in, k, _ = weight.shape
    if grad_out.shape[0] != c_out:
        raise DimensionError(f"grad has {grad_out.shape[0]} channels, weight expects {c_out}")
    g_mat = grad_out.reshape(c_out, -1)
    grad_w = (g_mat @ cols.T).reshape(weight.shape)
    grad_b = grad_out.sum(axis=(1, 2))
    grad_cols = weight.reshape(c_out, -1).T @ g_mat
    grad_x = col2im(grad_cols, c_in, x_shape[1], x_shape[2], k, stride, padding)
    return grad_x, grad_w, grad_b


def deconv2d_forward(
    x: np.ndarray,
    weight: np.ndarray,
    bias: np.ndarray | None,
    stride: int = 1,
    padding: int = 0,
) -> np.ndarray:
    """Transposed convolution of (C_in, H, W) with (C_in, C_out, k, k).

    Each input element scatters through the kernel; the map is the exact
    adjoint of conv2d_forward with the same weight viewed as
    (C_out=C_in, C_in=C_out, k, k).
    """
    c_in, c_out, k, _ = weight.shape
    if x.shape[0] != c_in:
        raise DimensionError(f"deconv input has {x.shape[0]} channels, weight expects {c_in}")
    h, w = x.shape[1], x.shape[2]
    oh = deconv_out_extent(h, k, stride, padding)
    ow = deconv_out_extent(w, k, stride, padding)
    if oh < 1 or ow < 1:
        raise DimensionError(
            f"deconv output extent {oh}x{ow} is not positive for input {h}x{w}, "
            f"kernel {k}, stride {stride}, padding {padding}"
        )
    cols = weight.reshape(c_in, -1).T @ x.reshape(c_in, h * w)
    out = col2im(cols, c_out, oh, ow, k, stride, padding)
    if bias is not None:
        out += bias[:, None, None]
    return out


def deconv2d_backward(
    grad_out: np.ndarray,
    x: np.ndarray,
    weight: np.ndarray,
    stride: int = 1,
    padding: int = 0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of deconv2d_forward: (grad_input, grad_weight, grad_bias)."""
    c_in, c_out, k, _ = weight.shape
    g_cols = im2col(grad_out, k, stride, padding)
    grad_x = (weight.reshape(c_in, -1) @ g_cols).reshape(x.shape)
    grad_w = (x.reshape(c_in, -1) @ g_cols.T).reshape(weight.shape)
    grad_b = grad_out.sum(axis=(1, 2))
    return grad_x, grad_w, grad_b


def _pad_even(x: np.ndarray) -> tuple[np.ndarray, tuple[int, int]]:
    """Replicate-pad right/bottom so both spatial extents are even."""
    ph = x.shape[1] % 2
    pw = x.shape[2] % 2
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, ph), (0, pw)), mode="edge")
    return x, (ph, pw)


def _fold_even_pad(grad: np.ndarray, pads: tuple[int, int]) -> np.ndarray:
    """Backward of replicate padding: fold padded row/col gradients back."""
    ph, pw = pads
    if ph:
        grad[:, -2, :] += grad[:, -1, :]
        grad = grad[:, :-1, :]
    if pw:
        grad[:, :, -2] += grad[:, :, -1]
        grad = grad[:, :, :-1]
    return grad


def maxpool2_forward(x: np.ndarray) -> tuple[np.ndarray, tuple]:
    """2x2 stride-2 max pooling; caches argmax for the backward pass."""
    xp, pads = _pad_even(x)
    c, h, w = xp.shape
    win = xp.reshape(c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h // 2, w // 2, 4)
    idx = win.argmax(axis=3)                        # first index wins ties
    out = np.take_along_axis(win, idx[..., None], axis=3)[..., 0]
    return out, (idx, xp.shape, pads, x.shape)


def maxpool2_backward(grad_out: np.ndarray, cache: tuple) -> np.ndarray:
    idx, xp_shape, pads, x_shape = cache
    c, h, w = xp_shape
    gwin = np.zeros((c, h // 2, w // 2, 4), dtype=grad_out.dtype)
    np.put_along_axis(gwin, idx[..., None], grad_out[..., None], axis=3)
    grad = gwin.reshape(c, h // 2, w // 2, 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h, w)
    grad = _fold_even_pad(grad, pads)
    assert grad.shape == x_shape
    return grad


def avgpool2_forward(x: np.ndarray) -> tuple[np.ndarray, tuple]:
    """2x2 stride-2 average pooling."""
    xp, pads = _pad_even(x)
    c, h, w = xp.shape
    out = xp.reshape(c, h // 2, 2, w // 2, 2).mean(axis=(2, 4))
    return out, (xp.shape, pads, x.shape)


def avgpool2_backward(grad_out: np.ndarray, cache: tuple) -> np.ndarray:
    xp_shape, pads, x_shape = cache
    c, h, w = xp_shape
    grad = np.repeat(np.repeat(grad_out, 2, axis=1), 2, axis=2) * grad_out.dtype.type(0.25)
    grad = _fold_even_pad(grad, pads)
    assert grad.shape == x_shape
    return grad


def leaky_relu_forward(x: np.ndarray, slope: float = 0.2) -> np.ndarray:
    return np.where(x > 0, x, x.dtype.type(slope) * x)


def leaky_relu_backward(grad_out: np.ndarray, x: np.ndarray, slope: float = 0.2) -> np.ndarray:
    return np.where(x > 0, grad_out, grad_out.dtype.type(slope) * grad_out)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ez = np.exp(x[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid_backward(grad_out: np.ndarray, y: np.ndarray) -> np.ndarray:
    return grad_out * y * (1.0 - y)
