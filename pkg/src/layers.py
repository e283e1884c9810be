#!/usr/bin/env python3
"""
Layers Module

Forward and backward rules for the network's layers: grouped 2-D
convolution over arbitrary group size arrays, the factorized 1xm / mx1
grouped pair, 2x2 max pooling, global average pooling and softmax
cross-entropy.

Convolutions are bias-free, stride 1, with "same" zero padding. Channels
are partitioned contiguously in group order; group i maps its in_sizes[i]
input channels to out_sizes[i] output channels with its own weight block.
"""

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DataError, InvalidLayerError, ShapeError
from .tensor import ParamStore, Tensor, _record, relu

logger = logging.getLogger(__name__)

SUPPORTED_KERNELS = {(1, 1), (5, 5), (1, 3), (3, 1), (3, 3)}


@dataclass
class GroupedConvLayer:
    """A bias-free grouped convolution with one weight block per group."""

    kernel: Tuple[int, int]
    in_sizes: Tuple[int, ...]
    out_sizes: Tuple[int, ...]
    weights: List[Tensor]
    stride: int = 1
    padding: str = "same"

    def __post_init__(self):
        self.kernel = tuple(self.kernel)
        self.in_sizes = tuple(int(s) for s in self.in_sizes)
        self.out_sizes = tuple(int(s) for s in self.out_sizes)
        kh, kw = self.kernel

        if self.kernel not in SUPPORTED_KERNELS:
            raise InvalidLayerError(f"unsupported kernel {kh}x{kw}")
        if self.stride != 1 or self.padding != "same":
            raise InvalidLayerError("only stride 1 with same padding is supported")
        if len(self.in_sizes) != len(self.out_sizes):
            raise InvalidLayerError(
                f"{len(self.in_sizes)} input groups vs {len(self.out_sizes)} output groups"
            )
        if not self.in_sizes or any(s < 1 for s in self.in_sizes + self.out_sizes):
            raise InvalidLayerError(f"empty group in {list(self.in_sizes)} -> {list(self.out_sizes)}")
        if len(self.weights) != len(self.in_sizes):
            raise InvalidLayerError(f"{len(self.weights)} weight blocks for {len(self.in_sizes)} groups")
        for i, (w, ci, co) in enumerate(zip(self.weights, self.in_sizes, self.out_sizes)):
            if w.shape != (co, ci, kh, kw):
                raise InvalidLayerError(f"group {i} weight block {w.shape}, expected {(co, ci, kh, kw)}")

    @property
    def in_channels(self) -> int:
        return sum(self.in_sizes)

    @property
    def out_channels(self) -> int:
        return sum(self.out_sizes)

    @property
    def group_count(self) -> int:
        return len(self.in_sizes)

    def weight_count(self) -> int:
        """kh * kw * sum(in_sizes[i] * out_sizes[i])."""
        kh, kw = self.kernel
        return kh * kw * sum(ci * co for ci, co in zip(self.in_sizes, self.out_sizes))

    @classmethod
    def create(cls, params: ParamStore, prefix: str, kernel: Tuple[int, int],
               in_sizes: Sequence[int], out_sizes: Sequence[int],
               rng: np.random.Generator) -> "GroupedConvLayer":
        """Register He-initialized weight blocks under prefix.g<i> and build the layer."""
        kh, kw = kernel
        weights = []
        for i, (ci, co) in enumerate(zip(in_sizes, out_sizes)):
            # std = sqrt(2 / fan_in) of this block
            std = np.sqrt(2.0 / (kh * kw * ci))
            block = rng.normal(0.0, std, size=(co, ci, kh, kw))
            weights.append(params.add(f"{prefix}.g{i}", block))
        return cls(kernel=kernel, in_sizes=tuple(in_sizes), out_sizes=tuple(out_sizes), weights=weights)


def _same_padding(kernel: Tuple[int, int]) -> Tuple[int, int]:
    kh, kw = kernel
    return (kh - 1) // 2, (kw - 1) // 2


def _im2col(xp: np.ndarray, kh: int, kw: int, height: int, width: int) -> np.ndarray:
    """(N, C, H+kh-1, W+kw-1) padded input -> (N, C*kh*kw, H*W) columns."""
    n, c = xp.shape[:2]
    if kh == 1 and kw == 1:
        return xp.reshape(n, c, height * width)
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))  # (N, C, H, W, kh, kw)
    return windows.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * kh * kw, height * width)


def _col2im(cols: np.ndarray, channels: int, kh: int, kw: int, height: int, width: int) -> np.ndarray:
    """Scatter-add columns back onto the padded input grid."""
    n = cols.shape[0]
    if kh == 1 and kw == 1:
        return cols.reshape(n, channels, height, width)
    cols = cols.reshape(n, channels, kh, kw, height, width)
    grid = np.zeros((n, channels, height + kh - 1, width + kw - 1), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            grid[:, :, i:i + height, j:j + width] += cols[:, :, i, j]
    return grid


def grouped_conv2d(x: Tensor, layer: GroupedConvLayer) -> Tensor:
    """Convolve each contiguous channel slice of x with its group's weight block."""
    if x.data.ndim != 4:
        raise ShapeError(f"grouped_conv2d expects (N, C, H, W), got {x.shape}")
    n, c, height, width = x.shape
    if c != layer.in_channels:
        raise ShapeError(f"input has {c} channels, layer groups sum to {layer.in_channels}")

    kh, kw = layer.kernel
    ph, pw = _same_padding(layer.kernel)
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x.data

    in_offsets = np.concatenate([[0], np.cumsum(layer.in_sizes)])
    out_offsets = np.concatenate([[0], np.cumsum(layer.out_sizes)])
    columns = []
    out = np.empty((n, layer.out_channels, height * width), dtype=x.dtype)
    for g, weight in enumerate(layer.weights):
        cols = _im2col(xp[:, in_offsets[g]:in_offsets[g + 1]], kh, kw, height, width)
        wmat = weight.data.reshape(weight.shape[0], -1).astype(x.dtype, copy=False)
        out[:, out_offsets[g]:out_offsets[g + 1]] = np.matmul(wmat, cols)
        columns.append(cols)

    def backward(grad: np.ndarray):
        grad = grad.reshape(n, layer.out_channels, height * width)
        grad_xp = np.zeros(xp.shape, dtype=grad.dtype)
        weight_grads = []
        for g, weight in enumerate(layer.weights):
            go = grad[:, out_offsets[g]:out_offsets[g + 1]]
            cols = columns[g]
            gw = np.matmul(go, cols.transpose(0, 2, 1)).sum(axis=0)
            weight_grads.append(gw.reshape(weight.shape).astype(weight.dtype, copy=False))

            wmat = weight.data.reshape(weight.shape[0], -1).astype(grad.dtype, copy=False)
            grad_cols = np.matmul(wmat.T, go)
            grad_xp[:, in_offsets[g]:in_offsets[g + 1]] = _col2im(
                grad_cols, layer.in_sizes[g], kh, kw, height, width
            )
        grad_x = grad_xp[:, :, ph:ph + height, pw:pw + width]
        return (np.ascontiguousarray(grad_x),) + tuple(weight_grads)

    return _record(out.reshape(n, layer.out_channels, height, width), "grouped_conv2d",
                   (x,) + tuple(layer.weights), backward,
                   {"kernel": layer.kernel, "groups": layer.group_count})


def factorized_grouped_conv(x: Tensor, w_1xm: GroupedConvLayer, w_mx1: GroupedConvLayer) -> Tensor:
    """relu(conv_mx1(relu(conv_1xm(x)))) with both halves sharing one grouping."""
    if w_1xm.in_sizes != w_mx1.in_sizes or w_1xm.out_sizes != w_mx1.out_sizes:
        raise InvalidLayerError(
            f"factorized halves group differently: {list(w_1xm.out_sizes)} vs {list(w_mx1.out_sizes)}"
        )
    if w_1xm.in_sizes != w_1xm.out_sizes:
        raise InvalidLayerError("factorized grouped convolution maps each group onto itself")
    if w_1xm.kernel != (1, 3) or w_mx1.kernel != (3, 1):
        raise InvalidLayerError(f"expected 1x3 then 3x1 kernels, got {w_1xm.kernel} then {w_mx1.kernel}")
    return relu(grouped_conv2d(relu(grouped_conv2d(x, w_1xm)), w_mx1))


def max_pool2(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2; ties route the gradient to the first maximum."""
    n, c, height, width = x.shape
    if height % 2 or width % 2:
        raise ShapeError(f"max_pool2 needs even spatial dims, got {height}x{width}")
    h2, w2 = height // 2, width // 2
    windows = x.data.reshape(n, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
    argmax = windows.argmax(axis=-1)[..., None]
    out = np.take_along_axis(windows, argmax, axis=-1)[..., 0]

    def backward(grad: np.ndarray):
        routed = np.zeros((n, c, h2, w2, 4), dtype=grad.dtype)
        np.put_along_axis(routed, argmax, grad[..., None], axis=-1)
        routed = routed.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        return (routed.reshape(n, c, height, width),)

    return _record(np.ascontiguousarray(out), "max_pool2", (x,), backward)


def global_avg_pool(x: Tensor) -> Tensor:
    """Spatial mean per channel: (N, C, H, W) -> (N, C, 1, 1)."""
    n, c, height, width = x.shape
    if height < 1 or width < 1:
        raise ShapeError(f"global_avg_pool needs a non-empty map, got {height}x{width}")
    area = height * width
    out = x.data.mean(axis=(2, 3), keepdims=True, dtype=x.dtype)
    return _record(out, "global_avg_pool", (x,),
                   lambda g: (np.broadcast_to(g / area, x.shape).astype(g.dtype),))


def softmax_cross_entropy(logits: Tensor, labels: Sequence[int]) -> Tensor:
    """Mean negative log-likelihood of the labelled class under softmax(logits)."""
    if logits.data.ndim != 4 or logits.shape[2:] != (1, 1):
        raise ShapeError(f"logits must be (N, K, 1, 1), got {logits.shape}")
    n, k = logits.shape[:2]
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.shape[0] != n:
        raise ShapeError(f"{labels.shape[0]} labels for a batch of {n}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise DataError(f"labels must lie in [0, {k}), got range [{labels.min()}, {labels.max()}]")

    z = logits.data.reshape(n, k)
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    rows = np.arange(n)
    loss = np.asarray(-log_probs[rows, labels].mean(), dtype=logits.dtype)

    def backward(grad: np.ndarray):
        probs = np.exp(log_probs)
        probs[rows, labels] -= 1.0
        return ((probs * (grad / n)).reshape(logits.shape).astype(grad.dtype),)

    return _record(loss, "softmax_cross_entropy", (logits,), backward)


def softmax(logits: Tensor) -> np.ndarray:
    """Class probabilities (N, K) for inference; not recorded on the tape."""
    n, k = logits.shape[:2]
    z = logits.data.reshape(n, k)
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)
