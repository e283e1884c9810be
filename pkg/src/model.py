#!/usr/bin/env python3
"""
Model Module

Builds the three-layer shallow CNN for any grouping scheme and computes its
exact parameter budget.

    stem      5x5 conv 3 -> 64, ReLU
    module 2  1x1 conv 64 -> 128, ReLU = t; F(t) = grouped 1x3, ReLU, grouped 3x1, ReLU;
              t + F(t) (or F(t) without shortcut); 2x2 max pool
    module 3  same with 128 -> 256; 2x2 max pool
    head      1x1 conv 256 -> classes, global average pooling, softmax

No layer carries a bias and there is no normalization, so the weight count
of a scheme is 5*5*3*64 + (64*128 + 6*sum(g2^2)) + (128*256 + 6*sum(g3^2))
+ 256*classes.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidSpecError, ShapeError
from .layers import (GroupedConvLayer, factorized_grouped_conv, global_avg_pool, grouped_conv2d,
                     max_pool2, softmax, softmax_cross_entropy)
from .scheme import GroupScheme, SchemeTable, canonical_scheme_table
from .tensor import DEFAULT_DTYPE, ParamStore, Tensor, elementwise_add, no_grad, relu

logger = logging.getLogger(__name__)


@dataclass
class NetworkSpec:
    """Declarative description of the shallow network."""

    scheme: SchemeTable
    num_classes: int = 10
    shortcut: bool = True
    input_shape: Tuple[int, int, int] = (3, 32, 32)
    stem_channels: int = 64
    module_channels: Tuple[int, ...] = (128, 256)
    kernel_m: int = 3
    stem_kernel: int = 5

    @classmethod
    def from_name(cls, scheme_name: str, num_classes: int = 10, shortcut: bool = True,
                  input_size: int = 32) -> "NetworkSpec":
        """Spec for a canonical scheme; 64x64 inputs model the face-expression variant."""
        return cls(scheme=canonical_scheme_table(scheme_name), num_classes=num_classes,
                   shortcut=shortcut, input_shape=(3, input_size, input_size))

    @property
    def name(self) -> str:
        return self.scheme.name if self.shortcut else f"{self.scheme.name} w/o shortcut"

    def module_schemes(self) -> List[GroupScheme]:
        """Grouping of each module, in depth order (layer 2, layer 3)."""
        return [self.scheme.per_layer[index] for index in sorted(self.scheme.per_layer)]

    def validate(self) -> "NetworkSpec":
        """Raise InvalidSpecError unless the spec describes a buildable network."""
        if self.num_classes < 1:
            raise InvalidSpecError(f"num_classes must be positive, got {self.num_classes}")
        if len(self.input_shape) != 3 or self.input_shape[0] != 3:
            raise InvalidSpecError(f"input must be 3-channel (3, H, W), got {self.input_shape}")
        pools = len(self.module_channels)
        _, height, width = self.input_shape
        if height % (2 ** pools) or width % (2 ** pools) or height < 1 or width < 1:
            raise InvalidSpecError(f"input {height}x{width} does not survive {pools} 2x2 pools")
        if self.kernel_m != 3:
            raise InvalidSpecError(f"factorized kernel size m must be 3, got {self.kernel_m}")
        for shallow, deep in zip(self.module_channels, self.module_channels[1:]):
            if deep != 2 * shallow:
                raise InvalidSpecError(f"module widths must double, got {list(self.module_channels)}")

        schemes = self.module_schemes()
        if len(schemes) != len(self.module_channels):
            raise InvalidSpecError(
                f"scheme {self.scheme.name} groups {len(schemes)} layers, network has {len(self.module_channels)} modules"
            )
        for index, (scheme, width) in enumerate(zip(schemes, self.module_channels), start=2):
            if scheme.channels != width:
                raise InvalidSpecError(
                    f"layer {index} scheme covers {scheme.channels} channels, module is {width} wide"
                )
        return self


@dataclass
class ParameterBudget:
    """Per-layer trainable weight counts and their total."""

    per_layer: List[Tuple[str, int]]
    total: Optional[int] = None

    def __post_init__(self):
        computed = sum(count for _, count in self.per_layer)
        if self.total is None:
            self.total = computed
        elif self.total != computed:
            raise InvalidSpecError(f"budget total {self.total} != per-layer sum {computed}")

    def to_dict(self) -> Dict[str, Any]:
        return {"per_layer": [{"layer": name, "weights": count} for name, count in self.per_layer],
                "total": self.total}

    def format(self) -> str:
        width = max(len(name) for name, _ in self.per_layer)
        lines = [f"  {name:<{width}}  {count:>9,}" for name, count in self.per_layer]
        lines.append(f"  {'total':<{width}}  {self.total:>9,}")
        return "\n".join(lines)


def count_parameters(spec: NetworkSpec) -> ParameterBudget:
    """Exact bias-free weight count of the network described by spec."""
    spec.validate()
    in_channels = spec.input_shape[0]
    m = spec.kernel_m
    k = spec.stem_kernel
    per_layer = [(f"stem.conv{k}x{k}", k * k * in_channels * spec.stem_channels)]

    previous = spec.stem_channels
    for index, (scheme, width) in enumerate(zip(spec.module_schemes(), spec.module_channels), start=2):
        per_layer.append((f"module{index}.expand1x1", previous * width))
        per_layer.append((f"module{index}.conv1x{m}", m * scheme.sum_of_squares()))
        per_layer.append((f"module{index}.conv{m}x1", m * scheme.sum_of_squares()))
        previous = width

    per_layer.append(("classifier.conv1x1", previous * spec.num_classes))
    return ParameterBudget(per_layer=per_layer)


class GroupConvModule:
    """1x1 expansion followed by a factorized grouped conv, optionally wrapped by an identity shortcut."""

    def __init__(self, expand: GroupedConvLayer, conv_1xm: GroupedConvLayer,
                 conv_mx1: GroupedConvLayer, shortcut: bool):
        self.expand = expand
        self.conv_1xm = conv_1xm
        self.conv_mx1 = conv_mx1
        self.shortcut = shortcut

    @classmethod
    def create(cls, params: ParamStore, prefix: str, in_channels: int, scheme: GroupScheme,
               shortcut: bool, m: int, rng: np.random.Generator) -> "GroupConvModule":
        sizes = scheme.sizes
        expand = GroupedConvLayer.create(params, f"{prefix}.expand1x1", (1, 1),
                                         [in_channels], [scheme.channels], rng)
        conv_1xm = GroupedConvLayer.create(params, f"{prefix}.conv1x{m}", (1, m), sizes, sizes, rng)
        conv_mx1 = GroupedConvLayer.create(params, f"{prefix}.conv{m}x1", (m, 1), sizes, sizes, rng)
        return cls(expand, conv_1xm, conv_mx1, shortcut)

    def branch_point(self, x: Tensor) -> Tensor:
        """Expansion output t, where the identity shortcut starts."""
        return relu(grouped_conv2d(x, self.expand))

    def forward(self, x: Tensor) -> Tensor:
        """t + F(t) with the shortcut, F(t) without; pooling is applied by the network."""
        t = self.branch_point(x)
        residual = factorized_grouped_conv(t, self.conv_1xm, self.conv_mx1)
        return elementwise_add(t, residual) if self.shortcut else residual

    def layers(self) -> List[GroupedConvLayer]:
        return [self.expand, self.conv_1xm, self.conv_mx1]


class ShallowCNN:
    """The executable network: parameters plus a forward pass over Tensors."""

    def __init__(self, spec: NetworkSpec, seed: int = 0, dtype=DEFAULT_DTYPE):
        """Instantiate every weight block of spec with He initialization."""
        self.spec = spec.validate()
        self.seed = seed
        self.params = ParamStore(dtype=dtype)
        rng = np.random.default_rng(seed)

        k = spec.stem_kernel
        in_channels = spec.input_shape[0]
        self.stem = GroupedConvLayer.create(self.params, f"stem.conv{k}x{k}", (k, k),
                                            [in_channels], [spec.stem_channels], rng)
        self.modules: List[GroupConvModule] = []
        previous = spec.stem_channels
        for index, scheme in enumerate(spec.module_schemes(), start=2):
            self.modules.append(GroupConvModule.create(
                self.params, f"module{index}", previous, scheme, spec.shortcut, spec.kernel_m, rng
            ))
            previous = scheme.channels
        self.classifier = GroupedConvLayer.create(self.params, "classifier.conv1x1", (1, 1),
                                                  [previous], [spec.num_classes], rng)
        logger.debug("built %s with %d weights", spec.name, self.weight_census())

    @property
    def dtype(self):
        return self.params.dtype

    def layers(self) -> List[GroupedConvLayer]:
        found = [self.stem]
        for module in self.modules:
            found.extend(module.layers())
        found.append(self.classifier)
        return found

    def weight_census(self) -> int:
        """Number of weight elements actually instantiated."""
        return self.params.num_elements()

    def forward(self, x: Tensor) -> Tensor:
        """Logits (N, classes, 1, 1) for a batch (N, 3, H, W)."""
        # Fully convolutional: any spatial size that survives the pools works
        if x.data.ndim != 4 or x.shape[1] != self.spec.input_shape[0]:
            raise ShapeError(f"expected (N, {self.spec.input_shape[0]}, H, W) input, got {x.shape}")
        h = relu(grouped_conv2d(x, self.stem))
        for module in self.modules:
            h = max_pool2(module.forward(h))
        return global_avg_pool(grouped_conv2d(h, self.classifier))

    def loss(self, images: np.ndarray, labels: Sequence[int]) -> Tensor:
        """Mean cross-entropy of a batch."""
        return softmax_cross_entropy(self.forward(Tensor(images, dtype=self.dtype)), labels)

    def predict_proba(self, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
        """Softmax class probabilities (N, classes), computed without recording."""
        chunks = []
        with no_grad():
            for start in range(0, len(images), batch_size):
                logits = self.forward(Tensor(images[start:start + batch_size], dtype=self.dtype))
                chunks.append(softmax(logits))
        return np.concatenate(chunks, axis=0) if chunks else np.zeros((0, self.spec.num_classes))

    def predict(self, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
        return self.predict_proba(images, batch_size).argmax(axis=1)

    def clone(self, dtype=None) -> "ShallowCNN":
        """Independent copy (optionally re-typed) with identical parameter values."""
        copy = ShallowCNN(self.spec, seed=self.seed, dtype=dtype or self.dtype)
        copy.params.load_state(self.params.state())
        return copy


def build_network(spec: NetworkSpec, seed: int = 0, dtype=DEFAULT_DTYPE) -> ShallowCNN:
    """Instantiate the network described by spec."""
    return ShallowCNN(spec, seed=seed, dtype=dtype)
