#!/usr/bin/env python3
"""
Gradient Check Module

Compares every op's backward rule against central finite differences in
float64, plus one full Logarithmic-8 network on a 2-sample 16x16 batch.

Each check reduces the op output to a scalar with a fixed random projection,
samples coordinates of every differentiable input, and reports the worst
per-coordinate relative error |analytic - numeric| / max(|analytic|,
|numeric|, floor). Op inputs feeding a ReLU are kept at least 0.1 away from
zero and max-pool inputs have no ties, so no perturbation crosses a kink.
Inside the full network kinks cannot be placed, so a coordinate whose
one-sided slopes disagree is treated as straddling one and replaced by
another draw.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .layers import (GroupedConvLayer, factorized_grouped_conv, global_avg_pool, grouped_conv2d,
                     max_pool2, softmax_cross_entropy)
from .model import NetworkSpec, build_network
from .tensor import (CHECK_DTYPE, ParamStore, Tensor, _topological_order, backward, elementwise_add,
                     elementwise_mul, no_grad, relu, sum_all)

logger = logging.getLogger(__name__)

STEP = 1e-5
TOLERANCE = 1e-4
# Below this magnitude a gradient coordinate is compared in absolute terms
ERROR_FLOOR = 1e-4
CORRUPT_SCALE = 1.1
# Draws per wanted coordinate before giving up on a tensor near many kinks
KINK_RETRIES = 5

CORRUPTIBLE_OPS = ("add", "mul", "relu", "sum", "grouped_conv2d", "max_pool2",
                   "global_avg_pool", "softmax_cross_entropy")


@dataclass
class CheckResult:
    """Outcome of one finite-difference comparison."""

    name: str
    worst_error: float
    coordinates: int
    passed: bool
    skipped: int = 0


@dataclass
class GradcheckReport:
    results: List[CheckResult] = field(default_factory=list)
    tolerance: float = TOLERANCE

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def failures(self) -> List[CheckResult]:
        return [r for r in self.results if not r.passed]

    def format(self) -> str:
        width = max(len(r.name) for r in self.results)
        lines = [f"{'check':<{width}}  {'worst rel. error':>16}  {'coords':>6}  {'skipped':>7}  status"]
        for r in self.results:
            status = "PASS" if r.passed else "FAIL"
            lines.append(f"{r.name:<{width}}  {r.worst_error:>16.3e}  {r.coordinates:>6}  {r.skipped:>7}  {status}")
        verdict = "all checks passed" if self.passed else \
            "FAILED: " + ", ".join(r.name for r in self.failures())
        lines.append(f"tolerance {self.tolerance:g}: {verdict}")
        return "\n".join(lines)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = ERROR_FLOOR) -> float:
    """Worst coordinate of |a - n| / max(|a|, |n|, floor)."""
    analytic, numeric = np.asarray(analytic, dtype=np.float64), np.asarray(numeric, dtype=np.float64)
    if analytic.size == 0:
        return 0.0
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale))


def _corrupt(loss: Tensor, op_kind: str) -> None:
    """Scale every gradient produced by op_kind nodes in the graph of loss."""
    for tensor in _topological_order(loss):
        node = tensor.node
        if node is None or node.op_kind != op_kind:
            continue
        rule = node.backward
        node.backward = lambda g, rule=rule: tuple(None if r is None else r * CORRUPT_SCALE for r in rule(g))


def check_gradients(name: str, loss_fn: Callable[[], Tensor], inputs: Sequence[Tensor],
                    rng: np.random.Generator, max_coords: int = 20, step: float = STEP,
                    tolerance: float = TOLERANCE, corrupt: Optional[str] = None,
                    skip_kinks: bool = False) -> CheckResult:
    """Compare the tape's gradients of loss_fn() w.r.t. inputs with central differences.

    With skip_kinks, a coordinate whose forward and backward one-sided slopes
    differ by more than tolerance * max(|central|, floor) is dropped and
    another one drawn, so non-smooth points never enter the comparison.
    """
    for t in inputs:
        t.grad = None
    loss = loss_fn()
    if corrupt:
        _corrupt(loss, corrupt)
    backward(loss)
    center = loss.item()

    analytic, numeric = [], []
    skipped = 0
    for t in inputs:
        flat = t.data.reshape(-1)
        grad = t.grad.reshape(-1) if t.grad is not None else np.zeros(flat.size)
        wanted = min(flat.size, max_coords)
        budget = wanted * KINK_RETRIES if skip_kinks else wanted
        accepted = 0
        for index in rng.permutation(flat.size)[:budget]:
            original = flat[index]
            with no_grad():
                flat[index] = original + step
                upper = loss_fn().item()
                flat[index] = original - step
                lower = loss_fn().item()
            flat[index] = original
            central = (upper - lower) / (2 * step)
            if skip_kinks:
                mismatch = abs((upper - center) - (center - lower)) / step
                if mismatch > tolerance * max(abs(central), ERROR_FLOOR):
                    skipped += 1
                    continue
            numeric.append(central)
            analytic.append(grad[index])
            accepted += 1
            if accepted == wanted:
                break

    error = relative_error(np.asarray(analytic), np.asarray(numeric))
    passed = bool(numeric) and error < tolerance
    return CheckResult(name=name, worst_error=error, coordinates=len(numeric), passed=passed, skipped=skipped)


def _away_from_zero(rng: np.random.Generator, shape) -> np.ndarray:
    u = rng.standard_normal(shape)
    return np.sign(u) * (0.1 + np.abs(u))


def _leaf(values: np.ndarray) -> Tensor:
    return Tensor(np.array(values, dtype=CHECK_DTYPE), requires_grad=True, dtype=CHECK_DTYPE)


def _projected(out: Tensor, rng: np.random.Generator) -> Tensor:
    weights = Tensor(rng.standard_normal(out.shape), dtype=CHECK_DTYPE)
    return sum_all(elementwise_mul(out, weights))


def _op_checks(rng: np.random.Generator):
    """(name, loss_fn, inputs) triples for the individual ops."""
    checks = []

    a, b = _leaf(rng.standard_normal((2, 3, 4, 4))), _leaf(rng.standard_normal((2, 3, 4, 4)))
    proj = Tensor(rng.standard_normal((2, 3, 4, 4)), dtype=CHECK_DTYPE)
    checks.append(("add", lambda: sum_all(elementwise_mul(elementwise_add(a, b), proj)), [a, b]))

    c, d = _leaf(rng.standard_normal((2, 3, 4, 4))), _leaf(rng.standard_normal((2, 3, 4, 4)))
    checks.append(("mul", lambda: sum_all(elementwise_mul(c, d)), [c, d]))

    x = _leaf(_away_from_zero(rng, (2, 3, 5, 5)))
    proj_relu = Tensor(rng.standard_normal((2, 3, 5, 5)), dtype=CHECK_DTYPE)
    checks.append(("relu", lambda: sum_all(elementwise_mul(relu(x), proj_relu)), [x]))

    s = _leaf(rng.standard_normal((1, 2, 3, 3)))
    checks.append(("sum", lambda: sum_all(s), [s]))

    groupings = {
        (1, 1): ((3, 1, 2), (2, 4, 1)),
        (1, 3): ((4, 2, 1, 1), (4, 2, 1, 1)),
        (3, 1): ((4, 2, 1, 1), (4, 2, 1, 1)),
        (3, 3): ((2, 1), (1, 3)),
        (5, 5): ((3,), (4,)),
    }
    for kernel, (in_sizes, out_sizes) in groupings.items():
        store = ParamStore(dtype=CHECK_DTYPE)
        layer = GroupedConvLayer.create(store, "conv", kernel, in_sizes, out_sizes, rng)
        inp = _leaf(rng.standard_normal((2, sum(in_sizes), 6, 5)))
        proj_conv = Tensor(rng.standard_normal((2, sum(out_sizes), 6, 5)), dtype=CHECK_DTYPE)
        checks.append((
            f"grouped_conv2d[{kernel[0]}x{kernel[1]}]",
            lambda inp=inp, layer=layer, p=proj_conv: sum_all(elementwise_mul(grouped_conv2d(inp, layer), p)),
            [inp] + list(layer.weights),
        ))

    sizes = (4, 2, 1, 1)
    store = ParamStore(dtype=CHECK_DTYPE)
    row = GroupedConvLayer.create(store, "row", (1, 3), sizes, sizes, rng)
    col = GroupedConvLayer.create(store, "col", (3, 1), sizes, sizes, rng)
    t = _leaf(_away_from_zero(rng, (2, 8, 4, 4)))
    proj_f = Tensor(rng.standard_normal((2, 8, 4, 4)), dtype=CHECK_DTYPE)
    checks.append(("factorized_grouped_conv",
                   lambda: sum_all(elementwise_mul(factorized_grouped_conv(t, row, col), proj_f)),
                   [t] + list(row.weights) + list(col.weights)))

    # Distinct values 0.01 apart: no ties inside a pooling window
    pool_in = _leaf(rng.permutation(2 * 3 * 4 * 6).reshape(2, 3, 4, 6) * 1e-2)
    proj_pool = Tensor(rng.standard_normal((2, 3, 2, 3)), dtype=CHECK_DTYPE)
    checks.append(("max_pool2", lambda: sum_all(elementwise_mul(max_pool2(pool_in), proj_pool)), [pool_in]))

    gap_in = _leaf(rng.standard_normal((2, 4, 3, 5)))
    proj_gap = Tensor(rng.standard_normal((2, 4, 1, 1)), dtype=CHECK_DTYPE)
    checks.append(("global_avg_pool",
                   lambda: sum_all(elementwise_mul(global_avg_pool(gap_in), proj_gap)), [gap_in]))

    logits = _leaf(rng.standard_normal((4, 5, 1, 1)))
    labels = np.array([0, 3, 4, 3])
    checks.append(("softmax_cross_entropy", lambda: softmax_cross_entropy(logits, labels), [logits]))
    return checks


def run_gradcheck(seed: int = 0, corrupt: Optional[str] = None, step: float = STEP,
                  tolerance: float = TOLERANCE, include_network: bool = True) -> GradcheckReport:
    """Run every op check and the full-network check; deterministic given seed."""
    if corrupt is not None and corrupt not in CORRUPTIBLE_OPS:
        raise ValueError(f"unknown op '{corrupt}' (choose from {', '.join(CORRUPTIBLE_OPS)})")
    report = GradcheckReport(tolerance=tolerance)
    rng = np.random.default_rng(seed)

    for name, loss_fn, inputs in _op_checks(rng):
        result = check_gradients(name, loss_fn, inputs, rng, step=step, tolerance=tolerance, corrupt=corrupt)
        logger.debug("%s: %.3e", name, result.worst_error)
        report.results.append(result)

    if include_network:
        spec = NetworkSpec.from_name("Logarithmic-8", num_classes=10, input_size=16)
        model = build_network(spec, seed=seed, dtype=CHECK_DTYPE)
        images = rng.standard_normal((2, 3, 16, 16))
        labels = np.array([1, 7])
        x = Tensor(images, dtype=CHECK_DTYPE)
        result = check_gradients(
            "network[Logarithmic-8]",
            lambda: softmax_cross_entropy(model.forward(x), labels),
            [param for _, param in model.params.items()],
            rng, max_coords=4, step=step, tolerance=tolerance, corrupt=corrupt, skip_kinks=True,
        )
        report.results.append(result)

    for failure in report.failures():
        logger.error("gradient check failed for %s (relative error %.3e)", failure.name, failure.worst_error)
    return report
