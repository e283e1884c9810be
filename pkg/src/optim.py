#!/usr/bin/env python3
"""
Optimizer Module

Adam with bias correction and the piecewise-constant learning-rate
schedules of the two training protocols. Schedules are indexed by the
1-indexed epoch; a threshold of 100 means the rate applies through epoch
100 and the next rate starts at epoch 101.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .errors import NumericFailureError, ScheduleExhaustedError
from .tensor import ParamStore

logger = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class AdamState:
    """First and second moments per parameter name, plus the step counter."""

    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError(f"Adam betas must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if self.eps <= 0:
            raise ValueError(f"Adam eps must be positive, got {self.eps}")


def adam_step(params: ParamStore, state: AdamState, lr: float) -> AdamState:
    """One bias-corrected Adam update of every parameter from its .grad."""
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    for name, param in params.items():
        if param.grad is None:
            raise NumericFailureError(f"parameter '{name}' has no gradient", node=name)
        if not np.all(np.isfinite(param.grad)):
            logger.error("non-finite gradient for %s", name)
            raise NumericFailureError(f"non-finite gradient for parameter '{name}'", node=name)

    state.step += 1
    t = state.step
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t
    for name, param in params.items():
        grad = param.grad.astype(np.float64)
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros(param.shape, dtype=np.float64)
            v = np.zeros(param.shape, dtype=np.float64)
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.m[name] = m
        state.v[name] = v

        m_hat = m / correction1
        v_hat = v / correction2
        param.data = (param.data - lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(param.dtype)
    return state


class Adam:
    """Adam bound to a parameter store."""

    def __init__(self, params: ParamStore, beta1: float = ADAM_BETA1, beta2: float = ADAM_BETA2,
                 eps: float = ADAM_EPS):
        self.params = params
        self.state = AdamState(beta1=beta1, beta2=beta2, eps=eps)

    def step(self, lr: float) -> None:
        adam_step(self.params, self.state, lr)

    def zero_grad(self) -> None:
        self.params.zero_grad()


@dataclass(frozen=True)
class LrSchedule:
    """Piecewise-constant rates: (last epoch, rate) pairs in increasing epoch order."""

    stages: Tuple[Tuple[int, float], ...]

    def __post_init__(self):
        stages = tuple((int(end), float(rate)) for end, rate in self.stages)
        object.__setattr__(self, "stages", stages)
        if not stages:
            raise ValueError("a schedule needs at least one stage")
        ends = [end for end, _ in stages]
        if ends[0] < 1 or any(b <= a for a, b in zip(ends, ends[1:])):
            raise ValueError(f"schedule thresholds must be strictly increasing from >= 1, got {ends}")
        if any(rate <= 0 for _, rate in stages):
            raise ValueError("schedule rates must be positive")

    @property
    def total_epochs(self) -> int:
        return self.stages[-1][0]

    def rate(self, epoch: int) -> float:
        """Learning rate for the 1-indexed epoch."""
        if epoch < 1:
            raise ScheduleExhaustedError(f"epochs are 1-indexed, got {epoch}")
        for end, rate in self.stages:
            if epoch <= end:
                return rate
        raise ScheduleExhaustedError(f"epoch {epoch} is beyond the {self.total_epochs}-epoch schedule")

    __call__ = rate

    def truncated(self, epochs: int) -> "LrSchedule":
        """Same rates, stopping after epochs."""
        if epochs < 1 or epochs > self.total_epochs:
            raise ScheduleExhaustedError(f"cannot run {epochs} epochs of a {self.total_epochs}-epoch schedule")
        stages: List[Tuple[int, float]] = []
        for end, rate in self.stages:
            stages.append((min(end, epochs), rate))
            if end >= epochs:
                break
        return LrSchedule(tuple(stages))


def cifar_schedule() -> LrSchedule:
    """1e-3 through epoch 100, halved to 140, 1e-4 to 160, halved to 180."""
    return LrSchedule(((100, 1e-3), (140, 5e-4), (160, 1e-4), (180, 5e-5)))


def fer_schedule() -> LrSchedule:
    """Constant 1e-4 for 30 epochs."""
    return LrSchedule(((30, 1e-4),))


def constant_schedule(rate: float, epochs: int) -> LrSchedule:
    return LrSchedule(((epochs, rate),))


def schedule_from_pairs(pairs: Sequence[Sequence[float]]) -> LrSchedule:
    return LrSchedule(tuple((int(end), float(rate)) for end, rate in pairs))
