"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from .params import ParameterSet


def numerical_grad(loss: Callable[[], float], params: ParameterSet, h: float = 1e-5,
                   names: list[str] | None = None) -> dict[str, np.ndarray]:
    """Central differences of ``loss()`` for every entry of the named parameters."""
    out = {}
    for name in names or params.names():
        value = params[name]
        grad = np.zeros_like(value)
        flat = value.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss()
            flat[i] = orig - h
            down = loss()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        out[name] = grad
    return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-10) -> float:
    """Block relative error ``max|a - n| / max(max|a|, max|n|, floor)``."""
    scale = max(float(np.max(np.abs(analytic), initial=0.0)),
                float(np.max(np.abs(numeric), initial=0.0)), floor)
    return float(np.max(np.abs(analytic - numeric), initial=0.0)) / scale


@dataclass
class GradCheckReport:
    name: str
    tolerance: float
    errors: dict[str, float] = field(default_factory=dict)
    draws: int = 1

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tolerance

    def merge(self, other: "GradCheckReport") -> None:
        for k, v in other.errors.items():
            self.errors[k] = max(self.errors.get(k, 0.0), v)


def check_gradients(name: str, params: ParameterSet, loss: Callable[[], float],
                    loss_and_grad: Callable[[], float], tolerance: float = 1e-4,
                    h: float = 1e-5) -> GradCheckReport:
    """Compare ``loss_and_grad`` (which fills ``params.grads``) against central differences.

    Only parameters with non-empty arrays are checked; the report holds the
    block relative error per parameter name.
    """
    params.zero_grad()
    loss_and_grad()
    analytic = {n: params.grads[n].copy() for n in params.names()}
    numeric = numerical_grad(loss, params, h=h)
    report = GradCheckReport(name, tolerance)
    for n in params.names():
        report.errors[n] = relative_error(analytic[n], numeric[n])
    return report
