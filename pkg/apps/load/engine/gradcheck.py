"""
LoAd Platform - Gradient Checking

Compares the reverse-mode gradient of a scalar function against central
finite differences. Runs in 64-bit mode only: float32 round-off swamps the
differences at h = 1e-5.

Created:    2026
License:    MIT - See LICENSE file
"""

from dataclasses import dataclass

import numpy as np

from ..exceptions import ShapeError
from .tensor import Tensor

FINITE_DIFFERENCE_STEP = 1e-5

# Entries smaller than this are compared on an absolute scale
RELATIVE_ERROR_FLOOR = 1e-5


@dataclass
class GradCheckReport:
    passed: bool
    max_rel_error: float
    tolerance: float
    analytic: np.ndarray
    numeric: np.ndarray

    def __str__(self):
        verdict = "pass" if self.passed else "FAIL"
        return f"grad check {verdict}: max rel error {self.max_rel_error:.3e} (tol {self.tolerance:.1e})"


def relative_error(analytic, numeric, floor=RELATIVE_ERROR_FLOOR):
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def numeric_gradient(f, x, h=FINITE_DIFFERENCE_STEP):
    """Central differences of scalar ``f`` around array ``x``."""
    grad = np.zeros_like(x)
    flat_x = x.reshape(-1)
    flat_grad = grad.reshape(-1)
    for index in range(flat_x.size):
        original = flat_x[index]
        flat_x[index] = original + h
        upper = f(Tensor(x.copy())).item()
        flat_x[index] = original - h
        lower = f(Tensor(x.copy())).item()
        flat_x[index] = original
        flat_grad[index] = (upper - lower) / (2 * h)
    return grad


def grad_check(f, x, tol=1e-4, h=FINITE_DIFFERENCE_STEP):
    """
    Check d f / d x at ``x``.

    ``f`` maps a Tensor to a single-value Tensor; ``x`` must be float64.
    """
    data = x.data if isinstance(x, Tensor) else np.asarray(x)
    if data.dtype != np.float64:
        raise ShapeError(f"grad_check runs in 64-bit mode, got {data.dtype}")

    probe = Tensor(data.copy(), requires_grad=True)
    out = f(probe)
    if out.data.size != 1:
        raise ShapeError(f"grad_check needs a scalar-valued function, got shape {out.shape}")
    out.backward()
    analytic = probe.grad if probe.grad is not None else np.zeros_like(data)

    numeric = numeric_gradient(f, data.copy(), h=h)
    error = float(relative_error(analytic, numeric).max()) if data.size else 0.0
    return GradCheckReport(
        passed=error < tol,
        max_rel_error=error,
        tolerance=tol,
        analytic=analytic,
        numeric=numeric,
    )
