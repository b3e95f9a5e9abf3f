"""Complex scalar arithmetic, activation, and optimizer primitives.

Every signal sample, weight, and bias in this package is a
double-precision complex number.  Training treats each complex parameter
as two independent reals (re, im) packed consecutively into a flat
float64 vector, so analytic gradients can be checked coordinate by
coordinate against plain central differences.  The helpers here operate
on those flat real views.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "cx_mul_reduced",
    "crelu",
    "crelu_grad",
    "AdamState",
    "adam_step",
    "finite_diff_grad",
]


def cx_mul_reduced(a: complex, b: complex) -> complex:
    """Multiply two complex numbers with the 3-multiplication scheme.

    Computes ``a * b`` from three real multiplications and five real
    additions (Gauss's trick)::

        t1 = a.re * b.re
        t2 = a.im * b.im
        re = t1 - t2
        im = (a.re + a.im) * (b.re + b.im) - t1 - t2

    The real part is bit-identical to the textbook 4-multiplication
    product; the imaginary part may differ by up to 4 ulp at the scale
    of the factored operand sums (|a.re|+|a.im|)(|b.re|+|b.im|).
    """
    t1 = a.real * b.real
    t2 = a.imag * b.imag
    t3 = (a.real + a.imag) * (b.real + b.imag)
    return complex(t1 - t2, t3 - t1 - t2)


def crelu(z):
    """Complex ReLU: clamp real and imaginary parts at zero independently.

    Accepts a scalar or a NumPy array and returns the same kind.
    """
    if isinstance(z, np.ndarray):
        return np.maximum(z.real, 0.0) + 1j * np.maximum(z.imag, 0.0)
    return complex(max(z.real, 0.0), max(z.imag, 0.0))


def crelu_grad(z):
    """Derivative masks of :func:`crelu` with respect to re and im.

    Returns ``(g_re, g_im)`` where each entry is 1 where the
    corresponding component is strictly positive and 0 otherwise.  The
    subgradient at exactly zero is taken as 0, so units sitting on the
    kink stay dead.
    """
    if isinstance(z, np.ndarray):
        return (
            (z.real > 0.0).astype(np.float64),
            (z.imag > 0.0).astype(np.float64),
        )
    return (1.0 if z.real > 0.0 else 0.0, 1.0 if z.imag > 0.0 else 0.0)


@dataclass
class AdamState:
    """First/second moment accumulators for one flat parameter vector."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(m=np.zeros(n), v=np.zeros(n), t=0)


def adam_step(
    params: np.ndarray,
    grads: np.ndarray,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> np.ndarray:
    """One Adam update with bias correction.

    ``state`` is advanced in place (t incremented by exactly one); the
    updated parameter vector is returned as a new array.  With zero
    gradient and zero moments the parameters are returned unchanged.

    Raises
    ------
    ValueError
        If ``params``, ``grads``, and the state vectors disagree in length,
        or ``lr`` is not positive.
    """
    if not (params.shape == grads.shape == state.m.shape == state.v.shape):
        raise ValueError(
            f"adam_step length mismatch: params {params.shape}, grads "
            f"{grads.shape}, m {state.m.shape}, v {state.v.shape}"
        )
    if lr <= 0.0:
        raise ValueError(f"learning rate must be positive, got {lr}")

    state.t += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grads
    state.v = beta2 * state.v + (1.0 - beta2) * grads * grads
    m_hat = state.m / (1.0 - beta1 ** state.t)
    v_hat = state.v / (1.0 - beta2 ** state.t)
    return params - lr * m_hat / (np.sqrt(v_hat) + eps)


def finite_diff_grad(
    f: Callable[[np.ndarray], float],
    params: np.ndarray,
    h: float = 1e-6,
) -> np.ndarray:
    """Central-difference gradient estimate of a scalar loss.

    Evaluates ``(f(p + h e_i) - f(p - h e_i)) / (2 h)`` per coordinate.
    Used as the independent oracle for the analytic backprop gradients.
    """
    if h <= 0.0:
        raise ValueError(f"step size must be positive, got {h}")
    grad = np.empty_like(params, dtype=np.float64)
    work = params.astype(np.float64, copy=True)
    for i in range(params.size):
        orig = work[i]
        work[i] = orig + h
        f_plus = f(work)
        work[i] = orig - h
        f_minus = f(work)
        work[i] = orig
        grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad
