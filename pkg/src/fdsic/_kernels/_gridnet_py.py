"""NumPy batch kernels for grid-network inference and training.

Fallback for the compiled extension (see ``fdsic._kernels``).  Both
backends consume the same packed representation:

* ``fan_ptr``    int32, shape (N+1,): CSR-style offsets into ``fan_delays``
* ``fan_delays`` int32, shape (n_conn,): tap delay of each hidden connection
* ``params``     float64, shape (2*(n_conn + 2N + 1),): re/im pairs ordered
  as hidden weights (neuron-major, delays ascending), hidden biases,
  output weights, output bias
* ``X``          complex128, shape (B, M) with ``X[i, d] = x(n_i - d)``

The fallback vectorizes over the batch through a dense masked weight
matrix, so its floating-point summation order differs from the compiled
per-sample loop; results agree to roundoff, not bit-for-bit.
"""

from __future__ import annotations

import numpy as np


def _unpack(fan_ptr, fan_delays, params, m_taps):
    n = fan_ptr.shape[0] - 1
    n_conn = int(fan_ptr[-1])
    cview = params.view(np.complex128)
    hw = cview[:n_conn]
    hb = cview[n_conn:n_conn + n]
    ow = cview[n_conn + n:n_conn + 2 * n]
    ob = cview[n_conn + 2 * n]
    w_dense = np.zeros((n, m_taps), dtype=np.complex128)
    for j in range(n):
        lo, hi = fan_ptr[j], fan_ptr[j + 1]
        w_dense[j, fan_delays[lo:hi]] = hw[lo:hi]
    return n, n_conn, w_dense, hb, ow, ob


def forward_batch(fan_ptr, fan_delays, params, x_win):
    """Network output for every row of the window matrix."""
    n, _, w_dense, hb, ow, ob = _unpack(fan_ptr, fan_delays, params, x_win.shape[1])
    s = x_win @ w_dense.T + hb
    h = np.maximum(s.real, 0.0) + 1j * np.maximum(s.imag, 0.0)
    return h @ ow + ob


def forward_backward_batch(fan_ptr, fan_delays, params, x_win, targets):
    """Fused forward pass and gradient of sum_i 0.5*|out_i - target_i|^2.

    Returns ``(grad, loss_sum, out)`` where ``grad`` is packed like
    ``params`` and summed (not averaged) over the batch.
    """
    n, n_conn, w_dense, hb, ow, ob = _unpack(
        fan_ptr, fan_delays, params, x_win.shape[1]
    )
    s = x_win @ w_dense.T + hb
    h = np.maximum(s.real, 0.0) + 1j * np.maximum(s.imag, 0.0)
    out = h @ ow + ob
    e = out - targets
    loss = 0.5 * float(np.sum(e.real * e.real + e.imag * e.imag))

    # Packed complex gradient g = dL/d(re) + 1j*dL/d(im); for any node
    # that enters the loss through a complex-linear form c*w this is
    # e_downstream * conj(c).
    g_ob = np.sum(e)
    g_ow = h.conj().T @ e
    dh = e[:, None] * ow.conj()[None, :]
    ds = np.where(s.real > 0.0, dh.real, 0.0) + 1j * np.where(
        s.imag > 0.0, dh.imag, 0.0
    )
    g_hb = np.sum(ds, axis=0)
    g_w_dense = ds.T @ x_win.conj()

    grad = np.empty_like(params)
    gc = grad.view(np.complex128)
    for j in range(n):
        lo, hi = fan_ptr[j], fan_ptr[j + 1]
        gc[lo:hi] = g_w_dense[j, fan_delays[lo:hi]]
    gc[n_conn:n_conn + n] = g_hb
    gc[n_conn + n:n_conn + 2 * n] = g_ow
    gc[n_conn + 2 * n] = g_ob
    return grad, loss, out
