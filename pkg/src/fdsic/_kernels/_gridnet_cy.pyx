"""Compiled batch kernels for grid-network inference and training.

Same contract as ``fdsic._kernels._gridnet_py`` (the packed layout and
parameter representation are documented there).  The hot loops run per
sample over the sparse fan-in lists, which is what makes full training
runs cheap.
"""

import numpy as np


def forward_batch(int[::1] fan_ptr, int[::1] fan_delays, double[::1] params,
                  double complex[:, ::1] x_win):
    """Network output for every row of the window matrix."""
    cdef Py_ssize_t n_rows = x_win.shape[0]
    cdef Py_ssize_t n = fan_ptr.shape[0] - 1
    cdef Py_ssize_t n_conn = fan_ptr[n]
    cdef Py_ssize_t hb0 = 2 * n_conn
    cdef Py_ssize_t ow0 = 2 * (n_conn + n)
    cdef Py_ssize_t ob0 = 2 * (n_conn + 2 * n)

    out_arr = np.empty(n_rows, dtype=np.complex128)
    cdef double complex[::1] out = out_arr

    cdef Py_ssize_t i, j, c, d
    cdef double sr, si, hr, hi, o_re, o_im, wr, wi, xr, xi

    for i in range(n_rows):
        o_re = params[ob0]
        o_im = params[ob0 + 1]
        for j in range(n):
            sr = params[hb0 + 2 * j]
            si = params[hb0 + 2 * j + 1]
            for c in range(fan_ptr[j], fan_ptr[j + 1]):
                d = fan_delays[c]
                xr = x_win[i, d].real
                xi = x_win[i, d].imag
                wr = params[2 * c]
                wi = params[2 * c + 1]
                sr += wr * xr - wi * xi
                si += wr * xi + wi * xr
            hr = sr if sr > 0.0 else 0.0
            hi = si if si > 0.0 else 0.0
            wr = params[ow0 + 2 * j]
            wi = params[ow0 + 2 * j + 1]
            o_re += wr * hr - wi * hi
            o_im += wr * hi + wi * hr
        out[i] = o_re + 1j * o_im
    return out_arr


def forward_backward_batch(int[::1] fan_ptr, int[::1] fan_delays,
                           double[::1] params, double complex[:, ::1] x_win,
                           double complex[::1] targets):
    """Fused forward pass and gradient of sum_i 0.5*|out_i - target_i|^2.

    Returns ``(grad, loss_sum, out)`` with ``grad`` packed like ``params``
    and summed (not averaged) over the batch.
    """
    cdef Py_ssize_t n_rows = x_win.shape[0]
    cdef Py_ssize_t n = fan_ptr.shape[0] - 1
    cdef Py_ssize_t n_conn = fan_ptr[n]
    cdef Py_ssize_t hb0 = 2 * n_conn
    cdef Py_ssize_t ow0 = 2 * (n_conn + n)
    cdef Py_ssize_t ob0 = 2 * (n_conn + 2 * n)

    out_arr = np.empty(n_rows, dtype=np.complex128)
    grad_arr = np.zeros(params.shape[0], dtype=np.float64)
    s_re_arr = np.empty(n, dtype=np.float64)
    s_im_arr = np.empty(n, dtype=np.float64)
    h_re_arr = np.empty(n, dtype=np.float64)
    h_im_arr = np.empty(n, dtype=np.float64)
    cdef double complex[::1] out = out_arr
    cdef double[::1] grad = grad_arr
    cdef double[::1] s_re = s_re_arr
    cdef double[::1] s_im = s_im_arr
    cdef double[::1] h_re = h_re_arr
    cdef double[::1] h_im = h_im_arr

    cdef Py_ssize_t i, j, c, d
    cdef double sr, si, o_re, o_im, wr, wi, xr, xi
    cdef double er, ei, dhr, dhi, dsr, dsi
    cdef double loss = 0.0

    for i in range(n_rows):
        # forward, keeping pre-activations for the activation masks
        o_re = params[ob0]
        o_im = params[ob0 + 1]
        for j in range(n):
            sr = params[hb0 + 2 * j]
            si = params[hb0 + 2 * j + 1]
            for c in range(fan_ptr[j], fan_ptr[j + 1]):
                d = fan_delays[c]
                xr = x_win[i, d].real
                xi = x_win[i, d].imag
                wr = params[2 * c]
                wi = params[2 * c + 1]
                sr += wr * xr - wi * xi
                si += wr * xi + wi * xr
            s_re[j] = sr
            s_im[j] = si
            h_re[j] = sr if sr > 0.0 else 0.0
            h_im[j] = si if si > 0.0 else 0.0
            wr = params[ow0 + 2 * j]
            wi = params[ow0 + 2 * j + 1]
            o_re += wr * h_re[j] - wi * h_im[j]
            o_im += wr * h_im[j] + wi * h_re[j]
        out[i] = o_re + 1j * o_im

        er = o_re - targets[i].real
        ei = o_im - targets[i].imag
        loss += 0.5 * (er * er + ei * ei)

        # backward; packed gradient of a complex-linear form c*w is
        # e_downstream * conj(c)
        grad[ob0] += er
        grad[ob0 + 1] += ei
        for j in range(n):
            wr = params[ow0 + 2 * j]
            wi = params[ow0 + 2 * j + 1]
            grad[ow0 + 2 * j] += er * h_re[j] + ei * h_im[j]
            grad[ow0 + 2 * j + 1] += ei * h_re[j] - er * h_im[j]
            dhr = er * wr + ei * wi
            dhi = ei * wr - er * wi
            dsr = dhr if s_re[j] > 0.0 else 0.0
            dsi = dhi if s_im[j] > 0.0 else 0.0
            if dsr == 0.0 and dsi == 0.0:
                continue
            grad[hb0 + 2 * j] += dsr
            grad[hb0 + 2 * j + 1] += dsi
            for c in range(fan_ptr[j], fan_ptr[j + 1]):
                d = fan_delays[c]
                xr = x_win[i, d].real
                xi = x_win[i, d].imag
                grad[2 * c] += dsr * xr + dsi * xi
                grad[2 * c + 1] += dsi * xr - dsr * xi
    return grad_arr, loss, out_arr
