"""Shared test oracles, independent of the implementations they check."""

from math import comb

import numpy as np

from fdsic.txchain import SIChannelModel, TxConfig


def expand_chain_model(cfg: TxConfig) -> SIChannelModel:
    """Algebraically expand IQ mixer -> Hammerstein PA -> FIR channel.

    Substituting x_iq = mu*x + nu*conj(x) into each PA branch
    x_iq^a * conj(x_iq)^b (a = (p+1)/2, b = (p-1)/2) and expanding by
    the binomial theorem yields one composite coefficient per
    (delay, order, conjugation split); the channel convolution then
    shifts and sums those over its taps.  Only practical for small
    orders and memories, which is all the tests need.
    """
    g = cfg.psi * np.exp(1j * cfg.theta)
    mu = 0.5 * (1.0 + g)
    nu = 0.5 * (1.0 - g)
    n_odd = (cfg.pa_order + 1) // 2
    pa_m = cfg.pa_memory

    a_stage = np.zeros((pa_m + 1, n_odd, cfg.pa_order + 1), dtype=np.complex128)
    for m in range(pa_m + 1):
        for ip in range(n_odd):
            p = 2 * ip + 1
            a, b = (p + 1) // 2, (p - 1) // 2
            for i in range(a + 1):
                for l in range(b + 1):
                    coef = (
                        comb(a, i)
                        * comb(b, l)
                        * mu**i
                        * nu ** (a - i)
                        * np.conj(nu) ** l
                        * np.conj(mu) ** (b - l)
                    )
                    a_stage[m, ip, i + l] += cfg.pa_coeffs[m, ip] * coef

    memory = pa_m + cfg.si_channel.size
    h = np.zeros((memory, n_odd, cfg.pa_order + 1), dtype=np.complex128)
    for k, c in enumerate(cfg.si_channel):
        h[k:k + pa_m + 1] += c * a_stage
    return SIChannelModel(order=cfg.pa_order, memory=memory, h=h)


def forward_dense(layout, params, x_window) -> complex:
    """Grid-network forward pass via dense masked matrices.

    Deliberately structured differently from both the package reference
    implementation (per-neuron loops) and the kernels (packed views) so
    it can serve as the dual-implementation oracle.
    """
    w = np.zeros((layout.N, layout.M), dtype=np.complex128)
    for j, delays in enumerate(layout.fanin):
        w[j, list(delays)] = params.hidden_w[j]
    s = w @ np.asarray(x_window, dtype=np.complex128) + params.hidden_b
    h = np.maximum(s.real, 0.0) + 1j * np.maximum(s.imag, 0.0)
    return complex(np.dot(params.out_w, h) + params.out_b)


def random_grid_point(layout, rng, scale=1.0):
    """Random finite parameters and window for gradient/forward checks."""
    from fdsic.cancelers import GridParams

    def cx(shape):
        return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))

    params = GridParams(
        hidden_w=tuple(cx(len(f)) for f in layout.fanin),
        hidden_b=cx(layout.N),
        out_w=cx(layout.N),
        out_b=complex(cx(())),
    )
    x_window = cx(layout.M)
    return params, x_window
