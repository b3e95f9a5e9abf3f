"""Canceler construction, fitting, and training.

A digital canceler here is a stack of up to two stages: an M-tap linear
FIR stage fit by least squares, and a nonlinear stage that is either an
odd-order memory polynomial (also least squares, its basis subsumes the
linear taps, so polynomial stacks carry no separate linear stage) or a
single-hidden-layer complex-valued network over a sparse tap grid
trained by split-complex backprop and Adam on the post-linear residual.

Grid topologies
---------------
All networks share one output neuron (linear, complex) and differ only
in which tap delays feed each hidden neuron:

* ``ffnn``: every hidden neuron sees all M delays (dense baseline).
* ``lwgs``: neuron j < N sees the j most recent delays {0..j-1}; the
  last neuron sees the whole buffer.  The newest sample feeds every
  neuron, the oldest exactly one.
* ``mwgs``: neuron 1 sees the whole buffer; neuron k >= 2 sees W
  consecutive delays starting at min(k-1, M-W), i.e. stride-1 windows
  clamped so no window runs past the buffer.

Parameter packing
-----------------
The flat real view used by training and gradient checks orders
parameters as: hidden weights (neuron-major, delays ascending), hidden
biases, output weights, output bias; every complex value contributes
(re, im) consecutively.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .cxnum import AdamState, adam_step, crelu, crelu_grad
from .errors import (
    ConfigError,
    DivergenceError,
    ModelFormatError,
    SingularMatrixError,
)
from .txchain import Dataset

__all__ = [
    "GridLayout",
    "GridParams",
    "PolyCanceler",
    "CancelerSpec",
    "CancelerStack",
    "Normalization",
    "TrainHyper",
    "TrainHistory",
    "build_lwgs_layout",
    "build_mwgs_layout",
    "build_ffnn_layout",
    "build_layout",
    "glorot_init",
    "params_to_view",
    "view_to_params",
    "nn_forward",
    "nn_forward_batch",
    "nn_backward",
    "train_nn",
    "tap_window_matrix",
    "fit_linear_ls",
    "apply_linear",
    "poly_basis",
    "poly_basis_matrix",
    "fit_poly_ls",
    "poly_predict",
    "train_stack",
    "predict_total",
    "save_stack",
    "load_stack",
]


# ---------------------------------------------------------------------------
# layouts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridLayout:
    """Sparse connectivity of a single-hidden-layer grid network.

    ``fanin[j]`` lists the tap delays feeding hidden neuron j+1 in
    ascending order; the output neuron always takes all N hidden values.
    """

    kind: str
    N: int
    M: int
    fanin: tuple[tuple[int, ...], ...]
    W: int | None = None

    def __post_init__(self):
        if self.kind not in ("lwgs", "mwgs", "ffnn"):
            raise ConfigError(f"unknown layout kind {self.kind!r}")
        if len(self.fanin) != self.N:
            raise ConfigError(f"fanin has {len(self.fanin)} rows, expected N={self.N}")
        for j, delays in enumerate(self.fanin):
            if len(set(delays)) != len(delays):
                raise ConfigError(f"neuron {j + 1} has duplicate delays {delays}")
            if any(d < 0 or d >= self.M for d in delays):
                raise ConfigError(
                    f"neuron {j + 1} has delays outside [0, {self.M - 1}]: {delays}"
                )
            if not delays:
                raise ConfigError(f"neuron {j + 1} has empty fan-in")
            if list(delays) != sorted(delays):
                raise ConfigError(
                    f"neuron {j + 1} delays must be ascending (parameter "
                    f"packing depends on it), got {delays}"
                )

    @property
    def n_connections(self) -> int:
        """Hidden-layer connection count (output fan-in N not included)."""
        return sum(len(f) for f in self.fanin)

    @property
    def n_view_reals(self) -> int:
        """Length of the flat real parameter view."""
        return 2 * (self.n_connections + 2 * self.N + 1)

    def packed(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR-style (fan_ptr, fan_delays) int32 arrays for the kernels."""
        fan_ptr = np.zeros(self.N + 1, dtype=np.int32)
        for j, delays in enumerate(self.fanin):
            fan_ptr[j + 1] = fan_ptr[j] + len(delays)
        fan_delays = np.fromiter(
            (d for delays in self.fanin for d in delays),
            dtype=np.int32,
            count=self.n_connections,
        )
        return fan_ptr, fan_delays


def build_lwgs_layout(N: int, M: int) -> GridLayout:
    """Ladder grid: staircase fan-ins with one full-buffer neuron."""
    if not 1 <= N <= M:
        raise ConfigError(f"lwgs requires 1 <= N <= M, got N={N}, M={M}")
    fanin = [tuple(range(j)) for j in range(1, N)]
    fanin.append(tuple(range(M)))
    return GridLayout(kind="lwgs", N=N, M=M, fanin=tuple(fanin))


def build_mwgs_layout(N: int, W: int | None, M: int) -> GridLayout:
    """Moving-window grid: one full-buffer neuron plus W-wide windows.

    W is irrelevant (and may be None) when N = 1: the only neuron is the
    full-buffer one and no windows exist.
    """
    if N < 1:
        raise ConfigError(f"mwgs requires N >= 1, got {N}")
    if N >= 2 and (W is None or not 1 <= W <= M - 1):
        raise ConfigError(f"mwgs requires 1 <= W <= M-1, got W={W}, M={M}")
    fanin = [tuple(range(M))]
    for k in range(2, N + 1):
        start = min(k - 1, M - W)
        fanin.append(tuple(range(start, start + W)))
    return GridLayout(kind="mwgs", N=N, M=M, fanin=tuple(fanin), W=W)


def build_ffnn_layout(N: int, M: int) -> GridLayout:
    """Dense single-hidden-layer baseline: all delays to every neuron."""
    if N < 1:
        raise ConfigError(f"ffnn requires N >= 1, got {N}")
    if M < 1:
        raise ConfigError(f"ffnn requires M >= 1, got {M}")
    return GridLayout(kind="ffnn", N=N, M=M, fanin=tuple(tuple(range(M)) for _ in range(N)))


def build_layout(kind: str, N: int, M: int, W: int | None = None) -> GridLayout:
    if kind == "lwgs":
        return build_lwgs_layout(N, M)
    if kind == "mwgs":
        return build_mwgs_layout(N, W, M)
    if kind == "ffnn":
        return build_ffnn_layout(N, M)
    raise ConfigError(f"unknown layout kind {kind!r}")


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

@dataclass
class GridParams:
    """Complex weights and biases matching one :class:`GridLayout`."""

    hidden_w: tuple[np.ndarray, ...]
    hidden_b: np.ndarray
    out_w: np.ndarray
    out_b: complex


def glorot_init(layout: GridLayout, rng: np.random.Generator) -> GridParams:
    """Complex Glorot-style uniform initialization.

    Re and im of each weight are drawn uniformly in
    +-sqrt(3 / (fan_in + fan_out)) with fan_out = 1 everywhere (each
    hidden neuron feeds only the output); biases start at zero.  Draw
    order is fixed (hidden neurons in order, then output weights) so a
    given generator state yields one exact parameter set.
    """
    hidden_w = []
    for delays in layout.fanin:
        lim = np.sqrt(3.0 / (len(delays) + 1))
        pair = rng.uniform(-lim, lim, size=(len(delays), 2))
        hidden_w.append(pair[:, 0] + 1j * pair[:, 1])
    lim = np.sqrt(3.0 / (layout.N + 1))
    pair = rng.uniform(-lim, lim, size=(layout.N, 2))
    return GridParams(
        hidden_w=tuple(hidden_w),
        hidden_b=np.zeros(layout.N, dtype=np.complex128),
        out_w=pair[:, 0] + 1j * pair[:, 1],
        out_b=0j,
    )


def params_to_view(layout: GridLayout, params: GridParams) -> np.ndarray:
    """Flatten to the packed float64 (re, im) view documented above."""
    chunks = [np.asarray(w, dtype=np.complex128) for w in params.hidden_w]
    chunks.append(np.asarray(params.hidden_b, dtype=np.complex128))
    chunks.append(np.asarray(params.out_w, dtype=np.complex128))
    chunks.append(np.array([params.out_b], dtype=np.complex128))
    flat = np.concatenate(chunks)
    if flat.size != layout.n_connections + 2 * layout.N + 1:
        raise ConfigError("parameter shapes do not match the layout")
    return flat.view(np.float64).copy()


def view_to_params(layout: GridLayout, view: np.ndarray) -> GridParams:
    """Inverse of :func:`params_to_view`."""
    if view.size != layout.n_view_reals:
        raise ConfigError(
            f"view has {view.size} reals, layout needs {layout.n_view_reals}"
        )
    flat = np.ascontiguousarray(view, dtype=np.float64).view(np.complex128)
    hidden_w = []
    pos = 0
    for delays in layout.fanin:
        hidden_w.append(flat[pos:pos + len(delays)].copy())
        pos += len(delays)
    hidden_b = flat[pos:pos + layout.N].copy()
    pos += layout.N
    out_w = flat[pos:pos + layout.N].copy()
    pos += layout.N
    return GridParams(
        hidden_w=tuple(hidden_w),
        hidden_b=hidden_b,
        out_w=out_w,
        out_b=complex(flat[pos]),
    )


# ---------------------------------------------------------------------------
# forward / backward
# ---------------------------------------------------------------------------

def nn_forward(layout: GridLayout, params: GridParams, x_window) -> complex:
    """Reference per-sample forward pass.

    ``x_window[d]`` holds x(n-d).  hidden_j = crelu(sum_k w_jk x[d_k] + b_j),
    output = sum_j out_w_j hidden_j + out_b.  Training and bulk prediction
    go through the batch kernels instead; this stays as the readable
    definition both are tested against.
    """
    x_window = np.asarray(x_window, dtype=np.complex128)
    out = complex(params.out_b)
    for j in range(layout.N):
        s = complex(params.hidden_b[j])
        for k, d in enumerate(layout.fanin[j]):
            s += complex(params.hidden_w[j][k]) * complex(x_window[d])
        out += complex(params.out_w[j]) * crelu(s)
    return out


def nn_forward_batch(
    layout: GridLayout, view: np.ndarray, x_win: np.ndarray
) -> np.ndarray:
    """Batch forward over a window matrix via the active kernel backend."""
    fan_ptr, fan_delays = layout.packed()
    return _kernels.forward_batch(
        fan_ptr,
        fan_delays,
        np.ascontiguousarray(view, dtype=np.float64),
        np.ascontiguousarray(x_win, dtype=np.complex128),
    )


def nn_backward(
    layout: GridLayout,
    params: GridParams,
    x_window,
    residual_error: complex,
) -> np.ndarray:
    """Gradient of 0.5*|output - target|^2 in packed-view coordinates.

    ``residual_error`` is output - target.  Each complex slot of the
    returned view holds (dL/d re, dL/d im); for a node entering the loss
    through a complex-linear form c*w this equals e_downstream*conj(c),
    gated through the crelu masks for hidden-layer quantities.
    """
    x_window = np.asarray(x_window, dtype=np.complex128)
    e = complex(residual_error)
    g_hw = []
    g_hb = np.empty(layout.N, dtype=np.complex128)
    g_ow = np.empty(layout.N, dtype=np.complex128)
    for j in range(layout.N):
        s = complex(params.hidden_b[j])
        for k, d in enumerate(layout.fanin[j]):
            s += complex(params.hidden_w[j][k]) * complex(x_window[d])
        h = crelu(s)
        g_ow[j] = e * h.conjugate()
        dh = e * complex(params.out_w[j]).conjugate()
        mask_re, mask_im = crelu_grad(s)
        ds = complex(dh.real * mask_re, dh.imag * mask_im)
        g_hb[j] = ds
        g_hw.append(ds * np.conj(x_window[list(layout.fanin[j])]))
    chunks = g_hw + [g_hb, g_ow, np.array([e], dtype=np.complex128)]
    return np.concatenate(chunks).view(np.float64).copy()


# ---------------------------------------------------------------------------
# windows and linear / polynomial least squares
# ---------------------------------------------------------------------------

def tap_window_matrix(x: np.ndarray, M: int, full: bool = False) -> np.ndarray:
    """Tap-delay window matrix with ``X[i, d] = x(n_i - d)``.

    With ``full=False`` rows cover n = M-1 .. len(x)-1 (complete windows
    only, the convention for fitting); with ``full=True`` rows cover
    every n with zero pre-history (the convention for prediction,
    matching causal FIR convolution).
    """
    x = np.asarray(x, dtype=np.complex128)
    if full:
        xp = np.concatenate([np.zeros(M - 1, dtype=np.complex128), x])
        idx = np.arange(M - 1, M - 1 + x.size)[:, None] - np.arange(M)[None, :]
        return xp[idx]
    if x.size < M:
        raise ConfigError(f"sequence of {x.size} samples too short for M={M}")
    idx = np.arange(M - 1, x.size)[:, None] - np.arange(M)[None, :]
    return x[idx]


def fit_linear_ls(d: Dataset, M: int) -> np.ndarray:
    """Least-squares M-tap FIR estimate of y from x (QR/SVD, no ridge)."""
    x_win = tap_window_matrix(d.x, M)
    t = d.y[M - 1:]
    if x_win.shape[0] < M:
        raise ConfigError(
            f"need at least M={M} training rows, got {x_win.shape[0]}"
        )
    h, _, rank, sv = np.linalg.lstsq(x_win, t, rcond=None)
    if rank < M:
        cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
        raise SingularMatrixError(
            f"regressor matrix is rank deficient (rank {rank} < {M}, "
            f"condition number {cond:.3e})",
            cond=cond,
        )
    return h


def apply_linear(h_lin: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Causal FIR prediction sum_m h[m] x(n-m), zero pre-history."""
    x = np.asarray(x, dtype=np.complex128)
    return np.convolve(x, np.asarray(h_lin, dtype=np.complex128))[: x.size]


def _odd_orders(P: int) -> list[int]:
    if P < 1 or P % 2 == 0:
        raise ConfigError(f"polynomial order must be odd and >= 1, got {P}")
    return list(range(1, P + 1, 2))


def poly_term_count(P: int, M: int) -> int:
    """Number of complex basis terms: M * sum over odd p <= P of (p+1)."""
    return M * sum(p + 1 for p in _odd_orders(P))


def poly_basis(x: np.ndarray, n: int, P: int, M: int) -> np.ndarray:
    """Feature vector of all x(n-m)^q conj(x(n-m))^(p-q) at one sample.

    Ordering is m outermost (0..M-1), then odd p ascending, then q
    descending from p to 0, so the first two entries for any m are the
    linear pair (x, conj(x)).  Negative time indices contribute zeros.
    """
    x = np.asarray(x, dtype=np.complex128)
    out = np.empty(poly_term_count(P, M), dtype=np.complex128)
    i = 0
    for m in range(M):
        v = x[n - m] if n - m >= 0 else 0j
        vc = np.conj(v)
        for p in _odd_orders(P):
            for q in range(p, -1, -1):
                out[i] = v**q * vc ** (p - q)
                i += 1
    return out


def poly_basis_matrix(x: np.ndarray, P: int, M: int, full: bool = False) -> np.ndarray:
    """Stacked :func:`poly_basis` rows; see there for the column order.

    ``full=False`` keeps complete-window rows n = M-1.. only.
    """
    x = np.asarray(x, dtype=np.complex128)
    cols = []
    for m in range(M):
        xm = np.concatenate([np.zeros(m, dtype=np.complex128), x[: x.size - m]])
        xmc = np.conj(xm)
        for p in _odd_orders(P):
            for q in range(p, -1, -1):
                cols.append(xm**q * xmc ** (p - q))
    basis = np.stack(cols, axis=1)
    return basis if full else basis[M - 1:]


@dataclass
class PolyCanceler:
    """Odd-order memory polynomial in the basis order of :func:`poly_basis`."""

    P: int
    M: int
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        want = poly_term_count(self.P, self.M)
        if self.coeffs.shape != (want,):
            raise ConfigError(
                f"coefficient vector has shape {self.coeffs.shape}, expected ({want},)"
            )


def fit_poly_ls(
    d: Dataset, P: int, M: int, ridge: float | None = None
) -> PolyCanceler:
    """Least-squares polynomial fit of y on the full odd-order basis.

    ``ridge=None`` applies the default conditioning ridge
    1e-8 * trace(B^H B)/n_terms; ``ridge=0`` solves the plain LS problem.
    """
    n_terms = poly_term_count(P, M)
    basis = poly_basis_matrix(d.x, P, M)
    t = d.y[M - 1:]
    if basis.shape[0] < n_terms:
        raise ConfigError(
            f"need at least {n_terms} training rows for P={P}, M={M}, "
            f"got {basis.shape[0]}"
        )
    if ridge is not None and ridge < 0:
        raise ConfigError(f"ridge must be >= 0, got {ridge}")
    if ridge == 0:
        coeffs, _, rank, sv = np.linalg.lstsq(basis, t, rcond=None)
        if rank < n_terms:
            cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
            raise SingularMatrixError(
                f"polynomial basis is rank deficient with ridge=0 (rank {rank} "
                f"< {n_terms}, condition number {cond:.3e}); pass a small ridge",
                cond=cond,
            )
        return PolyCanceler(P=P, M=M, coeffs=coeffs)
    gram = basis.conj().T @ basis
    lam = ridge if ridge is not None else 1e-8 * float(np.trace(gram).real) / n_terms
    gram[np.diag_indices_from(gram)] += lam
    try:
        coeffs = np.linalg.solve(gram, basis.conj().T @ t)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(
            f"normal equations singular even with ridge {lam:.3e}: {exc}"
        ) from exc
    return PolyCanceler(P=P, M=M, coeffs=coeffs)


def poly_predict(pc: PolyCanceler, x: np.ndarray) -> np.ndarray:
    """Full-length polynomial prediction with zero pre-history."""
    x = np.asarray(x, dtype=np.complex128)
    out = np.zeros_like(x)
    i = 0
    for m in range(pc.M):
        xm = np.concatenate([np.zeros(m, dtype=np.complex128), x[: x.size - m]])
        xmc = np.conj(xm)
        for p in _odd_orders(pc.P):
            for q in range(p, -1, -1):
                c = pc.coeffs[i]
                if c != 0:
                    out += c * xm**q * xmc ** (p - q)
                i += 1
    return out


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainHyper:
    """Mini-batch training hyperparameters."""

    lr: float = 0.0045
    batch: int = 62
    epochs: int = 50
    seed: int = 1

    def validate(self):
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.batch < 1:
            raise ConfigError(f"batch must be >= 1, got {self.batch}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")


@dataclass
class TrainHistory:
    """Per-epoch mean |error|^2 on the training (and optional val) rows."""

    train_mse: list[float]
    val_mse: list[float] | None = None


def _mse_c(pred: np.ndarray, target: np.ndarray) -> float:
    e = pred - target
    return float(np.mean(e.real * e.real + e.imag * e.imag))


def _train_on_windows(
    x_win: np.ndarray,
    targets: np.ndarray,
    layout: GridLayout,
    hyper: TrainHyper,
    x_val: np.ndarray | None = None,
    t_val: np.ndarray | None = None,
) -> tuple[GridParams, TrainHistory]:
    """Mini-batch Adam over pre-built window rows (shared training core).

    Deterministic for a given seed: the initialization and the per-epoch
    shuffles come from separate child streams of the seed, and batches
    run in shuffle order with the final partial batch kept.
    """
    hyper.validate()
    fan_ptr, fan_delays = layout.packed()
    init_ss, shuffle_ss = np.random.SeedSequence(hyper.seed).spawn(2)
    params = glorot_init(layout, np.random.Generator(np.random.PCG64(init_ss)))
    view = params_to_view(layout, params)
    state = AdamState.zeros(view.size)
    shuffle_rng = np.random.Generator(np.random.PCG64(shuffle_ss))

    n_rows = x_win.shape[0]
    history = TrainHistory(train_mse=[], val_mse=None if x_val is None else [])
    for epoch in range(hyper.epochs):
        perm = shuffle_rng.permutation(n_rows)
        for b, lo in enumerate(range(0, n_rows, hyper.batch)):
            rows = perm[lo:lo + hyper.batch]
            grad, loss, _ = _kernels.forward_backward_batch(
                fan_ptr, fan_delays, view, x_win[rows], targets[rows]
            )
            if not np.isfinite(loss):
                raise DivergenceError(epoch=epoch, batch=b)
            view = adam_step(view, grad / rows.size, state, hyper.lr)
        out = _kernels.forward_batch(fan_ptr, fan_delays, view, x_win)
        history.train_mse.append(_mse_c(out, targets))
        if x_val is not None:
            out_v = _kernels.forward_batch(fan_ptr, fan_delays, view, x_val)
            history.val_mse.append(_mse_c(out_v, t_val))
    return view_to_params(layout, view), history


def train_nn(
    d: Dataset,
    layout: GridLayout,
    hyper: TrainHyper,
    val: Dataset | None = None,
) -> tuple[GridParams, TrainHistory]:
    """Train a grid network on a dataset whose targets are the residuals.

    The caller is expected to have removed the linear stage (and applied
    any normalization) already; :func:`train_stack` does both.  Rows are
    the complete windows n = layout.M-1 .. end.
    """
    x_win = tap_window_matrix(d.x, layout.M)
    targets = np.ascontiguousarray(d.y[layout.M - 1:])
    x_val = t_val = None
    if val is not None:
        x_val = tap_window_matrix(val.x, layout.M)
        t_val = np.ascontiguousarray(val.y[layout.M - 1:])
    return _train_on_windows(x_win, targets, layout, hyper, x_val, t_val)


# ---------------------------------------------------------------------------
# stacks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CancelerSpec:
    """What canceler to build; which fields matter depends on ``kind``."""

    kind: str  # linear | poly | ffnn | lwgs | mwgs
    M: int = 13
    N: int | None = None
    W: int | None = None
    P: int | None = None
    ridge: float | None = None

    def __post_init__(self):
        if self.kind not in ("linear", "poly", "ffnn", "lwgs", "mwgs"):
            raise ConfigError(f"unknown canceler kind {self.kind!r}")
        if self.M < 1:
            raise ConfigError(f"M must be >= 1, got {self.M}")
        if self.kind == "poly":
            if self.P is None:
                raise ConfigError("poly canceler needs P")
            _odd_orders(self.P)
        elif self.kind in ("ffnn", "lwgs", "mwgs"):
            if self.N is None:
                raise ConfigError(f"{self.kind} canceler needs N")
            if self.kind == "mwgs" and self.W is None:
                raise ConfigError("mwgs canceler needs W")

    def label(self) -> str:
        if self.kind == "linear":
            return f"Linear (M={self.M})"
        if self.kind == "poly":
            return f"Polynomial (P={self.P})"
        if self.kind == "ffnn":
            return f"CV-FFNN ({self.N})"
        if self.kind == "lwgs":
            return f"LWGS ({self.N})"
        return f"MWGS ({self.N},{self.W})"

    def build_layout(self) -> GridLayout | None:
        if self.kind in ("ffnn", "lwgs", "mwgs"):
            return build_layout(self.kind, self.N, self.M, self.W)
        return None


@dataclass
class Normalization:
    """Input/target scaling applied around the network stage.

    Network inputs are x / x_scale; network outputs are multiplied by
    r_scale.  Scales are the training-split RMS values (1.0 when a split
    is identically zero, keeping the record invertible).
    """

    x_scale: float
    r_scale: float

    def __post_init__(self):
        if self.x_scale <= 0 or self.r_scale <= 0:
            raise ConfigError("normalization scales must be positive")


@dataclass
class CancelerStack:
    """Linear stage plus optional nonlinear stage, ready to predict."""

    kind: str
    M: int
    h_lin: np.ndarray | None = None
    poly: PolyCanceler | None = None
    layout: GridLayout | None = None
    params: GridParams | None = None
    norm: Normalization | None = None


def _rms(a: np.ndarray) -> float:
    power = float(np.mean(np.abs(a) ** 2)) if a.size else 0.0
    return float(np.sqrt(power)) if power > 0 else 1.0


def train_stack(
    train: Dataset,
    spec: CancelerSpec,
    hyper: TrainHyper | None = None,
    val: Dataset | None = None,
) -> tuple[CancelerStack, TrainHistory | None]:
    """Fit a complete canceler stack on the training split.

    Network kinds fit the linear stage first (on the training split
    only), train the network on the RMS-normalized post-linear residual,
    and record the scales; the polynomial kind is a one-shot LS fit
    whose basis already contains the linear taps, so it carries no
    separate linear stage or normalization.
    """
    M = spec.M
    if spec.kind == "linear":
        return CancelerStack(kind="linear", M=M, h_lin=fit_linear_ls(train, M)), None
    if spec.kind == "poly":
        pc = fit_poly_ls(train, spec.P, M, ridge=spec.ridge)
        return CancelerStack(kind="poly", M=M, poly=pc), None

    layout = spec.build_layout()
    hyper = hyper or TrainHyper()
    h_lin = fit_linear_ls(train, M)
    r_train = train.y - apply_linear(h_lin, train.x)
    norm = Normalization(x_scale=_rms(train.x), r_scale=_rms(r_train[M - 1:]))
    nn_train = Dataset(
        x=train.x / norm.x_scale,
        y=r_train / norm.r_scale,
        memory=M,
        digest=train.digest,
        source=train.source,
    )
    nn_val = None
    if val is not None:
        r_val = val.y - apply_linear(h_lin, val.x)
        nn_val = Dataset(
            x=val.x / norm.x_scale,
            y=r_val / norm.r_scale,
            memory=M,
            digest=val.digest,
            source=val.source,
        )
    params, history = train_nn(nn_train, layout, hyper, val=nn_val)
    stack = CancelerStack(
        kind=spec.kind,
        M=M,
        h_lin=h_lin,
        layout=layout,
        params=params,
        norm=norm,
    )
    return stack, history


def predict_total(stack: CancelerStack, x: np.ndarray) -> np.ndarray:
    """Full-length SI estimate: linear stage plus nonlinear stage."""
    x = np.asarray(x, dtype=np.complex128)
    y_hat = np.zeros_like(x)
    if stack.h_lin is not None:
        y_hat += apply_linear(stack.h_lin, x)
    if stack.poly is not None:
        y_hat += poly_predict(stack.poly, x)
    elif stack.layout is not None:
        x_win = tap_window_matrix(x / stack.norm.x_scale, stack.layout.M, full=True)
        view = params_to_view(stack.layout, stack.params)
        y_hat += stack.norm.r_scale * nn_forward_batch(stack.layout, view, x_win)
    return y_hat


# ---------------------------------------------------------------------------
# model persistence
# ---------------------------------------------------------------------------

MODEL_FORMAT = "fdsic-model"
MODEL_VERSION = 1


def _cx_out(a) -> list:
    return [[float(v.real), float(v.imag)] for v in np.asarray(a, dtype=np.complex128)]


def _cx_in(pairs) -> np.ndarray:
    return np.array([complex(re, im) for re, im in pairs], dtype=np.complex128)


def save_stack(stack: CancelerStack, path) -> None:
    """Persist a stack as JSON; floats round-trip exactly (repr digits)."""
    doc: dict = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kind": stack.kind,
        "M": stack.M,
        "h_lin": None if stack.h_lin is None else _cx_out(stack.h_lin),
        "norm": None
        if stack.norm is None
        else {"x_scale": stack.norm.x_scale, "r_scale": stack.norm.r_scale},
        "poly": None,
        "layout": None,
        "grid_params": None,
    }
    if stack.poly is not None:
        doc["poly"] = {
            "P": stack.poly.P,
            "M": stack.poly.M,
            "coeffs": _cx_out(stack.poly.coeffs),
        }
    if stack.layout is not None:
        doc["layout"] = {
            "kind": stack.layout.kind,
            "N": stack.layout.N,
            "M": stack.layout.M,
            "W": stack.layout.W,
        }
        doc["grid_params"] = {
            "hidden_w": [_cx_out(w) for w in stack.params.hidden_w],
            "hidden_b": _cx_out(stack.params.hidden_b),
            "out_w": _cx_out(stack.params.out_w),
            "out_b": [float(stack.params.out_b.real), float(stack.params.out_b.imag)],
        }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_stack(path) -> CancelerStack:
    """Load a stack saved by :func:`save_stack`."""
    try:
        doc = json.loads(Path(path).read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"{path}: not a model file: {exc}") from exc
    try:
        if doc["format"] != MODEL_FORMAT:
            raise ModelFormatError(f"{path}: unknown format {doc['format']!r}")
        if doc["version"] != MODEL_VERSION:
            raise ModelFormatError(f"{path}: unsupported version {doc['version']}")
        stack = CancelerStack(kind=doc["kind"], M=int(doc["M"]))
        if doc["h_lin"] is not None:
            stack.h_lin = _cx_in(doc["h_lin"])
        if doc["norm"] is not None:
            stack.norm = Normalization(
                x_scale=float(doc["norm"]["x_scale"]),
                r_scale=float(doc["norm"]["r_scale"]),
            )
        if doc["poly"] is not None:
            stack.poly = PolyCanceler(
                P=int(doc["poly"]["P"]),
                M=int(doc["poly"]["M"]),
                coeffs=_cx_in(doc["poly"]["coeffs"]),
            )
        if doc["layout"] is not None:
            lay = doc["layout"]
            stack.layout = build_layout(
                lay["kind"], int(lay["N"]), int(lay["M"]),
                None if lay["W"] is None else int(lay["W"]),
            )
            gp = doc["grid_params"]
            stack.params = GridParams(
                hidden_w=tuple(_cx_in(w) for w in gp["hidden_w"]),
                hidden_b=_cx_in(gp["hidden_b"]),
                out_w=_cx_in(gp["out_w"]),
                out_b=complex(gp["out_b"][0], gp["out_b"][1]),
            )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"{path}: malformed model document: {exc}") from exc
    return stack
