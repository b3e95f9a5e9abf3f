#!/usr/bin/env python3
"""Compare the compiled and NumPy grid-network kernels.

Times the fused forward/backward pass (the training hot loop) and a
complete 50-epoch training run per backend, and checks that both
backends agree to roundoff.  Run from the repository root:

    python benchmarks/kernel_benchmark.py
"""

import time

import numpy as np

from fdsic import _kernels
from fdsic.cancelers import (
    CancelerSpec,
    TrainHyper,
    build_layout,
    glorot_init,
    params_to_view,
    train_stack,
)
from fdsic.bench import SplitSpec, split_dataset
from fdsic.txchain import TxConfig, synth_dataset

LAYOUTS = [
    ("LWGS (9)", ("lwgs", 9, 13, None)),
    ("LWGS (10)", ("lwgs", 10, 13, None)),
    ("MWGS (12,5)", ("mwgs", 12, 13, 5)),
    ("CV-FFNN (7)", ("ffnn", 7, 13, None)),
]

BATCH = 62
N_ROWS = 18432
REPEATS = 5


def bench_kernels(backend, layout, view, x_win, targets):
    _kernels.use_backend(backend)
    fan_ptr, fan_delays = layout.packed()
    # one warmup pass, then time whole-set sweeps in batch-sized chunks
    _kernels.forward_backward_batch(fan_ptr, fan_delays, view, x_win[:BATCH],
                                    targets[:BATCH])
    best = float("inf")
    grad_sum = None
    for _ in range(REPEATS):
        t0 = time.perf_counter()
        acc = 0.0
        for lo in range(0, N_ROWS, BATCH):
            grad, loss, _ = _kernels.forward_backward_batch(
                fan_ptr, fan_delays, view, x_win[lo:lo + BATCH],
                targets[lo:lo + BATCH],
            )
            acc += loss
        best = min(best, time.perf_counter() - t0)
        grad_sum = grad
    return best, grad_sum


def main():
    backends = _kernels.available_backends()
    print(f"backends: {', '.join(backends)}")
    if "cython" not in backends:
        print("NOTE: compiled extension not built; showing NumPy numbers only")

    rng = np.random.default_rng(0)
    x = rng.standard_normal(N_ROWS + 12) + 1j * rng.standard_normal(N_ROWS + 12)
    from fdsic.cancelers import tap_window_matrix

    x_win = tap_window_matrix(x, 13)
    targets = rng.standard_normal(N_ROWS) + 1j * rng.standard_normal(N_ROWS)

    print(f"\nfused forward/backward, {N_ROWS} rows in batches of {BATCH} "
          f"(best of {REPEATS}):")
    header = f"{'layout':<14}" + "".join(f"{be:>14}" for be in backends)
    print(header + f"{'speedup':>10}" if len(backends) > 1 else header)
    for name, (kind, n, m, w) in LAYOUTS:
        layout = build_layout(kind, n, m, w)
        view = params_to_view(layout, glorot_init(layout, np.random.default_rng(1)))
        times, grads = {}, {}
        for be in backends:
            times[be], grads[be] = bench_kernels(be, layout, view, x_win, targets)
        cells = "".join(
            f"{N_ROWS / times[be] / 1e6:>11.2f} M/s" for be in backends
        )
        line = f"{name:<14}" + cells
        if len(backends) > 1:
            line += f"{times['python'] / times['cython']:>9.1f}x"
            rel = np.max(np.abs(grads["cython"] - grads["python"])) / max(
                np.max(np.abs(grads["python"])), 1e-300
            )
            assert rel < 1e-10, f"backends disagree: rel {rel:.2e}"
        print(line)
    if len(backends) > 1:
        print("gradient agreement across backends: rel error < 1e-10 (asserted)")

    print("\nfull two-stage training, LWGS(9), 50 epochs, 18432-row split:")
    dataset = synth_dataset(TxConfig(seed=1), 20480)
    train, _ = split_dataset(dataset, SplitSpec())
    for be in backends:
        _kernels.use_backend(be)
        t0 = time.perf_counter()
        train_stack(train, CancelerSpec(kind="lwgs", N=9, M=13),
                    TrainHyper(epochs=50, seed=1))
        print(f"  {be:<8} {time.perf_counter() - t0:8.2f} s")
    _kernels.use_backend("auto")


if __name__ == "__main__":
    main()
