"""Hot-loop kernels with a compiled core and a NumPy fallback.

The Cython extension ``_gridnet_cy`` is preferred when importable, the
pure-NumPy ``_gridnet_py`` otherwise.  The active backend can be forced
with :func:`use_backend` (used by the parity tests and the kernel
benchmark) or the ``FDSIC_KERNEL`` environment variable (``auto``,
``cython``, ``python``), a developer knob read once at import.

The two backends implement identical arithmetic but sum in different
orders, so they agree to roundoff (~1e-13 relative), not bit for bit.
Each backend is individually deterministic; see
``benchmarks/kernel_benchmark.py`` for a speed and agreement comparison.
"""

import os

from . import _gridnet_py

BACKEND = "python"
forward_batch = _gridnet_py.forward_batch
forward_backward_batch = _gridnet_py.forward_backward_batch


def available_backends() -> list[str]:
    out = ["python"]
    try:
        from . import _gridnet_cy  # noqa: F401
        out.insert(0, "cython")
    except ImportError:
        pass
    return out


def use_backend(name: str) -> str:
    """Select the kernel implementation; returns the active backend name.

    ``auto`` prefers the compiled extension.  Requesting ``cython`` when
    the extension was not built raises ImportError.
    """
    global BACKEND, forward_batch, forward_backward_batch
    name = (name or "auto").strip().lower()
    if name in ("auto", "", "cython", "cy"):
        try:
            from . import _gridnet_cy
            impl, BACKEND = _gridnet_cy, "cython"
        except ImportError:
            if name in ("cython", "cy"):
                raise
            impl, BACKEND = _gridnet_py, "python"
    elif name in ("python", "py", "numpy"):
        impl, BACKEND = _gridnet_py, "python"
    else:
        raise ValueError(
            f"kernel backend {name!r} not understood; use 'auto', 'cython', or 'python'"
        )
    forward_batch = impl.forward_batch
    forward_backward_batch = impl.forward_backward_batch
    return BACKEND


use_backend(os.environ.get("FDSIC_KERNEL", "auto"))

__all__ = ["BACKEND", "available_backends", "use_backend",
           "forward_batch", "forward_backward_batch"]
