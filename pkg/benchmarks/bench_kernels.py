"""Compare the compiled kernels against the pure-numpy fallback.

Run as::

    python3 benchmarks/bench_kernels.py

Both backends are imported directly, so the ADVDEBIAS_KERNELS switch is not
needed here; the numbers show what the switch buys at typical layer sizes.
"""

import time

import numpy as np

from advdebias.numkit import _kernels_py as py_k
from advdebias.numkit import layer_rng

try:
    from advdebias.numkit import _kernels as cy_k
except ImportError:
    cy_k = None

SIZES = ((1024, 300), (1024, 64), (512, 256), (128, 8))
REPEATS = 200


def _bench(fn, repeats=REPEATS):
    best = float("inf")
    for _ in range(5):
        start = time.perf_counter()
        for _ in range(repeats):
            fn()
        best = min(best, (time.perf_counter() - start) / repeats)
    return best


def _row(label, t_py, t_cy):
    if t_cy is None:
        print(f"{label:<38} {t_py * 1e6:>10.1f}        (compiled kernels unavailable)")
    else:
        print(f"{label:<38} {t_py * 1e6:>10.1f} {t_cy * 1e6:>10.1f} {t_py / t_cy:>8.2f}x")


def main():
    print(f"{'case':<38} {'numpy us':>10} {'cython us':>10} {'speedup':>8}")
    for n, d in SIZES:
        rng = layer_rng(0, n, d)
        z = rng.normal(size=(n, d))
        up = rng.normal(size=(n, d))

        for kind, name in ((py_k.ACT_TANH, "tanh"), (py_k.ACT_RELU, "relu")):
            out = py_k.act_forward(kind, z)
            t_py = _bench(lambda: py_k.act_forward(kind, z))
            t_cy = _bench(lambda: cy_k.act_forward(kind, z)) if cy_k else None
            _row(f"act_forward {name} ({n}x{d})", t_py, t_cy)

            t_py = _bench(lambda: py_k.act_backward(kind, z, out, up))
            t_cy = (_bench(lambda: cy_k.act_backward(kind, z, out, up))
                    if cy_k else None)
            _row(f"act_backward {name} ({n}x{d})", t_py, t_cy)

        size = n * d
        grad = rng.normal(size=size)

        def adamw(mod):
            param = np.ones(size)
            m = np.zeros(size)
            v = np.zeros(size)
            return lambda: mod.adamw_update(param, grad, m, v, 1, 1e-3, 0.9,
                                            0.999, 1e-8, 1e-5)

        t_py = _bench(adamw(py_k))
        t_cy = _bench(adamw(cy_k)) if cy_k else None
        _row(f"adamw_update ({size} params)", t_py, t_cy)


if __name__ == "__main__":
    main()
