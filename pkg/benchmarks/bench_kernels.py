"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from attnscale import _pykernels as py

try:
    from attnscale import _ckernels as ck
except ImportError:
    ck = None


def cases(rng):
    gates = rng.normal(size=(8, 4 * 128))
    c_prev = rng.normal(size=(8, 128))
    h, c, act, tanh_c = py.lstm_pointwise_forward(gates, c_prev)
    dh, dc = rng.normal(size=h.shape), rng.normal(size=c.shape)
    r, v = rng.normal(size=512), rng.normal(size=512)
    d = (rng.random(512) < 0.002).astype(float)
    return {
        "lstm_forward (8x128)": lambda m: m.lstm_pointwise_forward(gates, c_prev),
        "lstm_backward (8x128)": lambda m: m.lstm_pointwise_backward(act, tanh_c, c_prev, dh, dc),
        "gae (512 steps)": lambda m: m.gae(r, v, d, 0.0, 0.99, 0.93),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=2000)
    args = ap.parse_args()
    print(f"{'kernel':<24}{'python us':>12}{'cython us':>12}{'speedup':>10}")
    for name, fn in cases(np.random.default_rng(0)).items():
        t_py = min(timeit.repeat(lambda: fn(py), number=args.repeat, repeat=3)) / args.repeat
        if ck is None:
            print(f"{name:<24}{t_py * 1e6:>12.2f}{'n/a':>12}{'':>10}")
            continue
        t_c = min(timeit.repeat(lambda: fn(ck), number=args.repeat, repeat=3)) / args.repeat
        print(f"{name:<24}{t_py * 1e6:>12.2f}{t_c * 1e6:>12.2f}{t_py / t_c:>9.1f}x")


if __name__ == "__main__":
    main()
