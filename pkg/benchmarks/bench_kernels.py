"""Compare the numba kernels with their pure-numpy counterparts.

    python3 benchmarks/bench_kernels.py            # kernel micro-benchmarks
    python3 benchmarks/bench_kernels.py --train    # also one training epoch per backend

Kernel timings call both implementations directly, so they run in one
process. The training comparison starts a subprocess per backend with
``ADACONV_SRL_NUMBA`` set, since the backend is fixed at import time.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np
from numba import njit

from adaconv_srl import kernels
from adaconv_srl.conll import tree_from_heads
from adaconv_srl.encoder import tree_arrays


def _best(fn, repeat: int, number: int) -> float:
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def _random_tree(rng, m):
    heads = [0, 0] + [int(rng.integers(1, k)) for k in range(2, m + 1)]
    return tree_from_heads(heads, [None] + ["X"] * m)


def kernel_cases(m: int, h: int, rng):
    Z, U = rng.normal(size=(m, 4 * h)), rng.normal(size=(4 * h, h)) * 0.3
    UT = np.ascontiguousarray(U.T)
    lstm_out = kernels.lstm_forward_py(Z, U)
    dH = rng.normal(size=(m, h))

    order, ptr, idx = tree_arrays(_random_tree(rng, m))
    WV, Us = rng.normal(size=(m, 5 * h)), rng.normal(size=(5, h, h)) * 0.3
    B, EB = rng.normal(size=(4, h)), rng.normal(size=(m, h))
    UsT = np.ascontiguousarray(Us.transpose(0, 2, 1))
    tree_out = kernels.tree_forward_py(WV, Us, B, EB, order, ptr, idx)

    F, W = rng.normal(size=(m, 100, 5 * h)), rng.normal(size=(m, 5 * h))
    _, arg = kernels.conv_pool_forward_np(F, W)
    g = rng.normal(size=(m, 100))

    # (name, python/numpy callable, compiled callable)
    return [
        ("lstm forward", lambda: kernels.lstm_forward_py(Z, U),
         lambda: LSTM_F(Z, U)),
        ("lstm backward", lambda: kernels.lstm_backward_py(dH, U, UT, *lstm_out),
         lambda: LSTM_B(dH, U, UT, *lstm_out)),
        ("tree forward", lambda: kernels.tree_forward_py(WV, Us, B, EB, order, ptr, idx),
         lambda: TREE_F(WV, Us, B, EB, order, ptr, idx)),
        ("tree backward", lambda: kernels.tree_backward_py(dH, UsT, *tree_out, order, ptr, idx),
         lambda: TREE_B(dH, UsT, *tree_out, order, ptr, idx)),
        ("conv+pool forward", lambda: kernels.conv_pool_forward_np(F, W),
         lambda: CONV_F(F, W)),
        ("conv+pool backward", lambda: kernels.conv_pool_backward_np(g, F, W, arg),
         lambda: CONV_B(g, F, W, arg)),
    ]


LSTM_F = njit(cache=True)(kernels.lstm_forward_py)
LSTM_B = njit(cache=True)(kernels.lstm_backward_py)
TREE_F = njit(cache=True)(kernels.tree_forward_py)
TREE_B = njit(cache=True)(kernels.tree_backward_py)
CONV_F = njit(cache=True)(kernels.conv_pool_forward_loops)
CONV_B = njit(cache=True)(kernels.conv_pool_backward_loops)


def run_kernels(m: int, h: int, repeat: int) -> None:
    rng = np.random.default_rng(0)
    print(f"m={m} hidden={h}")
    print(f"{'kernel':<20}{'numpy (ms)':>12}{'numba (ms)':>12}{'speedup':>10}")
    for name, slow, fast in kernel_cases(m, h, rng):
        fast()  # compile
        t_slow = _best(slow, repeat, 5)
        t_fast = _best(fast, repeat, 20)
        print(f"{name:<20}{1e3 * t_slow:>12.3f}{1e3 * t_fast:>12.3f}{t_slow / t_fast:>9.1f}x")


EPOCH_SNIPPET = """
import time
from adaconv_srl import backend_name
from adaconv_srl.config import TrainConfig
from adaconv_srl.synth import generate_sentences
from adaconv_srl.train import train
sents = generate_sentences(50, 0)
cfg = TrainConfig(word_dim=16, lemma_dim=16, pos_dim=8, flag_dim=4, lstm_hidden=8, lstm_layers=4,
                  mlp_hidden=32, batch_size=8, epochs=1)
train(cfg, sents[:2])
t = time.perf_counter()
train(cfg, sents)
print(backend_name(), time.perf_counter() - t)
"""


def run_training() -> None:
    print("\none training epoch on the synthetic corpus (50 sentences)")
    for flag in ("1", "0"):
        env = dict(os.environ, ADACONV_SRL_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", EPOCH_SNIPPET], env=env, check=True,
                             capture_output=True, text=True).stdout.split()
        print(f"{out[0]:<8}{float(out[1]):8.2f} s")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--length", type=int, default=40, help="sentence length m")
    parser.add_argument("--hidden", type=int, default=16)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--train", action="store_true", help="time one epoch per backend")
    args = parser.parse_args()
    run_kernels(args.length, args.hidden, args.repeat)
    if args.train:
        run_training()


if __name__ == "__main__":
    main()
