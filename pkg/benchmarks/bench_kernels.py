"""Compare the compiled dueling-forward kernel against the numpy fallback.

Two workloads: plain batched inference at growing batch sizes (replay-style),
and a rollout-shaped loop of many tiny per-slot batches (the shape the
environment actually produces during evaluation).  Run from the repo root:

    python3 benchmarks/bench_kernels.py [--repeats 7]
"""

import argparse
import time

import numpy as np

from leohandover._kernels import _cy, pure  # noqa: F401  (fails fast if unbuilt)
from leohandover._kernels import BACKEND
from leohandover.environment import observation_dim
from leohandover.neuralnet import DuelingQNet

BATCH_SIZES = (1, 4, 32, 256, 2048)
K_MAX = 8
TRUNK = (128, 128)
STREAM = (64,)


def _args(net):
    return (net.trunk.weights, net.trunk.biases, net.value.weights,
            net.value.biases, net.advantage.weights, net.advantage.biases)


def _time(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_batched(net, rng, repeats):
    dim = net.obs_dim
    print(f"batched inference, trunk {TRUNK}, stream {STREAM}, k_max {K_MAX}")
    print(f"{'batch':>6} {'numpy ms':>10} {'cython ms':>10} {'speedup':>8}")
    for B in BATCH_SIZES:
        obs = rng.normal(size=(B, dim))
        mask = rng.random((B, K_MAX)) < 0.8
        mask[:, 0] = True
        loops = max(1, 4096 // B)
        t_np = _time(lambda: [pure.dueling_forward_batch(*_args(net), obs, mask)
                              for _ in range(loops)], repeats) / loops
        t_cy = _time(lambda: [_cy.dueling_forward_batch(*_args(net), obs, mask)
                              for _ in range(loops)], repeats) / loops
        q_np = pure.dueling_forward_batch(*_args(net), obs, mask)
        q_cy = _cy.dueling_forward_batch(*_args(net), obs, mask)
        assert np.allclose(np.where(mask, q_np, 0.0), np.where(mask, q_cy, 0.0),
                           atol=1e-10), "backends disagree"
        print(f"{B:>6} {t_np * 1e3:>10.4f} {t_cy * 1e3:>10.4f} "
              f"{t_np / t_cy:>8.2f}x")


def bench_rollout_shape(net, rng, repeats):
    # evaluation rollouts call the kernel once per slot with one row per user
    users, slots = 8, 360
    dim = net.obs_dim
    obs = rng.normal(size=(slots, users, dim))
    mask = rng.random((slots, users, K_MAX)) < 0.8
    mask[:, :, 0] = True

    def run(fn):
        for t in range(slots):
            fn(*_args(net), obs[t], mask[t])

    t_np = _time(lambda: run(pure.dueling_forward_batch), repeats)
    t_cy = _time(lambda: run(_cy.dueling_forward_batch), repeats)
    print(f"\nrollout shape ({slots} slots x {users} users per call)")
    print(f"numpy  {t_np * 1e3:8.2f} ms")
    print(f"cython {t_cy * 1e3:8.2f} ms  ({t_np / t_cy:.2f}x)")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=7,
                        help="timing repeats, best-of (default 7)")
    args = parser.parse_args()
    print(f"active backend: {BACKEND}")
    rng = np.random.default_rng(0)
    net = DuelingQNet.create(observation_dim(K_MAX), K_MAX, rng,
                             trunk_dims=TRUNK, stream_dims=STREAM)
    bench_batched(net, rng, args.repeats)
    bench_rollout_shape(net, rng, args.repeats)


if __name__ == "__main__":
    main()
