"""Compare the compiled and numpy kernel backends on AlexNet-sized inputs.

Usage: python3 benchmarks/bench_kernels.py [--repeat N] [--seed S]

Each row reports the best-of-N wall time per backend and checks that both
backends return identical arrays.
"""
import argparse
import timeit

import numpy as np

from tendonscore import kernels
from tendonscore.cnn import FeatureExtractor, alexnet_fc6, random_weights
from tendonscore.cnn.topology import LRN_ALPHA, LRN_BETA, LRN_DEPTH, LRN_K
from tendonscore.imaging import resize_bilinear


def cases(rng):
    x1 = rng.uniform(-100, 100, (3, 227, 227)).astype(np.float32)
    conv1 = (rng.standard_normal((96, 3, 11, 11)) * 0.05).astype(np.float32), np.zeros(96, np.float32)
    x2 = rng.random((96, 27, 27)).astype(np.float32)
    conv2 = (rng.standard_normal((256, 48, 5, 5)) * 0.03).astype(np.float32), np.zeros(256, np.float32)
    x3 = rng.random((256, 13, 13)).astype(np.float32)
    conv3 = (rng.standard_normal((384, 256, 3, 3)) * 0.03).astype(np.float32), np.zeros(384, np.float32)
    act = rng.random((96, 55, 55)).astype(np.float32) * 50
    img = rng.random((512, 512)) * 255
    ys, xs = np.meshgrid(np.linspace(0, 511, 227), np.linspace(0, 511, 227), indexing="ij")
    return [
        ("conv1 11x11/4", lambda k: k.conv2d(x1, *conv1, 4, 0, 1)),
        ("conv2 5x5 g2", lambda k: k.conv2d(x2, *conv2, 1, 2, 2)),
        ("conv3 3x3", lambda k: k.conv2d(x3, *conv3, 1, 1, 1)),
        ("max_pool 3/2", lambda k: k.max_pool(act, 3, 2)),
        ("lrn depth 5", lambda k: k.local_response_norm(act, LRN_DEPTH, LRN_ALPHA, LRN_BETA, LRN_K)),
        ("bilinear 512->227", lambda k: k.bilinear_sample(img, np.ascontiguousarray(xs),
                                                          np.ascontiguousarray(ys), 0.0)),
    ]


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled backend not built; timing the numpy fallback only")
    rng = np.random.default_rng(args.seed)

    print(f"{'kernel':20s}" + "".join(f"{b:>12s}" for b in backends) + "   speedup  identical")
    for name, call in cases(rng):
        times = {b: best_of(lambda: call(kernels.get_backend(b)), args.repeat) for b in backends}
        outs = [call(kernels.get_backend(b)) for b in backends]
        same = all(np.array_equal(outs[0], o) for o in outs[1:])
        speed = f"{times['python'] / times['cython']:8.2f}x" if "cython" in times else "       -"
        print(f"{name:20s}" + "".join(f"{times[b] * 1e3:10.2f}ms" for b in backends) + f"  {speed}  {same}")

    weights = random_weights(alexnet_fc6(), seed=args.seed)
    x = rng.uniform(-100, 100, (3, 227, 227)).astype(np.float32)
    nets = {b: FeatureExtractor(weights, backend=b) for b in backends}
    times = {b: best_of(lambda: nets[b](x), args.repeat) for b in backends}
    same = all(np.array_equal(nets[backends[0]](x), nets[b](x)) for b in backends[1:])
    speed = f"{times['python'] / times['cython']:8.2f}x" if "cython" in times else "       -"
    print(f"{'forward to fc6':20s}" + "".join(f"{times[b] * 1e3:10.2f}ms" for b in backends) + f"  {speed}  {same}")


if __name__ == "__main__":
    main()
