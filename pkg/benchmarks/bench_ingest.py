"""Time bulk ingestion with the numba kernel against the pure-numpy path.

    python3 benchmarks/bench_ingest.py [--sizes 16 18 20] [--repeat 3]

Both backends are bit-identical, which is checked here before timing.
"""

import argparse
import time

import numpy as np

from relquantiles import Sketch, kernels, serialize


def build(data, backend, seed=1):
    kernels.set_backend(backend)
    s = Sketch(0.05, 0.1, seed=seed)
    t0 = time.perf_counter()
    s.update_many(data)
    return s, time.perf_counter() - t0


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[16, 18, 20], help="log2 of stream lengths")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    backends = ["numpy"] + (["numba"] if kernels.HAVE_NUMBA else [])
    previous = kernels.get_backend()
    if "numba" in backends:
        build(np.random.default_rng(0).random(5000), "numba")  # jit warm-up

    print(f"{'n':>10} " + " ".join(f"{b + ' (s)':>12}" for b in backends) + f" {'items/s':>12}")
    try:
        for e in args.sizes:
            data = np.random.default_rng(e).random(2**e)
            best, blobs = {}, {}
            for b in backends:
                runs = [build(data, b) for _ in range(args.repeat)]
                best[b] = min(t for _, t in runs)
                blobs[b] = serialize(runs[0][0])
            if len(set(blobs.values())) != 1:
                raise SystemExit(f"backends disagree at n=2^{e}")
            fastest = min(best.values())
            print(f"{2**e:>10} " + " ".join(f"{best[b]:>12.4f}" for b in backends) + f" {2**e / fastest:>12.3g}")
    finally:
        kernels.set_backend(previous)


if __name__ == "__main__":
    main()
