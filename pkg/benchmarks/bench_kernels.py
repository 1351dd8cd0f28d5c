"""Compare the compiled and numpy byte kernels, plus end-to-end segment rendering.

    python3 benchmarks/bench_kernels.py [--sizes 3000000,300000] [--repeat 5]
"""

import argparse
import statistics
import time

from pdnsim import _pykernels

try:
    from pdnsim import _ckernels
except ImportError:
    _ckernels = None


def clock(fn, repeat):
    samples = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="3000000,300000,30000")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = {"numpy": _pykernels}
    if _ckernels is not None:
        backends["cython"] = _ckernels
    else:
        print("compiled extension not built; showing the numpy fallback only")
    print(f"{'kernel':<14}{'bytes':>10}" + "".join(f"{b + ' ms':>12}" for b in backends) + f"{'speedup':>10}")
    for n in (int(s) for s in args.sizes.split(",")):
        data = bytes(_pykernels.keystream(1, n))
        if _ckernels is not None:
            assert bytes(_ckernels.keystream(12345, n)) == bytes(_pykernels.keystream(12345, n))
            assert bytes(_ckernels.xor_keystream(data, 12345)) == bytes(_pykernels.xor_keystream(data, 12345))
        for kernel in ("keystream", "xor_keystream"):
            times = {}
            for name, mod in backends.items():
                if kernel == "keystream":
                    times[name] = clock(lambda m=mod: m.keystream(12345, n), args.repeat)
                else:
                    times[name] = clock(lambda m=mod: m.xor_keystream(data, 12345), args.repeat)
            speed = times["numpy"] / times["cython"] if "cython" in times else float("nan")
            row = "".join(f"{t * 1000:>12.3f}" for t in times.values())
            print(f"{kernel:<14}{n:>10}{row}{speed:>9.1f}x")


if __name__ == "__main__":
    main()
