"""Compare the compiled Merkle kernels with the pure-Python fallback.

    python3 benchmarks/bench_merkle.py --sizes 1024 16384 --repeat 5

Each row is the best of ``--repeat`` runs, in milliseconds.
"""

from __future__ import annotations

import argparse
import random
import sys
import timeit

from smartcert import _merkle_py

try:
    from smartcert import _merkle_ext
except ImportError:
    _merkle_ext = None


def workloads(kernel, leaves, proofs):
    n = len(leaves)
    hashes = kernel.hash_leaves(leaves)
    rng = random.Random(1)
    indices = [rng.randrange(n) for _ in range(proofs)]
    olds = [rng.randrange(1, n + 1) for _ in range(proofs)]
    return {
        "hash_leaves": lambda: kernel.hash_leaves(leaves),
        "root": lambda: kernel.subtree_root(hashes, 0, n),
        f"inclusion x{proofs}": lambda: [kernel.inclusion_path(hashes, i, n) for i in indices],
        f"consistency x{proofs}": lambda: [kernel.consistency_path(hashes, m, n) for m in olds],
    }


def best_ms(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat)) * 1000


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[256, 4096, 65536])
    parser.add_argument("--proofs", type=int, default=50)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    if _merkle_ext is None:
        print("compiled kernels are not built; run `pip install -e . --no-build-isolation` first", file=sys.stderr)
        return 1

    rng = random.Random(0)
    print(f"{'n':>7}  {'workload':<16} {'python ms':>10} {'compiled ms':>12} {'speedup':>8}")
    for n in args.sizes:
        leaves = [rng.randbytes(64) for _ in range(n)]
        # both kernels must agree before their timings mean anything
        assert _merkle_py.hash_leaves(leaves) == _merkle_ext.hash_leaves(leaves)
        py = workloads(_merkle_py, leaves, args.proofs)
        ext = workloads(_merkle_ext, leaves, args.proofs)
        for name in py:
            assert py[name]() == ext[name]()
            t_py, t_ext = best_ms(py[name], args.repeat), best_ms(ext[name], args.repeat)
            print(f"{n:>7}  {name:<16} {t_py:>10.2f} {t_ext:>12.2f} {t_py / t_ext:>7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
