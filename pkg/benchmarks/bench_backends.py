"""Time forward+backward passes under the numba and pure-numpy backends.

Each backend runs in its own interpreter because ``GATEDRNN_JIT`` is read at
import time.  Usage::

    python benchmarks/bench_backends.py [--hidden 100] [--T 50] [--batch 20] [--repeats 5]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from gatedrnn import Rng, backend, build_stack, forward_sequence, backward_sequence
from gatedrnn.network import SequenceBatch

hidden, T, batch, repeats = map(int, sys.argv[1:5])
res = {"backend": backend()}
for kind in ("mgu", "gru", "lstm"):
    rng = Rng(0)
    stack = build_stack(kind, 2, hidden, 1, "regression", bidirectional=True, rng=rng)
    data = SequenceBatch(rng.uniform(-1, 1, (batch, T, 2)), np.full(batch, T), rng.uniform(-1, 1, batch))
    backward_sequence(stack, forward_sequence(stack, data), data)  # warm-up / compile
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        backward_sequence(stack, forward_sequence(stack, data), data)
        times.append(time.perf_counter() - t0)
    res[kind] = min(times)
print(json.dumps(res))
"""


def run(flag, args):
    env = dict(os.environ, GATEDRNN_JIT=flag)
    proc = subprocess.run([sys.executable, "-c", WORKER, str(args.hidden), str(args.T), str(args.batch),
                           str(args.repeats)], env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--hidden", type=int, default=100)
    ap.add_argument("--T", type=int, default=50)
    ap.add_argument("--batch", type=int, default=20)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    rows = [run("1", args), run("0", args)]
    print(f"bidirectional, h={args.hidden}, T={args.T}, batch={args.batch}; best of {args.repeats} (seconds)")
    print(f"{'backend':<8}{'mgu':>10}{'gru':>10}{'lstm':>10}{'mgu/gru':>10}")
    for r in rows:
        print(f"{r['backend']:<8}{r['mgu']:>10.4f}{r['gru']:>10.4f}{r['lstm']:>10.4f}{r['mgu'] / r['gru']:>10.3f}")


if __name__ == "__main__":
    main()
