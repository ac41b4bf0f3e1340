"""Build the small datasets under tests/data from files shipped inside PyPI wheels.

MNIST: the 5,000-digit subset bundled with mlxtend, shuffled once with a fixed
seed and written as gzipped IDX pairs (4,000 train / 1,000 test).

Word-level corpus: the Lee news corpus bundled with gensim, normalised in the
usual treebank style (lowercase, digits -> N, punctuation dropped, one
sentence per line).  lee_background.cor is the training split, lee.cor is cut
into validation and test halves by document.

Usage: python scripts/prepare_data.py [--wheel-dir DIR] [--out tests/data]
Missing wheels are fetched with ``pip download --no-deps``.
"""

from __future__ import annotations

import argparse
import csv
import glob
import gzip
import io
import os
import re
import subprocess
import sys
import zipfile

import numpy as np

from gatedrnn.core import Rng
from gatedrnn.tasks import write_mnist_idx

WHEELS = {"mlxtend": "mlxtend==0.24.0", "gensim": "gensim==4.4.0"}


def find_wheel(name, wheel_dir):
    hits = sorted(glob.glob(os.path.join(wheel_dir, f"{name}-*.whl")))
    if not hits:
        subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps", "-q", "-d", wheel_dir, WHEELS[name]],
                       check=True)
        hits = sorted(glob.glob(os.path.join(wheel_dir, f"{name}-*.whl")))
    return hits[-1]


def build_mnist(wheel, out, n_test=1000, seed=20170131):
    with zipfile.ZipFile(wheel) as z:
        raw = gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz")).decode()
    rows = np.array([[int(v) for v in r] for r in csv.reader(io.StringIO(raw)) if r], dtype=np.int64)
    images, labels = rows[:, :784].astype(np.uint8).reshape(-1, 28, 28), rows[:, 784].astype(np.uint8)
    order = Rng(seed).permutation(len(labels))
    images, labels = images[order], labels[order]
    n_train = len(labels) - n_test
    write_mnist_idx(os.path.join(out, "mnist-train-images-idx3-ubyte.gz"),
                    os.path.join(out, "mnist-train-labels-idx1-ubyte.gz"), images[:n_train], labels[:n_train])
    write_mnist_idx(os.path.join(out, "mnist-test-images-idx3-ubyte.gz"),
                    os.path.join(out, "mnist-test-labels-idx1-ubyte.gz"), images[n_train:], labels[n_train:])
    print(f"mnist: {n_train} train / {n_test} test")


_SENT = re.compile(r"(?<=[.!?])\s+(?=[A-Z\"'])")
_TOKEN = re.compile(r"[a-z]+(?:'[a-z]+)?|\d[\d.,:]*")


def normalise(doc):
    lines = []
    for sent in _SENT.split(doc.strip()):
        toks = ["N" if t[0].isdigit() else t for t in _TOKEN.findall(sent.lower())]
        if toks:
            lines.append(" ".join(toks))
    return lines


def build_corpus(wheel, out):
    with zipfile.ZipFile(wheel) as z:
        background = z.read("gensim/test/test_data/lee_background.cor").decode("utf-8", "replace").splitlines()
        lee = z.read("gensim/test/test_data/lee.cor").decode("utf-8", "replace").splitlines()
    half = len(lee) // 2
    splits = {"train": background, "valid": lee[:half], "test": lee[half:]}
    for name, docs in splits.items():
        lines = [ln for d in docs for ln in normalise(d)]
        with gzip.open(os.path.join(out, f"lee.{name}.txt.gz"), "wt", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        print(f"lee.{name}: {len(lines)} lines, {sum(len(ln.split()) for ln in lines)} tokens")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--wheel-dir", default=os.path.join("build", "wheels"))
    ap.add_argument("--out", default=os.path.join("tests", "data"))
    args = ap.parse_args(argv)
    os.makedirs(args.wheel_dir, exist_ok=True)
    os.makedirs(args.out, exist_ok=True)
    build_mnist(find_wheel("mlxtend", args.wheel_dir), args.out)
    build_corpus(find_wheel("gensim", args.wheel_dir), args.out)


if __name__ == "__main__":
    main()
