#!/usr/bin/env python3
"""Build the bundled MNIST subset from the 5,000-digit sample shipped in the
mlxtend wheel (500 images per class, pixels 0-255, label in the last column).

Writes gzip-compressed IDX files with a stratified 400/100-per-class split:

    data/mnist-5k/train-images-idx3-ubyte.gz   4000 images
    data/mnist-5k/train-labels-idx1-ubyte.gz
    data/mnist-5k/t10k-images-idx3-ubyte.gz    1000 images
    data/mnist-5k/t10k-labels-idx1-ubyte.gz

and the 10-image loader fixture plus its CSV reference copy under
crates/core/tests/fixtures/.

Usage: pip download --no-deps mlxtend -d /tmp/mlx && \
       python3 scripts/make_mnist_subset.py /tmp/mlx/mlxtend-*.whl
"""
import gzip
import random
import struct
import sys
import zipfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def idx_images(rows):
    head = struct.pack(">IIII", 2051, len(rows), 28, 28)
    return head + bytes(p for r in rows for p in r)


def idx_labels(labels):
    return struct.pack(">II", 2049, len(labels)) + bytes(labels)


def main(wheel):
    raw = zipfile.ZipFile(wheel).read("mlxtend/data/data/mnist_5k.csv.gz")
    lines = gzip.decompress(raw).decode().strip().split("\n")
    samples = []
    for line in lines:
        vals = [int(float(v)) for v in line.split(",")]
        samples.append((vals[:-1], vals[-1]))

    rng = random.Random(20160101)
    train, test = [], []
    for c in range(10):
        members = [s for s in samples if s[1] == c]
        rng.shuffle(members)
        train += members[:400]
        test += members[400:]
    rng.shuffle(train)
    rng.shuffle(test)

    out = ROOT / "data" / "mnist-5k"
    out.mkdir(parents=True, exist_ok=True)
    for name, split in (("train", train), ("t10k", test)):
        with gzip.GzipFile(out / f"{name}-images-idx3-ubyte.gz", "wb", mtime=0) as f:
            f.write(idx_images([s[0] for s in split]))
        with gzip.GzipFile(out / f"{name}-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
            f.write(idx_labels([s[1] for s in split]))

    fx = ROOT / "crates" / "core" / "tests" / "fixtures"
    fx.mkdir(parents=True, exist_ok=True)
    ten = test[:10]
    (fx / "mnist10-images.idx3-ubyte").write_bytes(idx_images([s[0] for s in ten]))
    (fx / "mnist10-labels.idx1-ubyte").write_bytes(idx_labels([s[1] for s in ten]))
    with open(fx / "mnist10.csv", "w") as f:
        for px, label in ten:
            f.write(",".join([str(label)] + [str(p) for p in px]) + "\n")


if __name__ == "__main__":
    main(sys.argv[1])
