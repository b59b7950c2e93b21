#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Write a 5000-digit MNIST subset as IDX files.

The digits come from the mnist_5k.csv.gz file bundled in the mlxtend wheel
(500 images per class). Each class is split 400/100 into train/test and both
splits are shuffled with a fixed seed, giving

    train-images-idx3-ubyte  train-labels-idx1-ubyte   (4000 images)
    t10k-images-idx3-ubyte   t10k-labels-idx1-ubyte    (1000 images)
"""
import argparse
import glob
import gzip
import os
import random
import struct
import subprocess
import sys
import tempfile
import zipfile

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def find_wheel(wheel):
    if wheel:
        return wheel
    tmp = tempfile.mkdtemp(prefix="mlxtend-")
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "--quiet", "-d", tmp, "mlxtend==0.24.0"],
        check=True,
    )
    found = glob.glob(os.path.join(tmp, "mlxtend-*.whl"))
    if not found:
        sys.exit("pip download did not produce an mlxtend wheel")
    return found[0]


def write_idx(directory, prefix, rows):
    with open(os.path.join(directory, prefix + "-images-idx3-ubyte"), "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(rows), 28, 28))
        for pixels, _ in rows:
            f.write(bytes(pixels))
    with open(os.path.join(directory, prefix + "-labels-idx1-ubyte"), "wb") as f:
        f.write(struct.pack(">II", 0x801, len(rows)))
        f.write(bytes(label for _, label in rows))


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--out", default="data/mnist", help="output directory")
    parser.add_argument("--wheel", help="use an already downloaded mlxtend wheel")
    parser.add_argument("--seed", type=int, default=20200101)
    args = parser.parse_args()

    with zipfile.ZipFile(find_wheel(args.wheel)) as z:
        text = gzip.decompress(z.read(MEMBER)).decode("ascii")

    by_class = {}
    for line in text.strip().splitlines():
        values = [int(v) for v in line.split(",")]
        by_class.setdefault(values[-1], []).append((values[:-1], values[-1]))

    rng = random.Random(args.seed)
    train, test = [], []
    for label in sorted(by_class):
        rows = by_class[label]
        rng.shuffle(rows)
        cut = len(rows) * 4 // 5
        train += rows[:cut]
        test += rows[cut:]
    rng.shuffle(train)
    rng.shuffle(test)

    os.makedirs(args.out, exist_ok=True)
    write_idx(args.out, "train", train)
    write_idx(args.out, "t10k", test)
    print(f"wrote {len(train)} train and {len(test)} test images to {args.out}")


if __name__ == "__main__":
    main()
