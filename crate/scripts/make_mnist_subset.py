#!/usr/bin/env python3
"""Build the MNIST-subset IDX files used by the examples and acceptance suite.

The 5,000-image MNIST sample shipped inside the `mlxtend` wheel is fetched
with pip (no install), interleaved class-by-class and split 4,000 / 1,000
into gzip-compressed IDX files:

    data/mnist-subset/train-images-idx3-ubyte.gz
    data/mnist-subset/train-labels-idx1-ubyte.gz
    data/mnist-subset/t10k-images-idx3-ubyte.gz
    data/mnist-subset/t10k-labels-idx1-ubyte.gz

Usage: python3 scripts/make_mnist_subset.py [--wheel PATH] [OUT_DIR]
"""
import argparse
import gzip
import io
import os
import struct
import subprocess
import sys
import tempfile
import zipfile

N_TRAIN = 4000


def read_wheel(path):
    with zipfile.ZipFile(path) as z:
        return gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz"))


def fetch_csv():
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "mlxtend==0.24.0",
             "--no-deps", "-q", "-d", tmp],
            check=True,
        )
        wheel = next(f for f in os.listdir(tmp) if f.endswith(".whl"))
        return read_wheel(os.path.join(tmp, wheel))


def write_idx(path, magic, dims, payload):
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in dims)
    # mtime=0 keeps the archives byte-stable across runs
    with open(path, "wb") as raw:
        with gzip.GzipFile(fileobj=raw, mode="wb", mtime=0, filename="") as f:
            f.write(header + payload)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out", nargs="?", default=os.path.join(
        os.path.dirname(__file__), "..", "data", "mnist-subset"))
    ap.add_argument("--wheel", help="use an already downloaded mlxtend wheel")
    args = ap.parse_args()
    out = args.out
    os.makedirs(out, exist_ok=True)

    csv = read_wheel(args.wheel) if args.wheel else fetch_csv()
    by_class = {}
    for line in io.StringIO(csv.decode()):
        vals = [int(float(v)) for v in line.strip().split(",")]
        by_class.setdefault(vals[-1], []).append(bytes(vals[:-1]))

    # round-robin over classes: every prefix is (nearly) class balanced
    rows = []
    per_class = min(len(v) for v in by_class.values())
    for i in range(per_class):
        for c in sorted(by_class):
            rows.append((by_class[c][i], c))

    splits = {"train": rows[:N_TRAIN], "t10k": rows[N_TRAIN:]}
    for name, part in splits.items():
        write_idx(os.path.join(out, f"{name}-images-idx3-ubyte.gz"), 0x803,
                  [len(part), 28, 28], b"".join(img for img, _ in part))
        write_idx(os.path.join(out, f"{name}-labels-idx1-ubyte.gz"), 0x801,
                  [len(part)], bytes(lbl for _, lbl in part))
        print(f"{name}: {len(part)} samples")


if __name__ == "__main__":
    main()
