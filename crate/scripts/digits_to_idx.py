#!/usr/bin/env python3
"""Convert the digit samples bundled in the `mnist` npm package to IDX files.

Usage: npm pack mnist && tar xzf mnist-*.tgz
       python3 scripts/digits_to_idx.py package/src/digits data/digits

Writes a deterministic 8000/2000 train/test split as gzipped IDX files named
like the standard corpus (train-images-idx3-ubyte.gz, ...).
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path


def write_idx(path, magic, dims, payload):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">I", magic))
        for d in dims:
            f.write(struct.pack(">I", d))
        f.write(bytes(payload))


def main():
    src, dst = Path(sys.argv[1]), Path(sys.argv[2])
    n_train = int(sys.argv[3]) if len(sys.argv) > 3 else 8000
    samples = []
    for digit in range(10):
        data = json.loads((src / f"{digit}.json").read_text())["data"]
        for k in range(len(data) // 784):
            pixels = [min(255, max(0, round(v * 255))) for v in data[k * 784:(k + 1) * 784]]
            samples.append((digit, pixels))
    random.Random(20190101).shuffle(samples)
    dst.mkdir(parents=True, exist_ok=True)
    for split, part in (("train", samples[:n_train]), ("t10k", samples[n_train:])):
        images = [p for _, s in part for p in s]
        labels = [d for d, _ in part]
        write_idx(dst / f"{split}-images-idx3-ubyte.gz", 0x803, [len(part), 28, 28], images)
        write_idx(dst / f"{split}-labels-idx1-ubyte.gz", 0x801, [len(part)], labels)
        print(f"{split}: {len(part)} samples")


if __name__ == "__main__":
    main()
