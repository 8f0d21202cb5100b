#!/usr/bin/env python3
"""Convert the digits bundled in the npm `mnist` package into IDX files.

The package stores 10,000 MNIST digits as pixel/255 rounded to three
decimals; multiplying by 255 and rounding recovers the original bytes.

usage: mnist_npm_to_idx.py <package/src/digits dir> <out dir>
"""
import gzip
import json
import os
import struct
import sys


def main():
    src, out = sys.argv[1], sys.argv[2]
    os.makedirs(out, exist_ok=True)
    pixels = bytearray()
    labels = bytearray()
    for digit in range(10):
        with open(os.path.join(src, f"{digit}.json")) as fh:
            data = json.load(fh)["data"]
        assert len(data) % 784 == 0
        for v in data:
            b = int(round(v * 255.0))
            pixels.append(max(0, min(255, b)))
        labels.extend([digit] * (len(data) // 784))
    n = len(labels)
    with gzip.GzipFile(os.path.join(out, "images-idx3-ubyte.gz"), "wb", mtime=0) as fh:
        fh.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        fh.write(bytes(pixels))
    with gzip.GzipFile(os.path.join(out, "labels-idx1-ubyte.gz"), "wb", mtime=0) as fh:
        fh.write(struct.pack(">II", 0x00000801, n))
        fh.write(bytes(labels))
    print(f"wrote {n} samples to {out}")


if __name__ == "__main__":
    main()
