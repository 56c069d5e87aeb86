"""Rebuild the desk-scale MNIST fixture from the `mnist` npm package (v1.1.0).

The package ships 10000 MNIST digits as per-class JSON arrays of pixel values
scaled to [0, 1] with three decimals. This script restores 8-bit pixels,
shuffles with a fixed seed, and writes standard IDX files (gzip-compressed).

    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python3 make_fixture.py package/src/digits .
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path

TRAIN = 4000
TEST = 1000
SEED = 20240611


def main(src: Path, dst: Path) -> None:
    samples = []
    for digit in range(10):
        data = json.loads((src / f"{digit}.json").read_text())["data"]
        for k in range(len(data) // 784):
            px = bytes(min(255, max(0, round(x * 255))) for x in data[k * 784:(k + 1) * 784])
            samples.append((px, digit))
    random.Random(SEED).shuffle(samples)
    write(dst, "train", samples[:TRAIN])
    write(dst, "t10k", samples[TRAIN:TRAIN + TEST])


def write(dst: Path, prefix: str, samples) -> None:
    n = len(samples)
    images = struct.pack(">IIII", 0x00000803, n, 28, 28) + b"".join(p for p, _ in samples)
    labels = struct.pack(">II", 0x00000801, n) + bytes(l for _, l in samples)
    for name, blob in ((f"{prefix}-images-idx3-ubyte.gz", images), (f"{prefix}-labels-idx1-ubyte.gz", labels)):
        with gzip.GzipFile(dst / name, "wb", mtime=0) as f:
            f.write(blob)


if __name__ == "__main__":
    main(Path(sys.argv[1]), Path(sys.argv[2]))
