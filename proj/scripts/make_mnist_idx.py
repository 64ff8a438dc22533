#!/usr/bin/env python3
"""Build desk-scale MNIST IDX files from the npm `mnist` package data.

The npm package `mnist` (https://www.npmjs.com/package/mnist) ships a
10,000-example subset of the MNIST training set as per-digit JSON arrays
of grayscale values rounded to three decimals (original byte / 255).
This script reconstructs the exact uint8 pixels and writes standard IDX
files with a stratified 80/20 train/test split.

Usage:
    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python3 scripts/make_mnist_idx.py package/src/digits data/mnist
"""

import json
import random
import struct
import sys
from pathlib import Path

ROWS = COLS = 28
SPLIT_SEED = 7
TRAIN_FRACTION = 0.8


def write_images(path: Path, images: list[bytes]) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack(">iiii", 2051, len(images), ROWS, COLS))
        for img in images:
            f.write(img)


def write_labels(path: Path, labels: list[int]) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack(">ii", 2049, len(labels)))
        f.write(bytes(labels))


def main() -> int:
    if len(sys.argv) != 3:
        print(__doc__)
        return 2
    digits_dir, out_dir = Path(sys.argv[1]), Path(sys.argv[2])
    out_dir.mkdir(parents=True, exist_ok=True)

    rng = random.Random(SPLIT_SEED)
    train: list[tuple[bytes, int]] = []
    test: list[tuple[bytes, int]] = []
    for digit in range(10):
        data = json.loads((digits_dir / f"{digit}.json").read_text())["data"]
        n = len(data) // (ROWS * COLS)
        examples = []
        for i in range(n):
            chunk = data[i * ROWS * COLS : (i + 1) * ROWS * COLS]
            examples.append(bytes(round(v * 255) for v in chunk))
        rng.shuffle(examples)
        cut = int(round(TRAIN_FRACTION * n))
        train += [(img, digit) for img in examples[:cut]]
        test += [(img, digit) for img in examples[cut:]]

    rng.shuffle(train)
    rng.shuffle(test)

    write_images(out_dir / "train-images-idx3-ubyte", [img for img, _ in train])
    write_labels(out_dir / "train-labels-idx1-ubyte", [lab for _, lab in train])
    write_images(out_dir / "t10k-images-idx3-ubyte", [img for img, _ in test])
    write_labels(out_dir / "t10k-labels-idx1-ubyte", [lab for _, lab in test])
    print(f"wrote {len(train)} train / {len(test)} test examples to {out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
