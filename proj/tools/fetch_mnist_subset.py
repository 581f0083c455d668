#!/usr/bin/env python3
"""Build a 10,000-digit MNIST subset in IDX format.

The digits come from the `mnist` npm package (v1.1.0), which ships 10,000
MNIST samples as normalized JSON arrays. Pixels are restored to uint8 by
rounding value * 255 (the package stores 3 decimals, so this is exact).

Each digit's samples are split in file order: the first 80% go to the
training files, the rest to the test files. Both splits are shuffled with
a fixed seed so class order is interleaved.

Usage:
    tools/fetch_mnist_subset.py [--package DIR_OR_TGZ] [--out data/mnist-subset]
"""

import argparse
import json
import random
import struct
import subprocess
import tarfile
import tempfile
from pathlib import Path

ROWS = COLS = 28
TRAIN_FRACTION = 0.8


def write_idx(path: Path, dims, payload: bytes) -> None:
    magic = 0x00000800 | len(dims)
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in dims)
    tmp = path.with_suffix(".tmp")
    tmp.write_bytes(header + payload)
    tmp.replace(path)


def locate_package(arg: str | None, workdir: Path) -> Path:
    if arg is None:
        subprocess.run(["npm", "pack", "mnist@1.1.0", "--silent"], cwd=workdir, check=True)
        arg = str(next(workdir.glob("mnist-*.tgz")))
    p = Path(arg)
    if p.is_dir():
        return p
    with tarfile.open(p) as tar:
        tar.extractall(workdir)
    return workdir / "package"


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--package", help="extracted npm package dir or .tgz")
    ap.add_argument("--out", default="data/mnist-subset")
    ap.add_argument("--seed", type=int, default=20240101)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        pkg = locate_package(args.package, Path(tmp))
        train, test = [], []
        for digit in range(10):
            values = json.loads((pkg / "src" / "digits" / f"{digit}.json").read_text())["data"]
            n = len(values) // (ROWS * COLS)
            samples = [
                bytes(round(v * 255) for v in values[k * ROWS * COLS:(k + 1) * ROWS * COLS])
                for k in range(n)
            ]
            cut = int(round(n * TRAIN_FRACTION))
            train += [(s, digit) for s in samples[:cut]]
            test += [(s, digit) for s in samples[cut:]]

    rng = random.Random(args.seed)
    for name, rows in (("train", train), ("t10k", test)):
        rng.shuffle(rows)
        write_idx(out / f"{name}-images-idx3-ubyte", (len(rows), ROWS, COLS),
                  b"".join(s for s, _ in rows))
        write_idx(out / f"{name}-labels-idx1-ubyte", (len(rows),),
                  bytes(label for _, label in rows))
        print(f"{name}: {len(rows)} samples")


if __name__ == "__main__":
    main()
