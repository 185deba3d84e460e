#!/usr/bin/env python3
"""Build a stratified MNIST subset in IDX format.

The source is the digit collection shipped with the `mnist` npm package
(per-class JSON files of 784 pixel intensities in [0, 1]).  Fetch it with

    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz

and point --digits at package/src/digits.
"""
import argparse
import json
import pathlib
import struct

import numpy as np


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        f.write(images.astype(np.uint8).tobytes())


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--digits", required=True, type=pathlib.Path)
    ap.add_argument("--out", required=True, type=pathlib.Path)
    ap.add_argument("--train-per-class", type=int, default=600)
    ap.add_argument("--test-per-class", type=int, default=100)
    ap.add_argument("--seed", type=int, default=20210524)
    args = ap.parse_args()

    rng = np.random.RandomState(args.seed)
    train_x, train_y, test_x, test_y = [], [], [], []
    for label in range(10):
        raw = json.loads((args.digits / f"{label}.json").read_text())["data"]
        pixels = np.rint(np.asarray(raw, dtype=np.float64).reshape(-1, 784) * 255.0)
        pixels = np.clip(pixels, 0, 255)
        order = rng.permutation(len(pixels))
        need = args.train_per_class + args.test_per_class
        if len(order) < need:
            raise SystemExit(f"label {label}: only {len(order)} samples, need {need}")
        train_x.append(pixels[order[: args.train_per_class]])
        train_y += [label] * args.train_per_class
        test_x.append(pixels[order[args.train_per_class : need]])
        test_y += [label] * args.test_per_class

    train_x, train_y = np.concatenate(train_x), np.asarray(train_y)
    test_x, test_y = np.concatenate(test_x), np.asarray(test_y)
    p = rng.permutation(len(train_y))
    train_x, train_y = train_x[p], train_y[p]
    p = rng.permutation(len(test_y))
    test_x, test_y = test_x[p], test_y[p]

    args.out.mkdir(parents=True, exist_ok=True)
    write_images(args.out / "train-images-idx3-ubyte", train_x)
    write_labels(args.out / "train-labels-idx1-ubyte", train_y)
    write_images(args.out / "t10k-images-idx3-ubyte", test_x)
    write_labels(args.out / "t10k-labels-idx1-ubyte", test_y)
    print(f"train {len(train_y)} test {len(test_y)} -> {args.out}")


if __name__ == "__main__":
    main()
