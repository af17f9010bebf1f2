#!/usr/bin/env python3
"""Reference metrics for a dataset directory written by `sdformer synth`.

Evaluates a baseline predictor straight from the PGM files, independently of
the C++ code, and prints the pixel-pooled report as JSON.

    oracle_metrics.py DATASET [--predictor mean|nearest] [--prediction-dir DIR]

`mean` predicts the mean of all valid ground-truth pixels in the dataset;
`nearest` copies the closest valid sparse pixel (Euclidean). With
--prediction-dir, <id>.pgm files there are scored instead.
"""

import argparse
import json
import pathlib
import sys

import numpy as np
from scipy import ndimage

CLAMP = 1e-3


def read_pgm(path):
    data = pathlib.Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end])
        pos = end
    magic, width, height, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic != b"P5" or maxval != 65535:
        raise ValueError(f"{path}: expected a 16-bit P5 file")
    raw = np.frombuffer(data[pos + 1:], dtype=">u2")
    if raw.size != width * height:
        raise ValueError(f"{path}: wrong payload size")
    return raw.reshape(height, width).astype(np.float64) / 256.0


def nearest_fill(sparse):
    invalid = ~(sparse > 0)
    if invalid.all():
        return np.zeros_like(sparse)
    _, (rows, cols) = ndimage.distance_transform_edt(invalid, return_indices=True)
    return sparse[rows, cols]


def pooled_metrics(preds, gts):
    p = np.concatenate([x.ravel() for x in preds])
    g = np.concatenate([x.ravel() for x in gts])
    valid = g > 0
    p, g = p[valid], g[valid]
    if g.size == 0:
        raise ValueError("no valid pixels")
    err = p - g
    positive = p > 0
    inv_p = 1.0 / np.where(positive, p, CLAMP)
    ratio = np.where(positive, np.maximum(g / np.where(positive, p, 1), p / g), np.inf)
    return {
        "rmse": float(np.sqrt(np.mean(err ** 2))),
        "mae": float(np.mean(np.abs(err))),
        "irmse": float(1000 * np.sqrt(np.mean((inv_p - 1 / g) ** 2))),
        "imae": float(1000 * np.mean(np.abs(inv_p - 1 / g))),
        "rel": float(np.mean(np.abs(err) / g)),
        "d1": float(100 * np.mean(ratio < 1.25)),
        "d2": float(100 * np.mean(ratio < 1.25 ** 2)),
        "d3": float(100 * np.mean(ratio < 1.25 ** 3)),
        "pixels": int(g.size),
        "samples": len(gts),
        "warnings": int(np.count_nonzero(~positive)),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("dataset", type=pathlib.Path)
    parser.add_argument("--predictor", choices=["mean", "nearest"], default="mean")
    parser.add_argument("--prediction-dir", type=pathlib.Path)
    args = parser.parse_args()

    ids = [line.strip() for line in (args.dataset / "index.txt").read_text().splitlines() if line.strip()]
    if not ids:
        sys.exit("empty dataset")
    gts = [read_pgm(args.dataset / f"{i}_gt.pgm") for i in ids]
    if args.prediction_dir:
        preds = [read_pgm(args.prediction_dir / f"{i}.pgm") for i in ids]
    elif args.predictor == "nearest":
        preds = [nearest_fill(read_pgm(args.dataset / f"{i}_sparse.pgm")) for i in ids]
    else:
        values = np.concatenate([g[g > 0] for g in gts])
        preds = [np.full_like(g, values.mean()) for g in gts]
    print(json.dumps(pooled_metrics(preds, gts), indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
