#!/usr/bin/env python3
"""Write gzipped IDX files for the desk-scale MNIST runs.

Reads the four raw IDX files from SRC and writes to OUT:
  train-images-idx3-ubyte.gz / train-labels-idx1-ubyte.gz  (first --train-limit samples)
  t10k-images-idx3-ubyte.gz  / t10k-labels-idx1-ubyte.gz   (unchanged)
"""
import argparse
import gzip
import os
import struct


def read_idx(path):
    with open(path, "rb") as f:
        data = f.read()
    magic = struct.unpack(">I", data[:4])[0]
    ndim = magic & 0xFF
    dims = struct.unpack(">" + "I" * ndim, data[4:4 + 4 * ndim])
    return magic, list(dims), data[4 + 4 * ndim:]


def write_idx_gz(path, magic, dims, payload):
    header = struct.pack(">I", magic) + struct.pack(">" + "I" * len(dims), *dims)
    # mtime=0 keeps the archive byte-stable across regenerations
    with open(path, "wb") as raw:
        with gzip.GzipFile(fileobj=raw, mode="wb", mtime=0, filename="") as f:
            f.write(header + payload)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("src")
    ap.add_argument("out")
    ap.add_argument("--train-limit", type=int, default=10000)
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    for split, limit in (("train", args.train_limit), ("t10k", None)):
        for kind, suffix in (("images", "idx3-ubyte"), ("labels", "idx1-ubyte")):
            name = f"{split}-{kind}-{suffix}"
            magic, dims, payload = read_idx(os.path.join(args.src, name))
            if limit is not None and limit < dims[0]:
                per_item = len(payload) // dims[0]
                payload = payload[: limit * per_item]
                dims[0] = limit
            write_idx_gz(os.path.join(args.out, name + ".gz"), magic, dims, payload)
            print(f"wrote {name}.gz ({dims[0]} items)")


if __name__ == "__main__":
    main()
