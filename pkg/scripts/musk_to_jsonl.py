"""Convert a MUSK-style attribute file to bag JSONL.

Expects comma-separated rows ``bag_name, instance_name, f1, ..., fd, label``
as in the UCI clean1.data / clean2.data files. Rows sharing a bag name form
one bag; a bag is positive when any of its rows is.
"""

import argparse
import csv

import numpy as np

from bgmil.dataio import Bag, BagDataset, write_bags_jsonl


def read_musk(path):
    feats, labels, order = {}, {}, []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or row[0].startswith("@") or row[0].startswith("%"):
                continue  # ARFF headers and comments
            if len(row) < 4:
                raise ValueError(f"{path}:{lineno}: expected name, instance, features, label")
            name = row[0].strip()
            if name not in feats:
                feats[name], labels[name] = [], 0
                order.append(name)
            feats[name].append([float(v) for v in row[2:-1]])
            labels[name] = max(labels[name], int(float(row[-1])))
    bags = [Bag(name, np.array(feats[name]), labels[name]) for name in order]
    return BagDataset(bags, np.arange(len(bags)), "categorical", 2)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("source")
    ap.add_argument("out")
    args = ap.parse_args()
    ds = read_musk(args.source)
    write_bags_jsonl(ds, args.out)
    pos = int(ds.labels().sum())
    print(f"wrote {len(ds)} bags ({pos} positive, {sum(b.n for b in ds.bags)} instances) to {args.out}")


if __name__ == "__main__":
    main()
