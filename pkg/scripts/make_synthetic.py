"""Write a clustered two-class bag dataset as bag JSONL."""

import argparse

from bgmil.dataio import write_bags_jsonl
from bgmil.numkit import Rng
from bgmil.synthetic import clustered_bags


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out")
    ap.add_argument("--bags", type=int, default=200)
    ap.add_argument("--clusters", type=int, default=8)
    ap.add_argument("--dim", type=int, default=8)
    ap.add_argument("--bag-spread", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    ds, _ = clustered_bags(Rng(args.seed), args.bags, args.clusters, args.dim, bag_spread=args.bag_spread)
    write_bags_jsonl(ds, args.out)
    print(f"wrote {len(ds)} bags to {args.out}")


if __name__ == "__main__":
    main()
