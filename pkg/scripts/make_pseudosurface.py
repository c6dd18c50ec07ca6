#!/usr/bin/env python3
"""Write a seeded pseudosurface JSON fixture for the holonomy command."""
import argparse
import json
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from utils.two_space import DEFAULT_GRID, PSEUDOSURFACE_KINDS, seeded_pseudosurface


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("path", help="output JSON file")
    parser.add_argument("--n", type=int, default=3)
    parser.add_argument("--m", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--kind", choices=PSEUDOSURFACE_KINDS, default="impervious")
    parser.add_argument("--grid", type=int, default=DEFAULT_GRID)
    parser.add_argument("--radius", type=float, default=0.4)
    args = parser.parse_args(argv)

    surface = seeded_pseudosurface(args.n, args.m, args.seed, args.kind, args.grid, args.radius)
    os.makedirs(os.path.dirname(os.path.abspath(args.path)), exist_ok=True)
    with open(args.path, "w", encoding="utf-8") as f:
        json.dump(surface.to_dict(), f, sort_keys=True)
    print(f"Wrote {args.kind} pseudosurface (n={args.n}, m={args.m}, N={surface.N}) to {args.path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
