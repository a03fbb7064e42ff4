"""Bounds for a synthetic yearly series of grouped tables, run through the CLI."""

import argparse
import json
import tempfile
from pathlib import Path

import numpy as np

from ineqbounds.cli import run

BRACKETS = [(0, 10), (10, 25), (25, 50), (50, 100), (100, None)]


def write_year(folder: Path, year: int, rng) -> None:
    drift = np.array([0.35, 0.3, 0.2, 0.1, 0.05]) + 0.01 * (year - 2000) * np.array(
        [-1, -0.5, 0.5, 0.5, 0.5])
    counts = rng.multinomial(2000, drift / drift.sum())
    lines = ["lower,upper,count"]
    lines += [f"{lo},{'' if hi is None else hi},{c}" for (lo, hi), c in zip(BRACKETS, counts)]
    (folder / f"year_{year}.csv").write_text("\n".join(lines) + "\n")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--years", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--index", default="gini", choices=["gini", "hoover"])
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    with tempfile.TemporaryDirectory() as tmp:
        folder = Path(tmp)
        for year in range(2000, 2000 + args.years):
            write_year(folder, year, rng)
        out = folder / "series.json"
        code = run(["series", "--input", str(folder), "--index", args.index,
                    "--output", str(out)])
        docs = json.loads(out.read_text())
    print("year   lower    upper    width")
    for doc in docs:
        if "error" in doc:
            print(f"{doc['file']}: {doc['error']}")
            continue
        year = Path(doc["file"]).stem.split("_")[1]
        print(f"{year}  {doc['lower']:.4f}  {doc['upper']:.4f}  {doc['width']:.4f}")
    raise SystemExit(code)


if __name__ == "__main__":
    main()
