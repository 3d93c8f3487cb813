"""Grounding score as the oracle's outputs are shifted by increasing pixel offsets."""

from __future__ import annotations

import argparse
import tempfile
from pathlib import Path

from structimg.chartgen import export_corpus
from structimg.core import Manifest
from structimg.grounding import OracleGrounder, PerturbedGrounder, evaluate_grounding


def main(argv: list[str] | None = None) -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--manifest", type=Path, help="existing corpus manifest (default: synthesize one)")
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--offsets", default="0,1,2,5,10,25,50")
    args = ap.parse_args(argv)
    with tempfile.TemporaryDirectory() as tmp:
        path = args.manifest or export_corpus(args.n, args.seed, Path(tmp) / "corpus", workers=4)
        manifest = Manifest.load(path)
        oracle = OracleGrounder.from_manifest(manifest)
        reports = [(float(d), evaluate_grounding(PerturbedGrounder(oracle, float(d)), manifest)) for d in args.offsets.split(",")]
    cats = sorted(reports[0][1].per_category)
    print(f"{'offset':>6}  {'overall':>7}  " + "  ".join(f"{c:>13}" for c in cats))
    for d, rep in reports:
        print(f"{d:>6g}  {rep.overall:>7.3f}  " + "  ".join(f"{rep.per_category[c]:>13.3f}" for c in cats))


if __name__ == "__main__":
    main()
