"""Legend-mask precision and recall against renderer ground truth across color tolerances."""

from __future__ import annotations

import argparse

import numpy as np

from structimg.chartgen import synth_single
from structimg.charttools import legend_mask
from structimg.grounding import OracleGrounder


def main(argv: list[str] | None = None) -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--charts", type=int, default=20, help="number of two-series charts")
    ap.add_argument("--taus", default="5,10,20,30,45,60")
    args = ap.parse_args(argv)
    charts, i = [], 0
    while len(charts) < args.charts:
        c = synth_single(args.seed, i)
        if len(c.series_masks) == 2:
            charts.append(c)
        i += 1
    print(f"{len(charts)} two-series charts from seed {args.seed} (indices 0..{i - 1})")
    print(f"{'tau':>5}  {'min P':>7}  {'mean P':>7}  {'min R':>7}  {'mean R':>7}")
    for tau in (float(t) for t in args.taus.split(",")):
        ps, rs = [], []
        for c in charts:
            g = OracleGrounder.from_annotations(c.image, c.annotations)
            for name, truth in c.series_masks.items():
                mask, _, _ = legend_mask(c.image, name, g, tau=tau)
                tp = int((mask & truth).sum())
                ps.append(tp / max(1, int(mask.sum())))
                rs.append(tp / max(1, int(truth.sum())))
        print(f"{tau:>5g}  {min(ps):>7.4f}  {np.mean(ps):>7.4f}  {min(rs):>7.4f}  {np.mean(rs):>7.4f}")


if __name__ == "__main__":
    main()
