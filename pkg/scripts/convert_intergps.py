"""Convert Inter-GPS problem folders into diagram PNG + JSONL pairs.

Expected input layout, one folder per problem:
    <root>/<problem_id>/img_diagram.png
    <root>/<problem_id>/logic_form.json   (uses the "point_positions" map: label -> [x, y])

Points outside the image bounds are dropped with a warning instead of being clamped,
and problems without point positions are skipped.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from structimg.core import load_png
from structimg.geomtools import GeomDiagram, diagram_from_records

log = logging.getLogger("convert_intergps")


def convert_problem(folder: Path, out_dir: Path) -> Path | None:
    png, logic = folder / "img_diagram.png", folder / "logic_form.json"
    if not (png.is_file() and logic.is_file()):
        log.warning("%s: missing img_diagram.png or logic_form.json", folder.name)
        return None
    positions = json.loads(logic.read_text(encoding="utf-8")).get("point_positions") or {}
    if not positions:
        log.warning("%s: no point_positions", folder.name)
        return None
    image = load_png(png)
    records = []
    for label, xy in positions.items():
        x, y = float(xy[0]), float(xy[1])
        if 0 <= x < image.width and 0 <= y < image.height:
            records.append({"label": str(label).strip(), "x": x, "y": y})
        else:
            log.warning("%s: point %s at (%.1f, %.1f) lies outside the %dx%d image, dropped", folder.name, label, x, y, image.width, image.height)
    diagram: GeomDiagram = diagram_from_records(image, records)
    out_png, _ = diagram.save(out_dir / f"{folder.name}.png")
    return out_png


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("root", type=Path, help="directory of Inter-GPS problem folders")
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--limit", type=int)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args.out.mkdir(parents=True, exist_ok=True)
    folders = sorted(p for p in args.root.iterdir() if p.is_dir())[: args.limit]
    written = sum(convert_problem(f, args.out) is not None for f in folders)
    print(f"converted {written}/{len(folders)} problems into {args.out}")
    return 0 if written else 1


if __name__ == "__main__":
    sys.exit(main())
