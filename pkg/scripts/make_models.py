"""Write the catalog meshes (barrel, depth charge, mousetrap, smoke float) as OBJ files."""

import argparse
from pathlib import Path

from seabed_burial.models import OBJECT_DIMENSIONS, catalog_model
from seabed_burial.scene import dump_json, save_mesh, symmetry_to_json


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="models")
    ap.add_argument("--segments", type=int, default=64)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, (d, h) in OBJECT_DIMENSIONS.items():
        m = catalog_model(name, args.segments)
        save_mesh(m, out / f"{name}.obj")
        (out / f"{name}.json").write_text(
            dump_json({"diameter_m": d, "height_m": h, "symmetry": symmetry_to_json(m.symmetries)})
        )
        print(f"{name:12s} d={d:.4f} h={h:.4f} mesh diameter={m.diameter:.4f}")


if __name__ == "__main__":
    main()
