"""Burial-error sweeps over burial fraction and outlier fraction; one CSV per axis."""

import argparse
import csv
import math
from pathlib import Path

from seabed_burial.experiments import SWEEP_COLUMNS, sweep
from seabed_burial.models import catalog_model
from seabed_burial.pipeline import PipelineConfig
from seabed_burial.synth import SynthConfig

AXES = {
    "burial_fraction": [0.1, 0.3, 0.5, 0.7, 0.9],
    "outlier_fraction": [0.0, 0.2, 0.4],
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model", default="barrel")
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--rot-noise-deg", type=float, default=2.0)
    ap.add_argument("--trans-noise", type=float, default=0.02)
    ap.add_argument("--outliers", type=float, default=0.4, help="outlier fraction when it is not the swept axis")
    ap.add_argument("--axes", nargs="+", default=list(AXES), choices=list(AXES))
    ap.add_argument("--out", default="results")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    model = catalog_model(args.model)
    base = SynthConfig(hypothesis_noise=(math.radians(args.rot_noise_deg), args.trans_noise), outlier_fraction=args.outliers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for axis in args.axes:
        rows = sweep(model, base, axis, AXES[axis], range(args.seeds), PipelineConfig(), args.workers)
        with open(out / f"sweep_{axis}.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
        for r in rows:
            med = r["median_depth_error_m"]
            med = f"{100 * med:6.2f} cm" if med != "" else "   n/a"
            print(f"{axis}={r['value']:<5} median depth error {med}  failures {r['failures']}/{r['runs']}")


if __name__ == "__main__":
    main()
