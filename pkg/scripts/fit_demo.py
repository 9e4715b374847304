"""Generate Kolmogorov derivative norms, save them as CSV and fit them with ``gevrey-lab fit``.

Usage: python3 scripts/fit_demo.py [s] [outdir]
"""
import csv
import sys
from pathlib import Path

from gevrey_kinetic import cli
from gevrey_kinetic.experiments import gevrey_index


def main(argv):
    s = float(argv[0]) if argv else 0.5
    out = Path(argv[1] if len(argv) > 1 else "runs/fit_demo")
    out.mkdir(parents=True, exist_ok=True)
    res = gevrey_index(s)
    data = out / "norms.csv"
    with open(data, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["m", "norm"])
        for row in res.rows:
            w.writerow([row["m"], repr(row["norm"])])
    print(f"target tau = {1 / (2 * s):.4f}")
    return cli.main(["fit", "--set", f"input={data}", "--set", "kind=gevrey", "--set", "m_min=4",
                     "--out", str(out / "fit"), "--svg"])


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
