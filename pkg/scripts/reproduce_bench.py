"""Run the whole bench story through the CLI, end to end.

Designs the reference controllers, characterizes valve0 (sweep, spectral
estimate, batch fit), then uses the valve0 fit as the wrong initial model
for the iterative adaptation on valve6.  Every step leaves its CSVs and
report.txt under the output directory; the headline numbers are echoed
here.

Run:  python scripts/reproduce_bench.py [--out DIR]
"""

import argparse
import os
import sys

from valvebench.cli import main as cli


def read_report(out_dir):
    items = {}
    with open(os.path.join(out_dir, "report.txt")) as fh:
        for line in fh:
            key, _, value = line.strip().partition(" = ")
            items[key] = value
    return items


def run(args, out_dir):
    rc = cli(args + ["--out", out_dir])
    if rc != 0:
        sys.exit(f"step {' '.join(args)} failed with exit code {rc}")
    return read_report(out_dir)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="out", help="output root (default: out)")
    opts = parser.parse_args()
    root = opts.out

    pi = run(["design", "--set", "design.mode=pi"], os.path.join(root, "design_pi"))
    print(f"PI design:      r0={pi['r0']}, r1={pi['r1']}")

    rst = run(["design"], os.path.join(root, "design_rst"))
    print(f"robust RST:     max|Syp|={rst['max_syp_db']} dB, "
          f"Sup(Nyquist)={rst['sup_at_nyquist_db']} dB")

    sweep = run(["sweep"], os.path.join(root, "sweep"))
    print(f"valve0 sweep:   hysteresis width {sweep['hysteresis_width_deg']} deg")

    spectral = run(["etfe"], os.path.join(root, "etfe"))
    print(f"valve0 ETFE:    slope {spectral['slope_db_per_decade']} dB/dec, "
          f"corner {spectral['corner_rad_s']} rad/s")

    fit = run(["identify"], os.path.join(root, "identify"))
    a1, b1 = fit["theta_1"], fit["theta_2"]
    print(f"valve0 fit:     a1={a1}, b1={b1} (cost {fit['cost']})")

    adapt = run(
        [
            "adapt",
            "--set", "plant.preset=valve6",
            "--set", f"model.a={a1}",
            "--set", f"model.b={b1}",
        ],
        os.path.join(root, "adapt"),
    )
    costs = [v for k, v in adapt.items() if k.startswith("cost_iter_")]
    print(f"valve6 adapt:   tracking cost per iteration: {', '.join(costs)}")
    print(f"artifacts under {root}/")


if __name__ == "__main__":
    main()
