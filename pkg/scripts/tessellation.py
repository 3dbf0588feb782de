"""Polygonal versus triangulated contact surfaces on the spinning coin.

    python3 scripts/tessellation.py --steps 400 --out out/tessellation
"""
import argparse
from pathlib import Path

from hydrostep.experiments import coin_scenario, tessellation_report


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--eps0", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=400)
    p.add_argument("--resolution", type=float, default=2.4e-3)
    p.add_argument("--out", default="out/tessellation")
    args = p.parse_args()
    sc = coin_scenario(args.eps0, resolution=args.resolution, duration=args.steps * 1e-3)
    report = tessellation_report(sc, args.steps)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.to_csv(out / "coin_tessellation.csv")
    poly = report.column("solve_ms_polygonal").mean()
    tri = report.column("solve_ms_triangulated").mean()
    print(f"mean faces: polygonal {report.column('faces_polygonal').mean():.1f}, "
          f"triangulated {report.column('faces_triangulated').mean():.1f}")
    print(f"mean face ratio = {report.mean_ratio:.3f}")
    print(f"max relative net-force difference = {report.max_force_difference:.2e}")
    print(f"mean solve time: polygonal {poly:.2f} ms, triangulated {tri:.2f} ms")


if __name__ == "__main__":
    main()
