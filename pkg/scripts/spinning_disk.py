"""Spinning-coin benchmark: terminal ratio v/(omega R) for several initial ratios.

Writes one trajectory CSV per initial ratio plus ``spinning_disk.csv`` with
the terminal ratios and the spread relative to a fine time-step reference.

    python3 scripts/spinning_disk.py --out out/disk
"""
import argparse
import csv
from pathlib import Path

from hydrostep.experiments import coin_scenario, run_scenario, spinning_disk_epsilon
from hydrostep.experiments.scenario import COIN_RADIUS


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--eps0", type=float, nargs="+", default=[0.1, 0.5, 1.0, 2.0, 10.0])
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--reference-dt", type=float, default=1e-4,
                   help="time step of the eps0 = 1 reference run (0 to skip)")
    p.add_argument("--resolution", type=float, default=2.4e-3)
    p.add_argument("--cutoff", type=float, default=0.5)
    p.add_argument("--out", default="out/disk")
    args = p.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    rows = []
    for eps0 in args.eps0:
        sc = coin_scenario(eps0, dt=args.dt, resolution=args.resolution,
                           stop_spin_below=args.cutoff)
        rec = run_scenario(sc)
        rec.to_csv(out / f"{sc.name}.csv")
        eps = spinning_disk_epsilon(rec, COIN_RADIUS, args.cutoff)
        rows.append((eps0, eps, rec.t[-1], rec.retries))
        print(f"eps0 = {eps0:5g}  eps* = {eps:.5f}  stopped at t = {rec.t[-1]:.3f} s")

    values = [r[1] for r in rows]
    print(f"spread (max - min) = {max(values) - min(values):.5f}")
    if args.reference_dt > 0:
        ref = spinning_disk_epsilon(
            run_scenario(coin_scenario(1.0, dt=args.reference_dt, resolution=args.resolution,
                                       stop_spin_below=args.cutoff)), COIN_RADIUS, args.cutoff)
        print(f"reference eps* (dt = {args.reference_dt:g}) = {ref:.5f}, "
              f"spread = {100 * (max(values) - min(values)) / ref:.2f}%")
    with open(out / "spinning_disk.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["eps0", "eps_terminal", "t_stop", "retries"])
        for eps0, eps, t_stop, retries in rows:
            w.writerow([f"{eps0:.17g}", f"{eps:.17g}", f"{t_stop:.17g}", retries])


if __name__ == "__main__":
    main()
