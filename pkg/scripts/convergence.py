"""Time-step and grid convergence of the coin trajectory.

    python3 scripts/convergence.py --variable dt --out out/convergence
    python3 scripts/convergence.py --variable dx --workers 2
"""
import argparse
from pathlib import Path

from hydrostep.experiments import coin_scenario, convergence_study

DEFAULTS = {
    # values, reference, simulated interval (s)
    "dt": ([4e-3, 2e-3, 1e-3, 5e-4], 5e-5, 0.2),
    "dx": ([9.6e-3, 4.8e-3, 2.4e-3], 2.4e-4, 0.1),
}


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--variable", choices=sorted(DEFAULTS), default="dt")
    p.add_argument("--values", type=float, nargs="+", default=None)
    p.add_argument("--reference", type=float, default=None)
    p.add_argument("--duration", type=float, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="out/convergence")
    args = p.parse_args()
    values, reference, duration = DEFAULTS[args.variable]
    values = args.values or values
    reference = args.reference or reference
    duration = args.duration or duration

    base = coin_scenario(1.0, duration=duration, stop_spin_below=None)
    result = convergence_study(base, args.variable, values, reference, workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result.to_csv(out / f"coin_{args.variable}_study.csv")
    for h, e in zip(result.values, result.errors):
        print(f"{args.variable} = {h:.3g}  relative error = {e:.4e}")
    print(f"log-log slope = {result.slope:.3f}")


if __name__ == "__main__":
    main()
