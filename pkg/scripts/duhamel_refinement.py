"""Recomposition error of the Free/Potential/Interaction split under time-step halving.

    python scripts/duhamel_refinement.py --levels 2 3
"""
import argparse

from meanfield.acceptance import duhamel_errors


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--levels", type=int, nargs="+", default=[2, 3])
    p.add_argument("--dts", type=float, nargs="+", default=[4e-3, 2e-3, 1e-3])
    args = p.parse_args()
    for level in args.levels:
        parts = duhamel_errors(tuple(args.dts), level=level, N=level + 1)
        print(f"level {level}")
        prev = None
        for dt, part in zip(args.dts, parts):
            ratio = "" if prev is None else f"  ratio {prev / part.error:.3f}"
            print(f"  dtau={dt:<8g} error={part.error:.3e}{ratio}")
            prev = part.error


if __name__ == "__main__":
    main()
