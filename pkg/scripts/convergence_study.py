"""N-convergence study: trace distance of the k-particle marginals to the NLS product state.

    python scripts/convergence_study.py --config configs/convergence_default.json --out out/convergence
"""
import argparse
import time
from pathlib import Path

from meanfield.experiments import ExperimentConfig, emit_report, run_convergence_study


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", type=Path, help="JSON experiment config (defaults if omitted)")
    p.add_argument("--out", type=Path, default=Path("out/convergence"))
    args = p.parse_args()
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    t0 = time.perf_counter()
    rep = run_convergence_study(cfg, progress=lambda N, t: print(f"N={N} t={t:.3f} ({time.perf_counter() - t0:.0f}s)", flush=True))
    rows = rep.tables[0].rows
    t_end = max(r[1] for r in rows)
    print(f"\ntrace distance at t={t_end:g}")
    print("N   " + "  ".join(f"k={k:<10d}" for k in cfg.k_list))
    for N in cfg.N_list:
        vals = {k: d for NN, t, k, d in rows if NN == N and t == t_end}
        print(f"{N:<3d} " + "  ".join(f"{vals[k]:<12.6g}" for k in cfg.k_list))
    print(rep.summary)
    print(rep.checks)
    for path in emit_report(rep, args.out):
        print(path)


if __name__ == "__main__":
    main()
