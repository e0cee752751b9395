"""Command-line runner: simulations, check suites, the convergence study and reports."""
from __future__ import annotations

import argparse
import inspect
import sys
from pathlib import Path

from . import spectral
from .acceptance import CHECKS, SUPPLEMENTARY, CheckResult, run_check
from .core import boundary_mass, make_grid, make_state, product
from .experiments import (
    ConfigError, ExperimentConfig, Report, Table, emit_report, ground_state, run_convergence_study,
)
from .potentials import TrapSpec
from .propagators import Hamiltonian, energy_expectation, iterate_nbody
from .snapshot import write_manifest, write_snapshot

SUITES = {
    "lens": [1, 2, 3, 4],
    "marginals": [2, 9, 13],
    "residuals": [5, 6],
    "duhamel": [7, 8],
    "combinatorics": [8],
    "conservation": [9],
    "estimates": [10, 11, 12, "interaction_bound", "energy_comparison", "esy_rayleigh"],
    "spacetime": [13],
    "convergence": [14],
    "all": list(range(1, 15)),
}


def resolve_checks(names) -> list:
    out = []
    for name in names:
        if name in SUITES:
            items = SUITES[name]
        elif name in SUPPLEMENTARY:
            items = [name]
        elif name.isdigit() and int(name) in CHECKS:
            items = [int(name)]
        else:
            raise ValueError(f"unknown check name {name!r}")
        out.extend(i for i in items if i not in out)
    return out


def _key(res: CheckResult) -> str:
    slug = res.name.replace(" ", "_").replace("/", "_").replace("(", "").replace(")", "").replace(",", "")
    return f"c{res.criterion:02d}_{slug}" if res.criterion else slug


def run_suite(cfg: ExperimentConfig, names=None, echo=print) -> Report:
    """Run the named checks (suite names, criterion numbers or probe names) and collect a report."""
    items = resolve_checks(names or cfg.checks)
    report = Report("suite", inputs={"checks": [str(i) for i in items], "seed": cfg.seed})
    for item in items:
        fn = CHECKS[item] if isinstance(item, int) else SUPPLEMENTARY[item]
        kwargs = {}
        params = inspect.signature(fn).parameters
        if "seed" in params:
            kwargs["seed"] = cfg.seed
        if item == 14:
            kwargs["cfg"] = cfg
        res = run_check(item, **kwargs)
        if echo:
            echo(res.line())
        key = _key(res)
        report.checks[key] = bool(res.passed)
        for k, v in res.metrics.items():
            report.summary[f"{key}.{k}"] = v
        for t in res.tables:
            report.tables.append(Table(f"{key}_{t.name}", t.header, t.rows))
    return report


def simulate(cfg: ExperimentConfig, out_dir: Path) -> Report:
    """Trapped N-body run from the ω₀ ground state; snapshots plus an observables table."""
    g = cfg.grid
    N = cfg.N_list[0]
    grid = make_grid(g.d, g.n, g.L, N=N)
    trap = TrapSpec.isotropic(cfg.trap.omega, g.d)
    H = Hamiltonian(trap, cfg.potential.spec(N, g.d) if N > 1 else None)
    psi = make_state(grid, N, product(ground_state(grid, cfg.trap.omega0)))
    snap_dir = out_dir / "snapshots"
    snap_dir.mkdir(parents=True, exist_ok=True)
    rows, entries = [], []
    for i, state in enumerate(iterate_nbody(psi, H, cfg.solver.solver())):
        path = snap_dir / f"state_{i:05d}.mfs"
        write_snapshot(path, state)
        entries.append((path.relative_to(out_dir).as_posix(), state.time))
        rows.append((state.time, state.norm(), energy_expectation(state, H), boundary_mass(state.data, grid)))
    write_manifest(out_dir / "manifest.json", entries)
    report = Report("simulate", inputs=cfg.to_dict())
    report.tables.append(Table("observables", ["t", "norm", "energy", "boundary_mass"], rows))
    drift = max(abs(r[1] - rows[0][1]) for r in rows)
    report.summary["norm_drift"] = drift
    report.summary["energy_drift"] = max(abs(r[2] - rows[0][2]) for r in rows)
    report.checks["norm_conserved"] = drift <= 1e-10
    return report


COMMANDS = {
    "simulate": None,
    "lens-check": ["lens"],
    "marginals": ["marginals"],
    "residuals": ["residuals"],
    "duhamel-check": ["duhamel"],
    "estimates": ["estimates"],
    "convergence-study": None,
    "report": None,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="meanfield", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, help="JSON experiment config")
        s.add_argument("--out", type=Path, help="output directory (overrides the config)")
        s.add_argument("--seed", type=int, help="seed for random ensembles")
        s.add_argument("--threads", type=int, help="FFT worker threads")
        if name == "report":
            s.add_argument("--checks", nargs="+", help="suite names, criterion numbers or probe names")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig.from_dict({})
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            print("config error: seed: must be an unsigned 64-bit integer", file=sys.stderr)
            return 2
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = str(args.out)
    if args.threads is not None:
        cfg.threads = args.threads
    if cfg.threads:
        spectral.set_threads(cfg.threads)
    out = Path(cfg.out_dir)
    try:
        if args.command == "simulate":
            report = simulate(cfg, out)
        elif args.command == "convergence-study":
            report = run_convergence_study(cfg)
        elif args.command == "report":
            report = run_suite(cfg, args.checks)
        else:
            report = run_suite(cfg, COMMANDS[args.command])
            report.id = args.command.replace("-", "_")
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for path in emit_report(report, out):
        print(path)
    print("PASS" if report.passed else "FAIL")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
