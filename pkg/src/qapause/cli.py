"""Command line entry point: ``qapause <command> [--config FILE] ...``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import experiment as ex
from .oracle import FitError, fit_saturation


def _config(args) -> ex.ExperimentConfig:
    cfg = ex.load_config(args.config)
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.workers is not None:
        over["workers"] = args.workers
    if args.out is not None:
        over["out"] = args.out
    return cfg.replace(**over) if over else cfg


def cmd_spectrum(args, cfg):
    text = ex.emit_spectrum(cfg, args.levels, args.points)
    ex.atomic_write(Path(cfg.out) / "spectrum.csv", text)
    for line in text.splitlines():
        if line.startswith("# minimal gap"):
            print(line[2:])


def cmd_anneal(args, cfg):
    res = ex.run_anneal(cfg, cfg.out)
    print(f"fidelity = {res.fidelity:.5f} +- {res.sigma:.5f}  (M={res.trajectories}, {res.wall_clock:.1f} s)")


def cmd_sweep(args, cfg):
    if args.preset:
        s_grid, l_grid = ex.SWEEP_PRESETS[args.preset]
        cfg = cfg.replace(sweep_s=s_grid, sweep_l=l_grid)
        if args.preset == "reduced":
            cfg = cfg.replace(trajectories=min(cfg.trajectories, 1000))
    cells = ex.run_sweep(cfg, cfg.out, resume=args.resume, log=print)
    ls, s_opt, fid, sig = ex.peak_fidelities(cells)
    for row in zip(ls, s_opt, fid, sig):
        print("l_p={:g} s_opt={:.4g} peak={:.4f} +- {:.4f}".format(*row))


def cmd_validate(args, cfg):
    text = ex.validity_report(cfg)
    ex.atomic_write(Path(cfg.out) / "validity.txt", text)
    sys.stdout.write(text)


def cmd_oracle(args, cfg):
    rows, text = ex.oracle_compare(cfg)
    ex.atomic_write(Path(cfg.out) / "oracle_compare.csv", text)
    worst = float(rows[:, 5].max())
    print(f"max z-score {worst:.3g} over {len(rows)} checkpoints -> {'PASS' if worst <= 3 else 'FAIL'}")


def cmd_fit(args, cfg):
    src = Path(args.input) if args.input else Path(cfg.out) / "sweep.csv"
    ls, s_opt, fid, _ = ex.peak_fidelities(ex.read_sweep(src))
    keep = ls >= args.l0
    fit = fit_saturation(ls[keep], fid[keep], l0=args.l0)
    text = fit.text()
    ex.atomic_write(Path(cfg.out) / "fit.txt", text)
    sys.stdout.write(text)


COMMANDS = {
    "spectrum": cmd_spectrum,
    "anneal": cmd_anneal,
    "sweep": cmd_sweep,
    "validate": cmd_validate,
    "oracle-compare": cmd_oracle,
    "fit": cmd_fit,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML experiment file (defaults to the 20-qubit p-spin instance)")
    common.add_argument("--seed", type=int, help="master seed (u64)")
    common.add_argument("--workers", type=int, help="worker processes")
    common.add_argument("--resume", action="store_true", help="skip sweep cells already on disk")
    common.add_argument("--out", help="output directory")
    parser = argparse.ArgumentParser(prog="qapause", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("spectrum", parents=[common], help="lowest levels of H_Q(s) and the minimal gap")
    p.add_argument("--levels", type=int)
    p.add_argument("--points", type=int)
    sub.add_parser("anneal", parents=[common], help="one dissipative anneal, averaged over trajectories")
    p = sub.add_parser("sweep", parents=[common], help="fidelity over a (s_p, l_p) pause grid")
    p.add_argument("--preset", choices=sorted(ex.SWEEP_PRESETS), help="replace the grid with a built-in one")
    sub.add_parser("validate", parents=[common], help="weak-coupling / Markov validity report")
    sub.add_parser("oracle-compare", parents=[common], help="trajectories against the dense integrator")
    p = sub.add_parser("fit", parents=[common], help="saturation fit of peak fidelity versus pause length")
    p.add_argument("--input", help="sweep CSV (default: <out>/sweep.csv)")
    p.add_argument("--l0", type=float, default=100.0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        COMMANDS[args.command](args, cfg)
    except (ValueError, OSError, FitError) as err:
        print(f"qapause {args.command}: error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
