"""Command-line driver.

Exit status: 0 success, 1 invalid configuration or usage, 2 numerical failure.
"""
import argparse
import sys
from pathlib import Path

from . import experiment, tables
from .config import dump_config, load_config
from .errors import NumericalError
from .inversion import LOG_COLUMNS
from .process import DamageProcess

DIAGNOSTICS = ("derivative", "adjoint", "cone", "contraction", "spectrum", "semiconvergence")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="INI configuration file")
    common.add_argument("--out", help="output directory (default: experiment.out)")
    common.add_argument("--seed", type=int, help="override experiment.seed")
    common.add_argument("--no-timing", action="store_true", help="write 0 for wall-clock columns")

    parser = _Parser(prog="damageid", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("forward", parents=[common], help="solve the forward problem for the truth process")
    p = sub.add_parser("synthesize", parents=[common], help="write noisy synthetic data")
    p.add_argument("--noise", type=float, help="relative noise level (default: landweber.noise)")
    p = sub.add_parser("invert", parents=[common], help="projected Landweber reconstruction")
    p.add_argument("--noise", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--data", help="measurement table from 'synthesize' (default: synthesize in memory)")
    p = sub.add_parser("diagnose", parents=[common], help="verification studies")
    p.add_argument("which", choices=DIAGNOSTICS)
    p.add_argument("--trials", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--max-iter", type=int)
    return parser


def _prepare(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.values["experiment"]["seed"] = args.seed
    if args.no_timing:
        cfg.values["experiment"]["timing"] = False
    if getattr(args, "noise", None) is not None:
        cfg.values["landweber"]["noise"] = args.noise
    out = Path(args.out or cfg["experiment"]["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "effective.ini").write_text(dump_config(cfg), encoding="utf-8")
    return cfg, out


def cmd_forward(cfg, out, args):
    model = cfg.forward_model()
    state = model.solve(cfg.truth(), cfg.forward_config())
    path = tables.write_state(out / "state.csv", state, model.mesh, cfg.hash())
    print(f"forward: {state.sweeps} sweeps, max d = {state.d.max():.6g}, wrote {path}")


def cmd_synthesize(cfg, out, args):
    model = cfg.forward_model()
    meas, _ = experiment.synthesize_data(model, cfg.truth(), cfg["landweber"]["noise"],
                                         cfg["experiment"]["seed"], cfg.forward_config())
    path = tables.write_measurement(out / "measurement.csv", meas, model.grid.times, model.mesh,
                                    cfg.hash(), seed=cfg["experiment"]["seed"])
    print(f"synthesize: delta = {meas.delta:.6e}, wrote {path}")


def cmd_invert(cfg, out, args):
    meas = tables.read_measurement(args.data, cfg["domain"]["dim"]) if args.data else None
    res = experiment.invert(cfg, meas=meas, max_iter=args.max_iter)
    h = cfg.hash()
    tables.write_table(out / "iterations.csv", LOG_COLUMNS, res.log, h, status=res.status)
    tables.write_process(out / "process.csv", res.final, h)
    last = res.log[-1]
    print(f"invert: {res.status}, stopped={res.stopped} at iteration {res.stop_index}, "
          f"residual {last[1]:.6e}")
    for msg in res.warnings:
        print(f"warning: {msg}", file=sys.stderr)
    if res.status != "ok":
        print(f"error: {res.message}", file=sys.stderr)
        return 2
    return 0


def cmd_diagnose(cfg, out, args):
    trials = args.trials or cfg["experiment"]["trials"]
    seed = cfg["experiment"]["seed"]
    which = args.which
    if which == "derivative":
        res = experiment.taylor_study(cfg, trials=trials, seed=seed)
        summary = f"slopes min {res['slopes'].min():.4f} max {res['slopes'].max():.4f}"
    elif which == "adjoint":
        res = experiment.adjoint_study(cfg, trials=trials, seed=seed)
        summary = f"max relative mismatch {res['max']:.3e}"
    elif which == "cone":
        res = experiment.cone_study(cfg, trials=trials, seed=seed)
        summary = "max ratio " + ", ".join(f"{s:g}: {v:.4e}" for s, v in res["max_ratio"].items())
    elif which == "contraction":
        res = experiment.contraction_study(cfg, trials=trials, seed=seed)
        summary = "q " + ", ".join(f"{lam:g}: {q:.4e}" for lam, q in res["rows"])
    elif which == "spectrum":
        res = experiment.spectrum_study(cfg)
        s = res["sigma"]
        summary = f"sigma_1 {s[0]:.4e}, sigma_{len(s)}/sigma_1 {s[-1] / s[0]:.3e}"
    else:
        noise = cfg["landweber"]["noise"] if args.noise is not None else 0.05
        res = experiment.semiconvergence_study(cfg, noise=noise, max_iter=args.max_iter)
        summary = f"error minimum at iteration {res['argmin']}, discrepancy index {res['discrepancy_index']}"
    tables.write_table(out / f"diagnose_{which}.csv", res["columns"], res["rows"], cfg.hash())
    print(f"diagnose {which}: {summary}")


COMMANDS = {"forward": cmd_forward, "synthesize": cmd_synthesize, "invert": cmd_invert,
            "diagnose": cmd_diagnose}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        cfg, out = _prepare(args)
        return COMMANDS[args.command](cfg, out, args) or 0
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
