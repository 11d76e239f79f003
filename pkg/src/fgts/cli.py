"""Command-line interface.

Every subcommand prints one JSON status line on stdout when it succeeds and
exits 0.  Failures print ``{"status": "error", ...}`` on stderr and exit 1
(usage errors exit 2).  Output paths are relative to the output directory,
which ``$FGTS_OUTPUT_DIR`` overrides.
"""

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .forecast import rolling_forecast
from .gan import TrainConfig, TrainedGenerator, train
from .io import load_container, load_data, save_container, save_panel, save_series, write_rows
from .metrics import nrmse, psnr, ssim
from .simgen import PanelDataset, conditional_mean_oracle, make_coefficients, simulate, simulate_panel

FORECAST_INDEX_COLUMNS = ["t_new", "s", "mode", "J"]
EVAL_COLUMNS = ["t_new", "s", "mode", "target", "nrmse", "ssim", "psnr"]


class CLIError(Exception):
    pass


def _parse_sets(pairs):
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise CLIError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _out_path(args, name):
    path = Path(name)
    if path.is_absolute():
        return path
    base = harness.resolve_output_dir(args.output_dir)
    base.mkdir(parents=True, exist_ok=True)
    return base / path


def _ok(**fields):
    print(json.dumps({"status": "ok", **{k: str(v) if isinstance(v, Path) else v for k, v in fields.items()}}))
    return 0


def _train_config(args):
    values = harness.parse_config_text(Path(args.config).read_text()) if args.config else {}
    values.update(_parse_sets(args.set))
    names = {f.name for f in dataclasses.fields(TrainConfig)}
    unknown = set(values) - names
    if unknown:
        raise CLIError(f"unknown training keys {sorted(unknown)}")
    defaults = TrainConfig()
    kw = {k: harness._coerce(v, getattr(defaults, k) if getattr(defaults, k) is not None else 0.0)
          for k, v in values.items()}
    return TrainConfig(**kw)


# -- subcommands -------------------------------------------------------------

def cmd_simulate(args):
    coeffs = make_coefficients(args.case, args.p, args.coeff_seed, args.spectral_radius)
    path = _out_path(args, args.out)
    if args.n > 1:
        data = simulate_panel(coeffs, args.n, args.T, args.seed)
        save_panel(path, data, coeffs)
    else:
        data = simulate(coeffs, args.T, args.seed)
        save_series(path, data, coeffs)
    return _ok(command="simulate", path=path, case=coeffs.case_id, T=args.T, n=args.n)


def cmd_train(args):
    data, coeffs = load_data(args.data)
    config = _train_config(args)
    lag = data.subjects[0].lag if isinstance(data, PanelDataset) else data.lag
    config = dataclasses.replace(config, lag=lag)
    if args.T is not None:
        data = (PanelDataset([x.head(args.T) for x in data.subjects]) if isinstance(data, PanelDataset)
                else data.head(args.T))
    gen = train(data, config)
    path = gen.save(_out_path(args, args.out))
    trace = gen.write_trace_csv(_out_path(args, args.trace))
    return _ok(command="train", path=path, trace=trace, heads=config.horizon)


def cmd_forecast(args):
    gen = TrainedGenerator.load(args.model)
    data, _ = load_data(args.data)
    if isinstance(data, PanelDataset):
        raise CLIError("forecast expects a single series")
    horizons = range(1, gen.horizon + 1) if args.horizon is None else [args.horizon]
    modes = ("iter", "sstep") if args.mode == "both" else (args.mode,)
    arrays, index = {}, []
    for mode in modes:
        for s in horizons:
            means = rolling_forecast(gen, data, args.t_new, s, mode, args.draws, args.seed, args.train_end)
            for i, m in enumerate(means):
                arrays[f"{mode}/s{s}/t{i + 1}"] = m
                index.append({"t_new": i + 1, "s": s, "mode": mode, "J": args.draws})
    T = data.T - args.t_new if args.train_end is None else args.train_end
    path = save_container(_out_path(args, args.out), arrays,
                          {"kind": "forecasts", "train_end": T, "draws": args.draws, "seed": args.seed})
    idx = write_rows(_out_path(args, args.index), FORECAST_INDEX_COLUMNS, index)
    return _ok(command="forecast", path=path, index=idx, forecasts=len(index))


def cmd_evaluate(args):
    arrays, meta = load_container(args.forecasts)
    if meta.get("kind") != "forecasts":
        raise CLIError(f"{args.forecasts} does not hold forecasts")
    data, coeffs = load_data(args.data)
    frames = data.frames
    T = int(meta["train_end"])
    use_oracle = coeffs is not None and not args.realized
    rows = []
    for name in sorted(arrays, key=lambda n: (n.split("/")[0], int(n.split("/")[1][1:]), int(n.split("/")[2][1:]))):
        mode, s_tag, t_tag = name.split("/")
        s, t_new = int(s_tag[1:]), int(t_tag[1:])
        if use_oracle:
            origin = T + t_new - s
            target = conditional_mean_oracle(coeffs, frames[origin - coeffs.lag + 1: origin + 1], s,
                                                     M=args.oracle_draws, seed=args.seed)
        else:
            target = frames[T + t_new]
        est = arrays[name]
        rows.append({"t_new": t_new, "s": s, "mode": mode, "target": "oracle" if use_oracle else "realized",
                     "nrmse": harness._fmt(nrmse(est, target)), "ssim": harness._fmt(ssim(est, target)),
                     "psnr": harness._fmt(psnr(est, target))})
    path = write_rows(_out_path(args, args.out), EVAL_COLUMNS, rows)
    summary = {}
    for r in rows:
        summary.setdefault(f"{r['mode']}/s{r['s']}", []).append(float(r["nrmse"]))
    return _ok(command="evaluate", path=path,
               mean_nrmse={k: round(float(np.mean(v)), 6) for k, v in summary.items()})


def cmd_run(args):
    overrides = _parse_sets(args.set)
    if args.output_dir:
        overrides.setdefault("output_dir", args.output_dir)
    config = harness.load_config(args.config, overrides)
    out = harness.resolve_output_dir(config.output_dir)
    harness.run_experiment(config, out_dir=out)
    return _ok(command="run", path=out / "results.csv", replications=config.replications)


def cmd_reproduce_table(args):
    overrides = {}
    if args.config:
        overrides.update(harness.parse_config_text(Path(args.config).read_text()))
    overrides.update(_parse_sets(args.set))
    cases = args.cases.split(",") if args.cases else None
    rows = harness.reproduce_table(args.study, args.scale, args.master_seed, args.output_dir,
                                   overrides, cases)
    out = harness.resolve_output_dir(args.output_dir)
    return _ok(command="reproduce-table", path=out / "table.csv", rows=len(rows))


def cmd_selftest(args):
    from .selftest import run_all

    results = run_all()
    for name, ok, detail, sec in results:
        print(f"{'PASS' if ok else 'FAIL'} {name} {detail} ({sec:.2f}s)")
    failed = [name for name, ok, _, _ in results if not ok]
    if failed:
        raise CLIError(f"selftest failed: {', '.join(failed)}")
    return _ok(command="selftest", checks=len(results))


# -- parser ------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="fgts", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--output-dir", default=None, help="output directory (env FGTS_OUTPUT_DIR wins)")
        p.set_defaults(fn=fn)
        return p

    p = add("simulate", cmd_simulate, "simulate a series (n=1) or panel")
    p.add_argument("--case", default="1")
    p.add_argument("--p", type=int, default=32)
    p.add_argument("--T", type=int, default=1000)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--coeff-seed", type=int, default=0)
    p.add_argument("--spectral-radius", type=float, default=0.9)
    p.add_argument("--out", default="series.npz")

    p = add("train", cmd_train, "train generator heads on a series or panel")
    p.add_argument("--data", required=True)
    p.add_argument("--T", type=int, default=None, help="train on X_0..X_T only")
    p.add_argument("--config", default=None, help="key=value file of training settings")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--out", default="generator.npz")
    p.add_argument("--trace", default="loss_trace.csv")

    p = add("forecast", cmd_forecast, "rolling mean-of-draws forecasts")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--t-new", type=int, default=100)
    p.add_argument("--train-end", type=int, default=None)
    p.add_argument("--horizon", type=int, default=None, help="single s (default: all trained heads)")
    p.add_argument("--mode", choices=("iter", "sstep", "both"), default="both")
    p.add_argument("--draws", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="forecasts.npz")
    p.add_argument("--index", default="forecasts_index.csv")

    p = add("evaluate", cmd_evaluate, "score forecasts (NRMSE, SSIM, PSNR)")
    p.add_argument("--forecasts", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--realized", action="store_true", help="score against realized frames, not the oracle mean")
    p.add_argument("--oracle-draws", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="evaluation.csv")

    p = add("run", cmd_run, "run one experiment from a key=value config")
    p.add_argument("--config", default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")

    p = add("reproduce-table", cmd_reproduce_table, "reproduce the Study I/II NRMSE table")
    p.add_argument("--study", choices=("I", "II"), default="I")
    p.add_argument("--scale", choices=tuple(harness.SCALES), default="desk")
    p.add_argument("--master-seed", type=int, default=0)
    p.add_argument("--cases", default=None, help="comma-separated subset, e.g. 1,2")
    p.add_argument("--config", default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")

    add("selftest", cmd_selftest, "run the fdiv / Lyapunov / gradient property checks")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except Exception as exc:
        print(json.dumps({"status": "error", "command": args.command, "error": type(exc).__name__,
                          "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
