"""Command line driver: ``c2polab gen | train | eval``.

Exit codes:
    0  success
    1  training stopped on the epoch budget before the cost was stable
       (outputs are still written)
    2  argument / configuration error
    3  numerical failure (generation stalled, training diverged, ...)
    4  I/O failure, including refusal to overwrite an existing output
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .channel import load_training_set, norm_summary, save_training_set, generate_training_set
from .config import ExperimentConfig, load_config
from .errors import ArgumentError, C2poLabError, NumericError
from .evaluator import SweepResult, error_floor, format_table, norm_sweep, simulate_ser
from .precoder import load_params, save_params
from .trainer import train

EXIT_OK = 0
EXIT_BUDGET = 1
EXIT_ARGUMENT = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

log = logging.getLogger("c2polab")


class OutputExists(OSError):
    pass


def _check_writable(path: Path, force: bool):
    if path.exists() and not force:
        raise OutputExists(f"{path} exists; pass --force to overwrite")
    path.parent.mkdir(parents=True, exist_ok=True)


def _file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    return cfg.with_overrides(seed=args.seed, target_norm=args.norm, t_max=args.t_max,
                              recipe=getattr(args, "recipe", None))


def _meta(cfg: ExperimentConfig, command: str, **extra) -> dict:
    return {"command": command, "version": __version__, "config_sha256": cfg.digest(),
            "config": cfg.to_dict(), "seeds": cfg.to_dict()["seeds"], **extra}


def cmd_gen(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    _check_writable(out, args.force)
    ts = generate_training_set(cfg.system, cfg.recipe, cfg.K, cfg.seeds.stream("gen"))
    save_training_set(ts, out)
    summary = norm_summary(ts)
    print(f"wrote {out}: K={summary['K']} recipe={summary['recipe']}")
    print(f"  spectral norm min/median/max = {summary['norm_min']:.6f} / "
          f"{summary['norm_median']:.6f} / {summary['norm_max']:.6f}")
    if ts.recipe.kind == "NT2":
        print(f"  rejection rate = {summary['rejection_rate']:.4f} ({ts.attempts} attempts)")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    ts = load_training_set(args.set)
    if ts.cfg.t_max != cfg.system.t_max:
        raise ArgumentError(f"training set was generated for t_max={ts.cfg.t_max}, "
                            f"config asks for t_max={cfg.system.t_max}")
    if ts.cfg != cfg.system:
        raise ArgumentError(f"training-set system {ts.cfg} does not match config {cfg.system}")
    out = Path(args.out)
    hist_path = Path(args.history) if args.history else out.with_suffix(".history.csv")
    _check_writable(out, args.force)
    _check_writable(hist_path, args.force)

    res = train(ts, cfg.system, cfg.train, cfg.init_params())
    res.params.metadata.update(config_sha256=cfg.digest(), set_sha256=_file_digest(args.set),
                               master_seed=cfg.seeds.master)
    save_params(res.params, out)
    meta = _meta(cfg, "train", set=str(args.set), set_sha256=_file_digest(args.set))
    lines = ["# c2polab-history v1", f"# meta: {json.dumps(meta, sort_keys=True)}", "epoch,mean_cost"]
    lines += [f"{e},{c:.17g}" for e, c in enumerate(res.history)]
    hist_path.write_text("\n".join(lines) + "\n")
    print(f"wrote {out} and {hist_path}: {res.epochs} epochs, "
          f"cost {res.history[0]:.6g} -> {res.history[-1]:.6g}, converged={res.converged}")
    for v in res.params.violations():
        print(f"  note: {v}")
    return EXIT_OK if res.converged else EXIT_BUDGET


def cmd_eval(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    _check_writable(out, args.force)
    ev = cfg.eval
    params = None
    if args.mode != "norm-sweep":
        if not args.params:
            raise ArgumentError(f"--params is required for mode {args.mode}")
        params = load_params(args.params)
        if params.t_max != cfg.system.t_max:
            raise ArgumentError(f"params have t_max={params.t_max}, config asks for {cfg.system.t_max}")

    if args.mode == "floor":
        st = error_floor(params, cfg.system, ev.floor_trials, cfg.seeds.stream("eval"),
                         ev.min_errors, ev.chunk_size, args.workers)
        result = SweepResult("t_max", [cfg.system.t_max], [st])
        lo, hi = st.interval
        print(f"error floor = {st.ser:.6e}  95% CI [{lo:.3e}, {hi:.3e}]  "
              f"({st.symbol_errors} errors, {st.trials} trials)")
    elif args.mode == "ser":
        result = simulate_ser(params, cfg.system, ev.snr_db, ev.trials, cfg.seeds.stream("eval"),
                              ev.chunk_size, args.workers)
        for snr, st in zip(result.axis, result.stats):
            print(f"{snr:7.2f} dB  SER = {st.ser:.6e}")
    else:
        result = norm_sweep(cfg.system, ev.norms, ev.sweep_recipe, cfg.K, cfg.train,
                            ev.floor_trials, cfg.seeds.stream("sweep"), cfg.init_params(),
                            ev.min_errors, ev.chunk_size, args.workers)
        for n, st in zip(result.axis, result.stats):
            print(f"N = {n:6.2f}  floor = {st.ser:.6e}")
    extra = {"params": str(args.params), "params_sha256": _file_digest(args.params)} if params else {}
    result.metadata = {**result.metadata, **_meta(cfg, f"eval {args.mode}", **extra)}
    out.write_text(format_table(result))
    print(f"wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="c2polab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="experiment YAML file")
        p.add_argument("--out", required=True, help="output path")
        p.add_argument("--seed", type=int, help="override seeds.master")
        p.add_argument("--norm", type=float, help="override the target norm N")
        p.add_argument("--t-max", type=int, help="override system.t_max")
        p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
        p.add_argument("--force", action="store_true", help="overwrite existing outputs")

    p = sub.add_parser("gen", help="generate a training set")
    common(p)
    p.add_argument("--recipe", help="override recipe, e.g. DF, NT1(14.5), NT2:16")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="learn tau/rho schedules on a training set")
    common(p)
    p.add_argument("--set", required=True, help="training-set file from 'gen'")
    p.add_argument("--history", help="cost-history table (default: <out>.history.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="error floor, SER curve or norm sweep")
    common(p)
    p.add_argument("--mode", choices=("floor", "ser", "norm-sweep"), required=True)
    p.add_argument("--params", help="parameter file from 'train'")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.workers < 1:
        print("error: --workers must be positive", file=sys.stderr)
        return EXIT_ARGUMENT
    try:
        return args.func(args)
    except ArgumentError as exc:
        print(f"argument error: {exc}", file=sys.stderr)
        return EXIT_ARGUMENT
    except NumericError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except C2poLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
