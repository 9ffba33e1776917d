"""Command-line entry point: ``pdeguide <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
instability, 5 I/O error.  Every command accepts ``--seed`` and
``--config file.json``; config keys use the long flag names (dashes or
underscores) and are overridden by flags given on the command line.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import data as dio
from .errors import ConfigError, DataError, NumericError
from .grid import GridSpec

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4, 5

DEFAULT_EPOCHS = {"poisson": 400, "heat": 200, "burgers": 300}

log = logging.getLogger("pdeguide")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers: {text!r}") from exc


def _add_guidance(p: argparse.ArgumentParser) -> None:
    p.add_argument("--steps", type=int, help="reverse steps (default 1000 Poisson, 750 space-time)")
    p.add_argument("--guidance-dt", type=float, help="guidance step (default per equation)")
    p.add_argument("--sigma", type=float, default=None,
                   help="smoothing width in cells, 0 disables (default 0.9, Burgers 0.5)")
    p.add_argument("--smoothing-target", choices=["state", "gradient_argument"],
                   default="gradient_argument")
    p.add_argument("--mode", choices=["guided", "unguided", "physics-only", "physics_only"],
                   default="guided")
    p.add_argument("--iterations", type=int, help="physics-only iterations (default 200000)")
    p.add_argument("--epsilon", type=float, default=0.0, help="physics-only Langevin temperature")
    p.add_argument("--warmup-iterations", type=int,
                   help="state-smoothed descent iterations before physics-only descent "
                        "(default 100000 for Burgers, else 0)")
    p.add_argument("--warmup-dt", type=float, help="warm-up step (default per equation)")
    p.add_argument("--final-step-noise", action="store_true")
    p.add_argument("--grid", type=int, help="grid nodes per side (default: checkpoint grid or 64)")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--config", help="JSON file with option defaults")
    common.add_argument("--log-level", default="WARNING")

    parser = argparse.ArgumentParser(prog="pdeguide", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate a reference dataset")
    p.add_argument("--equation", choices=["poisson", "heat", "burgers"], required=True)
    p.add_argument("--n", type=int, default=4000)
    p.add_argument("--coef-min", type=float)
    p.add_argument("--coef-max", type=float)
    p.add_argument("--grid", type=int, default=64)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--raw", action="store_true", help="skip global max-abs normalization")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", parents=[common], help="train the denoiser")
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, help="default 400/200/300 by equation")
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--base-channels", type=int, default=64)
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--trace")

    p = sub.add_parser("sample", parents=[common], help="run the (guided) sampler")
    p.add_argument("--model")
    p.add_argument("--equation", choices=["poisson", "heat", "burgers"], required=True)
    p.add_argument("--coef", type=float, required=True)
    _add_guidance(p)
    p.add_argument("--snapshot-stride", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--trace")

    p = sub.add_parser("eval", parents=[common], help="compare a field with the reference solution")
    p.add_argument("--pred", required=True)
    p.add_argument("--equation", choices=["poisson", "heat", "burgers"], required=True)
    p.add_argument("--coef", type=float, required=True)
    p.add_argument("--section-y", type=float)
    p.add_argument("--report")
    p.add_argument("--plots")

    p = sub.add_parser("bench", parents=[common], help="multi-trial robustness statistics")
    p.add_argument("--model")
    p.add_argument("--equation", choices=["poisson", "heat", "burgers"], required=True)
    p.add_argument("--coefs", type=_floats, required=True)
    p.add_argument("--trials", type=int, default=50)
    _add_guidance(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("ablate", parents=[common], help="smoothing on/off stability sweep")
    p.add_argument("--equation", choices=["poisson", "heat", "burgers"], default="poisson")
    p.add_argument("--coef", type=float, default=0.9)
    p.add_argument("--dt-grid", type=_floats)
    p.add_argument("--sigma", type=float, default=0.9)
    p.add_argument("--iterations", type=int, default=8000)
    p.add_argument("--grid", type=int, default=64)
    p.add_argument("--out", required=True)

    p = sub.add_parser("plot", parents=[common], help="render a field as PNG")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ref")
    p.add_argument("--section-y", type=float, default=0.5)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Parse ``argv`` with defaults taken from ``--config``; the command line wins."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    subparsers = parser._subparsers._group_actions[0].choices
    if not known.config or known.command not in subparsers:
        return parser.parse_args(argv)
    try:
        cfg = json.loads(Path(known.config).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{known.config}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    sub = subparsers[known.command]
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in cfg.items():
        dest = "inp" if key == "in" else key.replace("-", "_")
        if dest not in actions or dest in ("config", "help"):
            raise ConfigError(f"unknown config key {key!r} for command {known.command!r}")
        defaults[dest] = value
        actions[dest].required = False
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _effective(args: argparse.Namespace) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("config", "log_level", "command")}


def _sidecar(path, args, extra: dict | None = None) -> None:
    meta = {"command": args.command, "config": _effective(args), **(extra or {})}
    dio.atomic_write_text(str(path) + ".json", json.dumps(meta, indent=2, sort_keys=True, default=str))


def _spec(n: int | None, ckpt=None) -> GridSpec:
    if n is not None:
        return GridSpec.square(n)
    if ckpt is not None and "grid" in ckpt.info:
        return GridSpec.from_dict(ckpt.info["grid"])
    return GridSpec.square(64)


def _guidance(args):
    from .sampler import GuidanceConfig
    return GuidanceConfig(mode=args.mode, steps=args.steps, guidance_dt=args.guidance_dt,
                          sigma=args.sigma, smoothing_target=args.smoothing_target,
                          seed=args.seed, final_step_noise=args.final_step_noise,
                          snapshot_stride=getattr(args, "snapshot_stride", 0),
                          iterations=args.iterations, epsilon=args.epsilon,
                          warmup_iterations=args.warmup_iterations, warmup_dt=args.warmup_dt)


def _load_model(args, mode: str):
    from .diffusion import Checkpoint
    if mode.replace("-", "_") == "physics_only":
        return None
    if not args.model:
        raise ConfigError(f"--model is required in {mode} mode")
    return Checkpoint.load(args.model)


# --------------------------------------------------------------------------
# commands

def cmd_gen(args) -> int:
    d = dio.generate_dataset(args.equation, args.n, args.coef_min, args.coef_max, seed=args.seed,
                             spec=GridSpec.square(args.grid), workers=args.workers)
    if not args.raw:
        d = dio.normalize(d)
    dio.save_dataset(d, args.out)
    _sidecar(Path(args.out) / "config", args)
    print(f"wrote {len(d)} {args.equation} samples to {args.out} (scale {d.scale:.6g})")
    return EXIT_OK


def cmd_train(args) -> int:
    from .diffusion import TrainConfig, train
    d = dio.load_dataset(args.data)
    cfg = TrainConfig(epochs=args.epochs or DEFAULT_EPOCHS[d.equation], batch_size=args.batch_size,
                      lr=args.lr, seed=args.seed, base_channels=args.base_channels,
                      max_iterations=args.max_iterations)
    ckpt, trace = train(d, cfg)
    ckpt.save(args.out)
    _sidecar(args.out, args, {"n_params": ckpt.model.n_params})
    if args.trace:
        dio.atomic_write_text(args.trace, trace.to_csv())
    print(f"trained {trace.iteration[-1] if trace.iteration else 0} iterations, "
          f"final loss {np.mean(trace.loss[-100:]):.4f}; checkpoint {args.out}")
    return EXIT_OK


def cmd_sample(args) -> int:
    from .grid import relative_l2
    from .problems import make_problem
    from .sampler import physics_only_solve, resolve, sample
    cfg = _guidance(args)
    ckpt = _load_model(args, cfg.mode)
    p = make_problem(args.equation, args.coef, _spec(args.grid, ckpt))
    t0 = time.time()
    if ckpt is None:
        u, trace = physics_only_solve(p, cfg)
    else:
        u, trace = sample(ckpt, p, cfg)
    elapsed = time.time() - t0
    eff = resolve(cfg, p, ckpt)
    dio.save_field(u, args.out)
    _sidecar(args.out, args, {"resolved": eff.to_dict(), "seconds": round(elapsed, 3),
                              "grid": p.spec.to_dict()})
    if args.trace:
        dio.atomic_write_text(args.trace, trace.to_csv())
    print(f"sampled {args.equation} coef={args.coef} in {elapsed:.2f}s -> {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .evaluation import evaluate, plot_report, section_index
    from .problems import make_problem
    from .solvers import reference_solution
    pred = dio.load_field(args.pred)
    p = make_problem(args.equation, args.coef, pred.spec)
    ref = reference_solution(p)
    j = None if args.section_y is None else section_index(pred.spec, args.section_y)
    rep = evaluate(pred, ref, j, problem=p, config=_effective(args))
    if args.report:
        dio.atomic_write_text(args.report, rep.to_csv())
        _sidecar(args.report, args)
    if args.plots:
        plot_report(rep, pred, ref, args.plots)
    print(f"relative_l2 {rep.relative_l2:.6g}  max_abs_error {rep.max_abs_error:.6g}  "
          f"section y={rep.section.y:.4f}")
    return EXIT_OK


def cmd_bench(args) -> int:
    from .evaluation import robustness, robustness_csv
    from .problems import make_problem
    cfg = _guidance(args)
    ckpt = _load_model(args, cfg.mode)
    spec = _spec(args.grid, ckpt)
    rows = []
    for c in args.coefs:
        s = robustness(ckpt, make_problem(args.equation, c, spec), cfg, args.trials, args.seed)
        rows.append(s)
        print(f"coef {c:g}: {s.mean:.4f} +- {s.std:.4f} % over {s.n_trials - len(s.failures)} trials")
    dio.atomic_write_text(args.out, robustness_csv(rows))
    _sidecar(args.out, args)
    return EXIT_OK


def cmd_ablate(args) -> int:
    from .evaluation import DEFAULT_DT_GRID, ablate_smoothing
    from .problems import make_problem
    from .sampler import GuidanceConfig
    p = make_problem(args.equation, args.coef, GridSpec.square(args.grid))
    grid = args.dt_grid or DEFAULT_DT_GRID
    table = ablate_smoothing(p, grid, sigma_on=args.sigma,
                             cfg=GuidanceConfig(mode="physics_only", seed=args.seed),
                             iterations=args.iterations)
    dio.atomic_write_text(args.out, table.to_csv())
    on, off = table.max_stable(True), table.max_stable(False)
    _sidecar(args.out, args, {"max_stable_smoothed": on, "max_stable_unsmoothed": off})
    print(f"max stable dt: smoothing off {off}, smoothing on {on}")
    return EXIT_OK


def cmd_plot(args) -> int:
    from .evaluation import evaluate, plot_field, plot_section, section_index, ERROR_CMAP
    from .grid import Field
    u = dio.load_field(args.inp)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    plot_field(u, out, Path(args.inp).name)
    if args.ref:
        ref = dio.load_field(args.ref)
        rep = evaluate(u, ref, section_index(u.spec, args.section_y))
        plot_section(rep.section, out.with_name(out.stem + "_section.png"))
        plot_field(Field(u.spec, rep.error), out.with_name(out.stem + "_error.png"), "|error|",
                   ERROR_CMAP)
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "sample": cmd_sample, "eval": cmd_eval,
            "bench": cmd_bench, "ablate": cmd_ablate, "plot": cmd_plot}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                            format="%(asctime)s %(name)s %(message)s")
        return COMMANDS[args.command](args)
    except SystemExit as exc:
        # argparse usage errors
        return int(exc.code or 0) and EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        step = getattr(exc, "step", None)
        where = f" (step {step})" if step is not None else ""
        print(f"numeric instability{where}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
